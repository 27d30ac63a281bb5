// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "edvtg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return edvtg::cli::run(args, std::cout, std::cerr);
}
