// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace edvtg::cli {

enum ExitCode : int {
    ok = 0,
    internal_error = 1,  // also a failed gradient check
    input_error = 2,
    diverged = 3,
    artifact_mismatch = 4,
};

/// Entry point of the edvtg binary. Machine-readable results go to out,
/// progress and diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edvtg::cli
