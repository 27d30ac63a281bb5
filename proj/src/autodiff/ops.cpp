// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "edvtg/autodiff.hpp"

namespace edvtg::ad {

namespace {

using Backward = std::function<void(Node&)>;

Tensor make_op(Shape shape, std::vector<double> value, std::vector<NodePtr> parents, Backward bw,
               const char* op) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    const bool needs = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                     [](const NodePtr& p) { return p->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(bw);
    }
    return Tensor(std::move(node));
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor operand");
}

void require_2d(const char* op, const Tensor& t) {
    require_defined(op, t);
    if (t.dim() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

enum class Bcast { Same, Scalar, Row };

Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
    require_defined(op, a);
    require_defined(op, b);
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.numel() == 1) return Bcast::Scalar;
    if (a.dim() == 2) {
        const auto c = a.cols();
        if (b.shape() == Shape{c} || b.shape() == Shape{1, c}) return Bcast::Row;
    }
    throw ShapeError(op, a.shape(), b.shape());
}

inline std::size_t bindex(Bcast k, std::size_t i, std::size_t cols) {
    switch (k) {
        case Bcast::Same: return i;
        case Bcast::Scalar: return 0;
        case Bcast::Row: return i % cols;
    }
    return i;
}

// da/db return d(out)/d(x) and d(out)/d(y) evaluated at (x, y).
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    const Bcast kind = broadcast_kind(op, a, b);
    const std::size_t n = a.numel();
    const std::size_t cols = a.cols();
    const auto& x = a.node()->value;
    const auto& y = b.node()->value;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], y[bindex(kind, i, cols)]);
    return make_op(
        a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
        [kind, cols, da, db](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const auto& g = self.grad;
            const std::size_t n = g.size();
            if (pa.requires_grad) {
                auto& ga = pa.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    ga[i] += g[i] * da(pa.value[i], pb.value[bindex(kind, i, cols)]);
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = bindex(kind, i, cols);
                    gb[j] += g[i] * db(pa.value[i], pb.value[j]);
                }
            }
        },
        op);
}

// df receives the input and the output at the same index.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
    require_defined(op, a);
    const auto& x = a.node()->value;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_op(
        a.shape(), std::move(out), {a.node_ptr()},
        [df](Node& self) {
            Node& p = *self.parents[0];
            auto& gp = p.ensure_grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * df(p.value[i], self.value[i]);
        },
        op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

// Ties route the gradient to the left operand.
Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary(
        "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; }, [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary(
        "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        "scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor pow(const Tensor& a, double p) {
    return unary(
        "pow", a, [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

// Subgradient 0 at the kink.
Tensor abs(const Tensor& a) {
    return unary(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [inv_sqrt_2pi](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * std::exp(-0.5 * x * x) * inv_sqrt_2pi;
        });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw ShapeError("matmul", a.shape(), b.shape());
    const double* A = a.node()->value.data();
    const double* B = b.node()->value.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* C = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* Brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) C[j] += av * Brow[j];
        }
    }
    return make_op(
        {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
        [m, k, n](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const double* G = self.grad.data();
            if (pa.requires_grad) {
                double* GA = pa.ensure_grad().data();
                const double* B = pb.value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* Grow = G + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* Brow = B + p * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
                        GA[i * k + p] += acc;
                    }
                }
            }
            if (pb.requires_grad) {
                double* GB = pb.ensure_grad().data();
                const double* A = pa.value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* Grow = G + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = A[i * k + p];
                        double* GBrow = GB + p * n;
                        for (std::size_t j = 0; j < n; ++j) GBrow[j] += av * Grow[j];
                    }
                }
            }
        },
        "matmul");
}

Tensor transpose(const Tensor& a) {
    require_2d("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    const auto& x = a.node()->value;
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    return make_op(
        {c, r}, std::move(out), {a.node_ptr()},
        [r, c](Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[j * r + i];
        },
        "transpose");
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined("reshape", a);
    if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
    return make_op(
        std::move(shape), a.node()->value, {a.node_ptr()},
        [](Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
        },
        "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    if (axis > 1) throw ShapeError("concat: axis must be 0 or 1 for 2-D tensors");
    for (const auto& p : parts) require_2d("concat", p);
    const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        const std::size_t o = axis == 0 ? p.cols() : p.rows();
        if (o != other) throw ShapeError("concat", parts[0].shape(), p.shape());
        total += axis == 0 ? p.rows() : p.cols();
    }
    const std::size_t rows = axis == 0 ? total : other;
    const std::size_t cols = axis == 0 ? other : total;
    std::vector<double> out(rows * cols);
    std::vector<NodePtr> parents;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& v = p.node()->value;
        const std::size_t pr = p.rows(), pc = p.cols();
        if (axis == 0) {
            std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(off * cols));
        } else {
            for (std::size_t i = 0; i < pr; ++i)
                std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * pc), pc,
                            out.begin() + static_cast<std::ptrdiff_t>(i * cols + off));
        }
        offsets.push_back(off);
        off += axis == 0 ? pr : pc;
        parents.push_back(p.node_ptr());
    }
    return make_op(
        {rows, cols}, std::move(out), std::move(parents),
        [axis, cols, offsets](Node& self) {
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                Node& p = *self.parents[k];
                if (!p.requires_grad) continue;
                auto& gp = p.ensure_grad();
                const std::size_t pr = p.shape[0], pc = p.shape[1];
                if (axis == 0) {
                    const double* src = self.grad.data() + offsets[k] * cols;
                    for (std::size_t i = 0; i < pr * pc; ++i) gp[i] += src[i];
                } else {
                    for (std::size_t i = 0; i < pr; ++i)
                        for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += self.grad[i * cols + offsets[k] + j];
                }
            }
        },
        "concat");
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    require_2d("slice", a);
    if (axis > 1) throw ShapeError("slice: axis must be 0 or 1 for 2-D tensors");
    const std::size_t r = a.rows(), c = a.cols();
    const std::size_t extent = axis == 0 ? r : c;
    if (begin >= end || end > extent) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    const auto& x = a.node()->value;
    const std::size_t orows = axis == 0 ? end - begin : r;
    const std::size_t ocols = axis == 0 ? c : end - begin;
    std::vector<double> out(orows * ocols);
    for (std::size_t i = 0; i < orows; ++i)
        for (std::size_t j = 0; j < ocols; ++j)
            out[i * ocols + j] = axis == 0 ? x[(begin + i) * c + j] : x[i * c + begin + j];
    return make_op(
        {orows, ocols}, std::move(out), {a.node_ptr()},
        [axis, begin, c, orows, ocols](Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < orows; ++i)
                for (std::size_t j = 0; j < ocols; ++j) {
                    const std::size_t src = axis == 0 ? (begin + i) * c + j : i * c + begin + j;
                    gp[src] += self.grad[i * ocols + j];
                }
        },
        "slice");
}

Tensor sum(const Tensor& a) {
    require_defined("sum", a);
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op(
        {1}, {s}, {a.node_ptr()},
        [](Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (auto& g : gp) g += self.grad[0];
        },
        "sum");
}

Tensor mean(const Tensor& a) {
    require_defined("mean", a);
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax(const Tensor& a) {
    require_defined("softmax", a);
    const std::size_t n = a.cols();
    const std::size_t rows = a.numel() / n;
    const auto& x = a.node()->value;
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * n;
        double* yr = out.data() + r * n;
        const double mx = *std::max_element(xr, xr + n);
        if (!std::isfinite(mx)) throw ShapeError("softmax: row " + std::to_string(r) + " has no finite entry");
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
    }
    return make_op(
        a.shape(), std::move(out), {a.node_ptr()},
        [n, rows](Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = self.value.data() + r * n;
                const double* g = self.grad.data() + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
                for (std::size_t j = 0; j < n; ++j) gp[r * n + j] += p[j] * (g[j] - dot);
            }
        },
        "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_defined("layer_norm", x);
    const std::size_t n = x.cols();
    if (gamma.numel() != n) throw ShapeError("layer_norm", x.shape(), gamma.shape());
    if (beta.numel() != n) throw ShapeError("layer_norm", x.shape(), beta.shape());
    const std::size_t rows = x.numel() / n;
    const auto& xv = x.node()->value;
    const auto& gv = gamma.node()->value;
    const auto& bv = beta.node()->value;
    std::vector<double> xhat(xv.size()), rstd(rows), out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(n);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[r * n + j] = (xr[j] - mu) * rstd[r];
            out[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
        }
    }
    return make_op(
        x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
            Node& px = *self.parents[0];
            Node& pg = *self.parents[1];
            Node& pb = *self.parents[2];
            const auto& g = self.grad;
            if (pg.requires_grad) {
                auto& gg = pg.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
            }
            if (px.requires_grad) {
                auto& gx = px.ensure_grad();
                const auto& gam = pg.value;
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[r * n + j] * gam[j];
                        m1 += d;
                        m2 += d * xhat[r * n + j];
                    }
                    m1 *= inv_n;
                    m2 *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[r * n + j] * gam[j];
                        gx[r * n + j] += rstd[r] * (d - m1 - xhat[r * n + j] * m2);
                    }
                }
            }
        },
        "layer_norm");
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_2d("embedding", table);
    const std::size_t vocab = table.rows(), d = table.cols();
    if (ids.empty()) throw ShapeError("embedding: empty id list");
    std::vector<int> idv(ids.begin(), ids.end());
    std::vector<double> out(idv.size() * d);
    const auto& t = table.node()->value;
    for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(idv[i]) + " at position " + std::to_string(i) +
                                    " outside table of " + std::to_string(vocab) + " rows");
        }
        std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(idv[i] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return make_op(
        {idv.size(), d}, std::move(out), {table.node_ptr()},
        [idv, d](Node& self) {
            auto& gt = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(idv[i]) * d + j] += self.grad[i * d + j];
        },
        "embedding");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_defined("cross_entropy", logits);
    const std::size_t v = logits.cols();
    const std::size_t rows = logits.numel() / v;
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    }
    const auto& x = logits.node()->value;
    std::vector<double> probs(x.size(), 0.0);
    std::vector<int> tv(targets.begin(), targets.end());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (tv[r] < 0) continue;
        if (static_cast<std::size_t>(tv[r]) >= v) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(tv[r]) + " at row " + std::to_string(r) +
                                    " outside " + std::to_string(v) + " classes");
        }
        const double* xr = x.data() + r * v;
        const double mx = *std::max_element(xr, xr + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += (probs[r * v + j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < v; ++j) probs[r * v + j] /= z;
        total -= (xr[tv[r]] - mx) - std::log(z);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("cross_entropy: every target position is padding");
    const double inv = 1.0 / static_cast<double>(count);
    return make_op(
        {1}, {total * inv}, {logits.node_ptr()},
        [probs = std::move(probs), tv = std::move(tv), v, inv](Node& self) {
            auto& gl = self.parents[0]->ensure_grad();
            const double g = self.grad[0] * inv;
            for (std::size_t r = 0; r < tv.size(); ++r) {
                if (tv[r] < 0) continue;
                for (std::size_t j = 0; j < v; ++j) gl[r * v + j] += g * probs[r * v + j];
                gl[r * v + static_cast<std::size_t>(tv[r])] -= g;
            }
        },
        "cross_entropy");
}

}  // namespace edvtg::ad
