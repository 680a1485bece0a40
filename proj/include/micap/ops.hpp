#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "micap/tensor.hpp"

namespace micap {

// ---------------------------------------------------------------------------
// Attention masks

enum class MaskKind { none, causal, padding };

// Boolean (query_len x key_len) matrix; entry true = attention allowed.
struct Mask {
    MaskKind kind = MaskKind::none;
    int q_len = 0;
    int k_len = 0;
    std::vector<uint8_t> allowed;  // empty for kind == none

    bool is_none() const { return kind == MaskKind::none; }
    bool at(int i, int j) const { return allowed[static_cast<size_t>(i) * k_len + j] != 0; }

    static Mask none() { return Mask{}; }

    // lower-triangular: (i, j) allowed iff j <= i
    static Mask causal(int n) {
        Mask m;
        m.kind = MaskKind::causal;
        m.q_len = n;
        m.k_len = n;
        m.allowed.assign(static_cast<size_t>(n) * n, 0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) m.allowed[static_cast<size_t>(i) * n + j] = 1;
        return m;
    }

    // every query may attend exactly the keys flagged valid
    static Mask padding(int q_len, const std::vector<uint8_t>& key_valid) {
        Mask m;
        m.kind = MaskKind::padding;
        m.q_len = q_len;
        m.k_len = static_cast<int>(key_valid.size());
        m.allowed.resize(static_cast<size_t>(q_len) * m.k_len);
        for (int i = 0; i < q_len; ++i)
            for (int j = 0; j < m.k_len; ++j)
                m.allowed[static_cast<size_t>(i) * m.k_len + j] = key_valid[j];
        return m;
    }
};

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": operand shapes differ");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                               [an = a.node(), bn = b.node()](TensorNode& self) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           an->grad[i] += self.grad[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           bn->grad[i] += self.grad[i];
                                   }
                               });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                               [an = a.node(), bn = b.node()](TensorNode& self) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           an->grad[i] += self.grad[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           bn->grad[i] -= self.grad[i];
                                   }
                               });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
    return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                               [an = a.node(), bn = b.node()](TensorNode& self) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           an->grad[i] += self.grad[i] * bn->data[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           bn->grad[i] += self.grad[i] * an->data[i];
                                   }
                               });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (auto& v : out) v *= c;
    return detail::make_result(a.shape(), std::move(out), {a.node()},
                               [an = a.node(), c](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[i] += c * self.grad[i];
                               });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (auto& v : out) v += c;
    return detail::make_result(a.shape(), std::move(out), {a.node()},
                               [an = a.node()](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[i] += self.grad[i];
                               });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul: operands must be 2-D");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(static_cast<size_t>(m) * n);
    MatMap(out.data(), m, n).noalias() = a.node()->mat() * b.node()->mat();
    return detail::make_result(
        {m, n}, std::move(out), {a.node(), b.node()},
        [an = a.node(), bn = b.node(), m, k, n](TensorNode& self) {
            ConstMatMap g(self.grad.data(), m, n);
            if (an->requires_grad) an->grad_mat().noalias() += g * bn->mat().transpose();
            if (bn->requires_grad) bn->grad_mat().noalias() += an->mat().transpose() * g;
        });
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeError("transpose: operand must be 2-D");
    const int m = a.rows(), n = a.cols();
    std::vector<double> out(static_cast<size_t>(m) * n);
    MatMap(out.data(), n, m) = a.node()->mat().transpose();
    return detail::make_result({n, m}, std::move(out), {a.node()},
                               [an = a.node(), m, n](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   ConstMatMap g(self.grad.data(), n, m);
                                   an->grad_mat().noalias() += g.transpose();
                               });
}

// a: [n x d], bias: [d] (or [1 x d]); adds bias to every row
inline Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
    const int n = a.rows(), d = a.cols();
    if (bias.size() != d) throw ShapeError("add_row_broadcast: bias length != cols");
    std::vector<double> out(a.values());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] += bias.values()[j];
    return detail::make_result(a.shape(), std::move(out), {a.node(), bias.node()},
                               [an = a.node(), bn = bias.node(), n, d](TensorNode& self) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (size_t i = 0; i < self.grad.size(); ++i)
                                           an->grad[i] += self.grad[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (int i = 0; i < n; ++i)
                                           for (int j = 0; j < d; ++j)
                                               bn->grad[j] += self.grad[static_cast<size_t>(i) * d + j];
                                   }
                               });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    const int d = parts[0].cols();
    int total = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.rows() > 0 && p.cols() != d)
            throw ShapeError("concat_rows: column counts differ");
        total += p.rows();
        parents.push_back(p.node());
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total) * d);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return detail::make_result({total, d}, std::move(out), parents,
                               [ps = parents, d](TensorNode& self) {
                                   size_t off = 0;
                                   for (const auto& p : ps) {
                                       size_t len = p->data.size();
                                       if (p->requires_grad) {
                                           p->ensure_grad();
                                           for (size_t i = 0; i < len; ++i)
                                               p->grad[i] += self.grad[off + i];
                                       }
                                       off += len;
                                   }
                               });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    const int n = parts[0].rows();
    int total = 0;
    std::vector<NodePtr> parents;
    std::vector<int> widths;
    for (const auto& p : parts) {
        if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
        widths.push_back(p.cols());
        total += p.cols();
        parents.push_back(p.node());
    }
    std::vector<double> out(static_cast<size_t>(n) * total);
    int col0 = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].values();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < widths[k]; ++j)
                out[static_cast<size_t>(i) * total + col0 + j] =
                    v[static_cast<size_t>(i) * widths[k] + j];
        col0 += widths[k];
    }
    return detail::make_result({n, total}, std::move(out), parents,
                               [ps = parents, widths, n, total](TensorNode& self) {
                                   int c0 = 0;
                                   for (size_t k = 0; k < ps.size(); ++k) {
                                       if (ps[k]->requires_grad) {
                                           ps[k]->ensure_grad();
                                           for (int i = 0; i < n; ++i)
                                               for (int j = 0; j < widths[k]; ++j)
                                                   ps[k]->grad[static_cast<size_t>(i) * widths[k] + j] +=
                                                       self.grad[static_cast<size_t>(i) * total + c0 + j];
                                       }
                                       c0 += widths[k];
                                   }
                               });
}

// rows [r0, r1) of a 2-D tensor
inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    const int n = a.rows(), d = a.cols();
    if (r0 < 0 || r1 < r0 || r1 > n) throw ShapeError("slice_rows: range out of bounds");
    std::vector<double> out(a.values().begin() + static_cast<size_t>(r0) * d,
                            a.values().begin() + static_cast<size_t>(r1) * d);
    return detail::make_result({r1 - r0, d}, std::move(out), {a.node()},
                               [an = a.node(), r0, d](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   size_t base = static_cast<size_t>(r0) * d;
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[base + i] += self.grad[i];
                               });
}

inline Tensor first_row(const Tensor& a) { return slice_rows(a, 0, 1); }

// out.data[i] = src.data[index[i]]; scatter-add on the way back. Used for
// patch extraction and any other static reshuffle.
inline Tensor reindex(const Tensor& src, const std::vector<int64_t>& index,
                      std::vector<int> out_shape) {
    if (shape_numel(out_shape) != static_cast<int64_t>(index.size()))
        throw ShapeError("reindex: index length != product(out_shape)");
    std::vector<double> out(index.size());
    for (size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= src.size())
            throw ShapeError("reindex: index out of range");
        out[i] = src.values()[static_cast<size_t>(index[i])];
    }
    return detail::make_result(std::move(out_shape), std::move(out), {src.node()},
                               [sn = src.node(), index](TensorNode& self) {
                                   if (!sn->requires_grad) return;
                                   sn->ensure_grad();
                                   for (size_t i = 0; i < index.size(); ++i)
                                       sn->grad[static_cast<size_t>(index[i])] += self.grad[i];
                               });
}

// Embedding lookup: rows of `table` selected by ids.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    const int v = table.rows(), d = table.cols();
    std::vector<double> out;
    out.reserve(ids.size() * static_cast<size_t>(d));
    for (int id : ids) {
        if (id < 0 || id >= v)
            throw ContractError("gather_rows: id " + std::to_string(id) + " out of vocabulary");
        out.insert(out.end(), table.values().begin() + static_cast<size_t>(id) * d,
                   table.values().begin() + static_cast<size_t>(id + 1) * d);
    }
    return detail::make_result({static_cast<int>(ids.size()), d}, std::move(out),
                               {table.node()},
                               [tn = table.node(), ids, d](TensorNode& self) {
                                   if (!tn->requires_grad) return;
                                   tn->ensure_grad();
                                   for (size_t r = 0; r < ids.size(); ++r)
                                       for (int j = 0; j < d; ++j)
                                           tn->grad[static_cast<size_t>(ids[r]) * d + j] +=
                                               self.grad[r * d + j];
                               });
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor tanh_op(const Tensor& a) {
    std::vector<double> out(a.values());
    for (auto& v : out) v = std::tanh(v);
    auto keep = out;  // y needed in backward
    return detail::make_result(a.shape(), std::move(out), {a.node()},
                               [an = a.node(), y = std::move(keep)](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[i] += self.grad[i] * (1.0 - y[i] * y[i]);
                               });
}

// exact GELU: 0.5 x (1 + erf(x / sqrt(2)))
inline Tensor gelu(const Tensor& a) {
    static constexpr double inv_sqrt2 = 0.7071067811865475244;
    static constexpr double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> out(a.values());
    for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    return detail::make_result(
        a.shape(), std::move(out), {a.node()}, [an = a.node()](TensorNode& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                double x = an->data[i];
                double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                an->grad[i] += self.grad[i] * (cdf + x * pdf);
            }
        });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum_all(const Tensor& a) {
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return detail::make_result({1}, {s}, {a.node()}, [an = a.node()](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0) * inv;
    return detail::make_result({1}, {s}, {a.node()}, [an = a.node(), inv](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// Softmax / normalization

// Row softmax with optional mask; masked entries receive -inf before the
// max-subtracted exponentiation. A row with no allowed key is an error.
inline Tensor softmax_rows(const Tensor& a, const Mask& mask = Mask::none()) {
    const int n = a.rows(), d = a.cols();
    if (!mask.is_none() && (mask.q_len != n || mask.k_len != d))
        throw ShapeError("softmax_rows: mask dims do not match logits");
    std::vector<double> out(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j)
            if (mask.is_none() || mask.at(i, j))
                mx = std::max(mx, a.values()[static_cast<size_t>(i) * d + j]);
        if (!std::isfinite(mx))
            throw ContractError("softmax_rows: fully masked row " + std::to_string(i));
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            size_t idx = static_cast<size_t>(i) * d + j;
            if (mask.is_none() || mask.at(i, j)) {
                out[idx] = std::exp(a.values()[idx] - mx);
                z += out[idx];
            } else {
                out[idx] = 0.0;
            }
        }
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] /= z;
    }
    auto y = out;
    return detail::make_result(a.shape(), std::move(out), {a.node()},
                               [an = a.node(), y = std::move(y), n, d](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (int i = 0; i < n; ++i) {
                                       size_t base = static_cast<size_t>(i) * d;
                                       double dot = 0.0;
                                       for (int j = 0; j < d; ++j)
                                           dot += self.grad[base + j] * y[base + j];
                                       for (int j = 0; j < d; ++j)
                                           an->grad[base + j] +=
                                               y[base + j] * (self.grad[base + j] - dot);
                                   }
                               });
}

// y_row = x_row / ||x_row||_2
inline Tensor l2_normalize_rows(const Tensor& a) {
    const int n = a.rows(), d = a.cols();
    std::vector<double> out(a.values());
    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double v = a.values()[static_cast<size_t>(i) * d + j];
            s += v * v;
        }
        if (s <= 0.0)
            throw ContractError("l2_normalize_rows: zero vector at row " + std::to_string(i));
        norms[i] = std::sqrt(s);
        for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] /= norms[i];
    }
    auto y = out;
    return detail::make_result(
        a.shape(), std::move(out), {a.node()},
        [an = a.node(), y = std::move(y), norms = std::move(norms), n, d](TensorNode& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < n; ++i) {
                size_t base = static_cast<size_t>(i) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += self.grad[base + j] * y[base + j];
                for (int j = 0; j < d; ++j)
                    an->grad[base + j] += (self.grad[base + j] - dot * y[base + j]) / norms[i];
            }
        });
}

// Layer normalization over the last axis, biased variance, eps inside sqrt.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                              double eps = 1e-5) {
    const int n = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm_rows: gain/bias length != feature dim");
    std::vector<double> out(static_cast<size_t>(n) * d);
    std::vector<double> xhat(out.size());
    std::vector<double> inv_sigma(n);
    for (int i = 0; i < n; ++i) {
        size_t base = static_cast<size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x.values()[base + j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = x.values()[base + j] - mu;
            var += c * c;
        }
        var /= d;
        inv_sigma[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) {
            xhat[base + j] = (x.values()[base + j] - mu) * inv_sigma[i];
            out[base + j] = xhat[base + j] * gain.values()[j] + bias.values()[j];
        }
    }
    return detail::make_result(
        x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
        [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat),
         inv_sigma = std::move(inv_sigma), n, d](TensorNode& self) {
            for (int i = 0; i < n; ++i) {
                size_t base = static_cast<size_t>(i) * d;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < d; ++j)
                        gn->grad[j] += self.grad[base + j] * xhat[base + j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < d; ++j) bn->grad[j] += self.grad[base + j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int j = 0; j < d; ++j) {
                        double dxhat = self.grad[base + j] * gn->data[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat[base + j];
                    }
                    for (int j = 0; j < d; ++j) {
                        double dxhat = self.grad[base + j] * gn->data[j];
                        xn->grad[base + j] +=
                            inv_sigma[i] *
                            (dxhat - (sum_dxhat + xhat[base + j] * sum_dxhat_xhat) / d);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Losses-level primitives

// Mean over included rows of -log softmax(logits_row)[target]; `include`
// empty means all rows count.
inline Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<uint8_t>& include = {}) {
    const int n = logits.rows(), v = logits.cols();
    if (static_cast<int>(targets.size()) != n)
        throw ShapeError("cross_entropy_mean: one target per logit row required");
    if (!include.empty() && static_cast<int>(include.size()) != n)
        throw ShapeError("cross_entropy_mean: include mask length mismatch");
    int count = 0;
    std::vector<double> probs(static_cast<size_t>(n) * v);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!include.empty() && !include[i]) continue;
        if (targets[i] < 0 || targets[i] >= v)
            throw ContractError("cross_entropy_mean: target id out of range");
        size_t base = static_cast<size_t>(i) * v;
        double mx = logits.values()[base];
        for (int j = 1; j < v; ++j) mx = std::max(mx, logits.values()[base + j]);
        double z = 0.0;
        for (int j = 0; j < v; ++j) {
            probs[base + j] = std::exp(logits.values()[base + j] - mx);
            z += probs[base + j];
        }
        for (int j = 0; j < v; ++j) probs[base + j] /= z;
        total += -std::log(probs[base + targets[i]]);
        ++count;
    }
    if (count == 0) throw ContractError("cross_entropy_mean: all positions masked out");
    total /= count;
    return detail::make_result(
        {1}, {total}, {logits.node()},
        [ln = logits.node(), probs = std::move(probs), targets, include, n, v,
         count](TensorNode& self) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            double s = self.grad[0] / count;
            for (int i = 0; i < n; ++i) {
                if (!include.empty() && !include[i]) continue;
                size_t base = static_cast<size_t>(i) * v;
                for (int j = 0; j < v; ++j) ln->grad[base + j] += s * probs[base + j];
                ln->grad[base + targets[i]] -= s;
            }
        });
}

// Inverted dropout; identity when rate == 0.
inline Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    std::vector<double> keep(a.values().size());
    const double scale_v = 1.0 / (1.0 - rate);
    for (auto& k : keep) k = (rng.uniform() >= rate) ? scale_v : 0.0;
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= keep[i];
    return detail::make_result(a.shape(), std::move(out), {a.node()},
                               [an = a.node(), keep = std::move(keep)](TensorNode& self) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i)
                                       an->grad[i] += self.grad[i] * keep[i];
                               });
}

}  // namespace micap
