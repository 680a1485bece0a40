#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "micap/tensor.hpp"

namespace micap {

// Central-difference check of the analytic gradients of a scalar-valued op.
// Returns max over all input entries of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                         std::vector<Tensor> inputs, double eps = 1e-5) {
    for (auto& in : inputs) {
        if (!in.all_finite()) throw ContractError("grad_check: non-finite input");
        in.node()->requires_grad = true;
        in.zero_grad();
    }

    Tensor out = op(inputs);
    if (out.size() != 1) throw ContractError("grad_check: op must return a scalar");
    out.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        in.node()->ensure_grad();
        analytic.push_back(in.grad());
    }

    double max_rel = 0.0;
    {
        NoGradGuard ng;
        for (size_t t = 0; t < inputs.size(); ++t) {
            auto& data = inputs[t].values();
            for (size_t i = 0; i < data.size(); ++i) {
                const double orig = data[i];
                data[i] = orig + eps;
                double f_plus = op(inputs).item();
                data[i] = orig - eps;
                double f_minus = op(inputs).item();
                data[i] = orig;
                double numeric = (f_plus - f_minus) / (2.0 * eps);
                double a = analytic[t][i];
                double rel = std::abs(a - numeric) /
                             std::max(1e-8, std::abs(a) + std::abs(numeric));
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    return max_rel;
}

}  // namespace micap
