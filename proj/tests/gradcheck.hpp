#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cfdr/nn.hpp"
#include "cfdr/rng.hpp"
#include "cfdr/tensor.hpp"

namespace cfdr::testing {

// Freshly built networks carry zero biases, so a row whose ReLU layer goes
// entirely dead feeds an exact 0 into the next layer's kink; central
// differences straddle that kink and report a false mismatch. Moving biases
// to generic values keeps the loss differentiable at the probe point.
inline void nudge_biases(Mlp& m, Rng& rng) {
    for (Tensor& b : m.b)
        for (double& v : b.data) v = rng.uniform(0.05, 0.25);
}

// Central-difference check of analytic gradients. grads[i] must line up with
// params[i] and stay valid while the check runs; loss_fn re-evaluates the
// scalar loss at the current parameter values (it must not cache anything).
struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline GradCheckResult gradcheck(const std::vector<Tensor*>& params,
                                 const std::vector<const Tensor*>& grads,
                                 const std::function<double()>& loss_fn, double h = 1e-5) {
    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& grad = *grads[p];
        for (std::size_t k = 0; k < param.data.size(); ++k) {
            const double saved = param.data[k];
            param.data[k] = saved + h;
            const double plus = loss_fn();
            param.data[k] = saved - h;
            const double minus = loss_fn();
            param.data[k] = saved;

            const double numeric = (plus - minus) / (2.0 * h);
            const double analytic = grad.data[k];
            const double scale =
                std::max({std::abs(analytic), std::abs(numeric), 1.0});
            const double rel = std::abs(analytic - numeric) / scale;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_analytic = analytic;
                res.worst_numeric = numeric;
            }
            ++res.checked;
        }
    }
    return res;
}

}  // namespace cfdr::testing
