#pragma once

#include <cstdint>

#include "cfdr/dataset.hpp"

namespace cfdr {

// Binary-outcome benchmark process with a scalar confounder.
//   z ~ Bern(1/2)
//   x_j | z ~ Normal(mean z, variance 25 z + 9 (1-z)), j = 1..5
//   t | z ~ Bern(3/4 z + 1/4 (1-z))
//   y(t) | z ~ Bern(sigmoid(3 (z + 2 (2t - 1))))
// Both potential outcomes are drawn from the same z; mu0/mu1 store the
// Bernoulli means, y_cf the unobserved arm.
Dataset gen_confounded_binary(int n, uint64_t seed);

// Closed-form average treatment effect of the process above (about 0.9738).
double confounded_binary_true_ate();

struct FactoredGenOptions {
    // Zeroes the treatment weights and the assignment noise, making t a fair
    // coin independent of x.
    bool zero_treatment_model = false;
    // Emits (y1, y0) instead of the default (y0, y1) when mapping the two
    // outcome columns to the control/treated arms.
    bool swap_outcome_columns = false;
};

// Continuous-outcome process with a factored latent:
//   z_x in {0,1}^7, z_t, z_yf, z_ycf in {0,1}, all Bern(1/2)
//   x = [x_x, x_t, x_yf, x_ycf] in R^10, with per-block conditional Normals
//     x_x,i  ~ N(z_x,i, 5 z_x,i + 3 (1 - z_x,i))
//     x_t    ~ N(z_t,   2 z_t   + 0.5 (1 - z_t))
//     x_yf   ~ N(z_yf, 10 z_yf  + 6 (1 - z_yf))
//     x_ycf  ~ N(z_ycf, 10 z_ycf + 6 (1 - z_ycf))
//   (second Normal parameter is a variance)
//   w_t ~ U(-0.1, 0.1)^10 and w_y ~ U(-1, 1)^{10x2}, drawn once per dataset
//   t | x ~ Bern(sigmoid(w_t . x + n_t)), n_t ~ N(0, 0.1)
//   (y0, y1) = w_y^T x + n_y, n_y ~ N(0, 0.1 I_2), shared across the pair
// mu0/mu1 store the noiseless linear means.
Dataset gen_factored_continuous(int n, uint64_t seed, const FactoredGenOptions& opt = {});

}  // namespace cfdr
