#include "cfdr/datagen.hpp"

#include <cmath>

#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Dataset gen_confounded_binary(int n, uint64_t seed) {
    CFDR_CHECK(n > 0, "gen_confounded_binary: n must be positive, got " << n);
    Rng rng(seed);
    const int d = 5;

    Dataset ds;
    ds.x = Tensor(n, d);
    ds.t.resize(n);
    ds.y_f.resize(n);
    ds.y_cf.emplace(n, 0.0);
    ds.mu0.emplace(n, 0.0);
    ds.mu1.emplace(n, 0.0);
    ds.outcome_kind = OutcomeKind::Binary;

    for (int i = 0; i < n; ++i) {
        const double z = rng.bernoulli(0.5);
        const double sd = z > 0.5 ? 5.0 : 3.0;  // variance 25 or 9
        for (int j = 0; j < d; ++j) ds.x.at(i, j) = rng.normal(z, sd);

        const double t = rng.bernoulli(0.75 * z + 0.25 * (1.0 - z));
        const double p1 = sigmoid(3.0 * (z + 2.0));
        const double p0 = sigmoid(3.0 * (z - 2.0));
        const double y1 = rng.bernoulli(p1);
        const double y0 = rng.bernoulli(p0);

        ds.t[i] = t;
        ds.y_f[i] = t > 0.5 ? y1 : y0;
        (*ds.y_cf)[i] = t > 0.5 ? y0 : y1;
        (*ds.mu0)[i] = p0;
        (*ds.mu1)[i] = p1;
    }
    return ds;
}

double confounded_binary_true_ate() {
    return 0.5 * (sigmoid(9.0) - sigmoid(-3.0)) + 0.5 * (sigmoid(6.0) - sigmoid(-6.0));
}

Dataset gen_factored_continuous(int n, uint64_t seed, const FactoredGenOptions& opt) {
    CFDR_CHECK(n > 0, "gen_factored_continuous: n must be positive, got " << n);
    Rng rng(seed);
    const int d = 10;

    double w_t[10];
    for (double& w : w_t) w = opt.zero_treatment_model ? 0.0 : rng.uniform(-0.1, 0.1);
    double w_y[10][2];
    for (auto& row : w_y)
        for (double& w : row) w = rng.uniform(-1.0, 1.0);

    Dataset ds;
    ds.x = Tensor(n, d);
    ds.t.resize(n);
    ds.y_f.resize(n);
    ds.y_cf.emplace(n, 0.0);
    ds.mu0.emplace(n, 0.0);
    ds.mu1.emplace(n, 0.0);
    ds.outcome_kind = OutcomeKind::Continuous;

    const double noise_sd = std::sqrt(0.1);
    for (int i = 0; i < n; ++i) {
        double x[10];
        for (int j = 0; j < 7; ++j) {
            const double z = rng.bernoulli(0.5);
            x[j] = rng.normal(z, std::sqrt(5.0 * z + 3.0 * (1.0 - z)));
        }
        {
            const double z = rng.bernoulli(0.5);
            x[7] = rng.normal(z, std::sqrt(2.0 * z + 0.5 * (1.0 - z)));
        }
        for (int j = 8; j < 10; ++j) {
            const double z = rng.bernoulli(0.5);
            x[j] = rng.normal(z, std::sqrt(10.0 * z + 6.0 * (1.0 - z)));
        }
        for (int j = 0; j < d; ++j) ds.x.at(i, j) = x[j];

        double logit = opt.zero_treatment_model ? 0.0 : rng.normal(0.0, noise_sd);
        for (int j = 0; j < d; ++j) logit += w_t[j] * x[j];
        const double t = rng.bernoulli(sigmoid(logit));

        double mean[2] = {0.0, 0.0};
        for (int j = 0; j < d; ++j) {
            mean[0] += w_y[j][0] * x[j];
            mean[1] += w_y[j][1] * x[j];
        }
        const double eps0 = rng.normal(0.0, noise_sd);
        const double eps1 = rng.normal(0.0, noise_sd);
        // Column k of w_y is arm k by default; the swap flips the mapping.
        const int c0 = opt.swap_outcome_columns ? 1 : 0;
        const int c1 = 1 - c0;
        const double mu0 = mean[c0];
        const double mu1 = mean[c1];
        const double y0 = mu0 + (c0 == 0 ? eps0 : eps1);
        const double y1 = mu1 + (c1 == 1 ? eps1 : eps0);

        ds.t[i] = t;
        ds.y_f[i] = t > 0.5 ? y1 : y0;
        (*ds.y_cf)[i] = t > 0.5 ? y0 : y1;
        (*ds.mu0)[i] = mu0;
        (*ds.mu1)[i] = mu1;
    }
    return ds;
}

}  // namespace cfdr
