#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cfdr/tensor.hpp"

namespace cfdr {

enum class OutcomeKind { Continuous, Binary };

// One observational dataset. x is n x d; t and y_f always present; the
// optional columns carry counterfactuals, noiseless outcome means, and the
// randomized-subset flag when the source provides them. x_binary marks
// covariate columns that should be modeled as Bernoulli rather than Gaussian;
// empty means all Gaussian.
struct Dataset {
    Tensor x;
    std::vector<double> t;
    std::vector<double> y_f;
    std::optional<std::vector<double>> y_cf;
    std::optional<std::vector<double>> mu0;
    std::optional<std::vector<double>> mu1;
    std::optional<std::vector<double>> e;
    std::vector<bool> x_binary;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;

    int n() const { return x.rows; }
    int d() const { return x.cols; }

    Dataset take(const std::vector<int>& idx) const;
    void validate() const;
};

struct SplitSpec {
    double train = 0.56;
    double validation = 0.24;
    double test = 0.20;
    uint64_t seed = 0;
};

struct Splits {
    Dataset train;
    Dataset validation;  // may be empty when the validation fraction is 0
    Dataset test;
    std::vector<int> train_idx, validation_idx, test_idx;
};

// Deterministic shuffle-and-cut. Fractions must be non-negative, sum to 1,
// and leave train and test non-empty.
Splits split(const Dataset& ds, const SplitSpec& spec);

}  // namespace cfdr
