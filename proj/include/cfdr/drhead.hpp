#pragma once

#include <cstdint>
#include <vector>

#include "cfdr/dataset.hpp"
#include "cfdr/nn.hpp"

namespace cfdr {

struct DrConfig {
    std::vector<int> trunk_dims = {200, 200, 100};
    std::vector<int> head_dims = {100, 100, 1};          // per outcome head
    std::vector<int> propensity_dims = {200, 200};
    std::vector<int> regressor_dims = {200, 200, 200, 100, 100, 100};
    double alpha = 1.0;     // propensity cross-entropy weight
    double beta = 1.0;      // doubly-robust loss weight; 0 disables the term
    double eps_clip = 0.01; // propensity clamp
    double lr = 1e-4;
    int epochs = 200;
    int batch_size = 64;
};

// Shared representation with two outcome heads, plus a propensity head on x
// and an outcome regressor on (x, t). Trained end to end on one loss.
struct DrModel {
    DrConfig cfg;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    int x_dim = 0;
    Mlp trunk;
    Mlp head0;
    Mlp head1;
    Mlp propensity;
    Mlp regressor;

    std::vector<Tensor*> params();
    size_t param_count() const;
};

DrModel build_dr(int x_dim, OutcomeKind outcome_kind, const DrConfig& cfg, uint64_t seed);

// All columns are n x 1. pi is already clamped to [eps_clip, 1 - eps_clip].
struct DrPredictions {
    Tensor y0;
    Tensor y1;
    Tensor pi;
    Tensor mu;
};

// The regressor head depends on the treatment; the overload without t
// evaluates it at t = 0.
DrPredictions predict(const DrModel& m, const Tensor& x, const Tensor& t);
DrPredictions predict(const DrModel& m, const Tensor& x);

struct FactualPair {
    Tensor y_f;
    Tensor y_cf;
};

// y_f_hat = t y1 + (1-t) y0 and the swap for the counterfactual.
FactualPair factual_counterfactual(const DrPredictions& p, const Tensor& t);

// mean[(y_f_hat - y_f)^2 + (y_cf_hat - y_cf)^2 + alpha * BCE(pi, t)]
double predicted_loss(const DrPredictions& p, const Tensor& t, const Tensor& y_f,
                      const Tensor& y_cf, double alpha);

// Doubly-robust corrected outcomes:
//   y_fdr  = t (t y1 - (t-pi) mu)/pi + (1-t) ((1-t) y0 - (t-pi) mu)/(1-pi)
//   y_cfdr = (1-t) ((1-t) y1 - (t-pi) mu)/pi + t (t y0 - (t-pi) mu)/(1-pi)
struct DrOutcomes {
    Tensor y_fdr;
    Tensor y_cfdr;
};

DrOutcomes dr_outcomes(const DrPredictions& p, const Tensor& t);

// mean[(y_fdr - y_f)^2 + (y_cfdr - y_cf)^2]
double dr_loss(const DrOutcomes& o, const Tensor& y_f, const Tensor& y_cf);

struct IteLossTerms {
    double predicted = 0.0;
    double dr = 0.0;
    double total = 0.0;  // predicted + beta * dr
};

IteLossTerms ite_loss(const DrModel& m, const Tensor& x, const Tensor& t, const Tensor& y_f,
                      const Tensor& y_cf);

// Graph-side builder behind ite_loss and train_dr; bound carries the
// parameter nodes so callers can run backward on total.
struct IteLossNodes {
    BoundParams bound;
    Graph::Id predicted = -1;
    Graph::Id dr = -1;
    Graph::Id total = -1;
};

IteLossNodes ite_loss_nodes(Graph& g, DrModel& m, const Tensor& x, const Tensor& t,
                            const Tensor& y_f, const Tensor& y_cf);

struct DrTrainEpoch {
    double predicted = 0.0;
    double dr = 0.0;
    double total = 0.0;
    double validation_factual_mse = 0.0;  // NaN when no validation split
};

struct DrTrainResult {
    std::vector<DrTrainEpoch> history;
    int selected_epoch = -1;  // epoch whose parameters the model ends up with
};

// Adam on the full model. With a non-empty validation set the parameters with
// the lowest factual validation error are restored at the end; otherwise the
// last epoch stands.
DrTrainResult train_dr(DrModel& m, const Dataset& train, const Dataset& validation,
                       uint64_t seed);

// tau_hat = y1_hat - y0_hat per row.
Tensor estimate_ite(const DrModel& m, const Tensor& x);

// Standalone doubly-robust average treatment effect on plain columns:
//   mean[(y t - (t-pi) mu)/pi - (y (1-t) - (t-pi) mu)/(1-pi)]
double dr_ate_estimate(const std::vector<double>& y, const std::vector<double>& t,
                       const std::vector<double>& pi, const std::vector<double>& mu);

}  // namespace cfdr
