#pragma once

#include <optional>
#include <vector>

#include "cfdr/dataset.hpp"

namespace cfdr {

struct PeheResult {
    double mse = 0.0;   // mean squared effect error
    double rmse = 0.0;  // its square root
};

PeheResult pehe(const std::vector<double>& true_eff, const std::vector<double>& pred_eff);

// Squared difference between the mean true and mean predicted effect.
double ate_error(const std::vector<double>& true_eff, const std::vector<double>& pred_eff);

// Absolute difference of the two means; companion to ate_error.
double ate_abs_error(const std::vector<double>& true_eff, const std::vector<double>& pred_eff);

// Policy value shortfall on the randomized subset e = 1. The policy treats
// where yhat1 > yhat0 (ties mean no treatment); each policy group contributes
// the mean factual outcome of its members whose assigned treatment matches,
// weighted by the group share. Empty intersections contribute zero.
double policy_risk(const std::vector<double>& yhat1, const std::vector<double>& yhat0,
                   const std::vector<double>& t, const std::vector<double>& y,
                   const std::vector<double>& e);

struct AttResult {
    double att = 0.0;    // factual treated-vs-control difference on e = 1
    double error = 0.0;  // |att - mean predicted effect over treated, e = 1|
};

AttResult att_and_error(const std::vector<double>& y, const std::vector<double>& t,
                        const std::vector<double>& e, const std::vector<double>& pred_eff);

// Everything a dataset and a trained model can be scored on. true_eff comes
// from mu1 - mu0 when the noiseless means exist, otherwise from the realized
// potential outcomes when a counterfactual column exists.
struct EvalInput {
    std::vector<double> yhat0;
    std::vector<double> yhat1;
    std::vector<double> t;
    std::vector<double> y_f;
    std::optional<std::vector<double>> true_eff;
    std::optional<std::vector<double>> e;
};

EvalInput make_eval_input(const Dataset& ds, const std::vector<double>& yhat0,
                          const std::vector<double>& yhat1);

struct MetricSet {
    std::optional<double> pehe_sq;
    std::optional<double> pehe_rmse;
    std::optional<double> eps_ate;   // squared
    std::optional<double> ate_abs;
    std::optional<double> ate_true;
    std::optional<double> ate_model;
    std::optional<double> ate_dr;  // doubly-robust estimate; filled by callers with nuisances
    std::optional<double> r_pol;
    std::optional<double> att;
    std::optional<double> eps_att;
    double factual_rmse = 0.0;
};

MetricSet evaluate(const EvalInput& in);

}  // namespace cfdr
