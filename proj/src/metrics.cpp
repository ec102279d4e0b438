#include "cfdr/metrics.hpp"

#include <cmath>

#include "cfdr/check.hpp"

namespace cfdr {

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
    CFDR_CHECK(a == b, what << ": size mismatch " << a << " vs " << b);
    CFDR_CHECK(a > 0, what << ": empty input");
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

PeheResult pehe(const std::vector<double>& true_eff, const std::vector<double>& pred_eff) {
    check_same_size(true_eff.size(), pred_eff.size(), "pehe");
    double s = 0.0;
    for (std::size_t i = 0; i < true_eff.size(); ++i) {
        const double d = pred_eff[i] - true_eff[i];
        s += d * d;
    }
    PeheResult r;
    r.mse = s / static_cast<double>(true_eff.size());
    r.rmse = std::sqrt(r.mse);
    return r;
}

double ate_error(const std::vector<double>& true_eff, const std::vector<double>& pred_eff) {
    check_same_size(true_eff.size(), pred_eff.size(), "ate_error");
    const double d = mean_of(true_eff) - mean_of(pred_eff);
    return d * d;
}

double ate_abs_error(const std::vector<double>& true_eff, const std::vector<double>& pred_eff) {
    check_same_size(true_eff.size(), pred_eff.size(), "ate_abs_error");
    return std::abs(mean_of(true_eff) - mean_of(pred_eff));
}

double policy_risk(const std::vector<double>& yhat1, const std::vector<double>& yhat0,
                   const std::vector<double>& t, const std::vector<double>& y,
                   const std::vector<double>& e) {
    const std::size_t n = yhat1.size();
    check_same_size(n, yhat0.size(), "policy_risk");
    check_same_size(n, t.size(), "policy_risk");
    check_same_size(n, y.size(), "policy_risk");
    check_same_size(n, e.size(), "policy_risk");

    // Policy and value are estimated on the randomized subset only.
    std::size_t n_e = 0;
    std::size_t n_treat = 0;        // policy says treat, within e = 1
    double sum_y_treat = 0.0;       // factual y where policy = 1 and t = 1
    std::size_t n_match_treat = 0;
    double sum_y_control = 0.0;     // factual y where policy = 0 and t = 0
    std::size_t n_match_control = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (e[i] == 0.0) continue;
        ++n_e;
        const bool treat = yhat1[i] > yhat0[i];
        if (treat) {
            ++n_treat;
            if (t[i] == 1.0) {
                sum_y_treat += y[i];
                ++n_match_treat;
            }
        } else {
            if (t[i] == 0.0) {
                sum_y_control += y[i];
                ++n_match_control;
            }
        }
    }
    CFDR_CHECK(n_e > 0, "policy_risk: no randomized rows (e = 1)");

    const double p_treat = static_cast<double>(n_treat) / static_cast<double>(n_e);
    double value = 0.0;
    if (n_match_treat > 0) value += p_treat * sum_y_treat / static_cast<double>(n_match_treat);
    if (n_match_control > 0)
        value += (1.0 - p_treat) * sum_y_control / static_cast<double>(n_match_control);
    return 1.0 - value;
}

AttResult att_and_error(const std::vector<double>& y, const std::vector<double>& t,
                        const std::vector<double>& e, const std::vector<double>& pred_eff) {
    const std::size_t n = y.size();
    check_same_size(n, t.size(), "att_and_error");
    check_same_size(n, e.size(), "att_and_error");
    check_same_size(n, pred_eff.size(), "att_and_error");

    double sum_y1 = 0.0, sum_y0 = 0.0, sum_eff = 0.0;
    std::size_t n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (e[i] == 0.0) continue;
        if (t[i] == 1.0) {
            sum_y1 += y[i];
            sum_eff += pred_eff[i];
            ++n1;
        } else {
            sum_y0 += y[i];
            ++n0;
        }
    }
    CFDR_CHECK(n1 > 0, "att_and_error: no treated randomized rows");
    CFDR_CHECK(n0 > 0, "att_and_error: no control randomized rows");

    AttResult r;
    r.att = sum_y1 / static_cast<double>(n1) - sum_y0 / static_cast<double>(n0);
    r.error = std::abs(r.att - sum_eff / static_cast<double>(n1));
    return r;
}

EvalInput make_eval_input(const Dataset& ds, const std::vector<double>& yhat0,
                          const std::vector<double>& yhat1) {
    const std::size_t n = static_cast<std::size_t>(ds.n());
    check_same_size(n, yhat0.size(), "make_eval_input");
    check_same_size(n, yhat1.size(), "make_eval_input");

    EvalInput in;
    in.yhat0 = yhat0;
    in.yhat1 = yhat1;
    in.t = ds.t;
    in.y_f = ds.y_f;
    if (ds.mu0 && ds.mu1) {
        std::vector<double> eff(n);
        for (std::size_t i = 0; i < n; ++i) eff[i] = (*ds.mu1)[i] - (*ds.mu0)[i];
        in.true_eff = std::move(eff);
    } else if (ds.y_cf) {
        // Realized effect: y1 - y0 composed from the factual and counterfactual rows.
        std::vector<double> eff(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double y1 = ds.t[i] == 1.0 ? ds.y_f[i] : (*ds.y_cf)[i];
            const double y0 = ds.t[i] == 1.0 ? (*ds.y_cf)[i] : ds.y_f[i];
            eff[i] = y1 - y0;
        }
        in.true_eff = std::move(eff);
    }
    if (ds.e) in.e = *ds.e;
    return in;
}

MetricSet evaluate(const EvalInput& in) {
    const std::size_t n = in.yhat0.size();
    check_same_size(n, in.yhat1.size(), "evaluate");
    check_same_size(n, in.t.size(), "evaluate");
    check_same_size(n, in.y_f.size(), "evaluate");

    MetricSet m;
    std::vector<double> pred_eff(n);
    for (std::size_t i = 0; i < n; ++i) pred_eff[i] = in.yhat1[i] - in.yhat0[i];
    m.ate_model = mean_of(pred_eff);

    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double yhat_f = in.t[i] == 1.0 ? in.yhat1[i] : in.yhat0[i];
        const double d = yhat_f - in.y_f[i];
        sq += d * d;
    }
    m.factual_rmse = std::sqrt(sq / static_cast<double>(n));

    if (in.true_eff) {
        const PeheResult p = pehe(*in.true_eff, pred_eff);
        m.pehe_sq = p.mse;
        m.pehe_rmse = p.rmse;
        m.eps_ate = ate_error(*in.true_eff, pred_eff);
        m.ate_abs = ate_abs_error(*in.true_eff, pred_eff);
        m.ate_true = mean_of(*in.true_eff);
    }
    if (in.e) {
        m.r_pol = policy_risk(in.yhat1, in.yhat0, in.t, in.y_f, *in.e);
        const AttResult a = att_and_error(in.y_f, in.t, *in.e, pred_eff);
        m.att = a.att;
        m.eps_att = a.error;
    }
    return m;
}

}  // namespace cfdr
