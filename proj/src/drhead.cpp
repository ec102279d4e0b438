#include "cfdr/drhead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

struct DrRefs {
    MlpRef trunk, head0, head1, propensity, regressor;
};

DrRefs bind_dr(Graph& g, DrModel& m, bool trainable, BoundParams* bound) {
    DrRefs r;
    r.trunk = bind(g, m.trunk, trainable);
    r.head0 = bind(g, m.head0, trainable);
    r.head1 = bind(g, m.head1, trainable);
    r.propensity = bind(g, m.propensity, trainable);
    r.regressor = bind(g, m.regressor, trainable);
    if (bound) {
        bound->absorb(m.trunk, r.trunk);
        bound->absorb(m.head0, r.head0);
        bound->absorb(m.head1, r.head1);
        bound->absorb(m.propensity, r.propensity);
        bound->absorb(m.regressor, r.regressor);
    }
    return r;
}

struct PredIds {
    Graph::Id y0, y1, pi, mu;
};

PredIds dr_forward(Graph& g, const DrModel& m, const DrRefs& r, Graph::Id x, Graph::Id t) {
    PredIds out;
    const Graph::Id h = forward(g, r.trunk, x);
    out.y0 = forward(g, r.head0, h);
    out.y1 = forward(g, r.head1, h);
    out.pi = g.clamp(forward(g, r.propensity, x), m.cfg.eps_clip, 1.0 - m.cfg.eps_clip);
    out.mu = forward(g, r.regressor, g.concat_cols(x, t));
    return out;
}

struct DrOutIds {
    Graph::Id y_fdr, y_cfdr;
};

DrOutIds dr_outcome_nodes(Graph& g, const PredIds& p, Graph::Id t) {
    const Graph::Id not_t = one_minus(g, t);
    const Graph::Id not_pi = one_minus(g, p.pi);
    const Graph::Id a = g.mul(g.sub(t, p.pi), p.mu);  // (t - pi) mu
    const Graph::Id term_f1 = g.div(g.sub(g.mul(t, p.y1), a), p.pi);
    const Graph::Id term_f0 = g.div(g.sub(g.mul(not_t, p.y0), a), not_pi);
    const Graph::Id term_c1 = g.div(g.sub(g.mul(not_t, p.y1), a), p.pi);
    const Graph::Id term_c0 = g.div(g.sub(g.mul(t, p.y0), a), not_pi);
    DrOutIds out;
    out.y_fdr = g.add(g.mul(t, term_f1), g.mul(not_t, term_f0));
    out.y_cfdr = g.add(g.mul(not_t, term_c1), g.mul(t, term_c0));
    return out;
}

constexpr double kProbEps = 1e-7;

Graph::Id bce_mean(Graph& g, Graph::Id p_raw, Graph::Id t) {
    const Graph::Id p = g.clamp(p_raw, kProbEps, 1.0 - kProbEps);
    const Graph::Id ll =
        g.add(g.mul(t, g.log(p)), g.mul(one_minus(g, t), g.log(one_minus(g, p))));
    return g.mul_scalar(mean_all(g, ll), -1.0);
}

Graph::Id sq_err_mean(Graph& g, Graph::Id a, Graph::Id b) {
    const Graph::Id d = g.sub(a, b);
    return mean_all(g, g.mul(d, d));
}

struct LossIds {
    Graph::Id predicted, dr, total;
};

LossIds loss_nodes(Graph& g, const DrModel& m, const PredIds& p, Graph::Id t, Graph::Id y_f,
                   Graph::Id y_cf) {
    const Graph::Id not_t = one_minus(g, t);
    const Graph::Id y_f_hat = g.add(g.mul(t, p.y1), g.mul(not_t, p.y0));
    const Graph::Id y_cf_hat = g.add(g.mul(not_t, p.y1), g.mul(t, p.y0));

    LossIds out;
    out.predicted = g.add(g.add(sq_err_mean(g, y_f_hat, y_f), sq_err_mean(g, y_cf_hat, y_cf)),
                          g.mul_scalar(bce_mean(g, p.pi, t), m.cfg.alpha));
    const DrOutIds dr = dr_outcome_nodes(g, p, t);
    out.dr = g.add(sq_err_mean(g, dr.y_fdr, y_f), sq_err_mean(g, dr.y_cfdr, y_cf));
    out.total = g.add(out.predicted, g.mul_scalar(out.dr, m.cfg.beta));
    return out;
}

void check_column(const Tensor& t, int n, const char* name) {
    CFDR_CHECK(t.rows == n && t.cols == 1,
               name << " must be " << n << "x1, got " << t.rows << "x" << t.cols);
}

void check_treatment_column(const Tensor& t) {
    for (double v : t.data)
        CFDR_CHECK(v == 0.0 || v == 1.0, "treatment value " << v << " not in {0,1}");
}

std::vector<Tensor> snapshot(const std::vector<Tensor*>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Tensor* p : params) out.push_back(*p);
    return out;
}

void restore(const std::vector<Tensor*>& params, const std::vector<Tensor>& snap) {
    for (size_t i = 0; i < params.size(); ++i) *params[i] = snap[i];
}

}  // namespace

std::vector<Tensor*> DrModel::params() {
    std::vector<Tensor*> out;
    for (Mlp* m : {&trunk, &head0, &head1, &propensity, &regressor})
        for (Tensor* p : m->params()) out.push_back(p);
    return out;
}

size_t DrModel::param_count() const {
    return trunk.param_count() + head0.param_count() + head1.param_count() +
           propensity.param_count() + regressor.param_count();
}

DrModel build_dr(int x_dim, OutcomeKind outcome_kind, const DrConfig& cfg, uint64_t seed) {
    CFDR_CHECK(x_dim > 0, "build_dr: x_dim " << x_dim);
    CFDR_CHECK(!cfg.trunk_dims.empty() && !cfg.head_dims.empty() && !cfg.propensity_dims.empty() &&
                   !cfg.regressor_dims.empty(),
               "build_dr: empty layer list");
    CFDR_CHECK(cfg.eps_clip > 0.0 && cfg.eps_clip < 0.5, "build_dr: eps_clip " << cfg.eps_clip);

    DrModel m;
    m.cfg = cfg;
    m.outcome_kind = outcome_kind;
    m.x_dim = x_dim;
    const Act out_act = outcome_kind == OutcomeKind::Binary ? Act::Sigmoid : Act::Identity;

    auto widths = [](int in, const std::vector<int>& hidden, int out) {
        std::vector<int> d{in};
        for (int w : hidden) d.push_back(w);
        if (out > 0) d.push_back(out);
        return d;
    };
    auto acts = [](size_t hidden, Act last) {
        std::vector<Act> a(hidden, Act::Relu);
        a.push_back(last);
        return a;
    };

    // Trunk has no output layer of its own; its last hidden width feeds the heads.
    m.trunk = build_mlp(widths(x_dim, cfg.trunk_dims, 0),
                        std::vector<Act>(cfg.trunk_dims.size(), Act::Relu), mix_seed(seed, 20));
    const int rep = cfg.trunk_dims.back();
    // head_dims lists hidden widths plus the final width (normally 1).
    std::vector<int> head_hidden(cfg.head_dims.begin(), cfg.head_dims.end() - 1);
    m.head0 = build_mlp(widths(rep, head_hidden, cfg.head_dims.back()),
                        acts(head_hidden.size(), out_act), mix_seed(seed, 21));
    m.head1 = build_mlp(widths(rep, head_hidden, cfg.head_dims.back()),
                        acts(head_hidden.size(), out_act), mix_seed(seed, 22));
    m.propensity = build_mlp(widths(x_dim, cfg.propensity_dims, 1),
                             acts(cfg.propensity_dims.size(), Act::Sigmoid), mix_seed(seed, 23));
    m.regressor = build_mlp(widths(x_dim + 1, cfg.regressor_dims, 1),
                            acts(cfg.regressor_dims.size(), out_act), mix_seed(seed, 24));
    return m;
}

DrPredictions predict(const DrModel& m, const Tensor& x, const Tensor& t) {
    CFDR_CHECK(x.cols == m.x_dim, "predict: input width " << x.cols << ", model expects "
                                                          << m.x_dim);
    check_column(t, x.rows, "t");
    Graph g;
    DrModel& mm = const_cast<DrModel&>(m);
    const DrRefs r = bind_dr(g, mm, false, nullptr);
    const PredIds ids = dr_forward(g, m, r, g.leaf(x), g.leaf(t));
    return {g.value(ids.y0), g.value(ids.y1), g.value(ids.pi), g.value(ids.mu)};
}

DrPredictions predict(const DrModel& m, const Tensor& x) {
    // Without assignments the regressor is evaluated at t = 0; losses and the
    // doubly robust terms always go through the overload with the real t.
    return predict(m, x, Tensor(x.rows, 1));
}

FactualPair factual_counterfactual(const DrPredictions& p, const Tensor& t) {
    const int n = p.y0.rows;
    check_column(t, n, "t");
    check_treatment_column(t);
    FactualPair out;
    out.y_f = Tensor(n, 1);
    out.y_cf = Tensor(n, 1);
    for (int i = 0; i < n; ++i) {
        const double ti = t.data[i];
        out.y_f.data[i] = ti * p.y1.data[i] + (1.0 - ti) * p.y0.data[i];
        out.y_cf.data[i] = (1.0 - ti) * p.y1.data[i] + ti * p.y0.data[i];
    }
    return out;
}

double predicted_loss(const DrPredictions& p, const Tensor& t, const Tensor& y_f,
                      const Tensor& y_cf, double alpha) {
    const int n = p.y0.rows;
    check_column(t, n, "t");
    check_column(y_f, n, "y_f");
    check_column(y_cf, n, "y_cf");
    check_treatment_column(t);
    const FactualPair fp = factual_counterfactual(p, t);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ef = fp.y_f.data[i] - y_f.data[i];
        const double ec = fp.y_cf.data[i] - y_cf.data[i];
        const double pi = std::min(1.0 - kProbEps, std::max(kProbEps, p.pi.data[i]));
        const double bce =
            -(t.data[i] * std::log(pi) + (1.0 - t.data[i]) * std::log(1.0 - pi));
        acc += ef * ef + ec * ec + alpha * bce;
    }
    return acc / static_cast<double>(n);
}

DrOutcomes dr_outcomes(const DrPredictions& p, const Tensor& t) {
    const int n = p.y0.rows;
    check_column(t, n, "t");
    check_column(p.pi, n, "pi");
    check_treatment_column(t);
    DrOutcomes out;
    out.y_fdr = Tensor(n, 1);
    out.y_cfdr = Tensor(n, 1);
    for (int i = 0; i < n; ++i) {
        const double ti = t.data[i];
        const double pi = p.pi.data[i];
        CFDR_CHECK(pi > 0.0 && pi < 1.0, "dr_outcomes: propensity " << pi << " outside (0,1)");
        const double a = (ti - pi) * p.mu.data[i];
        const double f1 = (ti * p.y1.data[i] - a) / pi;
        const double f0 = ((1.0 - ti) * p.y0.data[i] - a) / (1.0 - pi);
        const double c1 = ((1.0 - ti) * p.y1.data[i] - a) / pi;
        const double c0 = (ti * p.y0.data[i] - a) / (1.0 - pi);
        out.y_fdr.data[i] = ti * f1 + (1.0 - ti) * f0;
        out.y_cfdr.data[i] = (1.0 - ti) * c1 + ti * c0;
    }
    return out;
}

double dr_loss(const DrOutcomes& o, const Tensor& y_f, const Tensor& y_cf) {
    const int n = o.y_fdr.rows;
    check_column(y_f, n, "y_f");
    check_column(y_cf, n, "y_cf");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ef = o.y_fdr.data[i] - y_f.data[i];
        const double ec = o.y_cfdr.data[i] - y_cf.data[i];
        acc += ef * ef + ec * ec;
    }
    return acc / static_cast<double>(n);
}

IteLossTerms ite_loss(const DrModel& m, const Tensor& x, const Tensor& t, const Tensor& y_f,
                      const Tensor& y_cf) {
    Graph g;
    DrModel& mm = const_cast<DrModel&>(m);
    const DrRefs r = bind_dr(g, mm, false, nullptr);
    const Graph::Id tid = g.leaf(t);
    const PredIds p = dr_forward(g, m, r, g.leaf(x), tid);
    const LossIds loss = loss_nodes(g, m, p, tid, g.leaf(y_f), g.leaf(y_cf));
    return {g.value(loss.predicted).data[0], g.value(loss.dr).data[0],
            g.value(loss.total).data[0]};
}

IteLossNodes ite_loss_nodes(Graph& g, DrModel& m, const Tensor& x, const Tensor& t,
                            const Tensor& y_f, const Tensor& y_cf) {
    check_treatment_column(t);
    IteLossNodes out;
    const DrRefs r = bind_dr(g, m, true, &out.bound);
    const Graph::Id tid = g.leaf(t);
    const PredIds p = dr_forward(g, m, r, g.leaf(x), tid);
    const LossIds loss = loss_nodes(g, m, p, tid, g.leaf(y_f), g.leaf(y_cf));
    out.predicted = loss.predicted;
    out.dr = loss.dr;
    out.total = loss.total;
    return out;
}

DrTrainResult train_dr(DrModel& m, const Dataset& train, const Dataset& validation,
                       uint64_t seed) {
    train.validate();
    CFDR_CHECK(train.n() >= 2, "train_dr: need at least 2 rows");
    CFDR_CHECK(train.y_cf.has_value(), "train_dr: training data has no counterfactual column");
    CFDR_CHECK(m.x_dim == train.d(),
               "train_dr: model width " << m.x_dim << ", data has " << train.d());
    const bool has_val = validation.n() > 0;
    if (has_val) validation.validate();

    const int n = train.n();
    const int bs = std::min(m.cfg.batch_size, n);
    CFDR_CHECK(bs > 0, "train_dr: batch size " << m.cfg.batch_size);

    Rng rng(mix_seed(seed, 300));
    AdamState opt;
    opt.lr = m.cfg.lr;
    const std::vector<Tensor*> params = m.params();

    Tensor val_x;
    Tensor val_t;
    Tensor val_y;
    if (has_val) {
        val_x = validation.x;
        val_t = Tensor::column(validation.t);
        val_y = Tensor::column(validation.y_f);
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    DrTrainResult result;
    result.history.reserve(static_cast<size_t>(m.cfg.epochs));
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params;

    for (int epoch = 0; epoch < m.cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        DrTrainEpoch ep;
        for (int start = 0; start < n; start += bs) {
            const int nb = std::min(bs, n - start);
            Tensor xb(nb, train.d());
            Tensor tb(nb, 1);
            Tensor yfb(nb, 1);
            Tensor ycfb(nb, 1);
            for (int i = 0; i < nb; ++i) {
                const int row = order[static_cast<size_t>(start + i)];
                for (int j = 0; j < train.d(); ++j) xb.at(i, j) = train.x.at(row, j);
                tb.data[i] = train.t[static_cast<size_t>(row)];
                yfb.data[i] = train.y_f[static_cast<size_t>(row)];
                ycfb.data[i] = (*train.y_cf)[static_cast<size_t>(row)];
            }

            Graph g;
            const IteLossNodes loss = ite_loss_nodes(g, m, xb, tb, yfb, ycfb);

            const double total = g.value(loss.total).data[0];
            CFDR_CHECK(std::isfinite(total), "train_dr: non-finite loss");
            g.backward(loss.total);
            adam_step(loss.bound.params, loss.bound.grads(g), opt);

            const double w = static_cast<double>(nb) / static_cast<double>(n);
            ep.predicted += w * g.value(loss.predicted).data[0];
            ep.dr += w * g.value(loss.dr).data[0];
            ep.total += w * total;
        }

        if (has_val) {
            const DrPredictions vp = predict(m, val_x);
            const FactualPair vf = factual_counterfactual(vp, val_t);
            double mse = 0.0;
            for (int i = 0; i < val_x.rows; ++i) {
                const double e = vf.y_f.data[i] - val_y.data[i];
                mse += e * e;
            }
            mse /= static_cast<double>(val_x.rows);
            ep.validation_factual_mse = mse;
            if (mse < best_val) {
                best_val = mse;
                best_params = snapshot(params);
                result.selected_epoch = epoch;
            }
        } else {
            ep.validation_factual_mse = std::numeric_limits<double>::quiet_NaN();
            result.selected_epoch = epoch;
        }
        result.history.push_back(ep);
    }

    if (has_val && !best_params.empty()) restore(params, best_params);
    return result;
}

Tensor estimate_ite(const DrModel& m, const Tensor& x) {
    const DrPredictions p = predict(m, x);
    Tensor out(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) out.data[i] = p.y1.data[i] - p.y0.data[i];
    return out;
}

double dr_ate_estimate(const std::vector<double>& y, const std::vector<double>& t,
                       const std::vector<double>& pi, const std::vector<double>& mu) {
    const size_t n = y.size();
    CFDR_CHECK(n > 0, "dr_ate_estimate: empty input");
    CFDR_CHECK(t.size() == n && pi.size() == n && mu.size() == n,
               "dr_ate_estimate: column lengths " << n << ", " << t.size() << ", " << pi.size()
                                                  << ", " << mu.size());
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        CFDR_CHECK(t[i] == 0.0 || t[i] == 1.0, "dr_ate_estimate: treatment " << t[i]);
        CFDR_CHECK(pi[i] > 0.0 && pi[i] < 1.0,
                   "dr_ate_estimate: propensity " << pi[i] << " outside (0,1)");
        const double a = (t[i] - pi[i]) * mu[i];
        acc += (y[i] * t[i] - a) / pi[i] - (y[i] * (1.0 - t[i]) - a) / (1.0 - pi[i]);
    }
    return acc / static_cast<double>(n);
}

}  // namespace cfdr
