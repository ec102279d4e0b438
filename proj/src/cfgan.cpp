#include "cfdr/cfgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

constexpr double kProbEps = 1e-7;
constexpr double kHalfLog2Pi = 0.9189385332046727;

struct GenRef {
    MlpRef shared;
    MlpRef head0;
    MlpRef head1;
};

GenRef bind_gen(Graph& g, const Generator& gen, bool trainable, BoundParams* bound,
                Generator* mut) {
    GenRef ref;
    ref.shared = bind(g, gen.shared, trainable);
    ref.head0 = bind(g, gen.head0, trainable);
    ref.head1 = bind(g, gen.head1, trainable);
    if (bound && mut) {
        bound->absorb(mut->shared, ref.shared);
        bound->absorb(mut->head0, ref.head0);
        bound->absorb(mut->head1, ref.head1);
    }
    return ref;
}

Graph::Id gen_forward(Graph& g, const GenRef& ref, Graph::Id z_g, Graph::Id z_c) {
    const Graph::Id z_in = g.concat_cols(z_g, z_c);
    const Graph::Id h = forward(g, ref.shared, z_in);
    const Graph::Id y0 = forward(g, ref.head0, h);
    const Graph::Id y1 = forward(g, ref.head1, h);
    return g.concat_cols(y0, y1);
}

struct ReplacedIds {
    Graph::Id y0;
    Graph::Id y1;
};

ReplacedIds replace_factual_nodes(Graph& g, Graph::Id pair, Graph::Id t, Graph::Id y_f) {
    const Graph::Id y0 = g.slice_cols(pair, 0, 1);
    const Graph::Id y1 = g.slice_cols(pair, 1, 2);
    const Graph::Id not_t = one_minus(g, t);
    ReplacedIds out;
    out.y0 = g.add(g.mul(not_t, y_f), g.mul(t, y0));
    out.y1 = g.add(g.mul(t, y_f), g.mul(not_t, y1));
    return out;
}

Graph::Id dsc_prob(Graph& g, const MlpRef& dsc, Graph::Id x, const ReplacedIds& pair) {
    const Graph::Id d_in = g.concat_cols(x, g.concat_cols(pair.y0, pair.y1));
    return g.clamp(forward(g, dsc, d_in), kProbEps, 1.0 - kProbEps);
}

// mean over rows of t log d + (1-t) log(1-d)
Graph::Id v_gan_node(Graph& g, Graph::Id d, Graph::Id t) {
    const Graph::Id ll =
        g.add(g.mul(t, g.log(d)), g.mul(one_minus(g, t), g.log(one_minus(g, d))));
    return mean_all(g, ll);
}

// Non-saturating generator direction: push D toward the flipped labels.
Graph::Id adv_node(Graph& g, Graph::Id d, Graph::Id t) {
    const Graph::Id ll =
        g.add(g.mul(t, g.log(one_minus(g, d))), g.mul(one_minus(g, t), g.log(d)));
    return g.mul_scalar(mean_all(g, ll), -1.0);
}

struct QIds {
    Graph::Id mean;
    Graph::Id logvar;
};

QIds q_forward(Graph& g, const MlpRef& trunk, const MlpRef& head, Graph::Id pair, int code_dim) {
    const Graph::Id h = forward(g, trunk, pair);
    const Graph::Id out = forward(g, head, h);
    return {g.slice_cols(out, 0, code_dim), g.slice_cols(out, code_dim, 2 * code_dim)};
}

// mean over rows of sum_j log N(z_j; mean_j, exp(logvar_j))
Graph::Id info_node(Graph& g, const QIds& q, Graph::Id z_c) {
    const int n = g.value(z_c).rows;
    const Graph::Id diff = g.sub(z_c, q.mean);
    const Graph::Id quad = g.mul(g.mul(diff, diff), g.exp(g.mul_scalar(q.logvar, -1.0)));
    const Graph::Id cell = g.add_scalar(
        g.mul_scalar(g.add(q.logvar, quad), -0.5), -kHalfLog2Pi);
    return g.mul_scalar(g.sum(cell), 1.0 / static_cast<double>(n));
}

Tensor column_of(const std::vector<double>& v) { return Tensor::column(v); }

void check_treatment(const Tensor& t) {
    CFDR_CHECK(t.cols == 1, "treatment must be a column, got " << t.rows << "x" << t.cols);
    for (double v : t.data)
        CFDR_CHECK(v == 0.0 || v == 1.0, "treatment value " << v << " not in {0,1}");
}

}  // namespace

std::vector<Tensor*> CounterfactualGan::params() {
    std::vector<Tensor*> out;
    for (Tensor* p : gen.shared.params()) out.push_back(p);
    for (Tensor* p : gen.head0.params()) out.push_back(p);
    for (Tensor* p : gen.head1.params()) out.push_back(p);
    for (Tensor* p : dsc.net.params()) out.push_back(p);
    for (Tensor* p : q.trunk.params()) out.push_back(p);
    for (Tensor* p : q.head.params()) out.push_back(p);
    return out;
}

size_t CounterfactualGan::param_count() const {
    return gen.shared.param_count() + gen.head0.param_count() + gen.head1.param_count() +
           dsc.net.param_count() + q.trunk.param_count() + q.head.param_count();
}

CounterfactualGan build_cfgan(int x_dim, int z_c_dim, OutcomeKind outcome_kind,
                              const GanConfig& cfg, uint64_t seed) {
    CFDR_CHECK(x_dim > 0, "build_cfgan: x_dim " << x_dim);
    CFDR_CHECK(z_c_dim > 0, "build_cfgan: z_c_dim " << z_c_dim);
    CFDR_CHECK(cfg.z_g_dim > 0, "build_cfgan: z_g_dim " << cfg.z_g_dim);

    CounterfactualGan gan;
    gan.cfg = cfg;
    gan.x_dim = x_dim;

    const int w = cfg.gen_width;
    const Act head_act = outcome_kind == OutcomeKind::Binary ? Act::Sigmoid : Act::Identity;
    gan.gen.outcome_kind = outcome_kind;
    gan.gen.z_g_dim = cfg.z_g_dim;
    gan.gen.z_c_dim = z_c_dim;
    gan.gen.shared = build_mlp({cfg.z_g_dim + z_c_dim, w, w}, {Act::Relu, Act::Relu},
                               mix_seed(seed, 10));
    gan.gen.head0 =
        build_mlp({w, w, w, 1}, {Act::Relu, Act::Relu, head_act}, mix_seed(seed, 11));
    gan.gen.head1 =
        build_mlp({w, w, w, 1}, {Act::Relu, Act::Relu, head_act}, mix_seed(seed, 12));

    std::vector<int> ddims{x_dim + 2};
    for (int i = 0; i < cfg.dsc_layers; ++i) ddims.push_back(cfg.dsc_width);
    ddims.push_back(1);
    std::vector<Act> dacts(cfg.dsc_layers, Act::Relu);
    dacts.push_back(Act::Sigmoid);
    gan.dsc.net = build_mlp(ddims, dacts, mix_seed(seed, 13));

    gan.q.code_dim = z_c_dim;
    std::vector<int> qdims{2};
    for (int i = 0; i < cfg.q_layers; ++i) qdims.push_back(cfg.q_width);
    gan.q.trunk = build_mlp(qdims, std::vector<Act>(cfg.q_layers, Act::Relu), mix_seed(seed, 14));
    gan.q.head = build_mlp({cfg.q_width, 2 * z_c_dim}, {Act::Identity}, mix_seed(seed, 15));
    return gan;
}

Tensor generate(const Generator& gen, const Tensor& z_g, const Tensor& z_c) {
    CFDR_CHECK(z_g.rows == z_c.rows,
               "generate: z_g has " << z_g.rows << " rows, z_c has " << z_c.rows);
    CFDR_CHECK(z_g.cols == gen.z_g_dim,
               "generate: z_g width " << z_g.cols << ", model expects " << gen.z_g_dim);
    CFDR_CHECK(z_c.cols == gen.z_c_dim,
               "generate: z_c width " << z_c.cols << ", model expects " << gen.z_c_dim);
    Graph g;
    const GenRef ref = bind_gen(g, gen, false, nullptr, nullptr);
    return g.value(gen_forward(g, ref, g.leaf(z_g), g.leaf(z_c)));
}

ReplacedPair replace_factual(const Tensor& pair, const Tensor& t, const Tensor& y_f) {
    CFDR_CHECK(pair.cols == 2, "replace_factual: pair must be n x 2, got " << pair.rows << "x"
                                                                           << pair.cols);
    CFDR_CHECK(t.rows == pair.rows && y_f.rows == pair.rows && y_f.cols == 1,
               "replace_factual: row mismatch");
    check_treatment(t);
    ReplacedPair out;
    out.y0 = Tensor(pair.rows, 1);
    out.y1 = Tensor(pair.rows, 1);
    for (int i = 0; i < pair.rows; ++i) {
        const double ti = t.data[i];
        out.y0.data[i] = (1.0 - ti) * y_f.data[i] + ti * pair.at(i, 0);
        out.y1.data[i] = ti * y_f.data[i] + (1.0 - ti) * pair.at(i, 1);
    }
    return out;
}

double v_gan(const Tensor& d_prob, const Tensor& t) {
    CFDR_CHECK(d_prob.same_shape(t) && d_prob.cols == 1, "v_gan: want matching n x 1 columns");
    check_treatment(t);
    double acc = 0.0;
    for (int i = 0; i < d_prob.rows; ++i) {
        const double d = std::min(1.0 - kProbEps, std::max(kProbEps, d_prob.data[i]));
        acc += t.data[i] * std::log(d) + (1.0 - t.data[i]) * std::log(1.0 - d);
    }
    return acc / static_cast<double>(d_prob.rows);
}

double supervised_loss(const Tensor& y_f, const Tensor& y_f_hat) {
    CFDR_CHECK(y_f.same_shape(y_f_hat) && y_f.cols == 1,
               "supervised_loss: want matching n x 1 columns");
    CFDR_CHECK(y_f.rows > 0, "supervised_loss: empty batch");
    double acc = 0.0;
    for (int i = 0; i < y_f.rows; ++i) {
        const double d = y_f.data[i] - y_f_hat.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y_f.rows);
}

double info_lower_bound(const QNetwork& q, const Tensor& pair, const Tensor& z_c) {
    CFDR_CHECK(pair.cols == 2, "info_lower_bound: pair must be n x 2");
    CFDR_CHECK(z_c.rows == pair.rows && z_c.cols == q.code_dim,
               "info_lower_bound: z_c is " << z_c.rows << "x" << z_c.cols << ", want "
                                           << pair.rows << "x" << q.code_dim);
    Graph g;
    const MlpRef trunk = bind(g, q.trunk, false);
    const MlpRef head = bind(g, q.head, false);
    const QIds ids = q_forward(g, trunk, head, g.leaf(pair), q.code_dim);
    return g.value(info_node(g, ids, g.leaf(z_c))).data[0];
}

double discriminator_loss(const CounterfactualGan& gan, const Tensor& x, const Tensor& t,
                          const Tensor& y_f, const Tensor& z_g, const Tensor& z_c) {
    const Tensor pair = generate(gan.gen, z_g, z_c);
    Graph g;
    const MlpRef dsc = bind(g, gan.dsc.net, false);
    const ReplacedIds rep =
        replace_factual_nodes(g, g.leaf(pair), g.leaf(t), g.leaf(y_f));
    const Graph::Id d = dsc_prob(g, dsc, g.leaf(x), rep);
    return -g.value(v_gan_node(g, d, g.leaf(t))).data[0];
}

GenLossTerms generator_loss(const CounterfactualGan& gan, const Tensor& x, const Tensor& t,
                            const Tensor& y_f, const Tensor& z_g, const Tensor& z_c) {
    Graph g;
    const GenRef gref = bind_gen(g, gan.gen, false, nullptr, nullptr);
    const MlpRef dsc = bind(g, gan.dsc.net, false);
    const MlpRef qt = bind(g, gan.q.trunk, false);
    const MlpRef qh = bind(g, gan.q.head, false);

    const Graph::Id tid = g.leaf(t);
    const Graph::Id yfid = g.leaf(y_f);
    const Graph::Id pair = gen_forward(g, gref, g.leaf(z_g), g.leaf(z_c));
    const ReplacedIds rep = replace_factual_nodes(g, pair, tid, yfid);
    const Graph::Id d = dsc_prob(g, dsc, g.leaf(x), rep);

    const Graph::Id y0 = g.slice_cols(pair, 0, 1);
    const Graph::Id y1 = g.slice_cols(pair, 1, 2);
    const Graph::Id y_f_hat = g.add(g.mul(tid, y1), g.mul(one_minus(g, tid), y0));
    const Graph::Id err = g.sub(yfid, y_f_hat);
    const Graph::Id sup = mean_all(g, g.mul(err, err));

    const QIds q = q_forward(g, qt, qh, pair, gan.q.code_dim);
    const Graph::Id info = info_node(g, q, g.leaf(z_c));
    const Graph::Id adv = adv_node(g, d, tid);

    GenLossTerms out;
    out.adversarial = g.value(adv).data[0];
    out.supervised = g.value(sup).data[0];
    out.info = g.value(info).data[0];
    out.total = out.adversarial + gan.cfg.gamma * out.supervised - gan.cfg.lambda * out.info;
    return out;
}

DscLossNodes discriminator_loss_nodes(Graph& g, CounterfactualGan& gan, const Tensor& pair,
                                      const Tensor& x, const Tensor& t, const Tensor& y_f) {
    check_treatment(t);
    DscLossNodes out;
    const MlpRef dsc = bind(g, gan.dsc.net, true);
    out.bound.absorb(gan.dsc.net, dsc);
    const ReplacedIds rep = replace_factual_nodes(g, g.leaf(pair), g.leaf(t), g.leaf(y_f));
    const Graph::Id d = dsc_prob(g, dsc, g.leaf(x), rep);
    out.loss = g.mul_scalar(v_gan_node(g, d, g.leaf(t)), -1.0);
    return out;
}

GenLossNodes generator_loss_nodes(Graph& g, CounterfactualGan& gan, const Tensor& x,
                                  const Tensor& t, const Tensor& y_f, const Tensor& z_g,
                                  const Tensor& z_c) {
    check_treatment(t);
    GenLossNodes out;
    const GenRef gref = bind_gen(g, gan.gen, true, &out.bound, &gan.gen);
    const MlpRef dsc = bind(g, gan.dsc.net, false);
    const MlpRef qt = bind(g, gan.q.trunk, true);
    const MlpRef qh = bind(g, gan.q.head, true);
    out.bound.absorb(gan.q.trunk, qt);
    out.bound.absorb(gan.q.head, qh);

    const Graph::Id tid = g.leaf(t);
    const Graph::Id yfid = g.leaf(y_f);
    const Graph::Id pair = gen_forward(g, gref, g.leaf(z_g), g.leaf(z_c));
    const ReplacedIds rep = replace_factual_nodes(g, pair, tid, yfid);
    const Graph::Id d = dsc_prob(g, dsc, g.leaf(x), rep);

    const Graph::Id y0 = g.slice_cols(pair, 0, 1);
    const Graph::Id y1 = g.slice_cols(pair, 1, 2);
    const Graph::Id y_f_hat = g.add(g.mul(tid, y1), g.mul(one_minus(g, tid), y0));
    const Graph::Id err = g.sub(yfid, y_f_hat);
    out.supervised = mean_all(g, g.mul(err, err));

    const QIds q = q_forward(g, qt, qh, pair, gan.q.code_dim);
    out.info = info_node(g, q, g.leaf(z_c));
    out.adversarial = adv_node(g, d, tid);
    out.total = g.add(out.adversarial, g.sub(g.mul_scalar(out.supervised, gan.cfg.gamma),
                                             g.mul_scalar(out.info, gan.cfg.lambda)));
    return out;
}

GanTrainResult train_counterfactual_gan(VaeModel& vae, CounterfactualGan& gan,
                                        const Dataset& train, uint64_t seed) {
    train.validate();
    CFDR_CHECK(train.n() >= 2, "train_counterfactual_gan: need at least 2 rows");
    CFDR_CHECK(vae.input_dim == train.d(),
               "train_counterfactual_gan: VAE input width " << vae.input_dim << ", data has "
                                                            << train.d());
    CFDR_CHECK(gan.x_dim == train.d(), "train_counterfactual_gan: GAN x width "
                                           << gan.x_dim << ", data has " << train.d());
    CFDR_CHECK(gan.gen.z_c_dim == vae.cfg.latent_total(),
               "train_counterfactual_gan: latent width " << vae.cfg.latent_total()
                                                         << ", GAN expects " << gan.gen.z_c_dim);

    const int n = train.n();
    const int bs = std::min(gan.cfg.batch_size, n);
    CFDR_CHECK(bs > 0, "train_counterfactual_gan: batch size " << gan.cfg.batch_size);

    Rng rng(mix_seed(seed, 100));
    AdamState opt_vae;
    opt_vae.lr = vae.cfg.lr;
    AdamState opt_d;
    opt_d.lr = gan.cfg.lr_d;
    AdamState opt_g;
    opt_g.lr = gan.cfg.lr_g;

    const Tensor t_all = column_of(train.t);
    const Tensor yf_all = column_of(train.y_f);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    GanTrainResult result;
    result.history.reserve(static_cast<size_t>(gan.cfg.epochs));

    for (int epoch = 0; epoch < gan.cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        GanTrainEpoch ep;
        for (int start = 0; start < n; start += bs) {
            const int nb = std::min(bs, n - start);
            const std::vector<int> idx(order.begin() + start, order.begin() + start + nb);

            Tensor xb(nb, train.d());
            Tensor tb(nb, 1);
            Tensor yb(nb, 1);
            for (int i = 0; i < nb; ++i) {
                for (int j = 0; j < train.d(); ++j) xb.at(i, j) = train.x.at(idx[i], j);
                tb.data[i] = train.t[static_cast<size_t>(idx[i])];
                yb.data[i] = train.y_f[static_cast<size_t>(idx[i])];
            }

            // VAE step; its sampled latent (pre-update forward) feeds the GAN
            // as a constant.
            Tensor eps(nb, vae.cfg.latent_total());
            for (double& v : eps.data) v = rng.normal(0.0, 1.0);
            const VaeStepResult vstep = vae_train_step(vae, xb, eps, opt_vae);
            const Tensor& z_c = vstep.z;

            Tensor z_g(nb, gan.cfg.z_g_dim);
            for (double& v : z_g.data) v = rng.uniform(-1.0, 1.0);

            // Discriminator step on a detached pair.
            const Tensor pair = generate(gan.gen, z_g, z_c);
            double d_loss_val = 0.0;
            {
                Graph g;
                const DscLossNodes dn = discriminator_loss_nodes(g, gan, pair, xb, tb, yb);
                d_loss_val = g.value(dn.loss).data[0];
                CFDR_CHECK(std::isfinite(d_loss_val),
                           "train_counterfactual_gan: non-finite discriminator loss");
                g.backward(dn.loss);
                adam_step(dn.bound.params, dn.bound.grads(g), opt_d);
            }

            // Generator + Q step; discriminator parameters are constants here.
            GenLossTerms g_terms;
            {
                Graph g;
                const GenLossNodes gn = generator_loss_nodes(g, gan, xb, tb, yb, z_g, z_c);
                g_terms.adversarial = g.value(gn.adversarial).data[0];
                g_terms.supervised = g.value(gn.supervised).data[0];
                g_terms.info = g.value(gn.info).data[0];
                g_terms.total = g.value(gn.total).data[0];
                CFDR_CHECK(std::isfinite(g_terms.total),
                           "train_counterfactual_gan: non-finite generator loss");
                g.backward(gn.total);
                adam_step(gn.bound.params, gn.bound.grads(g), opt_g);
            }

            const double w = static_cast<double>(nb) / static_cast<double>(n);
            ep.vae_total += w * vstep.terms.total;
            ep.d_loss += w * d_loss_val;
            ep.g_adversarial += w * g_terms.adversarial;
            ep.g_supervised += w * g_terms.supervised;
            ep.g_info += w * g_terms.info;
            ep.g_total += w * g_terms.total;
        }
        result.history.push_back(ep);
    }
    return result;
}

std::vector<Quadruple> complete_dataset(const CounterfactualGan& gan, const VaeModel& vae,
                                        const Dataset& ds, uint64_t seed) {
    ds.validate();
    CFDR_CHECK(ds.n() > 0, "complete_dataset: empty dataset");
    const PosteriorParams post = encode(vae, ds.x);
    Tensor z_c(ds.n(), vae.cfg.latent_total());
    int off = 0;
    for (int k = 0; k < 4; ++k) {
        const Tensor& mk = post.mean[k];
        for (int i = 0; i < ds.n(); ++i)
            for (int j = 0; j < mk.cols; ++j) z_c.at(i, off + j) = mk.at(i, j);
        off += mk.cols;
    }

    Rng rng(mix_seed(seed, 200));
    Tensor z_g(ds.n(), gan.cfg.z_g_dim);
    for (double& v : z_g.data) v = rng.uniform(-1.0, 1.0);

    const Tensor pair = generate(gan.gen, z_g, z_c);
    std::vector<Quadruple> out(static_cast<size_t>(ds.n()));
    for (int i = 0; i < ds.n(); ++i) {
        Quadruple& q = out[static_cast<size_t>(i)];
        q.t = ds.t[static_cast<size_t>(i)];
        q.y_f = ds.y_f[static_cast<size_t>(i)];
        q.y_cf = q.t > 0.5 ? pair.at(i, 0) : pair.at(i, 1);
        q.x.resize(static_cast<size_t>(ds.d()));
        for (int j = 0; j < ds.d(); ++j) q.x[static_cast<size_t>(j)] = ds.x.at(i, j);
    }
    return out;
}

Dataset with_generated_counterfactuals(const Dataset& ds, const std::vector<Quadruple>& quads) {
    CFDR_CHECK(quads.size() == static_cast<size_t>(ds.n()),
               "with_generated_counterfactuals: " << quads.size() << " quadruples for " << ds.n()
                                                  << " rows");
    Dataset out = ds;
    std::vector<double> y_cf(quads.size());
    for (size_t i = 0; i < quads.size(); ++i) {
        CFDR_CHECK(quads[i].t == ds.t[i] && quads[i].y_f == ds.y_f[i],
                   "with_generated_counterfactuals: row " << i << " does not match the dataset");
        y_cf[i] = quads[i].y_cf;
    }
    out.y_cf = std::move(y_cf);
    return out;
}

}  // namespace cfdr
