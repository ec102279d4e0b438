#include "cfdr/vae.hpp"

#include <cmath>

#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)
constexpr double kProbEps = 1e-7;

}  // namespace

std::vector<Tensor*> VaeModel::params() {
    std::vector<Tensor*> out = trunk.params();
    for (Mlp& h : heads)
        for (Tensor* p : h.params()) out.push_back(p);
    for (Tensor* p : decoder.params()) out.push_back(p);
    return out;
}

size_t VaeModel::param_count() const {
    size_t n = trunk.param_count();
    for (const Mlp& h : heads) n += h.param_count();
    return n + decoder.param_count();
}

VaeModel build_vae(int input_dim, const VaeConfig& cfg, uint64_t seed,
                   const std::vector<bool>& x_binary) {
    CFDR_CHECK(input_dim > 0, "build_vae: input_dim " << input_dim);
    CFDR_CHECK(cfg.trunk_layers > 0 && cfg.decoder_layers > 0,
               "build_vae: layer counts must be positive");
    for (int m : cfg.latent_dims) CFDR_CHECK(m > 0, "build_vae: latent dim " << m);
    CFDR_CHECK(x_binary.empty() || x_binary.size() == static_cast<size_t>(input_dim),
               "build_vae: x_binary has " << x_binary.size() << " flags for " << input_dim
                                          << " columns");

    VaeModel m;
    m.cfg = cfg;
    m.input_dim = input_dim;
    m.x_binary = x_binary;

    std::vector<int> tdims{input_dim};
    for (int i = 0; i < cfg.trunk_layers; ++i) tdims.push_back(cfg.trunk_width);
    m.trunk = build_mlp(tdims, std::vector<Act>(cfg.trunk_layers, Act::Relu), mix_seed(seed, 0));

    for (int k = 0; k < 4; ++k)
        m.heads[k] = build_mlp({cfg.trunk_width, 2 * cfg.latent_dims[k]}, {Act::Identity},
                               mix_seed(seed, 1 + k));

    std::vector<int> ddims{cfg.latent_total()};
    for (int i = 0; i < cfg.decoder_layers; ++i) ddims.push_back(cfg.decoder_width);
    ddims.push_back(input_dim);
    std::vector<Act> dacts(cfg.decoder_layers, Act::Relu);
    dacts.push_back(Act::Identity);
    m.decoder = build_mlp(ddims, dacts, mix_seed(seed, 5));
    return m;
}

VaeNodes vae_forward(Graph& g, VaeModel& m, Graph::Id x, const Tensor& eps, bool trainable) {
    const int n = g.value(x).rows;
    CFDR_CHECK(g.value(x).cols == m.input_dim,
               "vae_forward: input width " << g.value(x).cols << ", model expects " << m.input_dim);
    CFDR_CHECK(eps.rows == n && eps.cols == m.cfg.latent_total(),
               "vae_forward: eps is " << eps.rows << "x" << eps.cols << ", want " << n << "x"
                                      << m.cfg.latent_total());

    VaeNodes out;
    MlpRef trunk_ref = bind(g, m.trunk, trainable);
    if (trainable) out.bound.absorb(m.trunk, trunk_ref);
    const Graph::Id h = forward(g, trunk_ref, x);

    const Graph::Id eps_id = g.leaf(eps);
    int off = 0;
    std::array<Graph::Id, 4> z{};
    for (int k = 0; k < 4; ++k) {
        MlpRef head_ref = bind(g, m.heads[k], trainable);
        if (trainable) out.bound.absorb(m.heads[k], head_ref);
        const Graph::Id ho = forward(g, head_ref, h);
        const int mk = m.cfg.latent_dims[k];
        out.mean[k] = g.slice_cols(ho, 0, mk);
        out.logvar[k] = g.slice_cols(ho, mk, 2 * mk);
        const Graph::Id sigma = g.exp(g.mul_scalar(out.logvar[k], 0.5));
        const Graph::Id noise = g.slice_cols(eps_id, off, off + mk);
        z[k] = g.add(out.mean[k], g.mul(noise, sigma));
        off += mk;
    }
    out.z = g.concat_cols(g.concat_cols(z[0], z[1]), g.concat_cols(z[2], z[3]));

    MlpRef dec_ref = bind(g, m.decoder, trainable);
    if (trainable) out.bound.absorb(m.decoder, dec_ref);
    out.x_hat = forward(g, dec_ref, out.z);
    return out;
}

ElboNodes elbo_nodes(Graph& g, const VaeModel& m, const VaeNodes& nodes, Graph::Id x) {
    const int n = g.value(x).rows;
    const int d = m.input_dim;
    const double inv_n = 1.0 / static_cast<double>(n);

    // Gaussian cells: 0.5 (x_hat - x)^2 + 0.5 ln(2 pi). Bernoulli cells:
    // cross-entropy of sigmoid(x_hat) against x, probabilities clamped.
    const Graph::Id diff = g.sub(nodes.x_hat, x);
    const Graph::Id gauss = g.add_scalar(g.mul_scalar(g.mul(diff, diff), 0.5), kHalfLog2Pi);

    Graph::Id cells = gauss;
    bool any_binary = false;
    for (bool b : m.x_binary) any_binary = any_binary || b;
    if (any_binary) {
        const Graph::Id p = g.clamp(g.sigmoid(nodes.x_hat), kProbEps, 1.0 - kProbEps);
        const Graph::Id ll = g.add(g.mul(x, g.log(p)), g.mul(one_minus(g, x), g.log(one_minus(g, p))));
        const Graph::Id bern = g.mul_scalar(ll, -1.0);
        Tensor mask_g(1, d);
        Tensor mask_b(1, d);
        for (int j = 0; j < d; ++j) {
            const bool bin = m.x_binary[static_cast<size_t>(j)];
            mask_g.data[j] = bin ? 0.0 : 1.0;
            mask_b.data[j] = bin ? 1.0 : 0.0;
        }
        cells = g.add(g.mul_row(gauss, g.leaf(mask_g)), g.mul_row(bern, g.leaf(mask_b)));
    }

    ElboNodes out;
    out.reconstruction = g.mul_scalar(g.sum(cells), inv_n);

    for (int k = 0; k < 4; ++k) {
        const Graph::Id mu = nodes.mean[k];
        const Graph::Id lv = nodes.logvar[k];
        // 0.5 (sigma^2 + mu^2 - 1 - ln sigma^2), summed, averaged over rows
        const Graph::Id inner = g.sub(g.add_scalar(g.add(g.exp(lv), g.mul(mu, mu)), -1.0), lv);
        out.kl[k] = g.mul_scalar(g.sum(inner), 0.5 * inv_n);
    }

    out.total = g.add(g.add(g.add(g.add(out.reconstruction, out.kl[0]), out.kl[1]), out.kl[2]),
                      out.kl[3]);
    return out;
}

PosteriorParams encode(const VaeModel& m, const Tensor& x) {
    Graph g;
    VaeModel& mm = const_cast<VaeModel&>(m);
    const Tensor eps(x.rows, m.cfg.latent_total());
    const VaeNodes nodes = vae_forward(g, mm, g.leaf(x), eps, false);
    PosteriorParams out;
    for (int k = 0; k < 4; ++k) {
        out.mean[k] = g.value(nodes.mean[k]);
        Tensor sigma = g.value(nodes.logvar[k]);
        for (double& v : sigma.data) v = std::exp(0.5 * v);
        out.sigma[k] = std::move(sigma);
    }
    return out;
}

Tensor reparameterize(const Tensor& mean, const Tensor& sigma, const Tensor& eps) {
    CFDR_CHECK(mean.same_shape(sigma) && mean.same_shape(eps),
               "reparameterize: shapes " << mean.rows << "x" << mean.cols << ", " << sigma.rows
                                         << "x" << sigma.cols << ", " << eps.rows << "x"
                                         << eps.cols);
    Tensor z = mean;
    for (size_t i = 0; i < z.size(); ++i) z.data[i] += eps.data[i] * sigma.data[i];
    return z;
}

double kl_standard_normal(const Tensor& mean, const Tensor& sigma) {
    CFDR_CHECK(mean.same_shape(sigma), "kl: mean " << mean.rows << "x" << mean.cols << ", sigma "
                                                   << sigma.rows << "x" << sigma.cols);
    CFDR_CHECK(mean.rows > 0, "kl: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < mean.size(); ++i) {
        const double s = sigma.data[i];
        CFDR_CHECK(s > 0.0, "kl: sigma must be positive, got " << s);
        const double mu = mean.data[i];
        acc += 0.5 * (s * s + mu * mu - 1.0 - std::log(s * s));
    }
    return acc / static_cast<double>(mean.rows);
}

Tensor decode(const VaeModel& m, const Tensor& z) {
    CFDR_CHECK(z.cols == m.cfg.latent_total(),
               "decode: latent width " << z.cols << ", model expects " << m.cfg.latent_total());
    return forward(m.decoder, z);
}

ElboTerms elbo_loss(const VaeModel& m, const Tensor& x, const Tensor& eps) {
    Graph g;
    VaeModel& mm = const_cast<VaeModel&>(m);
    const Graph::Id xid = g.leaf(x);
    const VaeNodes nodes = vae_forward(g, mm, xid, eps, false);
    const ElboNodes loss = elbo_nodes(g, m, nodes, xid);
    ElboTerms t;
    t.reconstruction = g.value(loss.reconstruction).data[0];
    for (int k = 0; k < 4; ++k) t.kl[k] = g.value(loss.kl[k]).data[0];
    t.total = g.value(loss.total).data[0];
    return t;
}

VaeStepResult vae_train_step(VaeModel& m, const Tensor& x, const Tensor& eps, AdamState& opt) {
    Graph g;
    const Graph::Id xid = g.leaf(x);
    const VaeNodes nodes = vae_forward(g, m, xid, eps, true);
    const ElboNodes loss = elbo_nodes(g, m, nodes, xid);

    VaeStepResult out;
    out.terms.reconstruction = g.value(loss.reconstruction).data[0];
    for (int k = 0; k < 4; ++k) out.terms.kl[k] = g.value(loss.kl[k]).data[0];
    out.terms.total = g.value(loss.total).data[0];
    out.z = g.value(nodes.z);
    CFDR_CHECK(std::isfinite(out.terms.total),
               "vae_train_step: non-finite loss " << out.terms.total);

    g.backward(loss.total);
    adam_step(nodes.bound.params, nodes.bound.grads(g), opt);
    return out;
}

}  // namespace cfdr
