#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfdr/rng.hpp"
#include "cfdr/vae.hpp"

#include "gradcheck.hpp"

using namespace cfdr;

namespace {

Tensor randt(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

VaeConfig tiny_config() {
    VaeConfig cfg;
    cfg.trunk_width = 4;
    cfg.trunk_layers = 2;
    cfg.latent_dims = {2, 1, 1, 1};
    cfg.decoder_width = 4;
    cfg.decoder_layers = 2;
    return cfg;
}

void zero_all(Mlp& m) {
    for (Tensor& t : m.w) t.fill(0.0);
    for (Tensor& t : m.b) t.fill(0.0);
}

constexpr double kHalfLog2Pi = 0.9189385332046727;

}  // namespace

TEST_CASE("posterior factors have the declared widths") {
    VaeModel m = build_vae(5, VaeConfig{}, 1);
    CHECK(m.cfg.latent_total() == 8);

    Rng rng(2);
    const Tensor x = randt(3, 5, rng);
    const PosteriorParams p = encode(m, x);
    const int expect[4] = {5, 1, 1, 1};
    for (int k = 0; k < 4; ++k) {
        CHECK(p.mean[k].rows == 3);
        CHECK(p.mean[k].cols == expect[k]);
        CHECK(p.sigma[k].same_shape(p.mean[k]));
        for (double s : p.sigma[k].data) CHECK(s > 0.0);
    }
}

TEST_CASE("parameter census covers trunk, four heads and decoder") {
    VaeModel m = build_vae(5, tiny_config(), 3);
    size_t total = 0;
    for (Tensor* t : m.params()) total += t->size();
    CHECK(total == m.param_count());

    // trunk 5->4->4, heads 4->2*dim, decoder 5->4->4->5 on the latent total.
    const size_t trunk = (5 * 4 + 4) + (4 * 4 + 4);
    const size_t heads = (4 * 4 + 4) + 3 * (4 * 2 + 2);
    const size_t decoder = (5 * 4 + 4) + (4 * 4 + 4) + (4 * 5 + 5);
    CHECK(m.param_count() == trunk + heads + decoder);

    // Same seed, same weights; different seed, different weights.
    VaeModel m2 = build_vae(5, tiny_config(), 3);
    VaeModel m3 = build_vae(5, tiny_config(), 4);
    CHECK(m.trunk.w[0].data == m2.trunk.w[0].data);
    CHECK(m.trunk.w[0].data != m3.trunk.w[0].data);
}

TEST_CASE("reparameterize is mean plus eps times sigma, elementwise") {
    const Tensor mean(2, 2, {1.0, -1.0, 0.5, 2.0});
    const Tensor sigma(2, 2, {1.0, 2.0, 0.1, 3.0});
    const Tensor eps(2, 2, {0.0, 1.0, -2.0, 0.5});
    const Tensor z = reparameterize(mean, sigma, eps);
    CHECK(z.at(0, 0) == 1.0);
    CHECK(z.at(0, 1) == 1.0);
    CHECK(z.at(1, 0) == 0.5 - 0.2);
    CHECK(z.at(1, 1) == 3.5);

    const Tensor bad(1, 2, {0.0, 0.0});
    CHECK_THROWS_AS((void)reparameterize(mean, sigma, bad), error);
}

TEST_CASE("kl against the standard normal is frozen and nonnegative") {
    // Closed form 0.5 (sigma^2 + mu^2 - 1 - ln sigma^2): zero at (0, 1),
    // 1.5 - ln 2 at (0, 2).
    CHECK(kl_standard_normal(Tensor::scalar(0.0), Tensor::scalar(1.0)) == 0.0);
    CHECK(kl_standard_normal(Tensor::scalar(0.0), Tensor::scalar(2.0)) ==
          doctest::Approx(0.8068528194400547).epsilon(1e-14));
    CHECK(kl_standard_normal(Tensor::scalar(3.0), Tensor::scalar(1.0)) ==
          doctest::Approx(4.5).epsilon(1e-14));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor mu = randt(3, 2, rng, -2.0, 2.0);
        const Tensor sg = randt(3, 2, rng, 0.1, 3.0);
        CHECK(kl_standard_normal(mu, sg) >= 0.0);
    }

    // Batch average: a duplicated row leaves the value unchanged.
    const Tensor mu1(1, 2, {0.3, -0.7});
    const Tensor sg1(1, 2, {1.2, 0.4});
    const Tensor mu2(2, 2, {0.3, -0.7, 0.3, -0.7});
    const Tensor sg2(2, 2, {1.2, 0.4, 1.2, 0.4});
    CHECK(kl_standard_normal(mu2, sg2) ==
          doctest::Approx(kl_standard_normal(mu1, sg1)).epsilon(1e-12));
}

TEST_CASE("zeroed decoder pins the reconstruction term") {
    // With every decoder weight zero the Gaussian cell cost at x = 0 is
    // exactly 0.5 ln(2 pi) per cell.
    const int d = 5;
    VaeModel m = build_vae(d, tiny_config(), 7);
    zero_all(m.decoder);

    Tensor x(3, d);  // all zeros
    Tensor eps(3, m.cfg.latent_total());
    const ElboTerms terms = elbo_loss(m, x, eps);
    CHECK(terms.reconstruction == doctest::Approx(d * kHalfLog2Pi).epsilon(1e-12));

    // Binary columns cost ln 2 per cell instead: sigmoid(0) = 1/2 either way.
    VaeModel mb = build_vae(d, tiny_config(), 7, std::vector<bool>{true, true, false, true, false});
    zero_all(mb.decoder);
    Tensor xb(2, d);
    xb.at(0, 0) = 1.0;
    xb.at(1, 3) = 1.0;
    Tensor epsb(2, mb.cfg.latent_total());
    const ElboTerms tb = elbo_loss(mb, xb, epsb);
    CHECK(tb.reconstruction ==
          doctest::Approx(3.0 * std::log(2.0) + 2.0 * kHalfLog2Pi).epsilon(1e-12));
}

TEST_CASE("elbo breakdown sums to the total") {
    Rng rng(9);
    VaeModel m = build_vae(4, tiny_config(), 11);
    const Tensor x = randt(6, 4, rng);
    const Tensor eps = randt(6, m.cfg.latent_total(), rng);
    const ElboTerms terms = elbo_loss(m, x, eps);
    CHECK(terms.total ==
          terms.reconstruction + terms.kl[0] + terms.kl[1] + terms.kl[2] + terms.kl[3]);
    for (double k : terms.kl) CHECK(k >= 0.0);
}

TEST_CASE("elbo is invariant to duplicating the batch") {
    Rng rng(13);
    VaeModel m = build_vae(4, tiny_config(), 17);
    const Tensor x = randt(2, 4, rng);
    const Tensor eps = randt(2, m.cfg.latent_total(), rng);

    Tensor x2(4, 4);
    Tensor eps2(4, m.cfg.latent_total());
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) x2.at(i, j) = x.at(i % 2, j);
        for (int j = 0; j < m.cfg.latent_total(); ++j) eps2.at(i, j) = eps.at(i % 2, j);
    }
    const ElboTerms a = elbo_loss(m, x, eps);
    const ElboTerms b = elbo_loss(m, x2, eps2);
    CHECK(b.total == doctest::Approx(a.total).epsilon(1e-12));
}

TEST_CASE("elbo gradients pass the finite-difference check") {
    Rng rng(19);
    VaeConfig cfg = tiny_config();
    VaeModel m = build_vae(3, cfg, 23, std::vector<bool>{false, true, false});
    cfdr::testing::nudge_biases(m.trunk, rng);
    for (Mlp& h : m.heads) cfdr::testing::nudge_biases(h, rng);
    cfdr::testing::nudge_biases(m.decoder, rng);
    const Tensor x(4, 3, {0.2, 1.0, -0.4, 1.1, 0.0, 0.3, -0.7, 1.0, 0.9, 0.5, 0.0, -1.2});
    const Tensor eps = randt(4, cfg.latent_total(), rng);

    Graph g;
    VaeNodes nodes = vae_forward(g, m, g.leaf(x), eps, true);
    const ElboNodes elbo = elbo_nodes(g, m, nodes, g.leaf(x));
    g.backward(elbo.total);

    const auto loss = [&]() { return elbo_loss(m, x, eps).total; };
    const auto res = cfdr::testing::gradcheck(nodes.bound.params, nodes.bound.grads(g), loss);
    CHECK(res.checked == static_cast<int>(m.param_count()));
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("training steps reduce the loss on a fixed batch") {
    Rng rng(29);
    VaeModel m = build_vae(5, VaeConfig{}, 31);
    const Tensor x = randt(32, 5, rng, -2.0, 2.0);
    AdamState opt;
    opt.lr = m.cfg.lr;

    double first = 0.0, last = 0.0;
    for (int step = 0; step < 60; ++step) {
        const Tensor eps = randt(32, m.cfg.latent_total(), rng, -1.0, 1.0);
        const VaeStepResult r = vae_train_step(m, x, eps, opt);
        if (step == 0) first = r.terms.total;
        last = r.terms.total;
    }
    CHECK(last < first);
}

TEST_CASE("the training step hands back the pre-update latent sample") {
    Rng rng(37);
    VaeModel m = build_vae(4, tiny_config(), 41);
    const Tensor x = randt(3, 4, rng);
    const Tensor eps = randt(3, m.cfg.latent_total(), rng);

    // Expected z from the parameters as they were before the step.
    const PosteriorParams p = encode(m, x);
    Tensor mean_cat(3, m.cfg.latent_total());
    Tensor sigma_cat(3, m.cfg.latent_total());
    int off = 0;
    for (int k = 0; k < 4; ++k) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < p.mean[k].cols; ++j) {
                mean_cat.at(i, off + j) = p.mean[k].at(i, j);
                sigma_cat.at(i, off + j) = p.sigma[k].at(i, j);
            }
        off += p.mean[k].cols;
    }
    const Tensor expect = reparameterize(mean_cat, sigma_cat, eps);

    AdamState opt;
    const VaeStepResult r = vae_train_step(m, x, eps, opt);
    REQUIRE(r.z.same_shape(expect));
    for (std::size_t k = 0; k < expect.data.size(); ++k) CHECK(r.z.data[k] == expect.data[k]);

    // And the step really moved the parameters.
    const PosteriorParams after = encode(m, x);
    CHECK(after.mean[0].data != p.mean[0].data);
}

TEST_CASE("decode rejects a latent of the wrong width") {
    VaeModel m = build_vae(4, tiny_config(), 43);
    CHECK_THROWS_AS((void)decode(m, Tensor(2, 3)), error);
}

TEST_CASE("x_binary width is validated at build time") {
    CHECK_THROWS_AS((void)build_vae(4, tiny_config(), 1, std::vector<bool>{true}), error);
}
