#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cfdr/metrics.hpp"
#include "cfdr/rng.hpp"

#include "enumeration.hpp"

using namespace cfdr;

TEST_CASE("pehe on hand fixtures") {
    const PeheResult zero = pehe({1.0, -2.0, 0.5}, {1.0, -2.0, 0.5});
    CHECK(zero.mse == 0.0);
    CHECK(zero.rmse == 0.0);

    const PeheResult r = pehe({2.0, 0.0}, {1.0, 1.0});
    CHECK(r.mse == 1.0);
    CHECK(r.rmse == 1.0);

    CHECK_THROWS_AS((void)pehe({}, {}), error);
    CHECK_THROWS_AS((void)pehe({1.0}, {1.0, 2.0}), error);
}

TEST_CASE("ate error on hand fixtures") {
    CHECK(ate_error({1.0, 3.0}, {3.0, 1.0}) == 0.0);
    // Means 1.0 vs 0.7.
    CHECK(ate_error({1.0, 1.0}, {0.7, 0.7}) == doctest::Approx(0.09).epsilon(1e-14));
    CHECK(ate_abs_error({1.0, 1.0}, {0.7, 0.7}) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(ate_abs_error({0.0}, {-2.0}) == 2.0);
    CHECK_THROWS_AS((void)ate_error({}, {}), error);
    CHECK_THROWS_AS((void)ate_abs_error({1.0}, {}), error);
}

TEST_CASE("policy risk hand enumeration: matched halves cancel the risk") {
    // Policy treats the first two rows; (t, y) = (1,1), (0,0), (0,1), (1,0).
    // Each policy group has one matching member with outcome 1, so the value
    // is 0.5 * 1 + 0.5 * 1 = 1 and the risk is 0.
    const std::vector<double> yhat1 = {1.0, 1.0, 0.0, 0.0};
    const std::vector<double> yhat0 = {0.0, 0.0, 1.0, 1.0};
    const std::vector<double> t = {1.0, 0.0, 0.0, 1.0};
    const std::vector<double> y = {1.0, 0.0, 1.0, 0.0};
    const std::vector<double> e = {1.0, 1.0, 1.0, 1.0};
    CHECK(policy_risk(yhat1, yhat0, t, y, e) == 0.0);
}

TEST_CASE("policy risk boundary behavior") {
    // Perfect outcomes on every evaluated cell leave no risk.
    CHECK(policy_risk({1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}) == 0.0);

    // A tie goes to the no-treat group: the single tied row is control with
    // outcome 1, so the control group is valued at 1 and the risk is 0.
    CHECK(policy_risk({0.5}, {0.5}, {0.0}, {1.0}, {1.0}) == 0.0);
    // Same tie observed under treatment: no matching member anywhere, value 0.
    CHECK(policy_risk({0.5}, {0.5}, {1.0}, {1.0}, {1.0}) == 1.0);

    // Rows outside the randomized subset are invisible.
    CHECK(policy_risk({9.0, 0.5}, {0.0, 0.5}, {1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}) == 0.0);

    CHECK_THROWS_AS((void)policy_risk({1.0}, {0.0}, {1.0}, {1.0}, {0.0}), error);
    CHECK_THROWS_AS((void)policy_risk({1.0}, {0.0}, {1.0}, {1.0}, {1.0, 1.0}), error);
}

TEST_CASE("policy risk stays within the unit interval for binary outcomes") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 2 + static_cast<int>(rng.raw() % 8);
        std::vector<double> yhat1(n), yhat0(n), t(n), y(n), e(n, 1.0);
        for (int i = 0; i < n; ++i) {
            yhat1[i] = rng.uniform(-1.0, 1.0);
            yhat0[i] = rng.uniform(-1.0, 1.0);
            t[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        const double r = policy_risk(yhat1, yhat0, t, y, e);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("att and its error on hand fixtures") {
    // Treated outcomes {1, 1}, control outcomes {0, 1}: ATT = 1 - 0.5.
    const std::vector<double> y = {1.0, 1.0, 0.0, 1.0};
    const std::vector<double> t = {1.0, 1.0, 0.0, 0.0};
    const std::vector<double> e = {1.0, 1.0, 1.0, 1.0};
    const AttResult r = att_and_error(y, t, e, {0.5, 0.5, 9.0, 9.0});
    CHECK(r.att == 0.5);
    CHECK(r.error == 0.0);  // mean predicted effect over treated is exactly ATT

    // The error only looks at treated randomized rows.
    const AttResult r2 = att_and_error(y, t, e, {1.0, 2.0, -7.0, -7.0});
    CHECK(r2.att == 0.5);
    CHECK(r2.error == 1.0);

    // Non-randomized rows are excluded from both sides.
    const AttResult r3 = att_and_error(y, t, {1.0, 0.0, 1.0, 0.0}, {0.5, 99.0, 0.0, 0.0});
    CHECK(r3.att == 1.0);
    CHECK(r3.error == 0.5);

    CHECK_THROWS_AS((void)att_and_error({1.0}, {1.0}, {1.0}, {0.0}), error);  // no control
    CHECK_THROWS_AS((void)att_and_error({1.0}, {0.0}, {1.0}, {0.0}), error);  // no treated
    CHECK_THROWS_AS((void)att_and_error({}, {}, {}, {}), error);
}

TEST_CASE("metrics agree exactly with direct enumeration on small fixtures") {
    Rng rng(17);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = 2 + static_cast<int>(rng.raw() % 5);  // n <= 6
        std::vector<double> true_eff(n), pred(n), yhat1(n), yhat0(n), t(n), y(n), e(n);
        for (int i = 0; i < n; ++i) {
            true_eff[i] = rng.uniform(-2.0, 2.0);
            yhat1[i] = rng.uniform(-2.0, 2.0);
            yhat0[i] = rng.uniform(-2.0, 2.0);
            pred[i] = yhat1[i] - yhat0[i];
            t[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            e[i] = rng.bernoulli(0.7) ? 1.0 : 0.0;
        }
        // Guarantee the subsets every metric needs.
        t[0] = 1.0;
        e[0] = 1.0;
        t[1] = 0.0;
        e[1] = 1.0;

        const PeheResult p = pehe(true_eff, pred);
        const auto pe = cfdr::testing::pehe_enum(true_eff, pred);
        CHECK(p.mse == pe.mse);
        CHECK(p.rmse == pe.rmse);

        CHECK(ate_error(true_eff, pred) == cfdr::testing::ate_error_enum(true_eff, pred));

        CHECK(policy_risk(yhat1, yhat0, t, y, e) ==
              cfdr::testing::policy_risk_enum(yhat1, yhat0, t, y, e));

        const AttResult a = att_and_error(y, t, e, pred);
        const auto ae = cfdr::testing::att_enum(y, t, e, pred);
        CHECK(a.att == ae.att);
        CHECK(a.error == ae.error);
    }
}

TEST_CASE("pehe dominates ate error on shared rows") {
    Rng rng(23);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 1 + static_cast<int>(rng.raw() % 40);
        std::vector<double> true_eff(n), pred(n);
        for (int i = 0; i < n; ++i) {
            true_eff[i] = rng.uniform(-3.0, 3.0);
            pred[i] = rng.uniform(-3.0, 3.0);
        }
        CHECK(pehe(true_eff, pred).mse >= ate_error(true_eff, pred) - 1e-12);
    }
}

TEST_CASE("metrics are invariant under row permutation") {
    Rng rng(29);
    const int n = 11;
    std::vector<double> true_eff(n), pred(n), yhat1(n), yhat0(n), t(n), y(n), e(n, 1.0);
    for (int i = 0; i < n; ++i) {
        true_eff[i] = rng.uniform(-2.0, 2.0);
        yhat1[i] = rng.uniform(-2.0, 2.0);
        yhat0[i] = rng.uniform(-2.0, 2.0);
        pred[i] = yhat1[i] - yhat0[i];
        t[i] = i % 2 == 0 ? 1.0 : 0.0;
        y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<int>(rng.raw() % (i + 1))]);

    auto permute = [&](const std::vector<double>& v) {
        std::vector<double> out(n);
        for (int i = 0; i < n; ++i) out[i] = v[order[i]];
        return out;
    };

    CHECK(pehe(permute(true_eff), permute(pred)).mse ==
          doctest::Approx(pehe(true_eff, pred).mse).epsilon(1e-12));
    CHECK(ate_error(permute(true_eff), permute(pred)) ==
          doctest::Approx(ate_error(true_eff, pred)).epsilon(1e-12));
    CHECK(policy_risk(permute(yhat1), permute(yhat0), permute(t), permute(y), permute(e)) ==
          doctest::Approx(policy_risk(yhat1, yhat0, t, y, e)).epsilon(1e-12));
    const AttResult a = att_and_error(y, t, e, pred);
    const AttResult ap = att_and_error(permute(y), permute(t), permute(e), permute(pred));
    CHECK(ap.att == doctest::Approx(a.att).epsilon(1e-12));
    CHECK(ap.error == doctest::Approx(a.error).epsilon(1e-12));
}

namespace {

Dataset tiny_dataset() {
    Dataset ds;
    ds.x = Tensor(4, 2);
    ds.t = {1.0, 0.0, 1.0, 0.0};
    ds.y_f = {2.0, 1.0, 3.0, 0.0};
    return ds;
}

}  // namespace

TEST_CASE("make_eval_input prefers noiseless means over realized outcomes") {
    Dataset ds = tiny_dataset();
    ds.y_cf = std::vector<double>{9.0, 9.0, 9.0, 9.0};
    ds.mu0 = std::vector<double>{0.0, 1.0, 2.0, 3.0};
    ds.mu1 = std::vector<double>{1.0, 3.0, 5.0, 7.0};

    const EvalInput in = make_eval_input(ds, {0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0});
    REQUIRE(in.true_eff.has_value());
    CHECK(*in.true_eff == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK_FALSE(in.e.has_value());
}

TEST_CASE("make_eval_input composes effects from counterfactuals when needed") {
    Dataset ds = tiny_dataset();
    ds.y_cf = std::vector<double>{1.5, 2.0, 2.0, 4.0};

    const EvalInput in = make_eval_input(ds, {0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0});
    REQUIRE(in.true_eff.has_value());
    // Treated rows: y1 = y_f, y0 = y_cf; control rows the reverse.
    CHECK(*in.true_eff == std::vector<double>{0.5, 1.0, 1.0, 4.0});

    Dataset bare = tiny_dataset();
    const EvalInput none = make_eval_input(bare, {0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0});
    CHECK_FALSE(none.true_eff.has_value());

    CHECK_THROWS_AS((void)make_eval_input(bare, {0.0}, {1.0}), error);
}

TEST_CASE("evaluate fills exactly the metrics its inputs support") {
    Dataset ds = tiny_dataset();
    ds.mu0 = std::vector<double>{0.0, 1.0, 2.0, 3.0};
    ds.mu1 = std::vector<double>{1.0, 3.0, 5.0, 7.0};
    ds.e = std::vector<double>{1.0, 1.0, 1.0, 1.0};

    const std::vector<double> yhat0 = {0.5, 0.5, 0.5, 0.5};
    const std::vector<double> yhat1 = {2.5, 1.5, 2.5, 1.5};
    const EvalInput in = make_eval_input(ds, yhat0, yhat1);
    const MetricSet m = evaluate(in);

    std::vector<double> pred(4);
    for (int i = 0; i < 4; ++i) pred[i] = yhat1[i] - yhat0[i];

    REQUIRE(m.pehe_rmse.has_value());
    CHECK(*m.pehe_rmse == pehe(*in.true_eff, pred).rmse);
    CHECK(*m.pehe_sq == pehe(*in.true_eff, pred).mse);
    CHECK(*m.eps_ate == ate_error(*in.true_eff, pred));
    CHECK(*m.ate_abs == ate_abs_error(*in.true_eff, pred));
    CHECK(*m.ate_true == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(*m.ate_model == doctest::Approx((2.0 + 1.0 + 2.0 + 1.0) / 4.0).epsilon(1e-15));
    CHECK(*m.r_pol == policy_risk(yhat1, yhat0, ds.t, ds.y_f, *ds.e));
    const AttResult a = att_and_error(ds.y_f, ds.t, *ds.e, pred);
    CHECK(*m.att == a.att);
    CHECK(*m.eps_att == a.error);
    CHECK_FALSE(m.ate_dr.has_value());  // only pipeline callers can supply nuisances

    // Factual error uses the head matching the observed treatment.
    double sq = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double f = ds.t[i] == 1.0 ? yhat1[i] : yhat0[i];
        sq += (f - ds.y_f[i]) * (f - ds.y_f[i]);
    }
    CHECK(m.factual_rmse == std::sqrt(sq / 4.0));

    // Without counterfactual information the effect metrics disappear.
    Dataset bare = tiny_dataset();
    bare.e = std::vector<double>{1.0, 1.0, 1.0, 1.0};
    const MetricSet mb = evaluate(make_eval_input(bare, yhat0, yhat1));
    CHECK_FALSE(mb.pehe_rmse.has_value());
    CHECK_FALSE(mb.eps_ate.has_value());
    CHECK(mb.r_pol.has_value());
    CHECK(mb.att.has_value());

    // Without randomized flags the policy metrics disappear.
    Dataset no_e = tiny_dataset();
    no_e.mu0 = ds.mu0;
    no_e.mu1 = ds.mu1;
    const MetricSet mn = evaluate(make_eval_input(no_e, yhat0, yhat1));
    CHECK(mn.pehe_rmse.has_value());
    CHECK_FALSE(mn.r_pol.has_value());
    CHECK_FALSE(mn.att.has_value());
    CHECK_FALSE(mn.eps_att.has_value());
}
