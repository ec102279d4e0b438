#include "cfdr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfdr/rng.hpp"

namespace cfdr {

namespace {

std::vector<double> gather(const std::vector<double>& v, const std::vector<int>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(v[static_cast<size_t>(i)]);
    return out;
}

std::optional<std::vector<double>> gather_opt(const std::optional<std::vector<double>>& v,
                                              const std::vector<int>& idx) {
    if (!v) return std::nullopt;
    return gather(*v, idx);
}

}  // namespace

Dataset Dataset::take(const std::vector<int>& idx) const {
    Dataset out;
    out.x = Tensor(static_cast<int>(idx.size()), x.cols);
    for (size_t r = 0; r < idx.size(); ++r) {
        CFDR_CHECK(idx[r] >= 0 && idx[r] < n(), "dataset take: row " << idx[r] << " out of range");
        for (int c = 0; c < x.cols; ++c) out.x.at(static_cast<int>(r), c) = x.at(idx[r], c);
    }
    out.t = gather(t, idx);
    out.y_f = gather(y_f, idx);
    out.y_cf = gather_opt(y_cf, idx);
    out.mu0 = gather_opt(mu0, idx);
    out.mu1 = gather_opt(mu1, idx);
    out.e = gather_opt(e, idx);
    out.x_binary = x_binary;
    out.outcome_kind = outcome_kind;
    return out;
}

void Dataset::validate() const {
    const size_t rows = static_cast<size_t>(n());
    CFDR_CHECK(t.size() == rows, "dataset: t has " << t.size() << " rows, x has " << rows);
    CFDR_CHECK(y_f.size() == rows, "dataset: y_f has " << y_f.size() << " rows, x has " << rows);
    auto check_opt = [&](const std::optional<std::vector<double>>& v, const char* name) {
        if (v)
            CFDR_CHECK(v->size() == rows, "dataset: " << name << " has " << v->size()
                                                      << " rows, x has " << rows);
    };
    check_opt(y_cf, "y_cf");
    check_opt(mu0, "mu0");
    check_opt(mu1, "mu1");
    check_opt(e, "e");
    CFDR_CHECK(x_binary.empty() || x_binary.size() == static_cast<size_t>(d()),
               "dataset: x_binary has " << x_binary.size() << " flags for " << d() << " columns");
    for (double v : t)
        CFDR_CHECK(v == 0.0 || v == 1.0, "dataset: treatment value " << v << " not in {0,1}");
    check_finite(x, "dataset covariates");
    for (double v : y_f) CFDR_CHECK(std::isfinite(v), "dataset: non-finite y_f");
}

Splits split(const Dataset& ds, const SplitSpec& spec) {
    ds.validate();
    CFDR_CHECK(ds.n() >= 3, "split: need at least 3 rows, got " << ds.n());
    CFDR_CHECK(spec.train > 0.0 && spec.train < 1.0, "split: train fraction " << spec.train);
    CFDR_CHECK(spec.test > 0.0 && spec.test < 1.0, "split: test fraction " << spec.test);
    CFDR_CHECK(spec.validation >= 0.0 && spec.validation < 1.0,
               "split: validation fraction " << spec.validation);
    const double total = spec.train + spec.validation + spec.test;
    CFDR_CHECK(std::abs(total - 1.0) < 1e-9, "split: fractions sum to " << total);

    std::vector<int> idx(static_cast<size_t>(ds.n()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(spec.seed);
    std::shuffle(idx.begin(), idx.end(), rng.engine());

    const int n = ds.n();
    int n_train = static_cast<int>(std::llround(spec.train * n));
    int n_val = static_cast<int>(std::llround(spec.validation * n));
    n_train = std::max(1, std::min(n_train, n - 1));
    if (n_train + n_val >= n) n_val = n - 1 - n_train;
    const int n_test = n - n_train - n_val;
    CFDR_CHECK(n_test >= 1, "split: empty test partition for n=" << n);

    Splits out;
    out.train_idx.assign(idx.begin(), idx.begin() + n_train);
    out.validation_idx.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    out.test_idx.assign(idx.begin() + n_train + n_val, idx.end());
    out.train = ds.take(out.train_idx);
    out.validation = ds.take(out.validation_idx);
    out.test = ds.take(out.test_idx);
    return out;
}

}  // namespace cfdr
