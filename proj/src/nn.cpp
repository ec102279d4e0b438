#include "cfdr/nn.hpp"

#include <cmath>

namespace cfdr {

std::vector<Tensor*> Mlp::params() {
    std::vector<Tensor*> out;
    out.reserve(w.size() * 2);
    for (size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    return out;
}

size_t Mlp::param_count() const {
    size_t n = 0;
    for (const Tensor& t : w) n += t.size();
    for (const Tensor& t : b) n += t.size();
    return n;
}

Mlp build_mlp(const std::vector<int>& dims, const std::vector<Act>& acts, uint64_t seed,
              WeightInit init) {
    CFDR_CHECK(dims.size() >= 2, "build_mlp: need at least input and output width, got "
                                     << dims.size() << " entries");
    for (int d : dims) CFDR_CHECK(d > 0, "build_mlp: non-positive layer width " << d);
    CFDR_CHECK(acts.size() == dims.size() - 1, "build_mlp: " << acts.size() << " activations for "
                                                             << dims.size() - 1 << " layers");

    Mlp m;
    m.dims = dims;
    m.acts = acts;
    Rng rng(seed);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const int fan_in = dims[i];
        const int fan_out = dims[i + 1];
        Tensor w(fan_in, fan_out);
        if (init == WeightInit::Glorot) {
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : w.data) v = rng.uniform(-limit, limit);
        }
        m.w.push_back(std::move(w));
        m.b.emplace_back(1, fan_out);
    }
    return m;
}

MlpRef bind(Graph& g, const Mlp& m, bool trainable) {
    MlpRef ref;
    ref.model = &m;
    for (size_t i = 0; i < m.w.size(); ++i) {
        ref.w.push_back(g.leaf(m.w[i], trainable));
        ref.b.push_back(g.leaf(m.b[i], trainable));
    }
    return ref;
}

Graph::Id forward(Graph& g, const MlpRef& m, Graph::Id x) {
    CFDR_CHECK(m.model != nullptr, "forward: unbound MlpRef");
    CFDR_CHECK(g.value(x).cols == m.model->in_dim(),
               "forward: input width " << g.value(x).cols << ", model expects "
                                       << m.model->in_dim());
    Graph::Id h = x;
    for (size_t i = 0; i < m.w.size(); ++i) {
        h = g.add_row(g.matmul(h, m.w[i]), m.b[i]);
        switch (m.model->acts[i]) {
            case Act::Relu: h = g.relu(h); break;
            case Act::Sigmoid: h = g.sigmoid(h); break;
            case Act::Identity: break;
        }
    }
    return h;
}

Tensor forward(const Mlp& m, const Tensor& x) {
    Graph g;
    MlpRef ref = bind(g, m, false);
    return g.value(forward(g, ref, g.leaf(x)));
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& s) {
    CFDR_CHECK(params.size() == grads.size(), "adam_step: " << params.size() << " params vs "
                                                            << grads.size() << " grads");
    if (s.m.empty()) {
        for (const Tensor* p : params) {
            s.m.emplace_back(p->rows, p->cols);
            s.v.emplace_back(p->rows, p->cols);
        }
    }
    CFDR_CHECK(s.m.size() == params.size(),
               "adam_step: state holds " << s.m.size() << " slots, got " << params.size());

    s.step += 1;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));

    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        CFDR_CHECK(p.same_shape(g), "adam_step: param " << k << " is " << p.rows << "x" << p.cols
                                                        << ", grad is " << g.rows << "x" << g.cols);
        CFDR_CHECK(p.same_shape(s.m[k]), "adam_step: param " << k << " changed shape");
        check_finite(g, "adam_step gradient");
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data[i];
            s.m[k].data[i] = s.beta1 * s.m[k].data[i] + (1.0 - s.beta1) * gi;
            s.v[k].data[i] = s.beta2 * s.v[k].data[i] + (1.0 - s.beta2) * gi * gi;
            const double mhat = s.m[k].data[i] / c1;
            const double vhat = s.v[k].data[i] / c2;
            p.data[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

}  // namespace cfdr
