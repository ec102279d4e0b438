#pragma once

#include <cstdint>
#include <vector>

#include "cfdr/graph.hpp"
#include "cfdr/rng.hpp"
#include "cfdr/tensor.hpp"

namespace cfdr {

enum class Act { Relu, Sigmoid, Identity };

enum class WeightInit { Glorot, Zero };

// Fully connected stack. dims has one entry per layer boundary (so L = dims.size()-1
// weight matrices); acts has one entry per layer.
struct Mlp {
    std::vector<int> dims;
    std::vector<Act> acts;
    std::vector<Tensor> w;  // dims[i] x dims[i+1]
    std::vector<Tensor> b;  // 1 x dims[i+1]

    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }
    std::vector<Tensor*> params();
    size_t param_count() const;
};

// Glorot-uniform weights, zero biases. Same (dims, acts, seed) gives bit-identical
// parameters within one build.
Mlp build_mlp(const std::vector<int>& dims, const std::vector<Act>& acts, uint64_t seed,
              WeightInit init = WeightInit::Glorot);

// Node ids of one Mlp's parameters inside a Graph. trainable=false registers the
// parameters as constants: values flow forward, gradients stop there.
struct MlpRef {
    std::vector<Graph::Id> w;
    std::vector<Graph::Id> b;
    const Mlp* model = nullptr;
};

MlpRef bind(Graph& g, const Mlp& m, bool trainable);
Graph::Id forward(Graph& g, const MlpRef& m, Graph::Id x);

// Plain forward for inference paths; matches the graph forward value for value.
Tensor forward(const Mlp& m, const Tensor& x);

// One optimizer instance per parameter group. Moment buffers are allocated on
// the first step and locked to the parameter shapes afterwards.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& s);

// Bookkeeping for models whose parameters live across several Mlps: remembers
// which graph node belongs to which parameter tensor so gradients can be pulled
// out after backward().
struct BoundParams {
    std::vector<Tensor*> params;
    std::vector<Graph::Id> ids;

    void absorb(Mlp& m, const MlpRef& ref) {
        for (size_t i = 0; i < m.w.size(); ++i) {
            params.push_back(&m.w[i]);
            ids.push_back(ref.w[i]);
            params.push_back(&m.b[i]);
            ids.push_back(ref.b[i]);
        }
    }

    std::vector<const Tensor*> grads(const Graph& g) const {
        std::vector<const Tensor*> out;
        out.reserve(ids.size());
        for (Graph::Id id : ids) out.push_back(&g.grad(id));
        return out;
    }
};

}  // namespace cfdr
