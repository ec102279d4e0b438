#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cfdr/dataset.hpp"
#include "cfdr/nn.hpp"

namespace cfdr {

// Four-factor latent model over the covariates: separate posteriors for the
// covariate-, treatment-, factual- and counterfactual-outcome factors, one
// shared encoder trunk, one decoder over the concatenated sample.
struct VaeConfig {
    int trunk_width = 15;
    int trunk_layers = 3;
    std::array<int, 4> latent_dims = {5, 1, 1, 1};
    int decoder_width = 15;
    int decoder_layers = 4;
    double lr = 1e-3;

    int latent_total() const { return latent_dims[0] + latent_dims[1] + latent_dims[2] + latent_dims[3]; }
};

struct VaeModel {
    VaeConfig cfg;
    int input_dim = 0;
    Mlp trunk;
    std::array<Mlp, 4> heads;  // each emits [mean | log-variance]
    Mlp decoder;
    std::vector<bool> x_binary;  // per input column: Bernoulli instead of Gaussian

    std::vector<Tensor*> params();
    size_t param_count() const;
};

VaeModel build_vae(int input_dim, const VaeConfig& cfg, uint64_t seed,
                   const std::vector<bool>& x_binary = {});

// Per-factor posterior moments; sigma is the standard deviation.
struct PosteriorParams {
    std::array<Tensor, 4> mean;
    std::array<Tensor, 4> sigma;
};

PosteriorParams encode(const VaeModel& m, const Tensor& x);

// z = mean + eps * sigma, elementwise; eps is caller-supplied noise.
Tensor reparameterize(const Tensor& mean, const Tensor& sigma, const Tensor& eps);

// KL(N(mean, sigma^2) || N(0, I)) summed over dimensions, averaged over rows.
double kl_standard_normal(const Tensor& mean, const Tensor& sigma);

Tensor decode(const VaeModel& m, const Tensor& z);

struct ElboTerms {
    double reconstruction = 0.0;
    std::array<double, 4> kl = {0.0, 0.0, 0.0, 0.0};
    double total = 0.0;
};

// Loss of one batch at one Monte-Carlo sample per row; eps supplies the
// noise for all four factors, concatenated in factor order.
ElboTerms elbo_loss(const VaeModel& m, const Tensor& x, const Tensor& eps);

struct VaeStepResult {
    ElboTerms terms;
    Tensor z;  // sampled latent, batch x latent_total; detached
};

// One Adam update on the full VAE. The returned latent sample is the one the
// loss was computed with, for downstream consumers.
VaeStepResult vae_train_step(VaeModel& m, const Tensor& x, const Tensor& eps, AdamState& opt);

// Graph-side forward so other losses can be co-located on one tape. Outputs
// the per-factor posterior nodes and the sampled latent node.
struct VaeNodes {
    BoundParams bound;
    std::array<Graph::Id, 4> mean;
    std::array<Graph::Id, 4> logvar;
    Graph::Id z = -1;
    Graph::Id x_hat = -1;
};

VaeNodes vae_forward(Graph& g, VaeModel& m, Graph::Id x, const Tensor& eps, bool trainable);

// The five loss terms as graph nodes; total is their exact sum.
struct ElboNodes {
    Graph::Id reconstruction = -1;
    std::array<Graph::Id, 4> kl = {-1, -1, -1, -1};
    Graph::Id total = -1;
};

ElboNodes elbo_nodes(Graph& g, const VaeModel& m, const VaeNodes& nodes, Graph::Id x);

}  // namespace cfdr
