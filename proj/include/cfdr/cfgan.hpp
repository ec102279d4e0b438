#pragma once

#include <cstdint>
#include <vector>

#include "cfdr/csv.hpp"
#include "cfdr/dataset.hpp"
#include "cfdr/nn.hpp"
#include "cfdr/vae.hpp"

namespace cfdr {

struct GanConfig {
    int z_g_dim = 92;
    int gen_width = 100;
    int dsc_width = 30;
    int dsc_layers = 3;
    int q_width = 8;
    int q_layers = 3;
    double gamma = 1.0;   // supervised term weight
    double lambda = 0.2;  // information term weight
    double lr_g = 1e-4;
    double lr_d = 5e-4;
    int epochs = 300;
    int batch_size = 64;
};

// Produces the candidate outcome pair (y0, y1) from noise plus the latent
// code. Two shared layers, then one two-layer branch per arm.
struct Generator {
    Mlp shared;
    Mlp head0;
    Mlp head1;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    int z_g_dim = 0;
    int z_c_dim = 0;
};

// Scores (x, y0, y1) with the probability that the treated arm holds the
// factual outcome. Output is sigmoid, clamped before every log.
struct Discriminator {
    Mlp net;
};

// Recovers a factored Gaussian over the latent code from the generated pair.
struct QNetwork {
    Mlp trunk;
    Mlp head;  // [mean | log-variance]
    int code_dim = 0;
};

struct CounterfactualGan {
    GanConfig cfg;
    Generator gen;
    Discriminator dsc;
    QNetwork q;
    int x_dim = 0;

    std::vector<Tensor*> params();
    size_t param_count() const;
};

CounterfactualGan build_cfgan(int x_dim, int z_c_dim, OutcomeKind outcome_kind,
                              const GanConfig& cfg, uint64_t seed);

Tensor generate(const Generator& gen, const Tensor& z_g, const Tensor& z_c);

// Overwrites the factual slot of the generated pair with the observed outcome:
//   yhat0 = (1-t) y_f + t y0,  yhat1 = t y_f + (1-t) y1
struct ReplacedPair {
    Tensor y0;
    Tensor y1;
};

ReplacedPair replace_factual(const Tensor& pair, const Tensor& t, const Tensor& y_f);

// Batch mean of t log D + (1-t) log(1-D).
double v_gan(const Tensor& d_prob, const Tensor& t);

double supervised_loss(const Tensor& y_f, const Tensor& y_f_hat);

// Batch mean of the factored-Gaussian log-density of z_c under q(pair).
double info_lower_bound(const QNetwork& q, const Tensor& pair, const Tensor& z_c);

// Discriminator objective: maximize v_gan, i.e. minimize its negation.
double discriminator_loss(const CounterfactualGan& gan, const Tensor& x, const Tensor& t,
                          const Tensor& y_f, const Tensor& z_g, const Tensor& z_c);

// Graph-side builders used by the training loop; bound holds the trainable
// parameters so callers can run backward and inspect or apply gradients.
// The discriminator sees the candidate pair as a constant.
struct DscLossNodes {
    BoundParams bound;
    Graph::Id loss = -1;
};

DscLossNodes discriminator_loss_nodes(Graph& g, CounterfactualGan& gan, const Tensor& pair,
                                      const Tensor& x, const Tensor& t, const Tensor& y_f);

struct GenLossNodes {
    BoundParams bound;  // generator and Q parameters; the discriminator stays fixed
    Graph::Id adversarial = -1;
    Graph::Id supervised = -1;
    Graph::Id info = -1;
    Graph::Id total = -1;
};

GenLossNodes generator_loss_nodes(Graph& g, CounterfactualGan& gan, const Tensor& x,
                                  const Tensor& t, const Tensor& y_f, const Tensor& z_g,
                                  const Tensor& z_c);

struct GenLossTerms {
    double adversarial = 0.0;  // non-saturating: -(t log(1-D) + (1-t) log D) mean
    double supervised = 0.0;
    double info = 0.0;
    double total = 0.0;  // adversarial + gamma * supervised - lambda * info
};

GenLossTerms generator_loss(const CounterfactualGan& gan, const Tensor& x, const Tensor& t,
                            const Tensor& y_f, const Tensor& z_g, const Tensor& z_c);

struct GanTrainEpoch {
    double vae_total = 0.0;
    double d_loss = 0.0;
    double g_adversarial = 0.0;
    double g_supervised = 0.0;
    double g_info = 0.0;
    double g_total = 0.0;
};

struct GanTrainResult {
    std::vector<GanTrainEpoch> history;
};

// Co-trains the latent model and the GAN: per batch one VAE Adam step, one
// discriminator step, one generator+Q step, in that order. The latent code
// handed to the GAN is the sampled one, treated as a constant.
GanTrainResult train_counterfactual_gan(VaeModel& vae, CounterfactualGan& gan,
                                        const Dataset& train, uint64_t seed);

// Fills in the unobserved arm for every row using posterior means (no
// sampling noise) and one noise draw per row.
std::vector<Quadruple> complete_dataset(const CounterfactualGan& gan, const VaeModel& vae,
                                        const Dataset& ds, uint64_t seed);

// Same rows, with y_cf replaced by the generated counterfactuals.
Dataset with_generated_counterfactuals(const Dataset& ds, const std::vector<Quadruple>& quads);

}  // namespace cfdr
