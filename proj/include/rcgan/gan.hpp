#pragma once
// Desk-scale adversarial trainer. The conditional generator maps a latent
// draw plus a one-hot class label to a data point. The projection
// discriminator scores (point, label) pairs as vec(y)^T V psi(x) +
// v^T psi_prime(x) with V kept inside the unit box by clipping. Two losses
// are provided: the robust conditional loss, where generated labels are
// corrupted through the same channel as the real data before the
// discriminator sees them, and the few-label loss, where unlabeled samples
// are scored against a dedicated missing-label slot and labeled terms are
// weighted by lambda. All gradients are hand-derived and validated against
// central differences.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rcgan/channel.hpp"
#include "rcgan/data.hpp"
#include "rcgan/mlp.hpp"
#include "rcgan/rng.hpp"

namespace rcgan {

// Shape of the per-sample loss term phi.
enum class Phi {
  kLinear,  // phi(t) = t on raw scores (the clipped-family regime)
  kLog,     // phi(t) = log t on sigmoid-squashed scores (the JS-flavored GAN)
};

enum class Optimizer { kSgd, kMomentum };

struct TrainConfig {
  Phi phi = Phi::kLog;
  double lambda = 0.1;
  double lr_disc = 0.05;
  // The generator runs an order of magnitude hotter than the discriminator:
  // when most of the label signal is erased or down-weighted, the
  // discriminator's class scores saturate the sigmoid before a slow generator
  // can respond, and conditioning never develops. A fast generator aligns
  // while those scores are still in the sigmoid's responsive range.
  double lr_gen = 0.5;
  double momentum = 0.5;
  int batch = 64;
  int epochs = 30;
  double clip = 1.0;
  int latent_dim = 2;
  std::uint64_t seed = 0;
  std::vector<int> gen_hidden = {64, 64};
  std::vector<int> disc_hidden = {64};
  int feature_dim = 16;
  Optimizer optimizer = Optimizer::kMomentum;

  void validate() const;
};

// Thrown when a loss turns non-finite; train() catches it and rolls back to
// the last epoch checkpoint.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Generator {
  int latent_dim = 0;
  int m = 0;           // class labels the generator may be conditioned on
  int label_count = 0; // one-hot width; uncertain slots exist but stay zero
  int data_dim = 0;
  Mlp net;             // latent_dim + label_count -> hidden -> data_dim

  Generator() = default;
  Generator(int latent_dim, int m, int m_tilde, int data_dim,
            const std::vector<int>& hidden);
  void init(Rng& rng);

  std::vector<double> generate(std::span<const double> z, int y) const;
  std::vector<double> generate(std::span<const double> z, int y,
                               Mlp::Trace& trace) const;
};

struct ProjectionDiscriminator {
  int data_dim = 0;
  int label_count = 0;
  int feature_dim = 0;
  Mlp psi;        // data_dim -> hidden -> feature_dim, feeds the bilinear term
  Mlp psi_prime;  // data_dim -> hidden -> feature_dim, feeds the plain term
  std::vector<double> V;  // label_count x feature_dim
  std::vector<double> v;  // feature_dim
  std::vector<double> V_grad;
  std::vector<double> v_grad;

  ProjectionDiscriminator() = default;
  ProjectionDiscriminator(int data_dim, int label_count, int feature_dim,
                          const std::vector<int>& hidden);
  void init(Rng& rng);
  void zero_grads();

  double score(std::span<const double> x, int label) const;

  struct Trace {
    Mlp::Trace psi_trace;
    Mlp::Trace psi_prime_trace;
    int label = 0;
  };
  double score(std::span<const double> x, int label, Trace& trace) const;

  // Accumulates gradients for one traced score and returns dloss/dx.
  std::vector<double> backward(const Trace& trace, double dscore);

  // Projects V back into the box; the invariant max|V| <= bound holds exactly
  // after every call.
  void clip_weights(double bound);
  double max_abs_v() const;
};

// Raw projection score for a one-hot label vector (exactly one slot set to 1).
double disc_forward(const ProjectionDiscriminator& d,
                    std::span<const double> x,
                    std::span<const double> one_hot_label);

// Momentum buffers; sized lazily on first use.
struct OptState {
  std::vector<std::vector<double>> disc_vel;
  std::vector<std::vector<double>> gen_vel;
};

struct StepLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
};

// One discriminator ascent step followed by one generator descent step of the
// robust conditional loss on a batch of channel-corrupted records. Generated
// samples draw y from priors, z standard normal, and corrupt y through c
// afresh before scoring. V is clipped after the discriminator update.
StepLosses rcgan_disc_gen_step(const Dataset& corrupted,
                               std::span<const int> batch,
                               const ConfusionMatrix& c,
                               std::span<const double> priors, Generator& g,
                               ProjectionDiscriminator& d,
                               const TrainConfig& cfg, OptState& opt,
                               Rng& rng);

struct LossTerms {
  double total = 0.0;      // full objective value
  double gen_terms = 0.0;  // the generated-sample terms only
};

// Robust conditional objective on an explicit batch of (x, observed label)
// pairs: real pairs are scored as-is, and n_gen generated samples draw y from
// priors, z standard normal, and corrupt y through c before scoring. With
// accumulate_grads, gradients land in g and d (callers zero them first).
LossTerms rcgan_adversarial_loss(
    const std::vector<std::pair<std::vector<double>, int>>& real_obs,
    int n_gen, const ConfusionMatrix& c, std::span<const double> priors,
    Generator& g, ProjectionDiscriminator& d, const TrainConfig& cfg, Rng& rng,
    bool accumulate_grads);

// Few-label objective on explicit batches: every x is scored against the
// missing-label slot (weight 1), labeled pairs against their class slots
// (weight lambda), plus the matching generated terms. With
// accumulate_grads, gradients land in g and d (callers zero them first).
LossTerms rcgan_lambda_loss(
    const std::vector<std::vector<double>>& xs,
    const std::vector<std::pair<std::vector<double>, int>>& labeled,
    std::span<const double> priors, Generator& g, ProjectionDiscriminator& d,
    const TrainConfig& cfg, Rng& rng, bool accumulate_grads);

// One discriminator ascent and one generator descent step of the few-label
// objective. batch indexes records whose x feeds the unlabeled terms;
// labeled_pool indexes the records allowed to feed the labeled terms (drawn
// with replacement, batch-many at a time).
StepLosses few_label_step(const Dataset& split, std::span<const int> batch,
                          std::span<const int> labeled_pool,
                          std::span<const double> priors, Generator& g,
                          ProjectionDiscriminator& d, const TrainConfig& cfg,
                          OptState& opt, Rng& rng);

struct EpochStats {
  int epoch = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  std::optional<double> metric;
};

struct TrainResult {
  Generator gen;
  ProjectionDiscriminator disc;
  std::vector<EpochStats> history;
  bool diverged = false;
};

// Optional per-epoch metric callback (e.g. generated-label accuracy).
using EvalHook =
    std::function<double(const Generator& g, Rng& rng)>;

// Trains on a channel-corrupted dataset. The channel recorded in the dataset
// is the single corruption source: the real labels already passed through
// it, and generated labels are pushed through the same matrix each step.
TrainResult train_rcgan(const TrainConfig& cfg, const Dataset& corrupted,
                        std::span<const double> priors,
                        const EvalHook& hook = {});

// Trains on a few-label split dataset with the lambda-weighted objective.
TrainResult train_few_label(const TrainConfig& cfg, const Dataset& split,
                            std::span<const double> priors,
                            const EvalHook& hook = {});

// Central-difference check of an analytic gradient. Perturbs each parameter
// by +-eps, compares (f+ - f-) / (2 eps) against analytic[i], and returns the
// worst error |analytic - numeric| / max(|analytic|, |numeric|, 1e-4) — the
// floor keeps round-off noise on near-zero gradients from registering while
// a sign flip of any meaningful gradient still scores about 2.
double grad_check(std::vector<double>& params,
                  std::span<const double> analytic,
                  const std::function<double()>& loss, double eps);

// Finite instance on which both losses can be computed as exact expectations
// (finite latent support), used to verify that the few-label objective is a
// scaled robust-conditional objective under the matched missing channel.
struct EnumerableInstance {
  int m = 0;
  std::vector<std::vector<double>> xs;   // support of the real points
  std::vector<double> joint;             // xs.size() x m, P(X = x_i, Y = y)
  std::vector<std::vector<double>> zs;   // latent support
  std::vector<double> z_probs;
  std::vector<double> priors;            // label law for generated samples

  void validate() const;
};

// Exact robust-conditional loss: real and generated labels are corrupted by
// taking expectations over the channel rows (no sampling).
double exact_adversarial_loss(const EnumerableInstance& inst,
                              const ConfusionMatrix& c, const Generator& g,
                              const ProjectionDiscriminator& d, Phi phi);

// Exact few-label loss with label weight lambda.
double exact_few_label_loss(const EnumerableInstance& inst, double lambda,
                            const Generator& g,
                            const ProjectionDiscriminator& d, Phi phi);

// Flat parameter snapshots (generator net; discriminator nets then V then v).
std::vector<double> snapshot(const Generator& g);
std::vector<double> snapshot(const ProjectionDiscriminator& d);
void restore(Generator& g, std::span<const double> params);
void restore(ProjectionDiscriminator& d, std::span<const double> params);

// History CSV: epoch,loss_d,loss_g plus a metric column when every row
// carries one.
void write_history(const std::vector<EpochStats>& history,
                   const std::string& path);

void save_checkpoint(const Generator& g, const ProjectionDiscriminator& d,
                     const std::string& path);
std::pair<Generator, ProjectionDiscriminator> load_checkpoint(
    const std::string& path);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void to_json(nlohmann::json& j, const Generator& g);
void from_json(const nlohmann::json& j, Generator& g);
void to_json(nlohmann::json& j, const ProjectionDiscriminator& d);
void from_json(const nlohmann::json& j, ProjectionDiscriminator& d);

}  // namespace rcgan
