#pragma once
// Conditional-generation metrics against an exact Bayes oracle on mixture
// data. Generated label accuracy asks whether G(z; y) lands in the mode the
// label names; label recovery accuracy inverts the generator by gradient
// descent over the latent and asks whether the best-reconstructing label
// matches the ground truth.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rcgan/data.hpp"
#include "rcgan/gan.hpp"
#include "rcgan/rng.hpp"

namespace rcgan {

// Exact posterior classifier for a Gaussian mixture: argmax_y P(y | x),
// lowest index on ties.
struct BayesOracle {
  MixtureSpec spec;

  explicit BayesOracle(MixtureSpec spec);
  int classify(std::span<const double> x) const;
};

// Accuracy of the oracle on n fresh draws from its own mixture. Evaluation
// protocols require this to be >= 0.999, i.e. an essentially noiseless
// ground-truth scorer.
double oracle_self_accuracy(const BayesOracle& oracle, int n, Rng& rng);

// Fraction of n generated samples whose oracle label matches the label they
// were conditioned on. Labels draw from priors, latents standard normal.
double generated_label_accuracy(const Generator& g, const BayesOracle& oracle,
                                int n, std::span<const double> priors,
                                Rng& rng);

// Latent-search settings for label recovery. The search is deliberately
// bounded: a fixed number of fixed-size gradient steps from each random
// restart. seed makes the metric reproducible.
struct RecoveryOpts {
  int restarts = 5;
  int steps = 200;
  double step_size = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Minimizes ||G(z; y) - x||^2 over z for every candidate label y and returns
// the label with the smallest final reconstruction loss (lowest index on
// exact ties). All candidates share the same restart draws, so the result
// does not depend on candidate order.
int recover_label(const Generator& g, std::span<const double> x,
                  const RecoveryOpts& opts);

// Fraction of records whose recovered label matches the recorded
// ground-truth label. Requires class labels on every record; per-record
// searches are seeded independently by record index.
double label_recovery_accuracy(const Generator& g, const Dataset& ds,
                               const RecoveryOpts& opts);

// One metric value with enough context to reproduce it.
struct MetricResult {
  std::string metric;
  double value = 0.0;
  long long n = 0;
  std::uint64_t seed = 0;
  nlohmann::json opts;
};

void write_metrics(const std::vector<MetricResult>& results,
                   const std::string& path);

void to_json(nlohmann::json& j, const RecoveryOpts& opts);
void from_json(const nlohmann::json& j, RecoveryOpts& opts);
void to_json(nlohmann::json& j, const MetricResult& r);

}  // namespace rcgan
