#include "rcgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rcgan {

BayesOracle::BayesOracle(MixtureSpec spec_) : spec(std::move(spec_)) {
  spec.validate();
}

int BayesOracle::classify(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != spec.dim)
    throw std::invalid_argument("BayesOracle: point dimension mismatch");
  // Posteriors share the isotropic covariance, so the log-posterior of class
  // y is log prior_y - ||x - mean_y||^2 / (2 sigma^2) up to a constant.
  const double inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < spec.m; ++y) {
    const auto& mean = spec.means[static_cast<std::size_t>(y)];
    double sq = 0.0;
    for (int i = 0; i < spec.dim; ++i) {
      const double diff = x[static_cast<std::size_t>(i)] -
                          mean[static_cast<std::size_t>(i)];
      sq += diff * diff;
    }
    const double prior = spec.priors[static_cast<std::size_t>(y)];
    const double score = (prior > 0.0
                              ? std::log(prior)
                              : -std::numeric_limits<double>::infinity()) -
                         sq * inv_two_var;
    if (score > best_score) {
      best_score = score;
      best = y;
    }
  }
  return best;
}

double oracle_self_accuracy(const BayesOracle& oracle, int n, Rng& rng) {
  if (n < 1)
    throw std::invalid_argument(
        "oracle_self_accuracy: need at least one sample");
  const auto ds = generate_mixture(oracle.spec, n, rng);
  int hits = 0;
  for (const auto& r : ds.records)
    if (oracle.classify(r.x) == r.label) ++hits;
  return static_cast<double>(hits) / n;
}

double generated_label_accuracy(const Generator& g, const BayesOracle& oracle,
                                int n, std::span<const double> priors,
                                Rng& rng) {
  if (n < 1)
    throw std::invalid_argument(
        "generated_label_accuracy: need at least one sample");
  if (static_cast<int>(priors.size()) != g.m)
    throw std::invalid_argument(
        "generated_label_accuracy: need one prior per class");
  if (g.data_dim != oracle.spec.dim)
    throw std::invalid_argument(
        "generated_label_accuracy: generator and oracle dimensions differ");
  const std::vector<double> prior_vec(priors.begin(), priors.end());
  std::vector<double> z(static_cast<std::size_t>(g.latent_dim));
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const int y = rng.categorical(prior_vec);
    for (double& c : z) c = rng.normal();
    const auto x = g.generate(z, y);
    if (oracle.classify(x) == y) ++hits;
  }
  return static_cast<double>(hits) / n;
}

void RecoveryOpts::validate() const {
  if (restarts < 1)
    throw std::invalid_argument("RecoveryOpts: restarts must be positive");
  if (steps < 1)
    throw std::invalid_argument("RecoveryOpts: steps must be positive");
  if (!(step_size > 0.0))
    throw std::invalid_argument("RecoveryOpts: step size must be positive");
}

int recover_label(const Generator& g, std::span<const double> x,
                  const RecoveryOpts& opts) {
  opts.validate();
  if (static_cast<int>(x.size()) != g.data_dim)
    throw std::invalid_argument("recover_label: point dimension mismatch");

  // Every candidate label reuses the same restart draws, so the outcome is
  // independent of candidate order (up to the lowest-index tie-break).
  Rng rng(opts.seed);
  std::vector<std::vector<double>> starts(
      static_cast<std::size_t>(opts.restarts));
  for (auto& z0 : starts) {
    z0.resize(static_cast<std::size_t>(g.latent_dim));
    for (double& c : z0) c = rng.normal();
  }

  // The backward pass accumulates parameter gradients as a side effect, so
  // run the search on a private copy of the network.
  Mlp net = g.net;
  net.zero_grads();
  const std::size_t width =
      static_cast<std::size_t>(g.latent_dim + g.label_count);

  int best_label = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> input(width, 0.0);
  for (int y = 0; y < g.m; ++y) {
    std::fill(input.begin(), input.end(), 0.0);
    input[static_cast<std::size_t>(g.latent_dim + y)] = 1.0;
    double cand_loss = std::numeric_limits<double>::infinity();
    for (const auto& z0 : starts) {
      std::copy(z0.begin(), z0.end(), input.begin());
      for (int step = 0; step < opts.steps; ++step) {
        Mlp::Trace trace;
        const auto out = net.forward(input, trace);
        std::vector<double> dout(out.size());
        for (std::size_t i = 0; i < out.size(); ++i)
          dout[i] = 2.0 * (out[i] - x[i]);
        const auto dinput = net.backward(trace, dout);
        for (int i = 0; i < g.latent_dim; ++i)
          input[static_cast<std::size_t>(i)] -=
              opts.step_size * dinput[static_cast<std::size_t>(i)];
      }
      const auto out = net.forward(input);
      double loss = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double diff = out[i] - x[i];
        loss += diff * diff;
      }
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "recover_label: reconstruction objective became non-finite");
      cand_loss = std::min(cand_loss, loss);
    }
    if (cand_loss < best_loss) {
      best_loss = cand_loss;
      best_label = y;
    }
  }
  return best_label;
}

double label_recovery_accuracy(const Generator& g, const Dataset& ds,
                               const RecoveryOpts& opts) {
  opts.validate();
  ds.validate();
  if (ds.size() == 0)
    throw std::invalid_argument("label_recovery_accuracy: empty dataset");
  if (ds.dim != g.data_dim)
    throw std::invalid_argument(
        "label_recovery_accuracy: dataset dimension mismatch");
  if (ds.m != g.m)
    throw std::invalid_argument(
        "label_recovery_accuracy: class counts do not match");
  for (const auto& r : ds.records)
    if (r.label >= ds.m)
      throw std::invalid_argument(
          "label_recovery_accuracy: ground-truth class labels required");
  int hits = 0;
  for (int i = 0; i < ds.size(); ++i) {
    RecoveryOpts per_record = opts;
    per_record.seed =
        mix_seed(opts.seed ^ mix_seed(static_cast<std::uint64_t>(i)));
    const auto& r = ds.records[static_cast<std::size_t>(i)];
    if (recover_label(g, r.x, per_record) == r.label) ++hits;
  }
  return static_cast<double>(hits) / ds.size();
}

void write_metrics(const std::vector<MetricResult>& results,
                   const std::string& path) {
  nlohmann::json j;
  j["results"] = results;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics: cannot open " + path);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write_metrics: write failed for " + path);
}

void to_json(nlohmann::json& j, const RecoveryOpts& opts) {
  j = nlohmann::json{{"restarts", opts.restarts},
                     {"steps", opts.steps},
                     {"step_size", opts.step_size},
                     {"seed", opts.seed}};
}

void from_json(const nlohmann::json& j, RecoveryOpts& opts) {
  const RecoveryOpts defaults;
  opts.restarts = j.value("restarts", defaults.restarts);
  opts.steps = j.value("steps", defaults.steps);
  opts.step_size = j.value("step_size", defaults.step_size);
  opts.seed = j.value("seed", defaults.seed);
  opts.validate();
}

void to_json(nlohmann::json& j, const MetricResult& r) {
  j = nlohmann::json{{"metric", r.metric},
                     {"value", r.value},
                     {"n", r.n},
                     {"seed", r.seed},
                     {"opts", r.opts}};
}

}  // namespace rcgan
