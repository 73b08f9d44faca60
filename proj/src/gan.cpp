#include "rcgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace rcgan {

namespace {

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Value and score-derivative of one loss term. flip=false evaluates
// phi(D(x,y)); flip=true evaluates phi(1 - D(x,y)). Under Phi::kLog the
// discriminator output is squashed by a sigmoid inside the term.
std::pair<double, double> phi_term(Phi phi, double s, bool flip) {
  switch (phi) {
    case Phi::kLinear:
      return flip ? std::pair{1.0 - s, -1.0} : std::pair{s, 1.0};
    case Phi::kLog:
      return flip ? std::pair{-softplus(s), -sigmoid(s)}
                  : std::pair{-softplus(-s), sigmoid(-s)};
  }
  throw std::logic_error("phi_term: unknown phi");
}

void check_priors(std::span<const double> priors, int m, const char* what) {
  if (static_cast<int>(priors.size()) != m)
    throw std::invalid_argument(std::string(what) +
                                ": need one prior per class");
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0))
      throw std::invalid_argument(std::string(what) + ": negative prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) +
                                ": priors do not sum to one");
}

std::vector<double> draw_latent(Rng& rng, int latent_dim) {
  std::vector<double> z(static_cast<std::size_t>(latent_dim));
  for (double& c : z) c = rng.normal();
  return z;
}

struct ParamRefs {
  std::vector<std::vector<double>*> params;
  std::vector<std::vector<double>*> grads;
};

ParamRefs refs_of(Generator& g) {
  return {{&g.net.params()}, {&g.net.grads()}};
}

ParamRefs refs_of(ProjectionDiscriminator& d) {
  return {{&d.psi.params(), &d.psi_prime.params(), &d.V, &d.v},
          {&d.psi.grads(), &d.psi_prime.grads(), &d.V_grad, &d.v_grad}};
}

// direction +1 ascends, -1 descends.
void apply_update(const ParamRefs& refs,
                  std::vector<std::vector<double>>& velocity,
                  const TrainConfig& cfg, double lr, double direction) {
  if (velocity.size() != refs.params.size()) {
    velocity.clear();
    for (const auto* p : refs.params)
      velocity.emplace_back(p->size(), 0.0);
  }
  for (std::size_t part = 0; part < refs.params.size(); ++part) {
    auto& p = *refs.params[part];
    const auto& gr = *refs.grads[part];
    auto& vel = velocity[part];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double step = gr[i];
      if (cfg.optimizer == Optimizer::kMomentum) {
        vel[i] = cfg.momentum * vel[i] + gr[i];
        step = vel[i];
      }
      p[i] += direction * lr * step;
    }
  }
}

void append_params(std::vector<double>& out, const std::vector<double>& part) {
  out.insert(out.end(), part.begin(), part.end());
}

void take_params(std::vector<double>& part, std::span<const double>& in) {
  if (in.size() < part.size())
    throw std::invalid_argument("restore: parameter snapshot too short");
  std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(part.size()),
            part.begin());
  in = in.subspan(part.size());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0))
    throw std::invalid_argument("TrainConfig: lambda must be nonnegative");
  if (!(lr_disc >= 0.0) || !(lr_gen >= 0.0))
    throw std::invalid_argument("TrainConfig: learning rates must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("TrainConfig: momentum outside [0, 1)");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be positive");
  if (epochs < 0)
    throw std::invalid_argument("TrainConfig: epochs must be nonnegative");
  if (!(clip > 0.0))
    throw std::invalid_argument("TrainConfig: clip bound must be positive");
  if (latent_dim < 1)
    throw std::invalid_argument("TrainConfig: latent dimension must be positive");
  if (feature_dim < 1)
    throw std::invalid_argument("TrainConfig: feature dimension must be positive");
  for (int h : gen_hidden)
    if (h < 1)
      throw std::invalid_argument("TrainConfig: hidden sizes must be positive");
  for (int h : disc_hidden)
    if (h < 1)
      throw std::invalid_argument("TrainConfig: hidden sizes must be positive");
}

Generator::Generator(int latent, int m_, int m_tilde, int dim,
                     const std::vector<int>& hidden)
    : latent_dim(latent), m(m_), label_count(m_ + m_tilde), data_dim(dim) {
  if (latent < 1 || m_ < 1 || m_tilde < 0 || dim < 1)
    throw std::invalid_argument("Generator: bad dimensions");
  std::vector<int> sizes = {latent_dim + label_count};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(data_dim);
  net = Mlp(sizes);
}

void Generator::init(Rng& rng) { net.init(rng); }

std::vector<double> Generator::generate(std::span<const double> z,
                                        int y) const {
  Mlp::Trace trace;
  return generate(z, y, trace);
}

std::vector<double> Generator::generate(std::span<const double> z, int y,
                                        Mlp::Trace& trace) const {
  if (static_cast<int>(z.size()) != latent_dim)
    throw std::invalid_argument("Generator: latent dimension mismatch");
  if (y < 0 || y >= m)
    throw std::out_of_range(
        "Generator: can only be conditioned on a class label");
  std::vector<double> input(static_cast<std::size_t>(latent_dim + label_count),
                            0.0);
  std::copy(z.begin(), z.end(), input.begin());
  input[static_cast<std::size_t>(latent_dim + y)] = 1.0;
  return net.forward(input, trace);
}

ProjectionDiscriminator::ProjectionDiscriminator(int dim, int labels,
                                                 int features,
                                                 const std::vector<int>& hidden)
    : data_dim(dim), label_count(labels), feature_dim(features) {
  if (dim < 1 || labels < 1 || features < 1)
    throw std::invalid_argument("ProjectionDiscriminator: bad dimensions");
  std::vector<int> sizes = {data_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(feature_dim);
  psi = Mlp(sizes);
  psi_prime = Mlp(sizes);
  V.assign(static_cast<std::size_t>(label_count) * feature_dim, 0.0);
  v.assign(static_cast<std::size_t>(feature_dim), 0.0);
  V_grad.assign(V.size(), 0.0);
  v_grad.assign(v.size(), 0.0);
}

void ProjectionDiscriminator::init(Rng& rng) {
  psi.init(rng);
  psi_prime.init(rng);
  const double a = std::sqrt(6.0 / (label_count + feature_dim));
  for (double& w : V) w = rng.uniform(-a, a);
  for (double& w : v) w = rng.uniform(-a, a);
}

void ProjectionDiscriminator::zero_grads() {
  psi.zero_grads();
  psi_prime.zero_grads();
  std::fill(V_grad.begin(), V_grad.end(), 0.0);
  std::fill(v_grad.begin(), v_grad.end(), 0.0);
}

double ProjectionDiscriminator::score(std::span<const double> x,
                                      int label) const {
  Trace trace;
  return score(x, label, trace);
}

double ProjectionDiscriminator::score(std::span<const double> x, int label,
                                      Trace& trace) const {
  if (label < 0 || label >= label_count)
    throw std::out_of_range("ProjectionDiscriminator: label out of range");
  trace.label = label;
  const auto f = psi.forward(x, trace.psi_trace);
  const auto fp = psi_prime.forward(x, trace.psi_prime_trace);
  double s = 0.0;
  const double* row = V.data() + static_cast<std::size_t>(label) * feature_dim;
  for (int j = 0; j < feature_dim; ++j) {
    s += row[j] * f[static_cast<std::size_t>(j)];
    s += v[static_cast<std::size_t>(j)] * fp[static_cast<std::size_t>(j)];
  }
  return s;
}

std::vector<double> ProjectionDiscriminator::backward(const Trace& trace,
                                                      double dscore) {
  const auto& f = trace.psi_trace.acts.back();
  const auto& fp = trace.psi_prime_trace.acts.back();
  const double* row =
      V.data() + static_cast<std::size_t>(trace.label) * feature_dim;
  double* grow =
      V_grad.data() + static_cast<std::size_t>(trace.label) * feature_dim;
  std::vector<double> df(static_cast<std::size_t>(feature_dim));
  std::vector<double> dfp(static_cast<std::size_t>(feature_dim));
  for (int j = 0; j < feature_dim; ++j) {
    grow[j] += dscore * f[static_cast<std::size_t>(j)];
    v_grad[static_cast<std::size_t>(j)] +=
        dscore * fp[static_cast<std::size_t>(j)];
    df[static_cast<std::size_t>(j)] = dscore * row[j];
    dfp[static_cast<std::size_t>(j)] =
        dscore * v[static_cast<std::size_t>(j)];
  }
  auto dx = psi.backward(trace.psi_trace, df);
  const auto dx2 = psi_prime.backward(trace.psi_prime_trace, dfp);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx2[i];
  return dx;
}

void ProjectionDiscriminator::clip_weights(double bound) {
  if (!(bound > 0.0))
    throw std::invalid_argument(
        "ProjectionDiscriminator: clip bound must be positive");
  for (double& w : V) w = std::clamp(w, -bound, bound);
}

double ProjectionDiscriminator::max_abs_v() const {
  double worst = 0.0;
  for (double w : V) worst = std::max(worst, std::abs(w));
  return worst;
}

double disc_forward(const ProjectionDiscriminator& d,
                    std::span<const double> x,
                    std::span<const double> one_hot_label) {
  if (static_cast<int>(one_hot_label.size()) != d.label_count)
    throw std::invalid_argument("disc_forward: one-hot width mismatch");
  int label = -1;
  for (std::size_t u = 0; u < one_hot_label.size(); ++u) {
    if (one_hot_label[u] == 0.0) continue;
    if (one_hot_label[u] != 1.0 || label != -1)
      throw std::invalid_argument("disc_forward: label vector is not one-hot");
    label = static_cast<int>(u);
  }
  if (label == -1)
    throw std::invalid_argument("disc_forward: label vector is all zero");
  return d.score(x, label);
}

LossTerms rcgan_adversarial_loss(
    const std::vector<std::pair<std::vector<double>, int>>& real_obs,
    int n_gen, const ConfusionMatrix& c, std::span<const double> priors,
    Generator& g, ProjectionDiscriminator& d, const TrainConfig& cfg, Rng& rng,
    bool accumulate_grads) {
  cfg.validate();
  if (real_obs.empty() || n_gen < 1)
    throw std::invalid_argument(
        "rcgan_adversarial_loss: need real and generated samples");
  if (!c.full_rank())
    throw std::domain_error("rcgan_adversarial_loss: singular channel");
  if (d.label_count != c.label_count() || g.label_count != c.label_count())
    throw std::invalid_argument(
        "rcgan_adversarial_loss: label universes do not match");
  check_priors(priors, g.m, "rcgan_adversarial_loss");
  const std::vector<double> prior_vec(priors.begin(), priors.end());

  LossTerms out;
  const double wr = 1.0 / static_cast<double>(real_obs.size());
  for (const auto& [x, label] : real_obs) {
    ProjectionDiscriminator::Trace t;
    const double s = d.score(x, label, t);
    const auto [val, ds] = phi_term(cfg.phi, s, false);
    out.total += wr * val;
    if (accumulate_grads) d.backward(t, wr * ds);
  }
  const double wg = 1.0 / static_cast<double>(n_gen);
  for (int i = 0; i < n_gen; ++i) {
    const int y = rng.categorical(prior_vec);
    const auto z = draw_latent(rng, g.latent_dim);
    Mlp::Trace gt;
    const auto x_gen = g.generate(z, y, gt);
    // The generated label rides through the same channel as the real ones.
    const int y_obs = corrupt_label(c, y, rng);
    ProjectionDiscriminator::Trace t;
    const double s = d.score(x_gen, y_obs, t);
    const auto [val, ds] = phi_term(cfg.phi, s, true);
    out.total += wg * val;
    out.gen_terms += wg * val;
    if (accumulate_grads) {
      const auto dx = d.backward(t, wg * ds);
      g.net.backward(gt, dx);
    }
  }
  return out;
}

StepLosses rcgan_disc_gen_step(const Dataset& corrupted,
                               std::span<const int> batch,
                               const ConfusionMatrix& c,
                               std::span<const double> priors, Generator& g,
                               ProjectionDiscriminator& d,
                               const TrainConfig& cfg, OptState& opt,
                               Rng& rng) {
  cfg.validate();
  if (batch.empty())
    throw std::invalid_argument("rcgan_disc_gen_step: empty batch");
  if (corrupted.label_count() != c.label_count())
    throw std::invalid_argument(
        "rcgan_disc_gen_step: label universes do not match");
  if (corrupted.dim != g.data_dim || corrupted.dim != d.data_dim)
    throw std::invalid_argument(
        "rcgan_disc_gen_step: data dimensions do not match");
  std::vector<std::pair<std::vector<double>, int>> real_obs;
  real_obs.reserve(batch.size());
  for (int idx : batch) {
    const auto& r = corrupted.records[static_cast<std::size_t>(idx)];
    real_obs.emplace_back(r.x, r.label);
  }
  const int n_gen = static_cast<int>(batch.size());

  StepLosses losses;

  // Discriminator ascent on the full objective.
  d.zero_grads();
  const auto disc_loss = rcgan_adversarial_loss(real_obs, n_gen, c, priors, g,
                                                d, cfg, rng, true);
  losses.loss_d = disc_loss.total;
  if (!std::isfinite(losses.loss_d))
    throw TrainingDiverged("discriminator loss became non-finite");
  apply_update(refs_of(d), opt.disc_vel, cfg, cfg.lr_disc, +1.0);
  d.clip_weights(cfg.clip);

  // Generator descent on the generated-sample term.
  g.net.zero_grads();
  d.zero_grads();
  const auto gen_loss = rcgan_adversarial_loss(real_obs, n_gen, c, priors, g,
                                               d, cfg, rng, true);
  losses.loss_g = gen_loss.gen_terms;
  if (!std::isfinite(losses.loss_g))
    throw TrainingDiverged("generator loss became non-finite");
  apply_update(refs_of(g), opt.gen_vel, cfg, cfg.lr_gen, -1.0);
  return losses;
}

LossTerms rcgan_lambda_loss(
    const std::vector<std::vector<double>>& xs,
    const std::vector<std::pair<std::vector<double>, int>>& labeled,
    std::span<const double> priors, Generator& g, ProjectionDiscriminator& d,
    const TrainConfig& cfg, Rng& rng, bool accumulate_grads) {
  cfg.validate();
  if (xs.empty())
    throw std::invalid_argument("rcgan_lambda_loss: no unlabeled samples");
  if (d.label_count != g.m + 1 || g.label_count != g.m + 1)
    throw std::invalid_argument(
        "rcgan_lambda_loss: label universe needs exactly one missing slot");
  if (cfg.lambda > 0.0 && labeled.empty())
    throw std::invalid_argument(
        "rcgan_lambda_loss: labeled terms have positive weight but no samples");
  check_priors(priors, g.m, "rcgan_lambda_loss");
  const std::vector<double> prior_vec(priors.begin(), priors.end());
  const int miss = g.m;

  LossTerms out;
  const double wu = 1.0 / static_cast<double>(xs.size());
  for (const auto& x : xs) {
    ProjectionDiscriminator::Trace t;
    const double s = d.score(x, miss, t);
    const auto [val, ds] = phi_term(cfg.phi, s, false);
    out.total += wu * val;
    if (accumulate_grads) d.backward(t, wu * ds);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const int y = rng.categorical(prior_vec);
    const auto z = draw_latent(rng, g.latent_dim);
    Mlp::Trace gt;
    const auto x_gen = g.generate(z, y, gt);
    ProjectionDiscriminator::Trace t;
    const double s = d.score(x_gen, miss, t);
    const auto [val, ds] = phi_term(cfg.phi, s, true);
    out.total += wu * val;
    out.gen_terms += wu * val;
    if (accumulate_grads) {
      const auto dx = d.backward(t, wu * ds);
      g.net.backward(gt, dx);
    }
  }
  if (cfg.lambda > 0.0) {
    const double wl = cfg.lambda / static_cast<double>(labeled.size());
    for (const auto& [x, y] : labeled) {
      if (y < 0 || y >= g.m)
        throw std::invalid_argument(
            "rcgan_lambda_loss: labeled sample without a class label");
      ProjectionDiscriminator::Trace t;
      const double s = d.score(x, y, t);
      const auto [val, ds] = phi_term(cfg.phi, s, false);
      out.total += wl * val;
      if (accumulate_grads) d.backward(t, wl * ds);
    }
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const int y = rng.categorical(prior_vec);
      const auto z = draw_latent(rng, g.latent_dim);
      Mlp::Trace gt;
      const auto x_gen = g.generate(z, y, gt);
      ProjectionDiscriminator::Trace t;
      const double s = d.score(x_gen, y, t);
      const auto [val, ds] = phi_term(cfg.phi, s, true);
      out.total += wl * val;
      out.gen_terms += wl * val;
      if (accumulate_grads) {
        const auto dx = d.backward(t, wl * ds);
        g.net.backward(gt, dx);
      }
    }
  }
  return out;
}

StepLosses few_label_step(const Dataset& split, std::span<const int> batch,
                          std::span<const int> labeled_pool,
                          std::span<const double> priors, Generator& g,
                          ProjectionDiscriminator& d, const TrainConfig& cfg,
                          OptState& opt, Rng& rng) {
  cfg.validate();
  if (batch.empty())
    throw std::invalid_argument("few_label_step: empty batch");
  if (cfg.lambda > 0.0 && labeled_pool.empty())
    throw std::invalid_argument(
        "few_label_step: labeled terms have positive weight but no labeled "
        "records");
  if (split.dim != g.data_dim || split.dim != d.data_dim)
    throw std::invalid_argument("few_label_step: data dimensions do not match");

  const auto gather = [&](std::span<const int> idx) {
    std::vector<std::vector<double>> xs;
    xs.reserve(idx.size());
    for (int i : idx) xs.push_back(split.records[static_cast<std::size_t>(i)].x);
    return xs;
  };
  const auto draw_labeled = [&]() {
    std::vector<std::pair<std::vector<double>, int>> out;
    if (cfg.lambda == 0.0) return out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int pick = labeled_pool[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(labeled_pool.size())))];
      const auto& r = split.records[static_cast<std::size_t>(pick)];
      out.emplace_back(r.x, r.label);
    }
    return out;
  };
  const auto xs = gather(batch);

  StepLosses losses;
  d.zero_grads();
  const auto disc_loss =
      rcgan_lambda_loss(xs, draw_labeled(), priors, g, d, cfg, rng, true);
  losses.loss_d = disc_loss.total;
  if (!std::isfinite(losses.loss_d))
    throw TrainingDiverged("discriminator loss became non-finite");
  apply_update(refs_of(d), opt.disc_vel, cfg, cfg.lr_disc, +1.0);
  d.clip_weights(cfg.clip);

  g.net.zero_grads();
  d.zero_grads();
  const auto gen_loss =
      rcgan_lambda_loss(xs, draw_labeled(), priors, g, d, cfg, rng, true);
  losses.loss_g = gen_loss.gen_terms;
  if (!std::isfinite(losses.loss_g))
    throw TrainingDiverged("generator loss became non-finite");
  apply_update(refs_of(g), opt.gen_vel, cfg, cfg.lr_gen, -1.0);
  return losses;
}

namespace {

struct TrainLoop {
  const TrainConfig& cfg;
  const Dataset& data;
  const EvalHook& hook;

  TrainResult run(
      Generator&& g0, ProjectionDiscriminator&& d0,
      const std::function<StepLosses(std::span<const int>, Generator&,
                                     ProjectionDiscriminator&, OptState&,
                                     Rng&)>& step) const {
    TrainResult result;
    result.gen = std::move(g0);
    result.disc = std::move(d0);
    Rng root(cfg.seed);
    Rng init_rng = root.derive(0xA1);
    Rng train_rng = root.derive(0xA2);
    Rng eval_rng = root.derive(0xA3);
    result.gen.init(init_rng);
    result.disc.init(init_rng);
    result.disc.clip_weights(cfg.clip);

    OptState opt;
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i)
      order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto snap_g = snapshot(result.gen);
      const auto snap_d = snapshot(result.disc);
      train_rng.shuffle(order);
      double sum_d = 0.0, sum_g = 0.0;
      int steps = 0;
      try {
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch)) {
          const std::size_t len = std::min(
              static_cast<std::size_t>(cfg.batch), order.size() - start);
          const auto losses =
              step(std::span<const int>(order).subspan(start, len), result.gen,
                   result.disc, opt, train_rng);
          sum_d += losses.loss_d;
          sum_g += losses.loss_g;
          ++steps;
        }
      } catch (const TrainingDiverged&) {
        restore(result.gen, snap_g);
        restore(result.disc, snap_d);
        result.diverged = true;
        break;
      }
      EpochStats stats;
      stats.epoch = epoch;
      stats.loss_d = steps > 0 ? sum_d / steps : 0.0;
      stats.loss_g = steps > 0 ? sum_g / steps : 0.0;
      if (hook) stats.metric = hook(result.gen, eval_rng);
      result.history.push_back(std::move(stats));
    }
    return result;
  }
};

}  // namespace

TrainResult train_rcgan(const TrainConfig& cfg, const Dataset& corrupted,
                        std::span<const double> priors, const EvalHook& hook) {
  cfg.validate();
  corrupted.validate();
  if (corrupted.size() == 0)
    throw std::invalid_argument("train_rcgan: empty dataset");
  if (!corrupted.corrupted())
    throw std::invalid_argument(
        "train_rcgan: dataset does not carry its corrupting channel");
  check_priors(priors, corrupted.m, "train_rcgan");
  // The one channel recorded in the dataset corrupted the real labels and
  // now corrupts every generated label as well.
  const auto c = build_confusion(*corrupted.channel);
  if (!c.full_rank())
    throw std::domain_error("train_rcgan: singular channel");

  Generator g(cfg.latent_dim, corrupted.m, corrupted.m_tilde, corrupted.dim,
              cfg.gen_hidden);
  ProjectionDiscriminator d(corrupted.dim, corrupted.label_count(),
                            cfg.feature_dim, cfg.disc_hidden);
  const TrainLoop loop{cfg, corrupted, hook};
  return loop.run(std::move(g), std::move(d),
                  [&](std::span<const int> batch, Generator& gg,
                      ProjectionDiscriminator& dd, OptState& opt, Rng& rng) {
                    return rcgan_disc_gen_step(corrupted, batch, c, priors, gg,
                                               dd, cfg, opt, rng);
                  });
}

TrainResult train_few_label(const TrainConfig& cfg, const Dataset& split,
                            std::span<const double> priors,
                            const EvalHook& hook) {
  cfg.validate();
  split.validate();
  if (split.size() == 0)
    throw std::invalid_argument("train_few_label: empty dataset");
  if (split.corrupted() || split.m_tilde != 0)
    throw std::invalid_argument(
        "train_few_label: expected an uncorrupted few-label split dataset");
  check_priors(priors, split.m, "train_few_label");
  std::vector<int> labeled_pool;
  for (int i = 0; i < split.size(); ++i)
    if (split.records[static_cast<std::size_t>(i)].is_labeled)
      labeled_pool.push_back(i);
  if (cfg.lambda > 0.0 && labeled_pool.empty())
    throw std::invalid_argument(
        "train_few_label: no labeled records for the lambda terms");

  Generator g(cfg.latent_dim, split.m, 1, split.dim, cfg.gen_hidden);
  ProjectionDiscriminator d(split.dim, split.m + 1, cfg.feature_dim,
                            cfg.disc_hidden);
  const TrainLoop loop{cfg, split, hook};
  return loop.run(std::move(g), std::move(d),
                  [&](std::span<const int> batch, Generator& gg,
                      ProjectionDiscriminator& dd, OptState& opt, Rng& rng) {
                    return few_label_step(split, batch, labeled_pool, priors,
                                          gg, dd, cfg, opt, rng);
                  });
}

double grad_check(std::vector<double>& params,
                  std::span<const double> analytic,
                  const std::function<double()>& loss, double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("grad_check: eps must be positive");
  if (analytic.size() != params.size())
    throw std::invalid_argument(
        "grad_check: analytic gradient size does not match parameters");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + eps;
    const double fp = loss();
    params[i] = orig - eps;
    const double fm = loss();
    params[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite loss at probe point");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max({std::abs(analytic[i]), std::abs(numeric),
                                 1e-4});
    worst = std::max(worst, err);
  }
  return worst;
}

void EnumerableInstance::validate() const {
  if (m < 1)
    throw std::invalid_argument("EnumerableInstance: need at least one class");
  if (xs.empty() || zs.empty())
    throw std::invalid_argument("EnumerableInstance: empty support");
  const std::size_t dim = xs.front().size();
  for (const auto& x : xs)
    if (x.size() != dim || dim == 0)
      throw std::invalid_argument("EnumerableInstance: ragged point support");
  if (joint.size() != xs.size() * static_cast<std::size_t>(m))
    throw std::invalid_argument("EnumerableInstance: joint table size mismatch");
  double total = 0.0;
  for (double p : joint) {
    if (!(p >= 0.0))
      throw std::invalid_argument("EnumerableInstance: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("EnumerableInstance: joint does not sum to one");
  if (z_probs.size() != zs.size())
    throw std::invalid_argument("EnumerableInstance: latent table size mismatch");
  total = 0.0;
  for (double p : z_probs) {
    if (!(p >= 0.0))
      throw std::invalid_argument("EnumerableInstance: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(
        "EnumerableInstance: latent law does not sum to one");
  check_priors(priors, m, "EnumerableInstance");
}

double exact_adversarial_loss(const EnumerableInstance& inst,
                              const ConfusionMatrix& c, const Generator& g,
                              const ProjectionDiscriminator& d, Phi phi) {
  inst.validate();
  if (c.m != inst.m || d.label_count != c.label_count() ||
      g.label_count != c.label_count() || g.m != inst.m)
    throw std::invalid_argument(
        "exact_adversarial_loss: label universes do not match");
  double loss = 0.0;
  for (std::size_t i = 0; i < inst.xs.size(); ++i)
    for (int y = 0; y < inst.m; ++y) {
      const double mass = inst.joint[i * static_cast<std::size_t>(inst.m) +
                                     static_cast<std::size_t>(y)];
      if (mass == 0.0) continue;
      for (int u = 0; u < c.label_count(); ++u) {
        const double p = c.at(y, u);
        if (p == 0.0) continue;
        loss += mass * p * phi_term(phi, d.score(inst.xs[i], u), false).first;
      }
    }
  for (std::size_t k = 0; k < inst.zs.size(); ++k) {
    if (inst.z_probs[k] == 0.0) continue;
    for (int y = 0; y < inst.m; ++y) {
      const double mass =
          inst.z_probs[k] * inst.priors[static_cast<std::size_t>(y)];
      if (mass == 0.0) continue;
      const auto x_gen = g.generate(inst.zs[k], y);
      for (int u = 0; u < c.label_count(); ++u) {
        const double p = c.at(y, u);
        if (p == 0.0) continue;
        loss += mass * p * phi_term(phi, d.score(x_gen, u), true).first;
      }
    }
  }
  return loss;
}

double exact_few_label_loss(const EnumerableInstance& inst, double lambda,
                            const Generator& g,
                            const ProjectionDiscriminator& d, Phi phi) {
  inst.validate();
  if (!(lambda >= 0.0))
    throw std::invalid_argument(
        "exact_few_label_loss: lambda must be nonnegative");
  if (d.label_count != inst.m + 1 || g.label_count != inst.m + 1 ||
      g.m != inst.m)
    throw std::invalid_argument(
        "exact_few_label_loss: label universe needs exactly one missing slot");
  const int miss = inst.m;
  double loss = 0.0;
  for (std::size_t i = 0; i < inst.xs.size(); ++i) {
    double px = 0.0;
    for (int y = 0; y < inst.m; ++y)
      px += inst.joint[i * static_cast<std::size_t>(inst.m) +
                       static_cast<std::size_t>(y)];
    if (px == 0.0) continue;
    loss += px * phi_term(phi, d.score(inst.xs[i], miss), false).first;
  }
  for (std::size_t k = 0; k < inst.zs.size(); ++k) {
    if (inst.z_probs[k] == 0.0) continue;
    for (int y = 0; y < inst.m; ++y) {
      const double mass =
          inst.z_probs[k] * inst.priors[static_cast<std::size_t>(y)];
      if (mass == 0.0) continue;
      const auto x_gen = g.generate(inst.zs[k], y);
      loss += mass * phi_term(phi, d.score(x_gen, miss), true).first;
      loss += lambda * mass * phi_term(phi, d.score(x_gen, y), true).first;
    }
  }
  for (std::size_t i = 0; i < inst.xs.size(); ++i)
    for (int y = 0; y < inst.m; ++y) {
      const double mass = inst.joint[i * static_cast<std::size_t>(inst.m) +
                                     static_cast<std::size_t>(y)];
      if (mass == 0.0) continue;
      loss += lambda * mass * phi_term(phi, d.score(inst.xs[i], y), false).first;
    }
  return loss;
}

std::vector<double> snapshot(const Generator& g) { return g.net.params(); }

std::vector<double> snapshot(const ProjectionDiscriminator& d) {
  std::vector<double> out;
  out.reserve(d.psi.params().size() + d.psi_prime.params().size() +
              d.V.size() + d.v.size());
  append_params(out, d.psi.params());
  append_params(out, d.psi_prime.params());
  append_params(out, d.V);
  append_params(out, d.v);
  return out;
}

void restore(Generator& g, std::span<const double> params) {
  if (params.size() != g.net.params().size())
    throw std::invalid_argument("restore: snapshot does not fit the generator");
  std::copy(params.begin(), params.end(), g.net.params().begin());
}

void restore(ProjectionDiscriminator& d, std::span<const double> params) {
  const std::size_t want = d.psi.params().size() +
                           d.psi_prime.params().size() + d.V.size() +
                           d.v.size();
  if (params.size() != want)
    throw std::invalid_argument(
        "restore: snapshot does not fit the discriminator");
  take_params(d.psi.params(), params);
  take_params(d.psi_prime.params(), params);
  take_params(d.V, params);
  take_params(d.v, params);
}

void write_history(const std::vector<EpochStats>& history,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_history: cannot open " + path);
  bool with_metric = !history.empty();
  for (const auto& h : history) with_metric = with_metric && h.metric.has_value();
  out << "epoch,loss_d,loss_g" << (with_metric ? ",gen_label_acc" : "")
      << '\n';
  for (const auto& h : history) {
    out << h.epoch << ',' << format_double(h.loss_d) << ','
        << format_double(h.loss_g);
    if (with_metric) out << ',' << format_double(*h.metric);
    out << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("write_history: write failed for " + path);
}

void save_checkpoint(const Generator& g, const ProjectionDiscriminator& d,
                     const std::string& path) {
  const nlohmann::json j = {{"generator", g}, {"discriminator", d}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed for " + path);
}

std::pair<Generator, ProjectionDiscriminator> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return {j.at("generator").get<Generator>(),
          j.at("discriminator").get<ProjectionDiscriminator>()};
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{
      {"phi", cfg.phi == Phi::kLog ? "log" : "linear"},
      {"lambda", cfg.lambda},
      {"lr_disc", cfg.lr_disc},
      {"lr_gen", cfg.lr_gen},
      {"momentum", cfg.momentum},
      {"batch", cfg.batch},
      {"epochs", cfg.epochs},
      {"clip", cfg.clip},
      {"latent_dim", cfg.latent_dim},
      {"seed", cfg.seed},
      {"gen_hidden", cfg.gen_hidden},
      {"disc_hidden", cfg.disc_hidden},
      {"feature_dim", cfg.feature_dim},
      {"optimizer",
       cfg.optimizer == Optimizer::kMomentum ? "momentum" : "sgd"}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  const TrainConfig defaults;
  const std::string phi = j.value("phi", std::string("log"));
  if (phi == "log")
    cfg.phi = Phi::kLog;
  else if (phi == "linear")
    cfg.phi = Phi::kLinear;
  else
    throw std::invalid_argument("TrainConfig: unknown phi '" + phi + "'");
  cfg.lambda = j.value("lambda", defaults.lambda);
  cfg.lr_disc = j.value("lr_disc", defaults.lr_disc);
  cfg.lr_gen = j.value("lr_gen", defaults.lr_gen);
  cfg.momentum = j.value("momentum", defaults.momentum);
  cfg.batch = j.value("batch", defaults.batch);
  cfg.epochs = j.value("epochs", defaults.epochs);
  cfg.clip = j.value("clip", defaults.clip);
  cfg.latent_dim = j.value("latent_dim", defaults.latent_dim);
  cfg.seed = j.value("seed", defaults.seed);
  cfg.gen_hidden = j.value("gen_hidden", defaults.gen_hidden);
  cfg.disc_hidden = j.value("disc_hidden", defaults.disc_hidden);
  cfg.feature_dim = j.value("feature_dim", defaults.feature_dim);
  const std::string opt = j.value("optimizer", std::string("momentum"));
  if (opt == "momentum")
    cfg.optimizer = Optimizer::kMomentum;
  else if (opt == "sgd")
    cfg.optimizer = Optimizer::kSgd;
  else
    throw std::invalid_argument("TrainConfig: unknown optimizer '" + opt + "'");
  cfg.validate();
}

void to_json(nlohmann::json& j, const Generator& g) {
  j = nlohmann::json{{"latent_dim", g.latent_dim},
                     {"m", g.m},
                     {"label_count", g.label_count},
                     {"data_dim", g.data_dim},
                     {"sizes", g.net.sizes()},
                     {"params", g.net.params()}};
}

void from_json(const nlohmann::json& j, Generator& g) {
  g.latent_dim = j.at("latent_dim").get<int>();
  g.m = j.at("m").get<int>();
  g.label_count = j.at("label_count").get<int>();
  g.data_dim = j.at("data_dim").get<int>();
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  if (g.latent_dim < 1 || g.m < 1 || g.label_count < g.m || g.data_dim < 1)
    throw std::invalid_argument("Generator: bad dimensions in checkpoint");
  g.net = Mlp(sizes);
  if (g.net.input_dim() != g.latent_dim + g.label_count ||
      g.net.output_dim() != g.data_dim)
    throw std::invalid_argument(
        "Generator: checkpoint sizes do not chain to the declared shape");
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != g.net.params().size())
    throw std::invalid_argument("Generator: checkpoint parameter count wrong");
  for (double p : params)
    if (!std::isfinite(p))
      throw std::invalid_argument("Generator: non-finite checkpoint parameter");
  g.net.params() = params;
}

void to_json(nlohmann::json& j, const ProjectionDiscriminator& d) {
  j = nlohmann::json{{"data_dim", d.data_dim},
                     {"label_count", d.label_count},
                     {"feature_dim", d.feature_dim},
                     {"psi_sizes", d.psi.sizes()},
                     {"psi_prime_sizes", d.psi_prime.sizes()},
                     {"psi_params", d.psi.params()},
                     {"psi_prime_params", d.psi_prime.params()},
                     {"V", d.V},
                     {"v", d.v}};
}

void from_json(const nlohmann::json& j, ProjectionDiscriminator& d) {
  d.data_dim = j.at("data_dim").get<int>();
  d.label_count = j.at("label_count").get<int>();
  d.feature_dim = j.at("feature_dim").get<int>();
  if (d.data_dim < 1 || d.label_count < 1 || d.feature_dim < 1)
    throw std::invalid_argument(
        "ProjectionDiscriminator: bad dimensions in checkpoint");
  d.psi = Mlp(j.at("psi_sizes").get<std::vector<int>>());
  d.psi_prime = Mlp(j.at("psi_prime_sizes").get<std::vector<int>>());
  if (d.psi.input_dim() != d.data_dim || d.psi.output_dim() != d.feature_dim ||
      d.psi_prime.input_dim() != d.data_dim ||
      d.psi_prime.output_dim() != d.feature_dim)
    throw std::invalid_argument(
        "ProjectionDiscriminator: checkpoint sizes do not chain");
  const auto psi_params = j.at("psi_params").get<std::vector<double>>();
  const auto psip_params = j.at("psi_prime_params").get<std::vector<double>>();
  if (psi_params.size() != d.psi.params().size() ||
      psip_params.size() != d.psi_prime.params().size())
    throw std::invalid_argument(
        "ProjectionDiscriminator: checkpoint parameter count wrong");
  d.psi.params() = psi_params;
  d.psi_prime.params() = psip_params;
  d.V = j.at("V").get<std::vector<double>>();
  d.v = j.at("v").get<std::vector<double>>();
  if (d.V.size() != static_cast<std::size_t>(d.label_count) * d.feature_dim ||
      d.v.size() != static_cast<std::size_t>(d.feature_dim))
    throw std::invalid_argument(
        "ProjectionDiscriminator: checkpoint projection sizes wrong");
  for (double p : d.V)
    if (!std::isfinite(p))
      throw std::invalid_argument(
          "ProjectionDiscriminator: non-finite checkpoint parameter");
  for (double p : d.v)
    if (!std::isfinite(p))
      throw std::invalid_argument(
          "ProjectionDiscriminator: non-finite checkpoint parameter");
  d.V_grad.assign(d.V.size(), 0.0);
  d.v_grad.assign(d.v.size(), 0.0);
}

}  // namespace rcgan
