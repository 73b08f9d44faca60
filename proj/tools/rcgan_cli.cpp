// Command-line front door for the robust conditional GAN toolkit: bound
// verification sweeps, synthetic data generation, label corruption, training,
// evaluation, and labeled-fraction sweeps. Every run writes one manifest
// recording the command, the fully resolved configuration, the seed, and the
// artifacts produced, so a run can be reproduced from its manifest alone.
//
// Exit codes: 0 success, 1 usage/config/I/O error, 2 verification failure or
// training divergence. With a fixed seed and configuration every data
// artifact (CSV/JSON) is byte-identical across runs; manifests are exempt
// because they record wall-clock duration.
//
// The environment variable RCGAN_SEED overrides the default seed, but only
// when no --seed flag and no config-file seed is given.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rcgan/channel.hpp"
#include "rcgan/data.hpp"
#include "rcgan/divergence.hpp"
#include "rcgan/eval.hpp"
#include "rcgan/gan.hpp"
#include "rcgan/rng.hpp"

using namespace rcgan;
using nlohmann::json;

namespace {

constexpr const char* kSeedEnvVar = "RCGAN_SEED";

std::string fmt9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Manifest and timing.

class RunTimer {
 public:
  RunTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_manifest(const std::string& command, const json& config,
                    std::uint64_t seed,
                    const std::vector<std::string>& artifacts,
                    const RunTimer& timer, const std::string& path) {
  const json j = {{"command", command},
                  {"config", config},
                  {"seed", seed},
                  {"artifacts", artifacts},
                  {"duration_seconds", timer.seconds()}};
  write_json_file(j, path);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// Config-file schema checks. Violations are reported with a JSON-pointer path
// to the offending value so a bad config names its own problem.

enum class FieldKind { kNumber, kInteger, kUnsigned, kString, kIntArray };

struct FieldSpec {
  const char* key;
  FieldKind kind;
};

const char* kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::kNumber: return "number";
    case FieldKind::kInteger: return "integer";
    case FieldKind::kUnsigned: return "nonnegative integer";
    case FieldKind::kString: return "string";
    case FieldKind::kIntArray: return "array of integers";
  }
  return "?";
}

void check_schema(const json& j, std::span<const FieldSpec> fields,
                  const std::string& file) {
  if (!j.is_object())
    throw std::invalid_argument(file + ": config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const FieldSpec* spec = nullptr;
    for (const auto& f : fields)
      if (key == f.key) spec = &f;
    if (spec == nullptr)
      throw std::invalid_argument(file + ": /" + key + ": unknown key");
    bool ok = true;
    switch (spec->kind) {
      case FieldKind::kNumber:
        ok = value.is_number();
        break;
      case FieldKind::kInteger:
        ok = value.is_number_integer();
        break;
      case FieldKind::kUnsigned:
        ok = value.is_number_unsigned() ||
             (value.is_number_integer() && value.get<long long>() >= 0);
        break;
      case FieldKind::kString:
        ok = value.is_string();
        break;
      case FieldKind::kIntArray:
        ok = value.is_array();
        if (ok)
          for (std::size_t i = 0; i < value.size(); ++i)
            if (!value[i].is_number_integer())
              throw std::invalid_argument(file + ": /" + key + "/" +
                                          std::to_string(i) +
                                          ": expected integer");
        break;
    }
    if (!ok)
      throw std::invalid_argument(file + ": /" + key + ": expected " +
                                  kind_name(spec->kind));
  }
}

// ---------------------------------------------------------------------------
// Seed resolution: --seed flag > config-file seed > RCGAN_SEED > fallback.

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv(kSeedEnvVar);
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || end == raw || *end != '\0')
    throw std::invalid_argument(std::string(kSeedEnvVar) +
                                ": not a valid seed: " + raw);
  return static_cast<std::uint64_t>(v);
}

std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value,
                           const std::optional<std::uint64_t>& config_seed,
                           std::uint64_t fallback) {
  if (flag_given) return flag_value;
  if (config_seed) return *config_seed;
  if (const auto env = env_seed()) return *env;
  return fallback;
}

// ---------------------------------------------------------------------------
// Shared training-config plumbing: defaults, then config file, then flags,
// merged into one JSON object that both the trainer and the manifest see.

struct TrainFlags {
  std::string config_path;
  std::string phi = "log";
  std::string optimizer = "momentum";
  TrainConfig cfg;  // flag targets; defaults match TrainConfig's own
  std::uint64_t seed = 0;

  CLI::Option* o_config = nullptr;
  CLI::Option* o_phi = nullptr;
  CLI::Option* o_optimizer = nullptr;
  CLI::Option* o_lambda = nullptr;
  CLI::Option* o_lr_disc = nullptr;
  CLI::Option* o_lr_gen = nullptr;
  CLI::Option* o_momentum = nullptr;
  CLI::Option* o_batch = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_clip = nullptr;
  CLI::Option* o_latent = nullptr;
  CLI::Option* o_feature = nullptr;
  CLI::Option* o_gen_hidden = nullptr;
  CLI::Option* o_disc_hidden = nullptr;
  CLI::Option* o_seed = nullptr;

  void attach(CLI::App* cmd) {
    o_config = cmd->add_option("--config", config_path,
                               "Training config JSON (flags override it)");
    o_phi = cmd->add_option("--phi", phi, "Loss shape: log or linear");
    o_optimizer =
        cmd->add_option("--optimizer", optimizer, "sgd or momentum");
    o_lambda =
        cmd->add_option("--lambda", cfg.lambda, "Labeled-term weight");
    o_lr_disc = cmd->add_option("--lr-disc", cfg.lr_disc,
                                "Discriminator learning rate");
    o_lr_gen =
        cmd->add_option("--lr-gen", cfg.lr_gen, "Generator learning rate");
    o_momentum = cmd->add_option("--momentum", cfg.momentum,
                                 "Momentum coefficient in [0,1)");
    o_batch = cmd->add_option("--batch", cfg.batch, "Batch size");
    o_epochs = cmd->add_option("--epochs", cfg.epochs, "Training epochs");
    o_clip = cmd->add_option("--clip", cfg.clip,
                             "Box bound for the bilinear weights");
    o_latent =
        cmd->add_option("--latent-dim", cfg.latent_dim, "Latent dimension");
    o_feature = cmd->add_option("--feature-dim", cfg.feature_dim,
                                "Discriminator feature width");
    o_gen_hidden = cmd->add_option("--gen-hidden", cfg.gen_hidden,
                                   "Generator hidden sizes (comma separated)")
                       ->delimiter(',');
    o_disc_hidden =
        cmd->add_option("--disc-hidden", cfg.disc_hidden,
                        "Discriminator hidden sizes (comma separated)")
            ->delimiter(',');
    o_seed = cmd->add_option("--seed", seed,
                             "Run seed (overrides config and " +
                                 std::string(kSeedEnvVar) + ")");
  }

  // Resolved config as JSON: defaults < config file < flags, with the seed
  // precedence documented at the top of this file.
  json resolve() const {
    json base;
    to_json(base, TrainConfig{});
    std::optional<std::uint64_t> config_seed;
    if (o_config->count() > 0) {
      const json file = load_json_file(config_path);
      static const FieldSpec kFields[] = {
          {"phi", FieldKind::kString},
          {"optimizer", FieldKind::kString},
          {"lambda", FieldKind::kNumber},
          {"lr_disc", FieldKind::kNumber},
          {"lr_gen", FieldKind::kNumber},
          {"momentum", FieldKind::kNumber},
          {"batch", FieldKind::kInteger},
          {"epochs", FieldKind::kInteger},
          {"clip", FieldKind::kNumber},
          {"latent_dim", FieldKind::kInteger},
          {"feature_dim", FieldKind::kInteger},
          {"seed", FieldKind::kUnsigned},
          {"gen_hidden", FieldKind::kIntArray},
          {"disc_hidden", FieldKind::kIntArray},
      };
      check_schema(file, kFields, config_path);
      for (const auto& [key, value] : file.items()) base[key] = value;
      if (file.contains("seed"))
        config_seed = file.at("seed").get<std::uint64_t>();
    }
    if (o_phi->count() > 0) base["phi"] = phi;
    if (o_optimizer->count() > 0) base["optimizer"] = optimizer;
    if (o_lambda->count() > 0) base["lambda"] = cfg.lambda;
    if (o_lr_disc->count() > 0) base["lr_disc"] = cfg.lr_disc;
    if (o_lr_gen->count() > 0) base["lr_gen"] = cfg.lr_gen;
    if (o_momentum->count() > 0) base["momentum"] = cfg.momentum;
    if (o_batch->count() > 0) base["batch"] = cfg.batch;
    if (o_epochs->count() > 0) base["epochs"] = cfg.epochs;
    if (o_clip->count() > 0) base["clip"] = cfg.clip;
    if (o_latent->count() > 0) base["latent_dim"] = cfg.latent_dim;
    if (o_feature->count() > 0) base["feature_dim"] = cfg.feature_dim;
    if (o_gen_hidden->count() > 0) base["gen_hidden"] = cfg.gen_hidden;
    if (o_disc_hidden->count() > 0) base["disc_hidden"] = cfg.disc_hidden;
    base["seed"] =
        resolve_seed(o_seed->count() > 0, seed, config_seed,
                     base.at("seed").get<std::uint64_t>());
    return base;
  }
};

// Flat Dirichlet draw, used to resample conditionals for the shared-marginal
// instances of the sharp complementary-family check.
std::vector<double> random_simplex(Rng& rng, int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (double& v : w) {
    v = -std::log(1.0 - rng.uniform());
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

// ---------------------------------------------------------------------------
// verify-bounds

struct VerifyArgs {
  int trials = 1000;
  std::uint64_t seed = 0;
  bool seed_given = false;
  InstanceLimits limits;
  double kappa_scale = 1.0;
  bool identity = false;
  std::string out = "bound_report.json";
};

int run_verify(const VerifyArgs& a) {
  RunTimer timer;
  const std::uint64_t seed =
      resolve_seed(a.seed_given, a.seed, std::nullopt, 0);
  a.limits.validate();
  const VerifyOptions opts{a.kappa_scale};
  const Rng root(seed);

  std::vector<BoundReport> reports;
  for (int t = 0; t < a.trials; ++t) {
    Rng rng = root.derive(static_cast<std::uint64_t>(t));
    const std::string tag = "trial " + std::to_string(t) + ": ";

    // General channel: divergence chains plus the projection chain.
    auto inst = random_instance(rng, a.limits);
    if (a.identity)
      for (auto& row : inst.channel.alphas)
        std::fill(row.begin(), row.end(), 0.0);
    const auto c = build_confusion(inst.channel);
    auto [tv_rep, js_rep] = verify_divergence_chain(inst.p, inst.q, c, opts);
    auto nn_rep =
        verify_projection_chain(inst.p, inst.q, c, inst.features, opts);
    tv_rep.label = tag + tv_rep.label;
    js_rep.label = tag + js_rep.label;
    nn_rep.label = tag + nn_rep.label;
    reports.push_back(std::move(tv_rep));
    reports.push_back(std::move(js_rep));
    reports.push_back(std::move(nn_rep));

    // Label-missing family with its sharper factors.
    {
      const int s = 2 + rng.uniform_int(a.limits.max_support - 1);
      const int m = 2 + rng.uniform_int(a.limits.max_classes - 1);
      std::vector<double> alphas(static_cast<std::size_t>(m));
      for (double& v : alphas)
        v = a.identity ? 0.0 : rng.uniform(0.0, 0.9);
      const auto p = random_clean_joint(rng, s, m, m + 1);
      const auto q = random_clean_joint(rng, s, m, m + 1);
      const auto f = random_feature_map(rng, s, 1 + rng.uniform_int(2));
      for (auto& r : verify_missing_bounds(alphas, p, q, f, opts)) {
        r.label = tag + r.label;
        reports.push_back(std::move(r));
      }
    }

    // Complementary family on shared-marginal joints, where its sharp
    // total-variation factor is an exact equality.
    {
      const int s = 2 + rng.uniform_int(a.limits.max_support - 1);
      const int m = 2 + rng.uniform_int(a.limits.max_classes - 1);
      const double alpha = a.identity ? 0.0 : rng.uniform(0.0, 0.9);
      const auto p = random_clean_joint(rng, s, m, 2 * m);
      auto q = random_clean_joint(rng, s, m, 2 * m);
      const auto px = p.x_marginal();
      for (int x = 0; x < s; ++x) {
        const auto cond = random_simplex(rng, m);
        for (int y = 0; y < m; ++y)
          q.at(x, y) =
              px[static_cast<std::size_t>(x)] * cond[static_cast<std::size_t>(y)];
      }
      const auto f = random_feature_map(rng, s, 1 + rng.uniform_int(2));
      for (auto& r : verify_complementary_bounds(m, alpha, p, q, f, opts)) {
        r.label = tag + r.label;
        reports.push_back(std::move(r));
      }
    }
  }

  double worst_slack = std::numeric_limits<double>::infinity();
  std::vector<std::string> failures;
  for (const auto& r : reports) {
    worst_slack = std::min(worst_slack, r.slack);
    if (!r.passed) failures.push_back(r.label);
  }

  json report = {{"trials", a.trials},
                 {"seed", seed},
                 {"kappa_scale", a.kappa_scale},
                 {"identity", a.identity},
                 {"all_passed", failures.empty()},
                 {"worst_slack", worst_slack},
                 {"failures", failures},
                 {"reports", reports}};
  write_json_file(report, a.out);

  const json config = {{"trials", a.trials},
                       {"seed", seed},
                       {"max_support", a.limits.max_support},
                       {"max_classes", a.limits.max_classes},
                       {"max_uncertain", a.limits.max_uncertain},
                       {"kappa_scale", a.kappa_scale},
                       {"identity", a.identity},
                       {"out", a.out}};
  write_manifest("verify-bounds", config, seed, {a.out}, timer,
                 a.out + ".manifest.json");

  std::cout << "checked " << reports.size() << " bound chains over "
            << a.trials << " trials; worst slack " << fmt9(worst_slack)
            << '\n';
  if (!failures.empty()) {
    std::cerr << "bound violated: " << failures.front() << " ("
              << failures.size() << " failing chains)\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  std::string mixture_out;
  std::string config_path;
  int n = 8000;
  int classes = 8;
  int dim = 2;
  double radius = 5.0;
  double sigma = 0.5;
  std::uint64_t seed = 0;
  CLI::Option* o_config = nullptr;
  CLI::Option* o_n = nullptr;
  CLI::Option* o_classes = nullptr;
  CLI::Option* o_dim = nullptr;
  CLI::Option* o_radius = nullptr;
  CLI::Option* o_sigma = nullptr;
  CLI::Option* o_seed = nullptr;
};

int run_gen_data(GenDataArgs& a) {
  RunTimer timer;
  json config = {{"n", a.n},         {"classes", a.classes},
                 {"dim", a.dim},     {"radius", a.radius},
                 {"sigma", a.sigma}, {"seed", a.seed}};
  std::optional<std::uint64_t> config_seed;
  if (a.o_config->count() > 0) {
    const json file = load_json_file(a.config_path);
    static const FieldSpec kFields[] = {
        {"n", FieldKind::kInteger},      {"classes", FieldKind::kInteger},
        {"dim", FieldKind::kInteger},    {"radius", FieldKind::kNumber},
        {"sigma", FieldKind::kNumber},   {"seed", FieldKind::kUnsigned},
    };
    check_schema(file, kFields, a.config_path);
    for (const auto& [key, value] : file.items()) config[key] = value;
    if (file.contains("seed"))
      config_seed = file.at("seed").get<std::uint64_t>();
  }
  if (a.o_n->count() > 0) config["n"] = a.n;
  if (a.o_classes->count() > 0) config["classes"] = a.classes;
  if (a.o_dim->count() > 0) config["dim"] = a.dim;
  if (a.o_radius->count() > 0) config["radius"] = a.radius;
  if (a.o_sigma->count() > 0) config["sigma"] = a.sigma;
  const std::uint64_t seed =
      resolve_seed(a.o_seed->count() > 0, a.seed, config_seed, 0);
  config["seed"] = seed;

  const auto spec =
      ring_mixture(config.at("classes").get<int>(), config.at("dim").get<int>(),
                   config.at("radius").get<double>(),
                   config.at("sigma").get<double>());
  Rng rng(seed);
  const auto ds = generate_mixture(spec, config.at("n").get<int>(), rng);
  write_dataset(ds, a.out);

  const std::string mixture_path =
      a.mixture_out.empty() ? a.out + ".mixture.json" : a.mixture_out;
  json mixture_json;
  to_json(mixture_json, spec);
  write_json_file(mixture_json, mixture_path);

  write_manifest("gen-data", config, seed, {a.out, mixture_path}, timer,
                 a.out + ".manifest.json");
  std::cout << "wrote " << ds.size() << " records to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// corrupt

struct CorruptArgs {
  std::string in;
  std::string out;
  std::string channel_out;
  int classes = 8;
  std::string type = "missing";
  double alpha = 0.5;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_corrupt(const CorruptArgs& a) {
  RunTimer timer;
  const std::uint64_t seed =
      resolve_seed(a.seed_given, a.seed, std::nullopt, 0);
  ChannelSpec channel;
  if (a.type == "missing") {
    channel = make_missing_channel(
        std::vector<double>(static_cast<std::size_t>(a.classes), a.alpha));
  } else if (a.type == "complementary") {
    channel = make_complementary_channel(a.classes, a.alpha);
  } else {
    throw std::invalid_argument("corrupt: unknown channel type: " + a.type);
  }

  const auto clean = read_dataset(a.in, a.classes, 0);
  Rng rng(seed);
  const auto corrupted = apply_channel(clean, build_confusion(channel), rng);
  write_dataset(corrupted, a.out);

  const std::string channel_path =
      a.channel_out.empty() ? a.out + ".channel.json" : a.channel_out;
  json channel_json;
  to_json(channel_json, channel);
  write_json_file(channel_json, channel_path);

  const json config = {{"in", a.in},         {"classes", a.classes},
                       {"type", a.type},     {"alpha", a.alpha},
                       {"seed", seed},       {"out", a.out}};
  write_manifest("corrupt", config, seed, {a.out, channel_path}, timer,
                 a.out + ".manifest.json");
  std::cout << "corrupted " << corrupted.size() << " labels into " << a.out
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string channel;
  std::string mixture;
  std::string checkpoint_out = "checkpoint.json";
  std::string history_out;
  int classes = 8;
  int n_labels = 0;
  TrainFlags flags;
  CLI::Option* o_channel = nullptr;
  CLI::Option* o_mixture = nullptr;
};

std::vector<double> priors_for(const TrainArgs& a, int m) {
  if (a.o_mixture->count() > 0) {
    MixtureSpec spec;
    from_json(load_json_file(a.mixture), spec);
    if (spec.m != m)
      throw std::invalid_argument(
          "train: mixture class count does not match the dataset");
    return spec.priors;
  }
  return std::vector<double>(static_cast<std::size_t>(m), 1.0 / m);
}

int run_train(const TrainArgs& a) {
  RunTimer timer;
  json config = a.flags.resolve();
  const auto cfg = config.get<TrainConfig>();
  const std::uint64_t seed = cfg.seed;

  TrainResult result;
  std::string mode;
  if (a.o_channel->count() > 0) {
    mode = "robust";
    ChannelSpec channel;
    from_json(load_json_file(a.channel), channel);
    auto ds = read_dataset(a.data, channel.m, channel.m_tilde);
    ds.channel = channel;
    ds.validate();
    result = train_rcgan(cfg, ds, priors_for(a, channel.m));
  } else {
    mode = "few_label";
    auto ds = read_dataset(a.data, a.classes, 0);
    if (a.n_labels > 0) {
      Rng split_rng = Rng(seed).derive(0xFE);
      ds = few_label_split(ds, a.n_labels, split_rng);
    }
    result = train_few_label(cfg, ds, priors_for(a, a.classes));
  }

  save_checkpoint(result.gen, result.disc, a.checkpoint_out);
  const std::string history_path = a.history_out.empty()
                                       ? a.checkpoint_out + ".history.csv"
                                       : a.history_out;
  write_history(result.history, history_path);

  config["mode"] = mode;
  config["data"] = a.data;
  if (a.o_channel->count() > 0) config["channel"] = a.channel;
  if (mode == "few_label") {
    config["classes"] = a.classes;
    config["n_labels"] = a.n_labels;
  }
  write_manifest("train", config, seed, {a.checkpoint_out, history_path},
                 timer, a.checkpoint_out + ".manifest.json");

  if (result.diverged) {
    std::cerr << "training diverged; checkpoint holds the last finite "
                 "parameters\n";
    return 2;
  }
  std::cout << "trained " << result.history.size() << " epochs; checkpoint "
            << a.checkpoint_out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string mixture;
  std::string data;
  std::string out = "metrics.json";
  int n = 2000;
  int recovery_n = 300;
  RecoveryOpts opts;
  std::uint64_t seed = 0;
  bool seed_given = false;
  CLI::Option* o_data = nullptr;
};

int run_eval(const EvalArgs& a) {
  RunTimer timer;
  const std::uint64_t seed =
      resolve_seed(a.seed_given, a.seed, std::nullopt, 0);
  auto [gen, disc] = load_checkpoint(a.checkpoint);
  (void)disc;

  MixtureSpec spec;
  from_json(load_json_file(a.mixture), spec);
  const BayesOracle oracle(spec);
  const Rng root(seed);

  // The oracle must be nearly exact on its own mixture, or accuracy numbers
  // would measure the oracle's confusion rather than the generator's.
  Rng self_rng = root.derive(0x0E);
  const double self_acc = oracle_self_accuracy(oracle, 2000, self_rng);
  if (self_acc < 0.999)
    throw std::invalid_argument(
        "eval: mixture modes overlap too much for oracle-based evaluation "
        "(self accuracy " +
        fmt9(self_acc) + ")");

  Rng gen_rng = root.derive(0xE1);
  const double gen_acc =
      generated_label_accuracy(gen, oracle, a.n, spec.priors, gen_rng);

  Dataset eval_ds;
  if (a.o_data->count() > 0) {
    eval_ds = read_dataset(a.data, spec.m, 0);
  } else {
    Rng data_rng = root.derive(0xE2);
    eval_ds = generate_mixture(spec, a.recovery_n, data_rng);
  }
  RecoveryOpts opts = a.opts;
  opts.seed = seed;
  const double recovery = label_recovery_accuracy(gen, eval_ds, opts);

  std::vector<MetricResult> results(2);
  results[0].metric = "generated_label_accuracy";
  results[0].value = gen_acc;
  results[0].n = a.n;
  results[0].seed = seed;
  results[0].opts = json::object();
  results[1].metric = "label_recovery_accuracy";
  results[1].value = recovery;
  results[1].n = eval_ds.size();
  results[1].seed = seed;
  to_json(results[1].opts, opts);
  write_metrics(results, a.out);

  json opts_json;
  to_json(opts_json, opts);
  const json config = {{"checkpoint", a.checkpoint},
                       {"mixture", a.mixture},
                       {"data", a.o_data->count() > 0 ? json(a.data) : json()},
                       {"n", a.n},
                       {"recovery_n", eval_ds.size()},
                       {"recovery", opts_json},
                       {"seed", seed},
                       {"out", a.out}};
  write_manifest("eval", config, seed, {a.out}, timer,
                 a.out + ".manifest.json");

  std::cout << "generated_label_accuracy " << fmt9(gen_acc) << '\n'
            << "label_recovery_accuracy " << fmt9(recovery) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::vector<double> alphas;
  std::string out = "sweep.csv";
  int n = 2000;
  int classes = 8;
  int dim = 2;
  double radius = 5.0;
  double sigma = 0.5;
  int gen_n = 1000;
  int recovery_n = 200;
  RecoveryOpts opts;
  TrainFlags flags;
};

int run_sweep(const SweepArgs& a) {
  RunTimer timer;
  json config = a.flags.resolve();
  const auto base_cfg = config.get<TrainConfig>();
  const std::uint64_t seed = base_cfg.seed;

  for (const double alpha : a.alphas)
    if (!(alpha > 0.0) || alpha > 1.0)
      throw std::invalid_argument(
          "sweep: labeled fraction must lie in (0, 1], got " + fmt9(alpha));

  const auto spec = ring_mixture(a.classes, a.dim, a.radius, a.sigma);
  const BayesOracle oracle(spec);

  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot open " + a.out + " for writing");
  out << "alpha,gen_label_acc,label_recovery_acc,seed\n";

  bool any_diverged = false;
  for (std::size_t i = 0; i < a.alphas.size(); ++i) {
    const double alpha = a.alphas[i];
    const std::uint64_t row_seed = seed + i;
    TrainConfig cfg = base_cfg;
    cfg.seed = row_seed;
    const Rng row_root(row_seed);

    Rng data_rng = row_root.derive(0xD0);
    auto ds = generate_mixture(spec, a.n, data_rng);
    if (alpha < 1.0) {
      const int per_class = static_cast<int>(alpha * a.n) / a.classes;
      const int n_labels = per_class * a.classes;
      if (n_labels < a.classes)
        throw std::invalid_argument(
            "sweep: labeled fraction " + fmt9(alpha) +
            " leaves fewer than one labeled record per class");
      Rng split_rng = row_root.derive(0xFE);
      ds = few_label_split(ds, n_labels, split_rng);
    }

    const auto result = train_few_label(cfg, ds, spec.priors);
    double gen_acc = std::numeric_limits<double>::quiet_NaN();
    double recovery = std::numeric_limits<double>::quiet_NaN();
    if (result.diverged) {
      any_diverged = true;
    } else {
      Rng gen_rng = row_root.derive(0xE1);
      gen_acc = generated_label_accuracy(result.gen, oracle, a.gen_n,
                                         spec.priors, gen_rng);
      Rng eval_rng = row_root.derive(0xE2);
      const auto eval_ds = generate_mixture(spec, a.recovery_n, eval_rng);
      RecoveryOpts opts = a.opts;
      opts.seed = row_seed;
      recovery = label_recovery_accuracy(result.gen, eval_ds, opts);
    }
    out << fmt9(alpha) << ',' << fmt9(gen_acc) << ',' << fmt9(recovery) << ','
        << row_seed << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + a.out);

  json opts_json;
  to_json(opts_json, a.opts);
  config["alphas"] = a.alphas;
  config["n"] = a.n;
  config["classes"] = a.classes;
  config["dim"] = a.dim;
  config["radius"] = a.radius;
  config["sigma"] = a.sigma;
  config["gen_n"] = a.gen_n;
  config["recovery_n"] = a.recovery_n;
  config["recovery"] = opts_json;
  write_manifest("sweep", config, seed, {a.out}, timer,
                 a.out + ".manifest.json");

  std::cout << "swept " << a.alphas.size() << " labeled fractions into "
            << a.out << '\n';
  if (any_diverged) {
    std::cerr << "at least one sweep row diverged (NaN metrics recorded)\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Robust conditional GAN toolkit: bound verification, synthetic data, "
      "label corruption, training, evaluation, and labeled-fraction sweeps.\n"
      "Seeds resolve as: --seed flag, then config-file seed, then the "
      "RCGAN_SEED environment variable, then 0."};
  app.require_subcommand(1);

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand(
      "verify-bounds",
      "Randomized verification of the divergence and projection bound chains");
  verify_cmd->add_option("--trials", verify.trials, "Instances to check")
      ->check(CLI::PositiveNumber);
  auto* verify_seed =
      verify_cmd->add_option("--seed", verify.seed, "Sweep seed");
  verify_cmd
      ->add_option("--max-support", verify.limits.max_support,
                   "Largest point-support size")
      ->check(CLI::Range(2, 64));
  verify_cmd
      ->add_option("--max-classes", verify.limits.max_classes,
                   "Largest class count")
      ->check(CLI::Range(2, 64));
  verify_cmd
      ->add_option("--max-uncertain", verify.limits.max_uncertain,
                   "Largest uncertain-label count")
      ->check(CLI::Range(1, 64));
  verify_cmd->add_option("--kappa-scale", verify.kappa_scale,
                         "Fault-injection hook: scales the conditioning "
                         "factor (1.0 checks the bounds as stated)");
  verify_cmd->add_flag("--identity", verify.identity,
                       "Force identity channels (degenerate factor 1)");
  verify_cmd->add_option("--out", verify.out, "Report JSON path");

  GenDataArgs gen_data;
  auto* gen_cmd = app.add_subcommand(
      "gen-data", "Sample a ring-of-Gaussians dataset to CSV");
  gen_cmd->add_option("--out", gen_data.out, "Dataset CSV path")->required();
  gen_cmd->add_option("--mixture-out", gen_data.mixture_out,
                      "Mixture sidecar path (default <out>.mixture.json)");
  gen_data.o_config =
      gen_cmd->add_option("--config", gen_data.config_path,
                          "Mixture config JSON (flags override it)");
  gen_data.o_n = gen_cmd->add_option("--n", gen_data.n, "Records to sample")
                     ->check(CLI::PositiveNumber);
  gen_data.o_classes =
      gen_cmd->add_option("--classes", gen_data.classes, "Class count")
          ->check(CLI::PositiveNumber);
  gen_data.o_dim =
      gen_cmd->add_option("--dim", gen_data.dim, "Point dimension")
          ->check(CLI::PositiveNumber);
  gen_data.o_radius =
      gen_cmd->add_option("--radius", gen_data.radius, "Ring radius");
  gen_data.o_sigma =
      gen_cmd->add_option("--sigma", gen_data.sigma, "Mode spread");
  gen_data.o_seed = gen_cmd->add_option("--seed", gen_data.seed, "Run seed");

  CorruptArgs corrupt;
  auto* corrupt_cmd = app.add_subcommand(
      "corrupt", "Push dataset labels through an uncertainty channel");
  corrupt_cmd->add_option("--in", corrupt.in, "Clean dataset CSV")->required();
  corrupt_cmd->add_option("--out", corrupt.out, "Corrupted CSV path")
      ->required();
  corrupt_cmd->add_option("--channel-out", corrupt.channel_out,
                          "Channel sidecar path (default <out>.channel.json)");
  corrupt_cmd
      ->add_option("--classes", corrupt.classes, "Class count of the input")
      ->check(CLI::PositiveNumber);
  corrupt_cmd->add_option("--type", corrupt.type,
                          "Channel family: missing or complementary");
  corrupt_cmd
      ->add_option("--alpha", corrupt.alpha, "Corruption probability")
      ->check(CLI::Range(0.0, 1.0));
  auto* corrupt_seed =
      corrupt_cmd->add_option("--seed", corrupt.seed, "Run seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand(
      "train",
      "Train the conditional generator (robust mode with --channel, "
      "few-label mode without)");
  train_cmd->add_option("--data", train.data, "Training dataset CSV")
      ->required();
  train.o_channel = train_cmd->add_option(
      "--channel", train.channel,
      "Channel sidecar JSON; its presence selects robust mode");
  train.o_mixture = train_cmd->add_option(
      "--mixture", train.mixture,
      "Mixture sidecar JSON for class priors (default uniform)");
  train_cmd
      ->add_option("--classes", train.classes,
                   "Class count (few-label mode only)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option(
      "--n-labels", train.n_labels,
      "Withhold all but this many labels before few-label training");
  train_cmd->add_option("--checkpoint-out", train.checkpoint_out,
                        "Checkpoint JSON path");
  train_cmd->add_option("--history-out", train.history_out,
                        "History CSV path (default <checkpoint>.history.csv)");
  train.flags.attach(train_cmd);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Score a checkpoint: generated-label and label-recovery "
              "accuracy");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint JSON")
      ->required();
  eval_cmd->add_option("--mixture", eval.mixture, "Mixture sidecar JSON")
      ->required();
  eval.o_data = eval_cmd->add_option(
      "--data", eval.data,
      "Labeled dataset CSV for recovery (default: fresh samples)");
  eval_cmd->add_option("--out", eval.out, "Metrics JSON path");
  eval_cmd->add_option("--n", eval.n, "Generated samples to score")
      ->check(CLI::PositiveNumber);
  eval_cmd
      ->add_option("--recovery-n", eval.recovery_n,
                   "Fresh records for recovery when no --data is given")
      ->check(CLI::PositiveNumber);
  eval_cmd
      ->add_option("--restarts", eval.opts.restarts,
                   "Latent restarts per candidate label")
      ->check(CLI::PositiveNumber);
  eval_cmd
      ->add_option("--steps", eval.opts.steps,
                   "Latent descent steps per restart")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--step-size", eval.opts.step_size,
                       "Latent descent step size");
  auto* eval_seed = eval_cmd->add_option("--seed", eval.seed, "Run seed");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand(
      "sweep",
      "Few-label runs over labeled fractions; one CSV row per fraction");
  sweep_cmd
      ->add_option("--alphas", sweep.alphas,
                   "Labeled fractions in (0, 1], comma separated")
      ->delimiter(',');
  sweep_cmd->add_option("--out", sweep.out, "Sweep CSV path");
  sweep_cmd->add_option("--n", sweep.n, "Records per run")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--classes", sweep.classes, "Class count")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--dim", sweep.dim, "Point dimension")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--radius", sweep.radius, "Ring radius");
  sweep_cmd->add_option("--sigma", sweep.sigma, "Mode spread");
  sweep_cmd->add_option("--gen-n", sweep.gen_n,
                        "Generated samples to score per row")
      ->check(CLI::PositiveNumber);
  sweep_cmd
      ->add_option("--recovery-n", sweep.recovery_n,
                   "Fresh records for recovery per row")
      ->check(CLI::PositiveNumber);
  sweep_cmd
      ->add_option("--restarts", sweep.opts.restarts,
                   "Latent restarts per candidate label")
      ->check(CLI::PositiveNumber);
  sweep_cmd
      ->add_option("--steps", sweep.opts.steps,
                   "Latent descent steps per restart")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--step-size", sweep.opts.step_size,
                        "Latent descent step size");
  sweep.flags.attach(sweep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  verify.seed_given = verify_seed->count() > 0;
  corrupt.seed_given = corrupt_seed->count() > 0;
  eval.seed_given = eval_seed->count() > 0;

  try {
    if (*verify_cmd) return run_verify(verify);
    if (*gen_cmd) return run_gen_data(gen_data);
    if (*corrupt_cmd) return run_corrupt(corrupt);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*sweep_cmd) return run_sweep(sweep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
