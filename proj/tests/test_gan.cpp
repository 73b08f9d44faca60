#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rcgan/channel.hpp"
#include "rcgan/data.hpp"
#include "rcgan/gan.hpp"
#include "rcgan/mlp.hpp"
#include "rcgan/rng.hpp"

using namespace rcgan;

namespace {

constexpr double kLn2 = 0.6931471805599453;

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/rcgan_gan_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Independent evaluation of the per-sample loss terms, used as the oracle for
// the hand-derived gradients.
double softplus_ref(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// A corrupted three-class ring dataset for step-level tests.
Dataset small_corrupted(double alpha, int n, std::uint64_t seed) {
  const auto spec = ring_mixture(3, 2, 3.0, 0.4);
  Rng rng(seed);
  auto ds = generate_mixture(spec, n, rng);
  return apply_channel(
      ds, build_confusion(make_missing_channel({alpha, alpha, alpha})), rng);
}

std::vector<int> all_indices(const Dataset& ds) {
  std::vector<int> out(static_cast<std::size_t>(ds.size()));
  for (int i = 0; i < ds.size(); ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

}  // namespace

TEST_CASE("mlp forward matches a hand-computed single-path network") {
  Mlp net({1, 1, 1});
  // y = 3 tanh(2x + 0.5) - 1; layout is weights then bias per layer.
  net.params() = {2.0, 0.5, 3.0, -1.0};
  const auto y = net.forward(std::vector<double>{0.3});
  REQUIRE(y.size() == 1);
  // 3 tanh(1.1) - 1 with tanh(1.1) = 0.80049902176062970...
  CHECK(y[0] == doctest::Approx(1.4014970652818891).epsilon(1e-14));
}

TEST_CASE("mlp rejects bad shapes and mismatched inputs") {
  CHECK_THROWS_AS(Mlp({4}), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({3, 0, 2}), std::invalid_argument);
  Mlp net({2, 3, 1});
  CHECK_THROWS_AS((void)net.forward(std::vector<double>{1.0}),
                  std::invalid_argument);
  Mlp::Trace trace;
  (void)net.forward(std::vector<double>{1.0, -0.5}, trace);
  CHECK_THROWS_AS((void)net.backward(trace, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("mlp gradients agree with central differences") {
  Mlp net({2, 4, 3, 2});
  Rng rng(11);
  net.init(rng);
  const std::vector<double> input = {0.7, -1.3};
  const std::vector<double> dout = {1.0, -0.5};

  net.zero_grads();
  Mlp::Trace trace;
  (void)net.forward(input, trace);
  const auto dinput = net.backward(trace, dout);

  const auto loss = [&]() {
    const auto y = net.forward(input);
    return dout[0] * y[0] + dout[1] * y[1];
  };
  CHECK(grad_check(net.params(), net.grads(), loss, 1e-6) < 1e-7);

  // Same check for the input gradient: treat the input as the parameters.
  std::vector<double> probe = input;
  const auto input_loss = [&]() {
    const auto y = net.forward(probe);
    return dout[0] * y[0] + dout[1] * y[1];
  };
  CHECK(grad_check(probe, dinput, input_loss, 1e-6) < 1e-7);
}

TEST_CASE("grad_check flags a sign flip and validates its inputs") {
  std::vector<double> params = {3.0};
  const auto loss = [&]() { return params[0] * params[0]; };
  const std::vector<double> good = {6.0};
  CHECK(grad_check(params, good, loss, 1e-6) < 1e-8);
  const std::vector<double> flipped = {-6.0};
  CHECK(grad_check(params, flipped, loss, 1e-6) == doctest::Approx(2.0));
  CHECK_THROWS_AS((void)grad_check(params, good, loss, 0.0),
                  std::invalid_argument);
  const std::vector<double> short_grad;
  CHECK_THROWS_AS((void)grad_check(params, short_grad, loss, 1e-6),
                  std::invalid_argument);
}

TEST_CASE("projection score matches the bilinear-plus-linear formula") {
  // Single-layer feature nets are linear, so the score is fully explicit.
  ProjectionDiscriminator d(2, 2, 2, {});
  d.psi.params() = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};        // psi(x) = x
  d.psi_prime.params() = {2.0, 0.0, 0.0, 2.0, 0.0, 0.0};  // psi'(x) = 2x
  d.V = {1.0, -1.0, 0.5, 0.25};
  d.v = {0.1, 0.2};
  const std::vector<double> x = {0.3, -0.7};
  CHECK(d.score(x, 0) == doctest::Approx(0.78).epsilon(1e-12));
  CHECK(d.score(x, 1) == doctest::Approx(-0.245).epsilon(1e-12));
  CHECK_THROWS_AS((void)d.score(x, 2), std::out_of_range);
  CHECK_THROWS_AS((void)d.score(x, -1), std::out_of_range);
}

TEST_CASE("a freshly constructed discriminator scores everything zero") {
  ProjectionDiscriminator d(3, 4, 5, {6});
  const std::vector<double> x = {0.2, -1.0, 4.0};
  for (int label = 0; label < 4; ++label) CHECK(d.score(x, label) == 0.0);
}

TEST_CASE("disc_forward accepts exactly one-hot label vectors") {
  ProjectionDiscriminator d(2, 3, 2, {4});
  Rng rng(3);
  d.init(rng);
  const std::vector<double> x = {0.5, -0.5};
  CHECK(disc_forward(d, x, std::vector<double>{0.0, 1.0, 0.0}) ==
        d.score(x, 1));
  CHECK(disc_forward(d, x, std::vector<double>{0.0, 0.0, 1.0}) ==
        d.score(x, 2));
  CHECK_THROWS_AS(
      (void)disc_forward(d, x, std::vector<double>{1.0, 1.0, 0.0}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)disc_forward(d, x, std::vector<double>{0.0, 0.5, 0.0}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)disc_forward(d, x, std::vector<double>{0.0, 0.0, 0.0}),
      std::invalid_argument);
  CHECK_THROWS_AS((void)disc_forward(d, x, std::vector<double>{1.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("clipping projects V into the box and leaves v alone") {
  ProjectionDiscriminator d(1, 2, 2, {});
  d.V = {1.7, -2.3, 0.4, 1.0};
  d.v = {5.0, -5.0};
  d.clip_weights(1.0);
  CHECK(d.V == std::vector<double>{1.0, -1.0, 0.4, 1.0});
  CHECK(d.v == std::vector<double>{5.0, -5.0});
  CHECK(d.max_abs_v() == 1.0);
  CHECK_THROWS_AS(d.clip_weights(0.0), std::invalid_argument);
}

TEST_CASE("generator conditions on class labels through a one-hot block") {
  Generator g(2, 2, 1, 2, {4});
  Rng rng(9);
  g.init(rng);
  const std::vector<double> z = {0.3, -0.8};
  const auto a = g.generate(z, 0);
  const auto b = g.generate(z, 1);
  REQUIRE(a.size() == 2);
  CHECK(a != b);  // the label input must reach the output
  CHECK_THROWS_AS((void)g.generate(z, 2), std::out_of_range);
  CHECK_THROWS_AS((void)g.generate(std::vector<double>{1.0}, 0),
                  std::invalid_argument);

  // The network input is latent + one-hot over all label slots, so the net
  // width accounts for the uncertain slot even though it is never set.
  CHECK(g.net.input_dim() == 2 + 3);
}

TEST_CASE("few-label loss gradients agree with central differences") {
  // One fixed rng seed makes the sampled objective a deterministic function
  // of the parameters, so every hand-derived gradient can be checked against
  // central differences through the full score -> loss chain.
  const std::vector<std::vector<double>> xs = {
      {0.4, -0.2}, {-1.1, 0.5}, {0.0, 0.9}};
  const std::vector<std::pair<std::vector<double>, int>> labeled = {
      {{0.3, 0.3}, 0}, {{-0.6, 0.1}, 1}};
  const std::vector<double> priors = {0.4, 0.6};

  for (const Phi phi : {Phi::kLog, Phi::kLinear}) {
    CAPTURE(static_cast<int>(phi));
    TrainConfig cfg;
    cfg.phi = phi;
    cfg.lambda = 0.7;
    Generator g(2, 2, 1, 2, {5});
    ProjectionDiscriminator d(2, 3, 3, {4});
    Rng init(21);
    g.init(init);
    d.init(init);

    d.zero_grads();
    g.net.zero_grads();
    {
      Rng r(77);
      (void)rcgan_lambda_loss(xs, labeled, priors, g, d, cfg, r, true);
    }
    const auto loss = [&]() {
      Rng r(77);
      return rcgan_lambda_loss(xs, labeled, priors, g, d, cfg, r, false).total;
    };
    CHECK(grad_check(d.psi.params(), d.psi.grads(), loss, 1e-5) < 1e-4);
    CHECK(grad_check(d.psi_prime.params(), d.psi_prime.grads(), loss, 1e-5) <
          1e-4);
    CHECK(grad_check(d.V, d.V_grad, loss, 1e-5) < 1e-4);
    CHECK(grad_check(d.v, d.v_grad, loss, 1e-5) < 1e-4);
    CHECK(grad_check(g.net.params(), g.net.grads(), loss, 1e-5) < 1e-4);
  }
}

TEST_CASE("robust conditional loss gradients agree with central differences") {
  const std::vector<std::pair<std::vector<double>, int>> real_obs = {
      {{0.4, -0.2}, 0}, {{-1.1, 0.5}, 2}, {{0.0, 0.9}, 1}, {{0.7, 0.7}, 2}};
  const std::vector<double> priors = {0.6, 0.4};
  const auto c = build_confusion(make_missing_channel({0.3, 0.5}));

  for (const Phi phi : {Phi::kLog, Phi::kLinear}) {
    CAPTURE(static_cast<int>(phi));
    TrainConfig cfg;
    cfg.phi = phi;
    Generator g(2, 2, 1, 2, {5});
    ProjectionDiscriminator d(2, 3, 3, {4});
    Rng init(22);
    g.init(init);
    d.init(init);

    d.zero_grads();
    g.net.zero_grads();
    {
      Rng r(88);
      (void)rcgan_adversarial_loss(real_obs, 4, c, priors, g, d, cfg, r, true);
    }
    const auto loss = [&]() {
      Rng r(88);
      return rcgan_adversarial_loss(real_obs, 4, c, priors, g, d, cfg, r,
                                    false)
          .total;
    };
    CHECK(grad_check(d.psi.params(), d.psi.grads(), loss, 1e-5) < 1e-4);
    CHECK(grad_check(d.psi_prime.params(), d.psi_prime.grads(), loss, 1e-5) <
          1e-4);
    CHECK(grad_check(d.V, d.V_grad, loss, 1e-5) < 1e-4);
    CHECK(grad_check(d.v, d.v_grad, loss, 1e-5) < 1e-4);
    CHECK(grad_check(g.net.params(), g.net.grads(), loss, 1e-5) < 1e-4);
  }
}

TEST_CASE("robust conditional loss validates its inputs") {
  TrainConfig cfg;
  Generator g(2, 2, 1, 2, {4});
  ProjectionDiscriminator d(2, 3, 2, {4});
  Rng rng(1);
  const std::vector<double> priors = {0.5, 0.5};
  const std::vector<std::pair<std::vector<double>, int>> real_obs = {
      {{0.1, 0.2}, 0}};
  const auto c = build_confusion(make_missing_channel({0.3, 0.3}));

  CHECK_THROWS_AS((void)rcgan_adversarial_loss({}, 1, c, priors, g, d, cfg,
                                               rng, false),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)rcgan_adversarial_loss(real_obs, 0, c, priors, g, d,
                                               cfg, rng, false),
                  std::invalid_argument);
  const auto singular = build_confusion(make_missing_channel({1.0, 0.3}));
  CHECK_THROWS_AS((void)rcgan_adversarial_loss(real_obs, 1, singular, priors,
                                               g, d, cfg, rng, false),
                  std::domain_error);
}

TEST_CASE("few-label loss validates its batches") {
  TrainConfig cfg;
  Generator g(2, 2, 1, 2, {4});
  ProjectionDiscriminator d(2, 3, 2, {4});
  Rng rng(1);
  const std::vector<double> priors = {0.5, 0.5};
  const std::vector<std::vector<double>> xs = {{0.1, 0.2}};

  CHECK_THROWS_AS((void)rcgan_lambda_loss({}, {}, priors, g, d, cfg, rng, false),
                  std::invalid_argument);
  // Positive lambda needs labeled samples...
  CHECK_THROWS_AS((void)rcgan_lambda_loss(xs, {}, priors, g, d, cfg, rng, false),
                  std::invalid_argument);
  // ...but lambda = 0 ignores labels entirely.
  cfg.lambda = 0.0;
  CHECK_NOTHROW(
      (void)rcgan_lambda_loss(xs, {}, priors, g, d, cfg, rng, false));
  // A labeled pair must carry a class label, not the missing slot.
  cfg.lambda = 1.0;
  CHECK_THROWS_AS((void)rcgan_lambda_loss(xs, {{{0.1, 0.2}, 2}}, priors, g, d,
                                          cfg, rng, false),
                  std::invalid_argument);
}

TEST_CASE("exact losses of an all-zero discriminator have closed forms") {
  // With every score zero the loss no longer depends on the instance at all:
  // linear phi gives 0 + (1 - 0) = 1, log phi gives -2 log 2.
  EnumerableInstance inst;
  inst.m = 2;
  inst.xs = {{0.0, 0.0}, {1.0, -1.0}};
  inst.joint = {0.1, 0.2, 0.3, 0.4};
  inst.zs = {{0.5, 0.5}};
  inst.z_probs = {1.0};
  inst.priors = {0.25, 0.75};

  Generator g(2, 2, 1, 2, {3});
  Rng rng(4);
  g.init(rng);
  ProjectionDiscriminator d(2, 3, 2, {3});  // V, v, and both nets start zero

  const auto c = build_confusion(make_missing_channel({0.3, 0.6}));
  CHECK(exact_adversarial_loss(inst, c, g, d, Phi::kLinear) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact_adversarial_loss(inst, c, g, d, Phi::kLog) ==
        doctest::Approx(-2.0 * kLn2).epsilon(1e-12));
  CHECK(exact_few_label_loss(inst, 0.5, g, d, Phi::kLinear) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(exact_few_label_loss(inst, 0.5, g, d, Phi::kLog) ==
        doctest::Approx(-1.5 * 2.0 * kLn2).epsilon(1e-12));
}

TEST_CASE("enumerable instances are validated") {
  EnumerableInstance inst;
  inst.m = 2;
  inst.xs = {{0.0}};
  inst.joint = {0.5, 0.4};  // sums to 0.9
  inst.zs = {{0.0}};
  inst.z_probs = {1.0};
  inst.priors = {0.5, 0.5};
  CHECK_THROWS_AS(inst.validate(), std::invalid_argument);
  inst.joint = {0.5, 0.5};
  CHECK_NOTHROW(inst.validate());
  inst.priors = {0.5, 0.6};
  CHECK_THROWS_AS(inst.validate(), std::invalid_argument);
}

TEST_CASE(
    "few-label objective is a scaled corrupted objective under the matched "
    "missing channel") {
  // With every class losing mass alpha = 1 / (1 + lambda) to the missing
  // slot, the corrupted objective equals the few-label objective divided by
  // 1 + lambda — for any generator, discriminator, and phi.
  EnumerableInstance inst;
  inst.m = 3;
  inst.xs = {{0.2, -0.4}, {1.0, 0.3}, {-0.7, -0.1}, {0.05, 0.95}};
  inst.joint = {0.05, 0.10, 0.02, 0.08, 0.03, 0.12,
                0.20, 0.01, 0.09, 0.06, 0.04, 0.20};
  inst.zs = {{0.3, 0.3}, {-0.5, 0.8}, {1.2, -1.2}};
  inst.z_probs = {0.5, 0.3, 0.2};
  inst.priors = {0.2, 0.5, 0.3};

  Rng rng(31);
  for (const double lambda : {0.1, 0.5, 2.0}) {
    const double alpha = 1.0 / (1.0 + lambda);
    const auto c =
        build_confusion(make_missing_channel({alpha, alpha, alpha}));
    for (const Phi phi : {Phi::kLog, Phi::kLinear}) {
      Generator g(2, 3, 1, 2, {6});
      ProjectionDiscriminator d(2, 4, 3, {5});
      g.init(rng);
      d.init(rng);
      const double adv = exact_adversarial_loss(inst, c, g, d, phi);
      const double few = exact_few_label_loss(inst, lambda, g, d, phi);
      CAPTURE(lambda);
      CAPTURE(static_cast<int>(phi));
      CHECK(std::abs(few - (1.0 + lambda) * adv) < 1e-12);
    }
  }
}

TEST_CASE("exact losses reject mismatched label universes") {
  EnumerableInstance inst;
  inst.m = 2;
  inst.xs = {{0.0, 0.0}};
  inst.joint = {0.5, 0.5};
  inst.zs = {{0.0, 0.0}};
  inst.z_probs = {1.0};
  inst.priors = {0.5, 0.5};
  Generator g(2, 2, 1, 2, {3});
  ProjectionDiscriminator wide(2, 4, 2, {3});
  const auto c = build_confusion(make_missing_channel({0.2, 0.2}));
  CHECK_THROWS_AS((void)exact_adversarial_loss(inst, c, g, wide, Phi::kLog),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)exact_few_label_loss(inst, 0.5, g, wide, Phi::kLog),
                  std::invalid_argument);
}

TEST_CASE("log-phi terms stay finite at extreme scores") {
  // The stable softplus forms must not overflow where naive log(sigmoid)
  // would; spot-check against the reference softplus at moderate scores.
  ProjectionDiscriminator d(1, 2, 1, {});
  d.psi.params() = {1.0, 0.0};  // psi(x) = x
  d.V = {1.0, 1.0};
  TrainConfig cfg;
  cfg.phi = Phi::kLog;
  cfg.lambda = 0.0;
  Generator g(1, 1, 1, 1, {2});
  Rng rng(2);
  g.init(rng);
  const std::vector<double> priors = {1.0};
  for (const double s : {-750.0, -30.0, -2.0, 0.0, 2.0, 30.0, 750.0}) {
    Rng r(5);
    const auto out = rcgan_lambda_loss({{s}}, {}, priors, g, d, cfg, r, false);
    CHECK(std::isfinite(out.total));
    if (std::abs(s) < 100.0) {
      // total = log sigmoid(s) + log(1 - sigmoid(score of generated)).
      const double expected = -softplus_ref(-s);
      const double gen_part = out.gen_terms;
      CHECK(out.total - gen_part == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("one corrupted step keeps V inside the box") {
  const auto ds = small_corrupted(0.4, 48, 100);
  const auto c = build_confusion(*ds.channel);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.batch = 16;
  cfg.lr_disc = 5.0;  // huge on purpose: the update must still be clipped
  cfg.gen_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.feature_dim = 4;
  Generator g(cfg.latent_dim, 3, 1, 2, cfg.gen_hidden);
  ProjectionDiscriminator d(2, 4, cfg.feature_dim, cfg.disc_hidden);
  Rng rng(7);
  g.init(rng);
  d.init(rng);
  d.clip_weights(cfg.clip);
  OptState opt;
  const auto idx = all_indices(ds);
  for (int step = 0; step < 5; ++step) {
    (void)rcgan_disc_gen_step(ds, std::span<const int>(idx).first(16), c,
                              priors, g, d, cfg, opt, rng);
    CHECK(d.max_abs_v() <= 1.0 + 1e-12);
  }
}

TEST_CASE("zero learning rates leave both networks untouched") {
  const auto ds = small_corrupted(0.3, 32, 101);
  const auto c = build_confusion(*ds.channel);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.lr_disc = 0.0;
  cfg.lr_gen = 0.0;
  cfg.gen_hidden = {6};
  cfg.disc_hidden = {6};
  cfg.feature_dim = 3;
  Generator g(cfg.latent_dim, 3, 1, 2, cfg.gen_hidden);
  ProjectionDiscriminator d(2, 4, cfg.feature_dim, cfg.disc_hidden);
  Rng rng(8);
  g.init(rng);
  d.init(rng);
  d.clip_weights(cfg.clip);
  const auto g_before = snapshot(g);
  const auto d_before = snapshot(d);
  OptState opt;
  const auto idx = all_indices(ds);
  const auto losses =
      rcgan_disc_gen_step(ds, idx, c, priors, g, d, cfg, opt, rng);
  CHECK(std::isfinite(losses.loss_d));
  CHECK(std::isfinite(losses.loss_g));
  CHECK(snapshot(g) == g_before);
  CHECK(snapshot(d) == d_before);
}

TEST_CASE("an identity channel never routes gradient to the uncertain slot") {
  // With no corruption mass, no sample — real or generated — ever carries
  // the uncertain label, so its V row must stay exactly as initialized.
  const auto ds = small_corrupted(0.0, 40, 102);
  const auto c = build_confusion(*ds.channel);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.batch = 20;
  cfg.feature_dim = 4;
  cfg.gen_hidden = {6};
  cfg.disc_hidden = {6};
  Generator g(cfg.latent_dim, 3, 1, 2, cfg.gen_hidden);
  ProjectionDiscriminator d(2, 4, cfg.feature_dim, cfg.disc_hidden);
  Rng rng(9);
  g.init(rng);
  d.init(rng);
  d.clip_weights(cfg.clip);
  const std::vector<double> row_before(d.V.begin() + 3 * cfg.feature_dim,
                                       d.V.end());
  OptState opt;
  const auto idx = all_indices(ds);
  for (int step = 0; step < 3; ++step)
    (void)rcgan_disc_gen_step(ds, std::span<const int>(idx).first(20), c,
                              priors, g, d, cfg, opt, rng);
  const std::vector<double> row_after(d.V.begin() + 3 * cfg.feature_dim,
                                      d.V.end());
  CHECK(row_after == row_before);
  for (int j = 0; j < cfg.feature_dim; ++j)
    CHECK(d.V_grad[static_cast<std::size_t>(3 * cfg.feature_dim + j)] == 0.0);
}

TEST_CASE("step-level preconditions are enforced") {
  const auto ds = small_corrupted(0.3, 16, 103);
  const auto c = build_confusion(*ds.channel);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  Generator g(cfg.latent_dim, 3, 1, 2, cfg.gen_hidden);
  ProjectionDiscriminator d(2, 4, cfg.feature_dim, cfg.disc_hidden);
  Rng rng(10);
  g.init(rng);
  d.init(rng);
  OptState opt;
  const auto idx = all_indices(ds);

  CHECK_THROWS_AS((void)rcgan_disc_gen_step(ds, {}, c, priors, g, d, cfg, opt,
                                            rng),
                  std::invalid_argument);
  const std::vector<double> bad_priors = {0.5, 0.5};
  CHECK_THROWS_AS((void)rcgan_disc_gen_step(ds, idx, c, bad_priors, g, d, cfg,
                                            opt, rng),
                  std::invalid_argument);
  const auto singular = build_confusion(make_missing_channel({1.0, 0.3, 0.3}));
  CHECK_THROWS_AS((void)rcgan_disc_gen_step(ds, idx, singular, priors, g, d,
                                            cfg, opt, rng),
                  std::domain_error);
  ProjectionDiscriminator narrow(2, 3, cfg.feature_dim, cfg.disc_hidden);
  CHECK_THROWS_AS((void)rcgan_disc_gen_step(ds, idx, c, priors, g, narrow, cfg,
                                            opt, rng),
                  std::invalid_argument);
}

TEST_CASE("training is deterministic in the seed") {
  const auto ds = small_corrupted(0.4, 60, 104);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 20;
  cfg.gen_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.feature_dim = 4;
  cfg.seed = 42;

  const auto a = train_rcgan(cfg, ds, priors);
  const auto b = train_rcgan(cfg, ds, priors);
  REQUIRE(a.history.size() == 3);
  REQUIRE(b.history.size() == 3);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss_d == b.history[i].loss_d);
    CHECK(a.history[i].loss_g == b.history[i].loss_g);
  }
  CHECK(snapshot(a.gen) == snapshot(b.gen));
  CHECK(snapshot(a.disc) == snapshot(b.disc));

  cfg.seed = 43;
  const auto other = train_rcgan(cfg, ds, priors);
  CHECK(snapshot(other.gen) != snapshot(a.gen));
}

TEST_CASE("training runs the eval hook once per epoch") {
  const auto ds = small_corrupted(0.4, 40, 105);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 20;
  cfg.gen_hidden = {6};
  cfg.disc_hidden = {6};
  cfg.feature_dim = 3;
  int calls = 0;
  const auto result = train_rcgan(cfg, ds, priors,
                                  [&](const Generator&, Rng&) {
                                    ++calls;
                                    return 0.25 * calls;
                                  });
  CHECK(calls == 2);
  REQUIRE(result.history.size() == 2);
  CHECK(result.history[0].metric == 0.25);
  CHECK(result.history[1].metric == 0.5);
  CHECK_FALSE(result.diverged);
}

TEST_CASE("zero epochs produce an empty history") {
  const auto ds = small_corrupted(0.4, 16, 106);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto result = train_rcgan(cfg, ds, priors);
  CHECK(result.history.empty());
  CHECK_FALSE(result.diverged);
}

TEST_CASE("divergence rolls back to the last healthy checkpoint") {
  const auto ds = small_corrupted(0.4, 32, 107);
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.phi = Phi::kLinear;
  cfg.lr_disc = 1e155;  // one update overflows the next score evaluation
  cfg.lr_gen = 1e155;
  cfg.epochs = 4;
  cfg.batch = 8;
  cfg.gen_hidden = {4};
  cfg.disc_hidden = {4};
  cfg.feature_dim = 2;
  const auto result = train_rcgan(cfg, ds, priors);
  CHECK(result.diverged);
  CHECK(result.history.empty());
  for (const double p : snapshot(result.gen)) CHECK(std::isfinite(p));
  for (const double p : snapshot(result.disc)) CHECK(std::isfinite(p));
}

TEST_CASE("train_rcgan validates its dataset") {
  const std::vector<double> priors(3, 1.0 / 3.0);
  TrainConfig cfg;
  cfg.epochs = 1;

  const auto spec = ring_mixture(3, 2, 3.0, 0.4);
  Rng rng(108);
  const auto clean = generate_mixture(spec, 16, rng);
  CHECK_THROWS_AS((void)train_rcgan(cfg, clean, priors),
                  std::invalid_argument);

  auto corrupted = apply_channel(
      clean, build_confusion(make_missing_channel({1.0, 0.3, 0.3})), rng);
  CHECK_THROWS_AS((void)train_rcgan(cfg, corrupted, priors),
                  std::domain_error);

  Dataset empty;
  empty.dim = 2;
  empty.m = 3;
  CHECK_THROWS_AS((void)train_rcgan(cfg, empty, priors),
                  std::invalid_argument);
}

TEST_CASE("few-label training learns from a split dataset") {
  const auto spec = ring_mixture(2, 2, 3.0, 0.4);
  Rng rng(109);
  auto ds = generate_mixture(spec, 60, rng);
  ds = few_label_split(ds, 20, rng);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 20;
  cfg.lambda = 0.5;
  cfg.gen_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.feature_dim = 4;
  const auto result = train_few_label(cfg, ds, spec.priors);
  REQUIRE(result.history.size() == 2);
  for (const auto& h : result.history) {
    CHECK(std::isfinite(h.loss_d));
    CHECK(std::isfinite(h.loss_g));
  }
  CHECK_FALSE(result.diverged);
  // The few-label universe has exactly one extra slot.
  CHECK(result.gen.label_count == 3);
  CHECK(result.disc.label_count == 3);

  // A corrupted dataset is the wrong input for this trainer.
  Rng rng2(110);
  auto wrong = generate_mixture(spec, 16, rng2);
  wrong = apply_channel(wrong, build_confusion(make_missing_channel({0.3, 0.3})),
                        rng2);
  CHECK_THROWS_AS((void)train_few_label(cfg, wrong, spec.priors),
                  std::invalid_argument);
}

TEST_CASE("checkpoints round-trip exactly") {
  Generator g(2, 3, 1, 2, {5, 4});
  ProjectionDiscriminator d(2, 4, 3, {6});
  Rng rng(111);
  g.init(rng);
  d.init(rng);
  TempFile tmp("ckpt.json");
  save_checkpoint(g, d, tmp.path);
  const auto [g2, d2] = load_checkpoint(tmp.path);
  CHECK(snapshot(g2) == snapshot(g));
  CHECK(snapshot(d2) == snapshot(d));
  CHECK(g2.latent_dim == g.latent_dim);
  CHECK(g2.m == g.m);
  CHECK(g2.label_count == g.label_count);
  const std::vector<double> z = {0.4, -0.4};
  const std::vector<double> x = {1.0, -2.0};
  CHECK(g2.generate(z, 1) == g.generate(z, 1));
  CHECK(d2.score(x, 3) == d.score(x, 3));
}

TEST_CASE("checkpoints with mismatched shapes are rejected") {
  Generator g(2, 2, 1, 2, {3});
  ProjectionDiscriminator d(2, 3, 2, {3});
  Rng rng(112);
  g.init(rng);
  d.init(rng);
  TempFile tmp("ckpt_bad.json");
  save_checkpoint(g, d, tmp.path);
  nlohmann::json j;
  {
    std::ifstream in(tmp.path);
    in >> j;
  }
  j["generator"]["params"].erase(0);
  {
    std::ofstream out(tmp.path);
    out << j.dump();
  }
  CHECK_THROWS_AS((void)load_checkpoint(tmp.path), std::invalid_argument);
  CHECK_THROWS_AS((void)load_checkpoint("/nonexistent/ckpt.json"),
                  std::runtime_error);
}

TEST_CASE("history files carry the metric column only when complete") {
  TempFile tmp("history.csv");
  std::vector<EpochStats> history;
  history.push_back({0, 0.5, -0.25, 0.9});
  history.push_back({1, 0.125, 3.0, 0.75});
  write_history(history, tmp.path);
  CHECK(slurp(tmp.path) ==
        "epoch,loss_d,loss_g,gen_label_acc\n"
        "0,0.5,-0.25,0.9\n"
        "1,0.125,3,0.75\n");

  history[1].metric.reset();
  write_history(history, tmp.path);
  CHECK(slurp(tmp.path) ==
        "epoch,loss_d,loss_g\n"
        "0,0.5,-0.25\n"
        "1,0.125,3\n");
}

TEST_CASE("train configs round-trip through json and validate") {
  TrainConfig cfg;
  cfg.phi = Phi::kLinear;
  cfg.lambda = 0.25;
  cfg.optimizer = Optimizer::kSgd;
  cfg.gen_hidden = {32, 16};
  cfg.seed = 9001;
  const nlohmann::json j = cfg;
  const auto back = j.get<TrainConfig>();
  CHECK(back.phi == Phi::kLinear);
  CHECK(back.lambda == 0.25);
  CHECK(back.optimizer == Optimizer::kSgd);
  CHECK(back.gen_hidden == std::vector<int>{32, 16});
  CHECK(back.seed == 9001);

  // Missing keys fall back to defaults; bad values are rejected.
  const auto sparse = nlohmann::json{{"epochs", 7}}.get<TrainConfig>();
  CHECK(sparse.epochs == 7);
  CHECK(sparse.batch == TrainConfig{}.batch);
  const nlohmann::json bad_phi = {{"phi", "cubic"}};
  const nlohmann::json bad_batch = {{"batch", 0}};
  const nlohmann::json bad_momentum = {{"momentum", 1.0}};
  CHECK_THROWS_AS((void)bad_phi.get<TrainConfig>(), std::invalid_argument);
  CHECK_THROWS_AS((void)bad_batch.get<TrainConfig>(), std::invalid_argument);
  CHECK_THROWS_AS((void)bad_momentum.get<TrainConfig>(),
                  std::invalid_argument);

  TrainConfig bad;
  bad.clip = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.lambda = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
