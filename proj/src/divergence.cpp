#include "rcgan/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcgan {

namespace {

void check_same_shape(const DiscreteJoint& p, const DiscreteJoint& q,
                      const char* what) {
  if (p.support_size != q.support_size || p.label_count != q.label_count)
    throw std::invalid_argument(std::string(what) +
                                ": joint distributions differ in shape");
}

void check_clean(const DiscreteJoint& p, int m, const char* what) {
  if (p.mass_on_columns_from(m) != 0.0)
    throw std::invalid_argument(
        std::string(what) +
        ": joint already places mass on uncertain labels");
}

void check_features(const DiscreteJoint& p, const FeatureMap& f,
                    const char* what) {
  f.validate();
  if (f.support_size != p.support_size)
    throw std::invalid_argument(std::string(what) +
                                ": feature table does not cover the support");
}

double relative_gap(double lo, double hi) {
  return (hi - lo) / std::max({1.0, std::abs(lo), std::abs(hi)});
}

BoundReport make_report(std::string label, double lhs, double mid, double rhs,
                        double kappa) {
  BoundReport r;
  r.label = std::move(label);
  r.lhs = lhs;
  r.mid = mid;
  r.rhs = rhs;
  r.kappa_used = kappa;
  const double tol =
      kChainTol * std::max({1.0, std::abs(lhs), std::abs(mid), std::abs(rhs)});
  r.passed = (lhs <= mid + tol) && (mid <= rhs + tol);
  r.slack = std::min(relative_gap(lhs, mid), relative_gap(mid, rhs));
  return r;
}

BoundReport tv_report(const std::string& label, const DiscreteJoint& p,
                      const DiscreteJoint& q, const DiscreteJoint& pt,
                      const DiscreteJoint& qt, double kappa) {
  const double lhs = tv(pt, qt);
  return make_report(label, lhs, tv(p, q), kappa * lhs, kappa);
}

BoundReport js_report(const std::string& label, const DiscreteJoint& p,
                      const DiscreteJoint& q, const DiscreteJoint& pt,
                      const DiscreteJoint& qt, double kappa) {
  const double lhs = js(pt, qt);
  return make_report(label, lhs, js(p, q), kappa * std::sqrt(8.0 * lhs),
                     kappa);
}

BoundReport nn_report(const std::string& label, const DiscreteJoint& p,
                      const DiscreteJoint& q, const DiscreteJoint& pt,
                      const DiscreteJoint& qt, const FeatureMap& f,
                      double kappa_prime) {
  const double lhs = projection_nn_distance(pt, qt, f);
  return make_report(label, lhs, projection_nn_distance(p, q, f),
                     kappa_prime * lhs, kappa_prime);
}

// Flat simplex draw over n cells via normalized exponentials.
std::vector<double> simplex(Rng& rng, int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (double& x : w) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    x = -std::log(u);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

std::vector<double> DiscreteJoint::x_marginal() const {
  std::vector<double> out(static_cast<std::size_t>(support_size), 0.0);
  for (int x = 0; x < support_size; ++x)
    for (int u = 0; u < label_count; ++u)
      out[static_cast<std::size_t>(x)] += at(x, u);
  return out;
}

double DiscreteJoint::mass_on_columns_from(int first_column) const {
  double total = 0.0;
  for (int x = 0; x < support_size; ++x)
    for (int u = first_column; u < label_count; ++u) total += at(x, u);
  return total;
}

void DiscreteJoint::validate() const {
  if (support_size < 1 || label_count < 1)
    throw std::invalid_argument("DiscreteJoint: empty support or label set");
  if (probs.size() !=
      static_cast<std::size_t>(support_size) * label_count)
    throw std::invalid_argument(
        "DiscreteJoint: table size does not match dimensions");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0))
      throw std::invalid_argument("DiscreteJoint: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("DiscreteJoint: mass does not sum to one");
}

void FeatureMap::validate() const {
  if (support_size < 1 || dim < 1)
    throw std::invalid_argument("FeatureMap: empty support or feature dim");
  const std::size_t n = static_cast<std::size_t>(support_size) * dim;
  if (psi.size() != n || psi_prime.size() != n)
    throw std::invalid_argument(
        "FeatureMap: table size does not match dimensions");
  for (double v : psi)
    if (!std::isfinite(v))
      throw std::invalid_argument("FeatureMap: non-finite feature value");
  for (double v : psi_prime)
    if (!std::isfinite(v))
      throw std::invalid_argument("FeatureMap: non-finite feature value");
}

DiscreteJoint push_through(const DiscreteJoint& p, const ConfusionMatrix& c) {
  p.validate();
  if (p.label_count != c.label_count())
    throw std::invalid_argument(
        "push_through: label count does not match the channel");
  DiscreteJoint out;
  out.support_size = p.support_size;
  out.label_count = p.label_count;
  out.probs.assign(p.probs.size(), 0.0);
  for (int x = 0; x < p.support_size; ++x)
    for (int y = 0; y < p.label_count; ++y) {
      const double mass = p.at(x, y);
      if (mass == 0.0) continue;
      for (int u = 0; u < p.label_count; ++u)
        out.at(x, u) += mass * c.at(y, u);
    }
  return out;
}

double tv(const DiscreteJoint& p, const DiscreteJoint& q) {
  check_same_shape(p, q, "tv");
  double total = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i)
    total += std::abs(p.probs[i] - q.probs[i]);
  return 0.5 * total;
}

double js(const DiscreteJoint& p, const DiscreteJoint& q) {
  check_same_shape(p, q, "js");
  double total = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    const double a = p.probs[i];
    const double b = q.probs[i];
    const double mid = 0.5 * (a + b);
    if (a > 0.0) total += 0.5 * a * std::log(a / mid);
    if (b > 0.0) total += 0.5 * b * std::log(b / mid);
  }
  return std::max(0.0, total);
}

double projection_nn_distance(const DiscreteJoint& p, const DiscreteJoint& q,
                              const FeatureMap& f) {
  check_same_shape(p, q, "projection_nn_distance");
  check_features(p, f, "projection_nn_distance");
  double total = 0.0;
  for (int u = 0; u < p.label_count; ++u)
    for (int j = 0; j < f.dim; ++j) {
      double coef = 0.0;
      for (int x = 0; x < p.support_size; ++x)
        coef += (p.at(x, u) - q.at(x, u)) * f.psi_at(x, j);
      total += std::abs(coef);
    }
  const auto pm = p.x_marginal();
  const auto qm = q.x_marginal();
  for (int j = 0; j < f.dim; ++j) {
    double coef = 0.0;
    for (int x = 0; x < p.support_size; ++x)
      coef += (pm[static_cast<std::size_t>(x)] -
               qm[static_cast<std::size_t>(x)]) *
              f.psi_prime_at(x, j);
    total += std::abs(coef);
  }
  return total;
}

double projection_nn_distance_bruteforce(const DiscreteJoint& p,
                                         const DiscreteJoint& q,
                                         const FeatureMap& f) {
  check_same_shape(p, q, "projection_nn_distance_bruteforce");
  check_features(p, f, "projection_nn_distance_bruteforce");
  const int n_v = p.label_count * f.dim;
  const int n_params = n_v + f.dim;
  if (n_params > 20)
    throw std::invalid_argument(
        "projection_nn_distance_bruteforce: instance too large");
  double best = 0.0;
  for (std::uint64_t mask = 0; mask < (1ULL << n_params); ++mask) {
    const auto sign = [&](int bit) {
      return (mask >> bit) & 1ULL ? 1.0 : -1.0;
    };
    // Evaluate E_P[D] - E_Q[D] for the vertex discriminator directly from
    // its definition; no reuse of the closed-form coefficients.
    double value = 0.0;
    for (int x = 0; x < p.support_size; ++x)
      for (int u = 0; u < p.label_count; ++u) {
        const double diff = p.at(x, u) - q.at(x, u);
        if (diff == 0.0) continue;
        double d_val = 0.0;
        for (int j = 0; j < f.dim; ++j)
          d_val += sign(u * f.dim + j) * f.psi_at(x, j);
        for (int j = 0; j < f.dim; ++j)
          d_val += sign(n_v + j) * f.psi_prime_at(x, j);
        value += diff * d_val;
      }
    best = std::max(best, value);
  }
  return best;
}

DiscreteJoint empirical_joint(const std::vector<std::pair<int, int>>& samples,
                              int support_size, int label_count) {
  if (samples.empty())
    throw std::invalid_argument("empirical_joint: no samples");
  if (support_size < 1 || label_count < 1)
    throw std::invalid_argument("empirical_joint: empty support or label set");
  DiscreteJoint out;
  out.support_size = support_size;
  out.label_count = label_count;
  out.probs.assign(static_cast<std::size_t>(support_size) * label_count, 0.0);
  const double w = 1.0 / static_cast<double>(samples.size());
  for (const auto& [x, u] : samples) {
    if (x < 0 || x >= support_size || u < 0 || u >= label_count)
      throw std::out_of_range("empirical_joint: sample outside the support");
    out.at(x, u) += w;
  }
  return out;
}

std::pair<BoundReport, BoundReport> verify_divergence_chain(
    const DiscreteJoint& p, const DiscreteJoint& q, const ConfusionMatrix& c,
    const VerifyOptions& opts) {
  p.validate();
  q.validate();
  check_same_shape(p, q, "verify_divergence_chain");
  if (p.label_count != c.label_count())
    throw std::invalid_argument(
        "verify_divergence_chain: joint does not match the channel");
  check_clean(p, c.m, "verify_divergence_chain");
  check_clean(q, c.m, "verify_divergence_chain");
  const double kappa = kappa_factors(c).kappa * opts.kappa_scale;
  const auto pt = push_through(p, c);
  const auto qt = push_through(q, c);
  return {tv_report("tv", p, q, pt, qt, kappa),
          js_report("js", p, q, pt, qt, kappa)};
}

BoundReport verify_projection_chain(const DiscreteJoint& p,
                                    const DiscreteJoint& q,
                                    const ConfusionMatrix& c,
                                    const FeatureMap& f,
                                    const VerifyOptions& opts) {
  p.validate();
  q.validate();
  check_same_shape(p, q, "verify_projection_chain");
  if (p.label_count != c.label_count())
    throw std::invalid_argument(
        "verify_projection_chain: joint does not match the channel");
  check_clean(p, c.m, "verify_projection_chain");
  check_clean(q, c.m, "verify_projection_chain");
  check_features(p, f, "verify_projection_chain");
  const double kp = kappa_factors(c).kappa_prime * opts.kappa_scale;
  const auto pt = push_through(p, c);
  const auto qt = push_through(q, c);
  return nn_report("nn", p, q, pt, qt, f, kp);
}

std::vector<BoundReport> verify_missing_bounds(
    const std::vector<double>& alpha_per_class, const DiscreteJoint& p,
    const DiscreteJoint& q, const FeatureMap& f, const VerifyOptions& opts) {
  const auto spec = make_missing_channel(alpha_per_class);
  const auto c = build_confusion(spec);
  p.validate();
  q.validate();
  check_same_shape(p, q, "verify_missing_bounds");
  if (p.label_count != c.label_count())
    throw std::invalid_argument(
        "verify_missing_bounds: joint does not match the channel");
  check_clean(p, c.m, "verify_missing_bounds");
  check_clean(q, c.m, "verify_missing_bounds");
  check_features(p, f, "verify_missing_bounds");
  const auto k = missing_corollary_kappas(alpha_per_class);
  const double kappa = k.kappa * opts.kappa_scale;
  const double kp = k.kappa_prime * opts.kappa_scale;
  const auto pt = push_through(p, c);
  const auto qt = push_through(q, c);
  return {tv_report("missing/tv", p, q, pt, qt, kappa),
          js_report("missing/js", p, q, pt, qt, kappa),
          nn_report("missing/nn", p, q, pt, qt, f, kp)};
}

std::vector<BoundReport> verify_complementary_bounds(
    int m, double alpha, const DiscreteJoint& p, const DiscreteJoint& q,
    const FeatureMap& f, const VerifyOptions& opts) {
  const auto c = build_confusion(make_complementary_channel(m, alpha));
  p.validate();
  q.validate();
  check_same_shape(p, q, "verify_complementary_bounds");
  if (p.label_count != c.label_count())
    throw std::invalid_argument(
        "verify_complementary_bounds: joint does not match the channel");
  check_clean(p, c.m, "verify_complementary_bounds");
  check_clean(q, c.m, "verify_complementary_bounds");
  check_features(p, f, "verify_complementary_bounds");
  const auto k = complementary_corollary_kappas(m, alpha);
  const double kappa = k.kappa * opts.kappa_scale;
  const double kp = k.kappa_prime * opts.kappa_scale;
  const auto pt = push_through(p, c);
  const auto qt = push_through(q, c);
  auto tv_r = tv_report("complementary/tv", p, q, pt, qt, kappa);
  tv_r.equality_checked = true;
  tv_r.equality = std::abs(tv_r.mid - tv_r.rhs) <= kEqualityTol;
  return {tv_r, js_report("complementary/js", p, q, pt, qt, kappa),
          nn_report("complementary/nn", p, q, pt, qt, f, kp)};
}

long long sample_complexity_bound(int p, double L, double eps, double c) {
  if (p < 1) throw std::invalid_argument(
      "sample_complexity_bound: parameter count must be positive");
  if (!(L > 0.0) || !(eps > 0.0) || !(c > 0.0))
    throw std::invalid_argument(
        "sample_complexity_bound: L, eps, and c must be positive");
  const double ratio = static_cast<double>(p) * L / eps;
  if (!(ratio > 1.0))
    throw std::domain_error(
        "sample_complexity_bound: p*L/eps must exceed one for a positive "
        "logarithm");
  const double value =
      c * static_cast<double>(p) / (eps * eps) * std::log(ratio);
  if (!(value < 9.0e18))
    throw std::overflow_error("sample_complexity_bound: bound too large");
  return static_cast<long long>(std::ceil(value));
}

bool box_closure_check(const std::vector<std::vector<double>>& v,
                       const std::vector<std::vector<double>>& t) {
  if (v.empty() || v.front().empty())
    throw std::invalid_argument("box_closure_check: empty weight matrix");
  const std::size_t rows = v.size();
  const std::size_t cols = v.front().size();
  for (const auto& row : v) {
    if (row.size() != cols)
      throw std::invalid_argument("box_closure_check: ragged weight matrix");
    for (double x : row)
      if (!(std::abs(x) <= 1.0))
        throw std::domain_error(
            "box_closure_check: weight matrix leaves the unit box");
  }
  if (t.size() != rows)
    throw std::invalid_argument(
        "box_closure_check: transformation does not match weight rows");
  for (const auto& row : t) {
    if (row.size() != rows)
      throw std::invalid_argument("box_closure_check: transformation not square");
    double sum = 0.0;
    for (double x : row) sum += std::abs(x);
    if (sum > 1.0 + kRowSumTol)
      throw std::domain_error(
          "box_closure_check: transformation max-row-sum norm exceeds one");
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double w = 0.0;
      for (std::size_t kk = 0; kk < rows; ++kk) w += t[i][kk] * v[kk][j];
      if (std::abs(w) > 1.0 + 1e-12) return false;
    }
  return true;
}

DiscreteJoint random_clean_joint(Rng& rng, int support_size, int m,
                                 int label_count) {
  if (support_size < 1 || m < 1 || label_count < m)
    throw std::invalid_argument("random_clean_joint: bad dimensions");
  DiscreteJoint out;
  out.support_size = support_size;
  out.label_count = label_count;
  out.probs.assign(static_cast<std::size_t>(support_size) * label_count, 0.0);
  const auto w = simplex(rng, support_size * m);
  int k = 0;
  for (int x = 0; x < support_size; ++x)
    for (int y = 0; y < m; ++y) out.at(x, y) = w[static_cast<std::size_t>(k++)];
  return out;
}

FeatureMap random_feature_map(Rng& rng, int support_size, int dim) {
  FeatureMap f;
  f.support_size = support_size;
  f.dim = dim;
  const std::size_t n = static_cast<std::size_t>(support_size) * dim;
  f.psi.resize(n);
  f.psi_prime.resize(n);
  for (double& v : f.psi) v = rng.uniform(-1.0, 1.0);
  for (double& v : f.psi_prime) v = rng.uniform(-1.0, 1.0);
  f.validate();
  return f;
}

void InstanceLimits::validate() const {
  if (max_support < 2 || max_classes < 2 || max_uncertain < 1)
    throw std::invalid_argument(
        "InstanceLimits: need max_support >= 2, max_classes >= 2, "
        "max_uncertain >= 1");
}

RandomInstance random_instance(Rng& rng, const InstanceLimits& limits,
                               bool shared_x_marginal) {
  limits.validate();
  RandomInstance inst;
  const int s = 2 + rng.uniform_int(limits.max_support - 1);
  const int m = 2 + rng.uniform_int(limits.max_classes - 1);
  const int m_tilde = 1 + rng.uniform_int(limits.max_uncertain);
  const int label_count = m + m_tilde;
  inst.p = random_clean_joint(rng, s, m, label_count);
  inst.q = random_clean_joint(rng, s, m, label_count);
  if (shared_x_marginal) {
    const auto px = inst.p.x_marginal();
    for (int x = 0; x < s; ++x) {
      const auto cond = simplex(rng, m);
      for (int y = 0; y < m; ++y)
        inst.q.at(x, y) = px[static_cast<std::size_t>(x)] *
                          cond[static_cast<std::size_t>(y)];
    }
  }
  inst.channel = random_channel_spec(rng, m, m_tilde);
  inst.features = random_feature_map(rng, s, 1 + rng.uniform_int(2));
  return inst;
}

RandomInstance random_instance(Rng& rng, bool shared_x_marginal) {
  return random_instance(rng, InstanceLimits{}, shared_x_marginal);
}

void to_json(nlohmann::json& j, const BoundReport& r) {
  j = nlohmann::json{{"label", r.label},
                     {"chain", {r.lhs, r.mid, r.rhs}},
                     {"kappa", r.kappa_used},
                     {"passed", r.passed},
                     {"slack", r.slack}};
  if (r.equality_checked) j["equality"] = r.equality;
}

}  // namespace rcgan
