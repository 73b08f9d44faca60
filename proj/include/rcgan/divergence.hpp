#pragma once
// Exact divergences on finite discrete joints over (point, label) pairs and
// numeric verification of the chains relating divergences measured before and
// after label corruption:
//   tv(corrupted) <= tv(clean) <= kappa * tv(corrupted)
//   js(corrupted) <= js(clean) <= kappa * sqrt(8 * js(corrupted))
//   nn(corrupted) <= nn(clean) <= kappa_prime * nn(corrupted)
// where nn is the exact supremum of E_P[D] - E_Q[D] over projection
// discriminators with box-bounded weights. All quantities are computed in
// closed form; no iterative optimization is involved.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rcgan/channel.hpp"
#include "rcgan/rng.hpp"

namespace rcgan {

// Relative tolerance for inequality-chain checks.
inline constexpr double kChainTol = 1e-12;

// Absolute tolerance for the sharp total-variation equality check of the
// complementary-label family (its factor divides by small quantities).
inline constexpr double kEqualityTol = 1e-9;

// Probability table over support_size points and label_count labels,
// row-major probs[x * label_count + u].
struct DiscreteJoint {
  int support_size = 0;
  int label_count = 0;
  std::vector<double> probs;

  double at(int x, int u) const {
    return probs[static_cast<std::size_t>(x) * label_count + u];
  }
  double& at(int x, int u) {
    return probs[static_cast<std::size_t>(x) * label_count + u];
  }

  std::vector<double> x_marginal() const;

  // Total mass sitting on label columns >= first_column.
  double mass_on_columns_from(int first_column) const;

  // Nonnegative entries summing to one within tolerance.
  void validate() const;

  bool operator==(const DiscreteJoint&) const = default;
};

// Fixed feature tables evaluated on the support: psi feeds the label-aware
// bilinear term, psi_prime the label-free term of a projection discriminator
//   D(x, y) = vec(y)^T V psi(x) + v^T psi_prime(x),
// with weights constrained to the box max|V_{uj}| <= 1, max|v_j| <= 1.
struct FeatureMap {
  int support_size = 0;
  int dim = 0;
  std::vector<double> psi;        // row-major support_size x dim
  std::vector<double> psi_prime;  // row-major support_size x dim

  double psi_at(int x, int j) const {
    return psi[static_cast<std::size_t>(x) * dim + j];
  }
  double psi_prime_at(int x, int j) const {
    return psi_prime[static_cast<std::size_t>(x) * dim + j];
  }

  void validate() const;
};

// One verified inequality chain lhs <= mid <= rhs.
struct BoundReport {
  std::string label;
  double lhs = 0.0;
  double mid = 0.0;
  double rhs = 0.0;
  double kappa_used = 1.0;
  bool passed = false;
  // Binding relative margin: min over both links of (upper - lower) scaled
  // by max(1, magnitudes). Negative iff some link is violated.
  double slack = 0.0;
  // The sharp complementary-family total-variation bound is stated as an
  // equality; the verifier records per instance whether mid == rhs held.
  bool equality_checked = false;
  bool equality = false;
};

// Fault-injection hook for tests: scales the conditioning factor used on the
// right end of each chain. 1.0 verifies the bounds as stated.
struct VerifyOptions {
  double kappa_scale = 1.0;
};

// Corrupted joint: labels pushed through the channel, points untouched.
DiscreteJoint push_through(const DiscreteJoint& p, const ConfusionMatrix& c);

// Total variation distance, (1/2) sum |P - Q|, in [0, 1].
double tv(const DiscreteJoint& p, const DiscreteJoint& q);

// Jensen-Shannon divergence in natural-log units, in [0, ln 2].
double js(const DiscreteJoint& p, const DiscreteJoint& q);

// Exact supremum of E_P[D] - E_Q[D] over the box-bounded projection family.
// The objective is linear in (V, v), so the supremum is the l1-norm of the
// per-weight coefficients.
double projection_nn_distance(const DiscreteJoint& p, const DiscreteJoint& q,
                              const FeatureMap& f);

// Independent oracle: evaluates E_P[D] - E_Q[D] from the discriminator
// definition at every sign vertex of the weight box and maximizes. Only
// feasible on tiny instances; used to cross-check projection_nn_distance.
double projection_nn_distance_bruteforce(const DiscreteJoint& p,
                                         const DiscreteJoint& q,
                                         const FeatureMap& f);

// Normalized frequency table from (point index, label) samples.
DiscreteJoint empirical_joint(const std::vector<std::pair<int, int>>& samples,
                              int support_size, int label_count);

// Verifies the total-variation and Jensen-Shannon chains for clean joints
// p, q pushed through channel c, using the general conditioning factor.
std::pair<BoundReport, BoundReport> verify_divergence_chain(
    const DiscreteJoint& p, const DiscreteJoint& q, const ConfusionMatrix& c,
    const VerifyOptions& opts = {});

// Verifies the projection-distance chain with the kappa_prime factor.
BoundReport verify_projection_chain(const DiscreteJoint& p,
                                    const DiscreteJoint& q,
                                    const ConfusionMatrix& c,
                                    const FeatureMap& f,
                                    const VerifyOptions& opts = {});

// Verifies all three chains for a per-class label-missing channel using the
// sharper family-specific factors. Returns {tv, js, nn} reports.
std::vector<BoundReport> verify_missing_bounds(
    const std::vector<double>& alpha_per_class, const DiscreteJoint& p,
    const DiscreteJoint& q, const FeatureMap& f,
    const VerifyOptions& opts = {});

// Same for the complementary-label channel. The sharp total-variation factor
// of this family yields an *equality* when p and q share an x-marginal; the
// tv report records whether it held. On joints with different x-marginals the
// sharp factor can genuinely undershoot, in which case the tv report has
// passed == false while the data-processing direction (lhs <= mid) still
// holds.
std::vector<BoundReport> verify_complementary_bounds(
    int m, double alpha, const DiscreteJoint& p, const DiscreteJoint& q,
    const FeatureMap& f, const VerifyOptions& opts = {});

// Smallest n with n >= (c * p / eps^2) * ln(p * L / eps): the sample count at
// which the empirical corrupted-distribution distance tracks the population
// one for a discriminator class with p parameters and Lipschitz constant L.
// Throws std::domain_error unless p * L / eps > 1.
long long sample_complexity_bound(int p, double L, double eps, double c);

// Executable witness that the box family is closed under label-side
// transformations with max-row-sum norm at most one: checks that T * V stays
// in the unit box. v: rows x cols table; t: square, rows matching v.
// Throws std::domain_error if the preconditions on v or t fail.
bool box_closure_check(const std::vector<std::vector<double>>& v,
                       const std::vector<std::vector<double>>& t);

// Random clean joint: mass only on the first m label columns, drawn from a
// flat simplex over the s x m cells.
DiscreteJoint random_clean_joint(Rng& rng, int support_size, int m,
                                 int label_count);

// Random feature tables with entries uniform in [-1, 1].
FeatureMap random_feature_map(Rng& rng, int support_size, int dim);

// A full randomized verification instance.
struct RandomInstance {
  DiscreteJoint p;
  DiscreteJoint q;
  ChannelSpec channel;
  FeatureMap features;
};

// Size caps for randomized instances.
struct InstanceLimits {
  int max_support = 6;
  int max_classes = 4;
  int max_uncertain = 3;

  void validate() const;
};

// Draws support_size in [2, max_support], m in [2, max_classes], m_tilde in
// [1, max_uncertain], feature dim in [1,2], channel masses capped at 0.9.
// With shared_x_marginal, q is resampled so that its x-marginal equals p's.
RandomInstance random_instance(Rng& rng, const InstanceLimits& limits,
                               bool shared_x_marginal = false);
RandomInstance random_instance(Rng& rng, bool shared_x_marginal = false);

void to_json(nlohmann::json& j, const BoundReport& r);

}  // namespace rcgan
