#pragma once
// Label-uncertainty channels. A channel describes how clean class labels are
// stochastically replaced by "uncertain" labels (extra symbols appended after
// the classes). Class labels never turn into other class labels, so the
// confusion matrix is identity-plus-erasure structured and its inverse has a
// closed form. The conditioning factors derived from the inverse quantify how
// much a divergence measured on corrupted data can understate the divergence
// on clean data.

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "rcgan/rng.hpp"

namespace rcgan {

// A channel is treated as singular once some class retains less than this
// much probability of keeping a class label.
inline constexpr double kSingularTol = 1e-9;

// Tolerance for row-stochasticity checks.
inline constexpr double kRowSumTol = 1e-12;

// Parameters of a channel over m class labels and m_tilde uncertain labels.
// alphas[u][i] is the probability that true label i is replaced by uncertain
// label m + u. Entries for i >= m must be zero: uncertain labels are sinks.
struct ChannelSpec {
  int m = 0;
  int m_tilde = 0;
  std::vector<std::vector<double>> alphas;

  int label_count() const { return m + m_tilde; }

  // Total probability that class i loses its label.
  double uncertain_mass(int i) const;

  bool full_rank() const;

  // Throws std::invalid_argument on malformed parameters.
  void validate() const;

  bool operator==(const ChannelSpec&) const = default;
};

// Dense row-stochastic matrix realizing a ChannelSpec. entries[j*L + u] is
// the probability of observing label u when the true label is j, with
// L = m + m_tilde.
struct ConfusionMatrix {
  int m = 0;
  int m_tilde = 0;
  std::vector<double> entries;

  int label_count() const { return m + m_tilde; }
  double at(int j, int u) const {
    return entries[static_cast<std::size_t>(j) * label_count() + u];
  }
  std::span<const double> row(int j) const;

  double uncertain_mass(int i) const;
  bool full_rank() const;

  // Structural checks: shape, row sums, zero class-to-class off-diagonals,
  // identity rows for uncertain labels. Throws std::invalid_argument.
  void validate() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

// Conditioning factors of a channel. kappa bounds the blow-up of total
// variation (and enters the squared-Jensen-Shannon bound); kappa_prime is the
// max-row-sum norm of the inverse confusion matrix and bounds the blow-up of
// neural-network distances.
struct KappaFactors {
  double kappa = 1.0;
  double kappa_prime = 1.0;
};

// Per-class label-missing channel: one uncertain label, class i erased with
// probability alpha_per_class[i].
ChannelSpec make_missing_channel(const std::vector<double>& alpha_per_class);

// Complementary-label channel: m uncertain labels "not j"; with probability
// alpha a class label i is replaced by one of the m - 1 complementary labels
// "not j", j != i, uniformly.
ChannelSpec make_complementary_channel(int m, double alpha);

// Group-uncertainty channel: one uncertain label per group of classes; a
// class in group g keeps its label with probability 1 - alpha and otherwise
// becomes the group's uncertain label. groups must partition 0..m-1.
ChannelSpec make_group_channel(int m,
                               const std::vector<std::vector<int>>& groups,
                               double alpha);

ConfusionMatrix build_confusion(const ChannelSpec& spec);

// Recover the parameters realized by a confusion matrix.
ChannelSpec spec_of(const ConfusionMatrix& c);

// Closed-form inverse, row-major L x L. The off-diagonal blocks of the
// channel are nilpotent, so the inverse is diag(1/(1-t_i)) applied to
// (I - uncertain block) for class rows and identity for uncertain rows.
// Throws std::domain_error if the channel is singular.
std::vector<double> invert_confusion(const ConfusionMatrix& c);

// Conditioning factors for a general channel:
//   kappa       = max_i 1 / (1 - t_i)
//   kappa_prime = max_i (1 + t_i) / (1 - t_i)
// over class labels i, with t_i the uncertain mass of class i. kappa_prime
// equals the max-row-sum norm of the inverse confusion matrix.
// Throws std::domain_error if the channel is singular.
KappaFactors kappa_factors(const ConfusionMatrix& c);

// Sharper factors available for the two structured families.
KappaFactors missing_corollary_kappas(const std::vector<double>& alpha_per_class);
KappaFactors complementary_corollary_kappas(int m, double alpha);

// Sample an observed label for true class label y (0 <= y < m).
int corrupt_label(const ConfusionMatrix& c, int y, Rng& rng);

// Random spec for property tests: uniform alphas rescaled so that no class
// loses more than max_mass of its label probability.
ChannelSpec random_channel_spec(Rng& rng, int m, int m_tilde,
                                double max_mass = 0.9);

void to_json(nlohmann::json& j, const ChannelSpec& s);
void from_json(const nlohmann::json& j, ChannelSpec& s);
void to_json(nlohmann::json& j, const ConfusionMatrix& c);
void from_json(const nlohmann::json& j, ConfusionMatrix& c);

}  // namespace rcgan
