#include "rcgan/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rcgan {

namespace {

void check_alpha_range(double a, const char* what) {
  if (!(a >= 0.0 && a <= 1.0))
    throw std::invalid_argument(std::string(what) +
                                ": probability outside [0, 1]");
}

}  // namespace

double ChannelSpec::uncertain_mass(int i) const {
  double t = 0.0;
  for (const auto& row : alphas) t += row[static_cast<std::size_t>(i)];
  return t;
}

bool ChannelSpec::full_rank() const {
  for (int i = 0; i < m; ++i)
    if (uncertain_mass(i) >= 1.0 - kSingularTol) return false;
  return true;
}

void ChannelSpec::validate() const {
  if (m < 1) throw std::invalid_argument("ChannelSpec: need at least one class");
  if (m_tilde < 0)
    throw std::invalid_argument("ChannelSpec: negative uncertain label count");
  if (alphas.size() != static_cast<std::size_t>(m_tilde))
    throw std::invalid_argument(
        "ChannelSpec: alphas must have one row per uncertain label");
  const std::size_t L = static_cast<std::size_t>(label_count());
  for (const auto& row : alphas) {
    if (row.size() != L)
      throw std::invalid_argument(
          "ChannelSpec: alpha row length must equal label count");
    for (std::size_t i = 0; i < row.size(); ++i) {
      check_alpha_range(row[i], "ChannelSpec");
      if (i >= static_cast<std::size_t>(m) && row[i] != 0.0)
        throw std::invalid_argument(
            "ChannelSpec: uncertain labels cannot be corrupted further");
    }
  }
  for (int i = 0; i < m; ++i) {
    if (uncertain_mass(i) > 1.0 + kSingularTol)
      throw std::invalid_argument(
          "ChannelSpec: class loses more than its whole label probability");
  }
}

std::span<const double> ConfusionMatrix::row(int j) const {
  const std::size_t L = static_cast<std::size_t>(label_count());
  return {entries.data() + static_cast<std::size_t>(j) * L, L};
}

double ConfusionMatrix::uncertain_mass(int i) const {
  double t = 0.0;
  for (int u = m; u < label_count(); ++u) t += at(i, u);
  return t;
}

bool ConfusionMatrix::full_rank() const {
  for (int i = 0; i < m; ++i)
    if (uncertain_mass(i) >= 1.0 - kSingularTol) return false;
  return true;
}

void ConfusionMatrix::validate() const {
  if (m < 1)
    throw std::invalid_argument("ConfusionMatrix: need at least one class");
  if (m_tilde < 0)
    throw std::invalid_argument(
        "ConfusionMatrix: negative uncertain label count");
  const int L = label_count();
  if (entries.size() != static_cast<std::size_t>(L) * L)
    throw std::invalid_argument("ConfusionMatrix: entry count does not match "
                                "label count squared");
  for (int j = 0; j < L; ++j) {
    double sum = 0.0;
    for (int u = 0; u < L; ++u) {
      const double e = at(j, u);
      if (e < 0.0)
        throw std::invalid_argument("ConfusionMatrix: negative entry");
      sum += e;
      if (j < m && u < m && u != j && e != 0.0)
        throw std::invalid_argument(
            "ConfusionMatrix: class labels cannot turn into other classes");
      if (j >= m && e != (u == j ? 1.0 : 0.0))
        throw std::invalid_argument(
            "ConfusionMatrix: uncertain label rows must be identity");
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
      throw std::invalid_argument("ConfusionMatrix: row does not sum to one");
  }
}

ChannelSpec make_missing_channel(const std::vector<double>& alpha_per_class) {
  if (alpha_per_class.empty())
    throw std::invalid_argument("make_missing_channel: need at least one class");
  ChannelSpec spec;
  spec.m = static_cast<int>(alpha_per_class.size());
  spec.m_tilde = 1;
  std::vector<double> row(static_cast<std::size_t>(spec.label_count()), 0.0);
  for (std::size_t i = 0; i < alpha_per_class.size(); ++i) {
    check_alpha_range(alpha_per_class[i], "make_missing_channel");
    row[i] = alpha_per_class[i];
  }
  spec.alphas.push_back(std::move(row));
  spec.validate();
  return spec;
}

ChannelSpec make_complementary_channel(int m, double alpha) {
  if (m < 2)
    throw std::invalid_argument(
        "make_complementary_channel: need at least two classes");
  check_alpha_range(alpha, "make_complementary_channel");
  ChannelSpec spec;
  spec.m = m;
  spec.m_tilde = m;
  const double share = alpha / static_cast<double>(m - 1);
  for (int u = 0; u < m; ++u) {
    // Uncertain label m + u means "not class u": reachable from every class
    // except u itself.
    std::vector<double> row(static_cast<std::size_t>(spec.label_count()), 0.0);
    for (int i = 0; i < m; ++i)
      if (i != u) row[static_cast<std::size_t>(i)] = share;
    spec.alphas.push_back(std::move(row));
  }
  spec.validate();
  return spec;
}

ChannelSpec make_group_channel(int m,
                               const std::vector<std::vector<int>>& groups,
                               double alpha) {
  if (m < 1)
    throw std::invalid_argument("make_group_channel: need at least one class");
  check_alpha_range(alpha, "make_group_channel");
  std::vector<int> owner(static_cast<std::size_t>(m), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty())
      throw std::invalid_argument("make_group_channel: empty group");
    for (int i : groups[g]) {
      if (i < 0 || i >= m)
        throw std::invalid_argument("make_group_channel: class out of range");
      if (owner[static_cast<std::size_t>(i)] != -1)
        throw std::invalid_argument(
            "make_group_channel: class assigned to two groups");
      owner[static_cast<std::size_t>(i)] = static_cast<int>(g);
    }
  }
  for (int i = 0; i < m; ++i)
    if (owner[static_cast<std::size_t>(i)] == -1)
      throw std::invalid_argument(
          "make_group_channel: class not covered by any group");
  ChannelSpec spec;
  spec.m = m;
  spec.m_tilde = static_cast<int>(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> row(static_cast<std::size_t>(spec.label_count()), 0.0);
    for (int i : groups[g]) row[static_cast<std::size_t>(i)] = alpha;
    spec.alphas.push_back(std::move(row));
  }
  spec.validate();
  return spec;
}

ConfusionMatrix build_confusion(const ChannelSpec& spec) {
  spec.validate();
  ConfusionMatrix c;
  c.m = spec.m;
  c.m_tilde = spec.m_tilde;
  const int L = spec.label_count();
  c.entries.assign(static_cast<std::size_t>(L) * L, 0.0);
  for (int i = 0; i < spec.m; ++i) {
    c.entries[static_cast<std::size_t>(i) * L + i] =
        1.0 - spec.uncertain_mass(i);
    for (int u = 0; u < spec.m_tilde; ++u)
      c.entries[static_cast<std::size_t>(i) * L + spec.m + u] =
          spec.alphas[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
  }
  for (int j = spec.m; j < L; ++j)
    c.entries[static_cast<std::size_t>(j) * L + j] = 1.0;
  return c;
}

ChannelSpec spec_of(const ConfusionMatrix& c) {
  c.validate();
  ChannelSpec spec;
  spec.m = c.m;
  spec.m_tilde = c.m_tilde;
  for (int u = 0; u < c.m_tilde; ++u) {
    std::vector<double> row(static_cast<std::size_t>(c.label_count()), 0.0);
    for (int i = 0; i < c.m; ++i)
      row[static_cast<std::size_t>(i)] = c.at(i, c.m + u);
    spec.alphas.push_back(std::move(row));
  }
  spec.validate();
  return spec;
}

std::vector<double> invert_confusion(const ConfusionMatrix& c) {
  if (!c.full_rank())
    throw std::domain_error(
        "invert_confusion: channel is singular (a class keeps no label mass)");
  const int L = c.label_count();
  std::vector<double> inv(static_cast<std::size_t>(L) * L, 0.0);
  for (int i = 0; i < c.m; ++i) {
    const double keep = 1.0 - c.uncertain_mass(i);
    inv[static_cast<std::size_t>(i) * L + i] = 1.0 / keep;
    for (int u = c.m; u < L; ++u)
      inv[static_cast<std::size_t>(i) * L + u] = -c.at(i, u) / keep;
  }
  for (int j = c.m; j < L; ++j) inv[static_cast<std::size_t>(j) * L + j] = 1.0;
  return inv;
}

KappaFactors kappa_factors(const ConfusionMatrix& c) {
  if (!c.full_rank())
    throw std::domain_error(
        "kappa_factors: channel is singular (a class keeps no label mass)");
  KappaFactors k;
  for (int i = 0; i < c.m; ++i) {
    const double t = c.uncertain_mass(i);
    k.kappa = std::max(k.kappa, 1.0 / (1.0 - t));
    k.kappa_prime = std::max(k.kappa_prime, (1.0 + t) / (1.0 - t));
  }
  return k;
}

KappaFactors missing_corollary_kappas(
    const std::vector<double>& alpha_per_class) {
  if (alpha_per_class.empty())
    throw std::invalid_argument(
        "missing_corollary_kappas: need at least one class");
  double worst = 0.0;
  for (double a : alpha_per_class) {
    check_alpha_range(a, "missing_corollary_kappas");
    worst = std::max(worst, a);
  }
  if (worst >= 1.0 - kSingularTol)
    throw std::domain_error(
        "missing_corollary_kappas: channel is singular at alpha = 1");
  return {1.0 / (1.0 - worst), (1.0 + worst) / (1.0 - worst)};
}

KappaFactors complementary_corollary_kappas(int m, double alpha) {
  if (m < 2)
    throw std::invalid_argument(
        "complementary_corollary_kappas: need at least two classes");
  check_alpha_range(alpha, "complementary_corollary_kappas");
  if (alpha >= 1.0 - kSingularTol)
    throw std::domain_error(
        "complementary_corollary_kappas: channel is singular at alpha = 1");
  const double md = static_cast<double>(m - 1);
  return {md / (alpha + (1.0 - alpha) * md),
          (1.0 + alpha) / (1.0 - alpha)};
}

int corrupt_label(const ConfusionMatrix& c, int y, Rng& rng) {
  if (y < 0 || y >= c.m)
    throw std::out_of_range("corrupt_label: label is not a class label");
  const auto r = c.row(y);
  return rng.categorical(std::vector<double>(r.begin(), r.end()));
}

ChannelSpec random_channel_spec(Rng& rng, int m, int m_tilde,
                                double max_mass) {
  if (m < 1 || m_tilde < 1)
    throw std::invalid_argument(
        "random_channel_spec: need at least one class and one uncertain label");
  if (!(max_mass > 0.0 && max_mass < 1.0))
    throw std::invalid_argument("random_channel_spec: max_mass outside (0, 1)");
  ChannelSpec spec;
  spec.m = m;
  spec.m_tilde = m_tilde;
  spec.alphas.assign(
      static_cast<std::size_t>(m_tilde),
      std::vector<double>(static_cast<std::size_t>(m + m_tilde), 0.0));
  for (int i = 0; i < m; ++i) {
    double total = 0.0;
    for (int u = 0; u < m_tilde; ++u) {
      const double a = rng.uniform();
      spec.alphas[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] = a;
      total += a;
    }
    if (total > max_mass) {
      const double scale = max_mass / total;
      for (int u = 0; u < m_tilde; ++u)
        spec.alphas[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] *=
            scale;
    }
  }
  spec.validate();
  return spec;
}

void to_json(nlohmann::json& j, const ChannelSpec& s) {
  j = nlohmann::json{{"m", s.m}, {"m_tilde", s.m_tilde}, {"alphas", s.alphas}};
}

void from_json(const nlohmann::json& j, ChannelSpec& s) {
  j.at("m").get_to(s.m);
  j.at("m_tilde").get_to(s.m_tilde);
  j.at("alphas").get_to(s.alphas);
  s.validate();
}

void to_json(nlohmann::json& j, const ConfusionMatrix& c) {
  j = nlohmann::json{
      {"m", c.m}, {"m_tilde", c.m_tilde}, {"entries", c.entries}};
}

void from_json(const nlohmann::json& j, ConfusionMatrix& c) {
  j.at("m").get_to(c.m);
  j.at("m_tilde").get_to(c.m_tilde);
  j.at("entries").get_to(c.entries);
  c.validate();
}

}  // namespace rcgan
