#include "rcgan/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rcgan {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
  throw std::runtime_error("read_dataset: " + path + ": line " +
                           std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void check_clean_labeled(const Dataset& ds, const char* what) {
  ds.validate();
  if (ds.corrupted())
    throw std::invalid_argument(std::string(what) +
                                ": dataset labels were already corrupted");
  if (ds.m_tilde != 0)
    throw std::invalid_argument(std::string(what) +
                                ": dataset already has uncertain labels");
  for (const auto& r : ds.records)
    if (!r.is_labeled)
      throw std::invalid_argument(std::string(what) +
                                  ": dataset already has withheld labels");
}

}  // namespace

void MixtureSpec::validate() const {
  if (m < 1) throw std::invalid_argument("MixtureSpec: need at least one class");
  if (dim < 1) throw std::invalid_argument("MixtureSpec: need dimension >= 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("MixtureSpec: sigma must be positive");
  if (means.size() != static_cast<std::size_t>(m))
    throw std::invalid_argument("MixtureSpec: need one mean per class");
  for (const auto& mean : means) {
    if (mean.size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("MixtureSpec: mean dimension mismatch");
    for (double v : mean)
      if (!std::isfinite(v))
        throw std::invalid_argument("MixtureSpec: non-finite mean");
  }
  if (priors.size() != static_cast<std::size_t>(m))
    throw std::invalid_argument("MixtureSpec: need one prior per class");
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0))
      throw std::invalid_argument("MixtureSpec: negative prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("MixtureSpec: priors do not sum to one");
}

MixtureSpec ring_mixture(int m, int dim, double radius, double sigma) {
  if (m < 1)
    throw std::invalid_argument("ring_mixture: need at least one class");
  if (dim < 1) throw std::invalid_argument("ring_mixture: need dimension >= 1");
  if (!(radius > 0.0))
    throw std::invalid_argument("ring_mixture: radius must be positive");
  MixtureSpec spec;
  spec.m = m;
  spec.dim = dim;
  spec.sigma = sigma;
  spec.priors.assign(static_cast<std::size_t>(m), 1.0 / m);
  for (int k = 0; k < m; ++k) {
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    if (dim == 1) {
      mean[0] = m == 1 ? 0.0
                       : -radius + 2.0 * radius * k / static_cast<double>(m - 1);
    } else {
      const double theta = 2.0 * kPi * k / static_cast<double>(m);
      mean[0] = radius * std::cos(theta);
      mean[1] = radius * std::sin(theta);
    }
    spec.means.push_back(std::move(mean));
  }
  spec.validate();
  return spec;
}

void Dataset::validate() const {
  if (dim < 1) throw std::invalid_argument("Dataset: need dimension >= 1");
  if (m < 1) throw std::invalid_argument("Dataset: need at least one class");
  if (m_tilde < 0)
    throw std::invalid_argument("Dataset: negative uncertain label count");
  if (channel) {
    if (channel->m != m || channel->m_tilde != m_tilde)
      throw std::invalid_argument("Dataset: channel does not match label universe");
  }
  for (const auto& r : records) {
    if (r.x.size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("Dataset: record dimension mismatch");
    if (r.label < 0 || r.label >= label_count())
      throw std::invalid_argument("Dataset: label out of range");
    if (r.is_labeled && r.label >= m)
      throw std::invalid_argument(
          "Dataset: a labeled record must carry a class label");
    if (!channel && m_tilde == 0 && r.label >= m)
      throw std::invalid_argument(
          "Dataset: uncertain label without a corrupting channel");
  }
}

Dataset generate_mixture(const MixtureSpec& spec, int n, Rng& rng) {
  spec.validate();
  if (n < 1)
    throw std::invalid_argument("generate_mixture: need at least one sample");
  Dataset ds;
  ds.dim = spec.dim;
  ds.m = spec.m;
  ds.m_tilde = 0;
  ds.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    DataRecord r;
    r.label = rng.categorical(spec.priors);
    r.is_labeled = true;
    r.x.resize(static_cast<std::size_t>(spec.dim));
    for (int j = 0; j < spec.dim; ++j)
      r.x[static_cast<std::size_t>(j)] =
          spec.means[static_cast<std::size_t>(r.label)]
                    [static_cast<std::size_t>(j)] +
          spec.sigma * rng.normal();
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset apply_channel(const Dataset& ds, const ConfusionMatrix& c, Rng& rng) {
  check_clean_labeled(ds, "apply_channel");
  if (ds.m != c.m)
    throw std::invalid_argument(
        "apply_channel: channel class count does not match the dataset");
  Dataset out = ds;
  out.m_tilde = c.m_tilde;
  out.channel = spec_of(c);
  for (auto& r : out.records) {
    r.label = corrupt_label(c, r.label, rng);
    r.is_labeled = r.label < c.m;
  }
  return out;
}

Dataset few_label_split(const Dataset& ds, int n_labels, Rng& rng) {
  check_clean_labeled(ds, "few_label_split");
  if (n_labels < 0)
    throw std::invalid_argument("few_label_split: negative label budget");
  if (n_labels % ds.m != 0)
    throw std::invalid_argument(
        "few_label_split: label budget not divisible by the class count");
  const int quota = n_labels / ds.m;
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.m));
  for (int i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.records[static_cast<std::size_t>(i)]
                                          .label)]
        .push_back(i);
  for (int y = 0; y < ds.m; ++y)
    if (static_cast<int>(by_class[static_cast<std::size_t>(y)].size()) < quota)
      throw std::invalid_argument(
          "few_label_split: class " + std::to_string(y) +
          " has fewer records than its label quota");
  Dataset out = ds;
  for (auto& r : out.records) r.is_labeled = false;
  for (int y = 0; y < ds.m; ++y) {
    auto& idx = by_class[static_cast<std::size_t>(y)];
    rng.shuffle(idx);
    for (int k = 0; k < quota; ++k)
      out.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])]
          .is_labeled = true;
  }
  return out;
}

int observed_label(const Dataset& ds, const DataRecord& r) {
  return r.is_labeled || r.label >= ds.m ? r.label : ds.m;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
  for (int j = 0; j < ds.dim; ++j) out << 'x' << j << ',';
  out << "label,is_labeled\n";
  for (const auto& r : ds.records) {
    for (double v : r.x) out << format_double(v) << ',';
    out << r.label << ',' << (r.is_labeled ? 1 : 0) << '\n';
  }
  out.flush();
  if (!out)
    throw std::runtime_error("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path, int m, int m_tilde) {
  if (m < 1)
    throw std::invalid_argument("read_dataset: need at least one class");
  if (m_tilde < 0)
    throw std::invalid_argument("read_dataset: negative uncertain label count");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 3)
    parse_fail(path, 1, "header needs x columns, label, is_labeled");
  const int dim = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < dim; ++j)
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j))
      parse_fail(path, 1, "expected column x" + std::to_string(j) + ", got " +
                              header[static_cast<std::size_t>(j)]);
  if (header[static_cast<std::size_t>(dim)] != "label" ||
      header[static_cast<std::size_t>(dim) + 1] != "is_labeled")
    parse_fail(path, 1, "expected trailing columns label,is_labeled");

  Dataset ds;
  ds.dim = dim;
  ds.m = m;
  ds.m_tilde = m_tilde;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      parse_fail(path, line_no,
                 "expected " + std::to_string(header.size()) +
                     " fields, got " + std::to_string(fields.size()));
    DataRecord r;
    r.x.resize(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j)];
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || !std::isfinite(v))
        parse_fail(path, line_no, "bad coordinate '" + f + "'");
      r.x[static_cast<std::size_t>(j)] = v;
    }
    {
      const std::string& f = fields[static_cast<std::size_t>(dim)];
      char* end = nullptr;
      const long v = std::strtol(f.c_str(), &end, 10);
      if (f.empty() || end != f.c_str() + f.size())
        parse_fail(path, line_no, "bad label '" + f + "'");
      if (v < 0 || v >= m + m_tilde)
        parse_fail(path, line_no,
                   "label " + std::to_string(v) + " out of range for " +
                       std::to_string(m + m_tilde) + " labels");
      r.label = static_cast<int>(v);
    }
    {
      const std::string& f = fields[static_cast<std::size_t>(dim) + 1];
      if (f == "0")
        r.is_labeled = false;
      else if (f == "1")
        r.is_labeled = true;
      else
        parse_fail(path, line_no, "bad is_labeled flag '" + f + "'");
    }
    if (r.is_labeled && r.label >= m)
      parse_fail(path, line_no, "labeled record carries an uncertain label");
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void to_json(nlohmann::json& j, const MixtureSpec& s) {
  j = nlohmann::json{{"m", s.m},
                     {"dim", s.dim},
                     {"means", s.means},
                     {"sigma", s.sigma},
                     {"priors", s.priors}};
}

void from_json(const nlohmann::json& j, MixtureSpec& s) {
  j.at("m").get_to(s.m);
  j.at("dim").get_to(s.dim);
  j.at("means").get_to(s.means);
  j.at("sigma").get_to(s.sigma);
  j.at("priors").get_to(s.priors);
  s.validate();
}

}  // namespace rcgan
