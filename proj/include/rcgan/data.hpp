#pragma once
// Synthetic conditional Gaussian-mixture datasets: generation, label
// corruption through a channel, the equal-allocation few-label protocol, and
// CSV persistence. The mixture is the desk-scale stand-in for an image
// dataset: well-separated modes keep the evaluation oracle nearly exact.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rcgan/channel.hpp"
#include "rcgan/rng.hpp"

namespace rcgan {

// Ground-truth generating process: class y ~ priors, x ~ Normal(mean_y, s^2 I).
struct MixtureSpec {
  int m = 0;
  int dim = 0;
  std::vector<std::vector<double>> means;  // one vector of length dim per class
  double sigma = 1.0;                      // isotropic, shared across classes
  std::vector<double> priors;

  void validate() const;
};

// Classes evenly spaced on a circle of the given radius in the first two
// coordinates (on a segment if dim == 1), uniform priors.
MixtureSpec ring_mixture(int m, int dim = 2, double radius = 5.0,
                         double sigma = 0.5);

struct DataRecord {
  std::vector<double> x;
  int label = 0;
  // False marks records whose label is withheld from training by the
  // few-label protocol; the true label is retained for evaluation.
  bool is_labeled = true;

  bool operator==(const DataRecord&) const = default;
};

struct Dataset {
  int dim = 0;
  int m = 0;
  int m_tilde = 0;
  std::vector<DataRecord> records;
  // Set iff the labels were pushed through a channel.
  std::optional<ChannelSpec> channel;

  int label_count() const { return m + m_tilde; }
  bool corrupted() const { return channel.has_value(); }
  int size() const { return static_cast<int>(records.size()); }

  // Shape and label-range checks; without a channel every label must be a
  // class label, and a withheld record always keeps a class label.
  void validate() const;
};

// n i.i.d. draws from the mixture; all records labeled.
Dataset generate_mixture(const MixtureSpec& spec, int n, Rng& rng);

// Independently corrupts every label through the channel; points untouched,
// order preserved. Records whose label becomes uncertain lose is_labeled.
// Requires a clean, fully labeled dataset (no double corruption).
Dataset apply_channel(const Dataset& ds, const ConfusionMatrix& c, Rng& rng);

// Equal-allocation protocol: keeps exactly n_labels / m uniformly chosen
// records per class labeled and withholds the label of every other record.
// Requires a clean, fully labeled dataset and n_labels divisible by m.
Dataset few_label_split(const Dataset& ds, int n_labels, Rng& rng);

// The label a training consumer observes: the missing label m for withheld
// records, the stored label otherwise.
int observed_label(const Dataset& ds, const DataRecord& r);

// CSV with header x0,...,x{D-1},label,is_labeled; floats at 9 significant
// digits, flags as 0/1. The channel is not persisted.
void write_dataset(const Dataset& ds, const std::string& path);

// Parses the CSV written by write_dataset. The label universe is not stored
// in the file, so the caller supplies it. Parse errors name the line.
Dataset read_dataset(const std::string& path, int m, int m_tilde);

void to_json(nlohmann::json& j, const MixtureSpec& s);
void from_json(const nlohmann::json& j, MixtureSpec& s);

}  // namespace rcgan
