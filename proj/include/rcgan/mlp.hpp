#pragma once
// Minimal dense multilayer perceptron with manually derived backpropagation:
// tanh hidden layers, linear output, flat parameter and gradient storage so
// optimizers, clipping, snapshots, and finite-difference checks can treat a
// network as one contiguous array.

#include <span>
#include <vector>

#include "rcgan/rng.hpp"

namespace rcgan {

class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}; needs at least input and output.
  explicit Mlp(std::vector<int> sizes);

  // Xavier-uniform weights, zero biases.
  void init(Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& grads() { return grads_; }
  void zero_grads();

  // Activations remembered by a training forward pass: acts[0] is the input,
  // acts[l + 1] the output of layer l.
  struct Trace {
    std::vector<std::vector<double>> acts;
  };

  std::vector<double> forward(std::span<const double> in) const;
  std::vector<double> forward(std::span<const double> in, Trace& trace) const;

  // Accumulates parameter gradients for one traced sample and returns the
  // loss gradient with respect to the input.
  std::vector<double> backward(const Trace& trace,
                               std::span<const double> dout);

 private:
  std::size_t weight_offset(int layer) const {
    return offsets_[static_cast<std::size_t>(layer)];
  }
  std::size_t bias_offset(int layer) const {
    return offsets_[static_cast<std::size_t>(layer)] +
           static_cast<std::size_t>(sizes_[static_cast<std::size_t>(layer)]) *
               sizes_[static_cast<std::size_t>(layer) + 1];
  }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
  std::vector<double> params_;
  std::vector<double> grads_;
};

}  // namespace rcgan
