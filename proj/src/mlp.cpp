#include "rcgan/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace rcgan {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be positive");
  std::size_t total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[static_cast<std::size_t>(l)]) *
                 sizes_[static_cast<std::size_t>(l) + 1] +
             static_cast<std::size_t>(sizes_[static_cast<std::size_t>(l) + 1]);
  }
  params_.assign(total, 0.0);
  grads_.assign(total, 0.0);
}

void Mlp::init(Rng& rng) {
  for (int l = 0; l < layer_count(); ++l) {
    const int in = sizes_[static_cast<std::size_t>(l)];
    const int out = sizes_[static_cast<std::size_t>(l) + 1];
    const double a = std::sqrt(6.0 / (in + out));
    double* w = params_.data() + weight_offset(l);
    for (int i = 0; i < out * in; ++i) w[i] = rng.uniform(-a, a);
    double* b = params_.data() + bias_offset(l);
    for (int i = 0; i < out; ++i) b[i] = 0.0;
  }
}

void Mlp::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

std::vector<double> Mlp::forward(std::span<const double> in) const {
  Trace trace;
  return forward(in, trace);
}

std::vector<double> Mlp::forward(std::span<const double> in,
                                 Trace& trace) const {
  if (static_cast<int>(in.size()) != input_dim())
    throw std::invalid_argument("Mlp: input dimension mismatch");
  trace.acts.assign(1, std::vector<double>(in.begin(), in.end()));
  for (int l = 0; l < layer_count(); ++l) {
    const int n_in = sizes_[static_cast<std::size_t>(l)];
    const int n_out = sizes_[static_cast<std::size_t>(l) + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const auto& x = trace.acts.back();
    std::vector<double> y(static_cast<std::size_t>(n_out));
    const bool last = l == layer_count() - 1;
    for (int i = 0; i < n_out; ++i) {
      double s = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * n_in;
      for (int j = 0; j < n_in; ++j) s += wi[j] * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = last ? s : std::tanh(s);
    }
    trace.acts.push_back(std::move(y));
  }
  return trace.acts.back();
}

std::vector<double> Mlp::backward(const Trace& trace,
                                  std::span<const double> dout) {
  if (trace.acts.size() != static_cast<std::size_t>(layer_count()) + 1)
    throw std::invalid_argument("Mlp: trace does not match the network");
  if (static_cast<int>(dout.size()) != output_dim())
    throw std::invalid_argument("Mlp: output gradient dimension mismatch");
  std::vector<double> delta(dout.begin(), dout.end());
  for (int l = layer_count() - 1; l >= 0; --l) {
    const int n_in = sizes_[static_cast<std::size_t>(l)];
    const int n_out = sizes_[static_cast<std::size_t>(l) + 1];
    const auto& x = trace.acts[static_cast<std::size_t>(l)];
    const auto& y = trace.acts[static_cast<std::size_t>(l) + 1];
    // Hidden activations are tanh; the output layer is linear.
    if (l != layer_count() - 1)
      for (int i = 0; i < n_out; ++i)
        delta[static_cast<std::size_t>(i)] *=
            1.0 - y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    double* gw = grads_.data() + weight_offset(l);
    double* gb = grads_.data() + bias_offset(l);
    const double* w = params_.data() + weight_offset(l);
    std::vector<double> dprev(static_cast<std::size_t>(n_in), 0.0);
    for (int i = 0; i < n_out; ++i) {
      const double d = delta[static_cast<std::size_t>(i)];
      gb[i] += d;
      double* gwi = gw + static_cast<std::size_t>(i) * n_in;
      const double* wi = w + static_cast<std::size_t>(i) * n_in;
      for (int j = 0; j < n_in; ++j) {
        gwi[j] += d * x[static_cast<std::size_t>(j)];
        dprev[static_cast<std::size_t>(j)] += d * wi[j];
      }
    }
    delta = std::move(dprev);
  }
  return delta;
}

}  // namespace rcgan
