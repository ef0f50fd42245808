#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "garkopt/core.hpp"
#include "garkopt/errors.hpp"
#include "garkopt/matrix.hpp"

namespace garkopt {

enum class Activation { tanh, silu, relu };
enum class OutputMode { linear, logits };
enum class LossKind { mse, cross_entropy };

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "silu") return Activation::silu;
  if (s == "relu") return Activation::relu;
  throw DomainError("unknown activation '" + std::string(s) + "'");
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::silu: return "silu";
    case Activation::relu: return "relu";
  }
  return "?";
}

/// Input/target pairs. Regression uses `targets`; classification uses
/// `labels` (class indices).
struct Batch {
  Matrix inputs;
  Matrix targets;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return inputs.rows(); }
  bool classification() const noexcept { return !labels.empty(); }
};

/// Fully connected network. Parameters are flattened layer by layer, the
/// weight matrix (n_out x n_in, row-major) before the bias of each layer.
class Mlp {
 public:
  Mlp(std::vector<std::size_t> layer_sizes, Activation activation, OutputMode mode)
      : sizes_(std::move(layer_sizes)), activation_(activation), mode_(mode) {
    if (sizes_.size() < 2) throw DimensionError("an MLP needs at least input and output sizes");
    for (auto n : sizes_)
      if (n == 0) throw DimensionError("layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weight_offsets_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      bias_offsets_.push_back(off);
      off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
  }

  /// Glorot-uniform weights, zero biases.
  Mlp(std::vector<std::size_t> layer_sizes, Activation activation, OutputMode mode,
      std::uint64_t seed)
      : Mlp(std::move(layer_sizes), activation, mode) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]);
      const double fan_out = static_cast<double>(sizes_[l + 1]);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      const std::size_t w0 = weight_offsets_[l];
      for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) params_[w0 + k] = dist(rng);
    }
  }

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t layers() const noexcept { return sizes_.size() - 1; }
  std::size_t input_size() const noexcept { return sizes_.front(); }
  std::size_t output_size() const noexcept { return sizes_.back(); }
  Activation activation() const noexcept { return activation_; }
  OutputMode output_mode() const noexcept { return mode_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::size_t weight_offset(std::size_t layer) const { return weight_offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const { return bias_offsets_.at(layer); }

  const ParamVector& parameters() const noexcept { return params_; }
  void set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw DimensionError("parameter vector length mismatch");
    params_.assign(p.begin(), p.end());
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation activation_;
  OutputMode mode_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  ParamVector params_;
};

inline std::size_t mlp_parameter_count(std::span<const std::size_t> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

namespace detail {

/// tanh within about one ulp: the Cephes rational form z + z^3 P(z^2)/Q(z^2)
/// below 0.625, one exp above (no cancellation there, since tanh >= 0.55).
inline double fast_tanh(double z) {
  const double a = std::abs(z);
  if (a >= 0.625) {
    if (a > 20.0) return std::copysign(1.0, z);
    return std::copysign(1.0 - 2.0 / (std::exp(2.0 * a) + 1.0), z);
  }
  const double s = z * z;
  const double p = (-9.64399179425052238628e-1 * s - 9.92877231001918586564e1) * s -
                   1.61468768441708447952e3;
  const double q = ((s + 1.12811678491632931402e2) * s + 2.23548839060100448583e3) * s +
                   4.84406305325125486048e3;
  return z + z * s * p / q;
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return fast_tanh(z);
    case Activation::silu: return z / (1.0 + std::exp(-z));
    case Activation::relu: return z > 0.0 ? z : 0.0;
  }
  return z;
}

/// d activation / dz, given the pre-activation z and the activation value y.
inline double activate_derivative(Activation a, double z, double y) {
  switch (a) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::silu: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

/// Per-sample forward pass that keeps every layer's pre-activation and
/// output for the backward sweep.
struct Tape {
  std::vector<std::vector<double>> pre;   // z_l, l = 1..L
  std::vector<std::vector<double>> post;  // a_l, l = 0..L
};

inline void forward_sample(const Mlp& net, std::span<const double> theta,
                           std::span<const double> x, Tape& tape) {
  const auto& sizes = net.layer_sizes();
  const std::size_t L = net.layers();
  tape.pre.resize(L);
  tape.post.resize(L + 1);
  tape.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t nin = sizes[l], nout = sizes[l + 1];
    const double* w = theta.data() + net.weight_offset(l);
    const double* b = theta.data() + net.bias_offset(l);
    const auto& in = tape.post[l];
    auto& z = tape.pre[l];
    auto& out = tape.post[l + 1];
    z.resize(nout);
    out.resize(nout);
    const bool hidden = l + 1 < L;
    for (std::size_t o = 0; o < nout; ++o) {
      double acc = b[o];
      const double* wr = w + o * nin;
      for (std::size_t i = 0; i < nin; ++i) acc += wr[i] * in[i];
      z[o] = acc;
      out[o] = hidden ? activate(net.activation(), acc) : acc;
    }
  }
}

inline void check_batch(const Mlp& net, const Batch& batch, LossKind kind) {
  if (batch.size() == 0) throw DimensionError("empty batch");
  if (batch.inputs.cols() != net.input_size())
    throw DimensionError("input width " + std::to_string(batch.inputs.cols()) +
                         " does not match the first layer (" + std::to_string(net.input_size()) + ")");
  if (kind == LossKind::mse) {
    if (batch.targets.rows() != batch.size() || batch.targets.cols() != net.output_size())
      throw DimensionError("regression targets must be n_samples x n_outputs");
  } else {
    if (net.output_mode() != OutputMode::logits)
      throw DimensionError("cross-entropy needs a logits output layer");
    if (batch.labels.size() != batch.size()) throw DimensionError("one label per sample required");
    for (auto c : batch.labels)
      if (c >= net.output_size()) throw DimensionError("class label out of range");
  }
}

}  // namespace detail

inline Matrix forward(const Mlp& net, std::span<const double> theta, const Matrix& inputs) {
  if (theta.size() != net.parameter_count()) throw DimensionError("parameter vector length mismatch");
  if (inputs.cols() != net.input_size()) throw DimensionError("input width does not match the first layer");
  Matrix out(inputs.rows(), net.output_size());
  detail::Tape tape;
  for (std::size_t n = 0; n < inputs.rows(); ++n) {
    detail::forward_sample(net, theta, inputs.row(n), tape);
    std::copy(tape.post.back().begin(), tape.post.back().end(), out.row(n).begin());
  }
  return out;
}

inline Matrix forward(const Mlp& net, const Matrix& inputs) {
  return forward(net, net.parameters(), inputs);
}

namespace detail {

/// Loss of one sample and dLoss/d(output), before the 1/N batch mean.
inline double sample_loss(LossKind kind, std::span<const double> y, const Batch& batch,
                          std::size_t n, std::vector<double>* dy) {
  const std::size_t k = y.size();
  if (dy) dy->resize(k);
  if (kind == LossKind::mse) {
    double acc = 0.0;
    const auto t = batch.targets.row(n);
    for (std::size_t o = 0; o < k; ++o) {
      const double e = y[o] - t[o];
      acc += e * e;
      if (dy) (*dy)[o] = 2.0 * e / static_cast<double>(k);
    }
    return acc / static_cast<double>(k);
  }
  const double mx = *std::max_element(y.begin(), y.end());
  double z = 0.0;
  for (double v : y) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  const std::size_t label = batch.labels[n];
  if (dy)
    for (std::size_t o = 0; o < k; ++o)
      (*dy)[o] = std::exp(y[o] - lse) - (o == label ? 1.0 : 0.0);
  return lse - y[label];
}

}  // namespace detail

/// Mean loss over the batch, without the gradient.
inline double batch_loss(const Mlp& net, std::span<const double> theta, const Batch& batch,
                         LossKind kind) {
  detail::check_batch(net, batch, kind);
  detail::Tape tape;
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    detail::forward_sample(net, theta, batch.inputs.row(n), tape);
    total += detail::sample_loss(kind, tape.post.back(), batch, n, nullptr);
  }
  return total / static_cast<double>(batch.size());
}

/// Mean loss and its gradient with respect to the flattened parameters, by
/// backpropagation. MSE averages over samples and outputs; cross-entropy
/// applies a max-shifted softmax to the logits.
inline LossGrad loss_and_gradient(const Mlp& net, std::span<const double> theta,
                                  const Batch& batch, LossKind kind) {
  if (theta.size() != net.parameter_count()) throw DimensionError("parameter vector length mismatch");
  detail::check_batch(net, batch, kind);
  const auto& sizes = net.layer_sizes();
  const std::size_t L = net.layers();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossGrad out;
  out.grad.assign(theta.size(), 0.0);
  detail::Tape tape;
  std::vector<double> delta, prev;
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    detail::forward_sample(net, theta, batch.inputs.row(n), tape);
    total += detail::sample_loss(kind, tape.post.back(), batch, n, &delta);
    for (auto& d : delta) d *= inv_n;

    for (std::size_t l = L; l-- > 0;) {
      const std::size_t nin = sizes[l], nout = sizes[l + 1];
      if (l + 1 < L)
        for (std::size_t o = 0; o < nout; ++o)
          delta[o] *= detail::activate_derivative(net.activation(), tape.pre[l][o], tape.post[l + 1][o]);
      double* gw = out.grad.data() + net.weight_offset(l);
      double* gb = out.grad.data() + net.bias_offset(l);
      const double* w = theta.data() + net.weight_offset(l);
      const auto& in = tape.post[l];
      prev.assign(nin, 0.0);
      for (std::size_t o = 0; o < nout; ++o) {
        const double d = delta[o];
        gb[o] += d;
        double* gwr = gw + o * nin;
        const double* wr = w + o * nin;
        for (std::size_t i = 0; i < nin; ++i) {
          gwr[i] += d * in[i];
          prev[i] += d * wr[i];
        }
      }
      delta.swap(prev);
    }
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) throw NonFiniteGradient("non-finite loss");
  for (double g : out.grad)
    if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient");
  return out;
}

inline LossGrad loss_and_gradient(const Mlp& net, const Batch& batch, LossKind kind) {
  return loss_and_gradient(net, net.parameters(), batch, kind);
}

/// Central differences (L(theta + d e_k) - L(theta - d e_k)) / 2d.
inline ParamVector finite_difference_gradient(const Mlp& net, std::span<const double> theta,
                                              const Batch& batch, LossKind kind, double step) {
  if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
  ParamVector work(theta.begin(), theta.end());
  ParamVector out(theta.size());
  for (std::size_t k = 0; k < work.size(); ++k) {
    const double orig = work[k];
    work[k] = orig + step;
    const double up = batch_loss(net, work, batch, kind);
    work[k] = orig - step;
    const double down = batch_loss(net, work, batch, kind);
    work[k] = orig;
    out[k] = (up - down) / (2.0 * step);
  }
  return out;
}

}  // namespace garkopt
