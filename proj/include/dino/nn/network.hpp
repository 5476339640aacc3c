#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dino/nn/tensor.hpp"

namespace dino::nn {

struct ConvSpec {
  int filters;
  int kernel;
  int stride;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Layer stack: valid convolutions, then dense hidden layers, then a linear
// output layer. ReLU follows every layer except the output.
struct NetworkSpec {
  int in_h = 80;
  int in_w = 80;
  int in_c = 4;
  std::vector<ConvSpec> convs;
  std::vector<int> hidden;
  int outputs = 2;

  // Three-conv pyramid over an 80x80x4 frame stack: 8x8/4, 4x4/2, 3x3/1.
  static NetworkSpec dqn(int conv1_filters = 32, int conv2_filters = 64, int conv3_filters = 64, int dense = 512);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// floor((in - kernel) / stride) + 1
constexpr int valid_conv_size(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

enum class LayerKind : std::uint8_t { Conv, Dense };

template <class T>
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::Dense;
  bool relu = true;
  // Conv geometry (dense layers use in_c/out_c as widths, the rest are 1).
  int in_h = 1, in_w = 1, in_c = 0;
  int kernel = 1, stride = 1;
  int out_h = 1, out_w = 1, out_c = 0;
  // Conv: [filters, kernel, kernel, in_c]; dense: [out, in].
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t in_size() const { return static_cast<std::size_t>(in_h) * in_w * in_c; }
  std::size_t out_size() const { return static_cast<std::size_t>(out_h) * out_w * out_c; }
  std::size_t fan_in() const { return static_cast<std::size_t>(kernel) * kernel * in_c; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

template <class T>
struct LayerGrad {
  AlignedVector<T> weight;
  AlignedVector<T> bias;
};

template <class T>
using Gradients = std::vector<LayerGrad<T>>;

template <class T>
class QNetwork {
 public:
  // No layers; only useful as an assignment target.
  QNetwork() = default;

  // All parameters zero. Throws ShapeError if a layer's valid-conv output
  // would be empty.
  explicit QNetwork(NetworkSpec spec);

  // Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights from a SplitMix64
  // stream seeded with `seed`; biases zero.
  static QNetwork initialized(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  Shape input_shape(int batch) const { return {batch, spec_.in_h, spec_.in_w, spec_.in_c}; }

  // batch: [B, in_h, in_w, in_c] -> [B, outputs].
  Tensor<T> forward(const Tensor<T>& batch) const;

  template <class U>
  QNetwork<U> cast() const;

  friend bool operator==(const QNetwork&, const QNetwork&) = default;

 private:
  NetworkSpec spec_;
  std::vector<Layer<T>> layers_;
};

// Deep copy (used to refresh the DDQN target network).
template <class T>
QNetwork<T> clone_weights(const QNetwork<T>& src) {
  return src;
}

template <class T>
struct Backprop {
  double loss = 0;
  Gradients<T> grads;
};

// Masked MSE: loss = (1/B) sum_b (Q(s_b, a_b) - y_b)^2. Only the chosen
// action's output receives gradient.
template <class T>
Backprop<T> compute_gradients(const QNetwork<T>& net, const Tensor<T>& batch, std::span<const T> targets,
                              std::span<const int> actions);

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<LayerGrad<T>> m;
  std::vector<LayerGrad<T>> v;

  static AdamState for_network(const QNetwork<T>& net);

  friend bool operator==(const AdamState& a, const AdamState& b) {
    auto eq = [](const std::vector<LayerGrad<T>>& x, const std::vector<LayerGrad<T>>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].weight != y[i].weight || x[i].bias != y[i].bias) return false;
      }
      return true;
    };
    return a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.eps == b.eps && a.step == b.step && eq(a.m, b.m) &&
           eq(a.v, b.v);
  }
};

// One bias-corrected Adam update of every parameter.
template <class T>
void adam_update(QNetwork<T>& net, AdamState<T>& adam, const Gradients<T>& grads, double lr);

// Throws NumericFault naming the first layer with a non-finite gradient.
template <class T>
void check_finite(const QNetwork<T>& net, const Backprop<T>& bp);

// compute_gradients + finiteness check + adam_update. Returns the loss
// measured before the update.
template <class T>
double train_step(QNetwork<T>& net, AdamState<T>& adam, const Tensor<T>& batch, std::span<const T> targets,
                  std::span<const int> actions, double lr);

// Smallest |pre-activation| over every ReLU unit for this batch. Central
// differences are only meaningful when this exceeds the probe step's effect.
template <class T>
double relu_margin(const QNetwork<T>& net, const Tensor<T>& batch);

// Test hook for grad_check: multiplies one analytic gradient entry.
struct GradSabotage {
  std::size_t layer = 0;
  bool bias = false;
  std::size_t index = 0;
  double factor = 2.0;
};

// Central-difference check of compute_gradients over every parameter.
// Returns max |a - n| / max(1e-8, |a| + |n|).
double grad_check(const QNetwork<double>& net, const Tensor<double>& batch, std::span<const double> targets,
                  std::span<const int> actions, double h = 1e-5,
                  std::optional<GradSabotage> sabotage = std::nullopt);

// Small architecture used for gradient checking: 8x8x2 input, one 3x3
// conv with 2 filters, dense 8, 2 outputs.
NetworkSpec tiny_spec();

}  // namespace dino::nn
