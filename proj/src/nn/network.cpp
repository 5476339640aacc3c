#include "dino/nn/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dino/errors.hpp"
#include "dino/prng.hpp"

namespace dino::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <class T>
Eigen::Index rows_of(const Layer<T>& l, int batch) {
  return static_cast<Eigen::Index>(batch) * l.out_h * l.out_w;
}

// Unrolls every receptive field into a row of `patches`, ordered (ky, kx, c).
template <class T>
void im2col(const T* in, int batch, const Layer<T>& l, T* patches) {
  const std::size_t k_cols = l.fan_in();
  const std::size_t run = static_cast<std::size_t>(l.kernel) * l.in_c;
  T* dst = patches;
  for (int b = 0; b < batch; ++b) {
    const T* image = in + static_cast<std::size_t>(b) * l.in_size();
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        for (int ky = 0; ky < l.kernel; ++ky) {
          const T* src = image + (static_cast<std::size_t>(oy * l.stride + ky) * l.in_w + ox * l.stride) * l.in_c;
          std::copy_n(src, run, dst + static_cast<std::size_t>(ky) * run);
        }
        dst += k_cols;
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the input grid.
template <class T>
void col2im(const T* patches, int batch, const Layer<T>& l, T* in_grad) {
  std::fill_n(in_grad, static_cast<std::size_t>(batch) * l.in_size(), T{0});
  const std::size_t k_cols = l.fan_in();
  const std::size_t run = static_cast<std::size_t>(l.kernel) * l.in_c;
  const T* src = patches;
  for (int b = 0; b < batch; ++b) {
    T* image = in_grad + static_cast<std::size_t>(b) * l.in_size();
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        for (int ky = 0; ky < l.kernel; ++ky) {
          T* dst = image + (static_cast<std::size_t>(oy * l.stride + ky) * l.in_w + ox * l.stride) * l.in_c;
          const T* row = src + static_cast<std::size_t>(ky) * run;
          for (std::size_t i = 0; i < run; ++i) dst[i] += row[i];
        }
        src += k_cols;
      }
    }
  }
}

// Per-layer buffers kept from the forward pass for backprop.
template <class T>
struct Trace {
  std::vector<AlignedVector<T>> outputs;  // post-activation output of each layer
  std::vector<AlignedVector<T>> patches;  // im2col matrix of each conv layer
  AlignedVector<T> delta;
  AlignedVector<T> upstream;
};

// Per-thread scratch reused across calls; the buffers only grow.
template <class T>
Trace<T>& scratch() {
  thread_local Trace<T> trace;
  return trace;
}

template <class T>
void check_input(const QNetwork<T>& net, const Tensor<T>& batch) {
  if (net.layers().empty()) throw ShapeError("forward on an empty network");
  const auto& s = net.spec();
  const bool ok = batch.rank() == 4 && batch.dim(0) >= 1 && batch.dim(1) == s.in_h && batch.dim(2) == s.in_w &&
                  batch.dim(3) == s.in_c;
  if (!ok) {
    throw ShapeError("forward: expected input shape [B," + std::to_string(s.in_h) + "," + std::to_string(s.in_w) +
                     "," + std::to_string(s.in_c) + "], got " + shape_string(batch.shape()));
  }
}

template <class T>
void run_forward(const QNetwork<T>& net, const Tensor<T>& batch, Trace<T>& trace, double* relu_margin = nullptr) {
  check_input(net, batch);
  const int n = batch.dim(0);
  const auto& layers = net.layers();
  trace.outputs.resize(layers.size());
  trace.patches.resize(layers.size());
  const T* in = batch.data();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const Eigen::Index rows = rows_of(l, n);
    const auto k_cols = static_cast<Eigen::Index>(l.fan_in());
    const T* lhs = in;
    if (l.kind == LayerKind::Conv) {
      trace.patches[li].resize(static_cast<std::size_t>(rows * k_cols));
      im2col(in, n, l, trace.patches[li].data());
      lhs = trace.patches[li].data();
    }
    auto& out = trace.outputs[li];
    out.resize(static_cast<std::size_t>(rows) * l.out_c);
    ConstMatMap<T> x(lhs, rows, k_cols);
    ConstMatMap<T> w(l.weight.data(), l.out_c, k_cols);
    MatMap<T> y(out.data(), rows, l.out_c);
    y.noalias() = x * w.transpose();
    y.rowwise() += ConstRowVecMap<T>(l.bias.data(), l.out_c);
    if (l.relu) {
      if (relu_margin) *relu_margin = std::min(*relu_margin, static_cast<double>(y.cwiseAbs().minCoeff()));
      y = y.cwiseMax(T{0});
    }
    in = out.data();
  }
}

template <class T>
void fill_uniform(Tensor<T>& t, double limit, Prng& rng) {
  for (auto& v : t.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
}

}  // namespace

NetworkSpec NetworkSpec::dqn(int conv1_filters, int conv2_filters, int conv3_filters, int dense) {
  NetworkSpec s;
  s.convs = {{conv1_filters, 8, 4}, {conv2_filters, 4, 2}, {conv3_filters, 3, 1}};
  s.hidden = {dense};
  return s;
}

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.in_h = 8;
  s.in_w = 8;
  s.in_c = 2;
  s.convs = {{2, 3, 1}};
  s.hidden = {8};
  return s;
}

template <class T>
QNetwork<T>::QNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_h < 1 || spec_.in_w < 1 || spec_.in_c < 1 || spec_.outputs < 1) {
    throw ShapeError("network input and output extents must be positive");
  }
  int h = spec_.in_h, w = spec_.in_w, c = spec_.in_c;
  int index = 1;
  for (const auto& cs : spec_.convs) {
    if (cs.filters < 1 || cs.kernel < 1 || cs.stride < 1 || cs.kernel > h || cs.kernel > w) {
      throw ShapeError("conv" + std::to_string(index) + ": kernel " + std::to_string(cs.kernel) +
                       " does not fit input " + std::to_string(h) + "x" + std::to_string(w));
    }
    Layer<T> l;
    l.name = "conv" + std::to_string(index++);
    l.kind = LayerKind::Conv;
    l.in_h = h, l.in_w = w, l.in_c = c;
    l.kernel = cs.kernel, l.stride = cs.stride;
    l.out_h = valid_conv_size(h, cs.kernel, cs.stride);
    l.out_w = valid_conv_size(w, cs.kernel, cs.stride);
    l.out_c = cs.filters;
    l.weight = Tensor<T>({cs.filters, cs.kernel, cs.kernel, c});
    l.bias = Tensor<T>({cs.filters});
    h = l.out_h, w = l.out_w, c = l.out_c;
    layers_.push_back(std::move(l));
  }
  int width = h * w * c;
  auto add_dense = [&](const std::string& name, int units, bool relu) {
    if (units < 1) throw ShapeError(name + ": width must be positive");
    Layer<T> l;
    l.name = name;
    l.kind = LayerKind::Dense;
    l.relu = relu;
    l.in_c = width;
    l.out_c = units;
    l.weight = Tensor<T>({units, width});
    l.bias = Tensor<T>({units});
    width = units;
    layers_.push_back(std::move(l));
  };
  index = 1;
  for (int units : spec_.hidden) add_dense("dense" + std::to_string(index++), units, true);
  add_dense("dense_out", spec_.outputs, false);
}

template <class T>
QNetwork<T> QNetwork<T>::initialized(NetworkSpec spec, std::uint64_t seed) {
  QNetwork net(std::move(spec));
  Prng rng(seed);
  for (auto& l : net.layers_) fill_uniform(l.weight, std::sqrt(6.0 / static_cast<double>(l.fan_in())), rng);
  return net;
}

template <class T>
std::size_t QNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

template <class T>
Tensor<T> QNetwork<T>::forward(const Tensor<T>& batch) const {
  auto& trace = scratch<T>();
  run_forward(*this, batch, trace);
  const auto& q = trace.outputs[layers_.size() - 1];
  return Tensor<T>({batch.dim(0), spec_.outputs}, AlignedVector<T>(q.begin(), q.end()));
}

template <class T>
double relu_margin(const QNetwork<T>& net, const Tensor<T>& batch) {
  double margin = std::numeric_limits<double>::infinity();
  run_forward(net, batch, scratch<T>(), &margin);
  return margin;
}

template <class T>
template <class U>
QNetwork<U> QNetwork<T>::cast() const {
  QNetwork<U> out(spec_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& dst = out.layers()[i];
    std::transform(layers_[i].weight.values().begin(), layers_[i].weight.values().end(), dst.weight.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    std::transform(layers_[i].bias.values().begin(), layers_[i].bias.values().end(), dst.bias.values().begin(),
                   [](T v) { return static_cast<U>(v); });
  }
  return out;
}

template <class T>
Backprop<T> compute_gradients(const QNetwork<T>& net, const Tensor<T>& batch, std::span<const T> targets,
                              std::span<const int> actions) {
  check_input(net, batch);
  const int n = batch.dim(0);
  if (targets.size() != static_cast<std::size_t>(n) || actions.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("train batch of " + std::to_string(n) + " states needs as many targets and actions (got " +
                     std::to_string(targets.size()) + " and " + std::to_string(actions.size()) + ")");
  }
  const int outputs = net.spec().outputs;
  for (int a : actions) {
    if (a < 0 || a >= outputs) throw ShapeError("action index " + std::to_string(a) + " out of range");
  }

  auto& trace = scratch<T>();
  run_forward(net, batch, trace);
  const auto& layers = net.layers();

  Backprop<T> bp;
  bp.grads.resize(layers.size());
  auto& delta = trace.delta;
  delta.assign(static_cast<std::size_t>(n) * outputs, T{0});
  const auto& q = trace.outputs[layers.size() - 1];
  double loss = 0;
  for (int b = 0; b < n; ++b) {
    const auto idx = static_cast<std::size_t>(b) * outputs + static_cast<std::size_t>(actions[b]);
    const T residual = q[idx] - targets[static_cast<std::size_t>(b)];
    loss += static_cast<double>(residual) * static_cast<double>(residual);
    delta[idx] = T{2} * residual / static_cast<T>(n);
  }
  bp.loss = loss / n;

  auto& upstream = trace.upstream;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    const Eigen::Index rows = rows_of(l, n);
    const auto k_cols = static_cast<Eigen::Index>(l.fan_in());
    MatMap<T> d(delta.data(), rows, l.out_c);
    if (l.relu) {
      ConstMatMap<T> y(trace.outputs[li].data(), rows, l.out_c);
      d = (y.array() > T{0}).select(d, T{0});
    }
    const T* lhs = nullptr;
    if (l.kind == LayerKind::Conv) {
      lhs = trace.patches[li].data();
    } else {
      lhs = li == 0 ? batch.data() : trace.outputs[li - 1].data();
    }
    ConstMatMap<T> x(lhs, rows, k_cols);
    auto& g = bp.grads[li];
    g.weight.resize(l.weight.size());
    g.bias.resize(l.bias.size());
    MatMap<T>(g.weight.data(), l.out_c, k_cols).noalias() = d.transpose() * x;
    RowVecMap<T>(g.bias.data(), l.out_c) = d.colwise().sum();

    if (li == 0) break;
    ConstMatMap<T> w(l.weight.data(), l.out_c, k_cols);
    upstream.resize(static_cast<std::size_t>(rows * k_cols));
    MatMap<T>(upstream.data(), rows, k_cols).noalias() = d * w;
    if (l.kind == LayerKind::Conv) {
      delta.resize(static_cast<std::size_t>(n) * l.in_size());
      col2im(upstream.data(), n, l, delta.data());
    } else {
      delta.swap(upstream);
    }
  }
  return bp;
}

template <class T>
AdamState<T> AdamState<T>::for_network(const QNetwork<T>& net) {
  AdamState s;
  for (const auto& l : net.layers()) {
    s.m.push_back({AlignedVector<T>(l.weight.size(), T{0}), AlignedVector<T>(l.bias.size(), T{0})});
  }
  s.v = s.m;
  return s;
}

template <class T>
void adam_update(QNetwork<T>& net, AdamState<T>& adam, const Gradients<T>& grads, double lr) {
  auto& layers = net.layers();
  if (adam.m.size() != layers.size() || grads.size() != layers.size()) {
    throw ShapeError("adam_update: optimizer state does not match the network");
  }
  ++adam.step;
  const auto k = static_cast<double>(adam.step);
  const T correction1 = static_cast<T>(1.0 - std::pow(adam.beta1, k));
  const T correction2 = static_cast<T>(1.0 - std::pow(adam.beta2, k));
  const T b1 = static_cast<T>(adam.beta1), b2 = static_cast<T>(adam.beta2);
  const T eps = static_cast<T>(adam.eps), rate = static_cast<T>(lr);
  auto apply = [&](AlignedVector<T>& p, AlignedVector<T>& m, AlignedVector<T>& v, const AlignedVector<T>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      p[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  };
  for (std::size_t li = 0; li < layers.size(); ++li) {
    apply(layers[li].weight.values(), adam.m[li].weight, adam.v[li].weight, grads[li].weight);
    apply(layers[li].bias.values(), adam.m[li].bias, adam.v[li].bias, grads[li].bias);
  }
}

template <class T>
void check_finite(const QNetwork<T>& net, const Backprop<T>& bp) {
  const auto& layers = net.layers();
  if (!std::isfinite(bp.loss)) throw NumericFault(layers.back().name, "non-finite loss at layer " + layers.back().name);
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto finite = [](T v) { return std::isfinite(v); };
    if (!std::all_of(bp.grads[li].weight.begin(), bp.grads[li].weight.end(), finite) ||
        !std::all_of(bp.grads[li].bias.begin(), bp.grads[li].bias.end(), finite)) {
      throw NumericFault(layers[li].name, "non-finite gradient in layer " + layers[li].name);
    }
  }
}

template <class T>
double train_step(QNetwork<T>& net, AdamState<T>& adam, const Tensor<T>& batch, std::span<const T> targets,
                  std::span<const int> actions, double lr) {
  for (T y : targets) {
    if (!std::isfinite(y)) throw NumericFault(net.layers().back().name, "non-finite training target");
  }
  auto bp = compute_gradients(net, batch, targets, actions);
  check_finite(net, bp);
  adam_update(net, adam, bp.grads, lr);
  return bp.loss;
}

double grad_check(const QNetwork<double>& net, const Tensor<double>& batch, std::span<const double> targets,
                  std::span<const int> actions, double h, std::optional<GradSabotage> sabotage) {
  auto analytic = compute_gradients(net, batch, targets, actions);
  if (sabotage) {
    auto& g = analytic.grads.at(sabotage->layer);
    (sabotage->bias ? g.bias : g.weight).at(sabotage->index) *= sabotage->factor;
  }

  auto loss_of = [&](const QNetwork<double>& probe) {
    const auto q = probe.forward(batch);
    const int outputs = probe.spec().outputs;
    double sum = 0;
    for (std::size_t b = 0; b < targets.size(); ++b) {
      const double r = q[b * static_cast<std::size_t>(outputs) + static_cast<std::size_t>(actions[b])] - targets[b];
      sum += r * r;
    }
    return sum / static_cast<double>(targets.size());
  };

  QNetwork<double> probe = net;
  double worst = 0;
  auto sweep = [&](AlignedVector<double>& params, const AlignedVector<double>& grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = loss_of(probe);
      params[i] = saved - h;
      const double down = loss_of(probe);
      params[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = grads[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  };
  for (std::size_t li = 0; li < probe.layers().size(); ++li) {
    sweep(probe.layers()[li].weight.values(), analytic.grads[li].weight);
    sweep(probe.layers()[li].bias.values(), analytic.grads[li].bias);
  }
  return worst;
}

template class QNetwork<float>;
template class QNetwork<double>;
template QNetwork<double> QNetwork<float>::cast<double>() const;
template QNetwork<float> QNetwork<double>::cast<float>() const;

template Backprop<float> compute_gradients(const QNetwork<float>&, const Tensor<float>&, std::span<const float>,
                                           std::span<const int>);
template Backprop<double> compute_gradients(const QNetwork<double>&, const Tensor<double>&, std::span<const double>,
                                            std::span<const int>);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_update(QNetwork<float>&, AdamState<float>&, const Gradients<float>&, double);
template void adam_update(QNetwork<double>&, AdamState<double>&, const Gradients<double>&, double);
template double relu_margin(const QNetwork<float>&, const Tensor<float>&);
template double relu_margin(const QNetwork<double>&, const Tensor<double>&);
template void check_finite(const QNetwork<float>&, const Backprop<float>&);
template void check_finite(const QNetwork<double>&, const Backprop<double>&);
template double train_step(QNetwork<float>&, AdamState<float>&, const Tensor<float>&, std::span<const float>,
                           std::span<const int>, double);
template double train_step(QNetwork<double>&, AdamState<double>&, const Tensor<double>&, std::span<const double>,
                           std::span<const int>, double);

}  // namespace dino::nn
