#include <doctest.h>

#include <cmath>
#include <fstream>
#include <vector>

#include "dino/binio.hpp"
#include "dino/errors.hpp"
#include "dino/nn/network.hpp"
#include "dino/nn/serialize.hpp"
#include "dino/prng.hpp"
#include "test_support.hpp"

using namespace dino;
using namespace dino::nn;

namespace {

template <class T>
Tensor<T> random_batch(const NetworkSpec& spec, int n, std::uint64_t seed) {
  Prng p(seed);
  Tensor<T> t({n, spec.in_h, spec.in_w, spec.in_c});
  for (auto& v : t.values()) v = static_cast<T>(p.uniform());
  return t;
}

NetworkSpec scalar_spec() {
  NetworkSpec s;
  s.in_h = 1;
  s.in_w = 1;
  s.in_c = 1;
  s.outputs = 1;
  return s;
}

struct CheckCase {
  QNetwork<double> net;
  Tensor<double> batch;
  std::vector<double> targets;
  std::vector<int> actions;
};

CheckCase tiny_case(std::uint64_t seed, int n = 3) {
  CheckCase c{QNetwork<double>::initialized(tiny_spec(), seed), random_batch<double>(tiny_spec(), n, seed + 100), {},
              {}};
  Prng p(seed + 200);
  for (int b = 0; b < n; ++b) {
    c.targets.push_back(p.uniform() * 2 - 1);
    c.actions.push_back(static_cast<int>(p.next() % 2));
  }
  // Small random biases keep ReLUs away from exact ties at zero.
  for (auto& l : c.net.layers()) {
    for (auto& v : l.bias.values()) v = 0.1 * (p.uniform() - 0.5);
  }
  return c;
}

}  // namespace

TEST_CASE("valid-conv arithmetic and the full pyramid") {
  CHECK(valid_conv_size(80, 8, 4) == 19);
  CHECK(valid_conv_size(19, 4, 2) == 8);
  CHECK(valid_conv_size(8, 3, 1) == 6);

  const QNetwork<float> net(NetworkSpec::dqn());
  const auto& L = net.layers();
  REQUIRE(L.size() == 5);
  CHECK(L[0].name == "conv1");
  CHECK((L[0].out_h == 19 && L[0].out_w == 19 && L[0].out_c == 32));
  CHECK((L[1].out_h == 8 && L[1].out_w == 8 && L[1].out_c == 64));
  CHECK((L[2].out_h == 6 && L[2].out_w == 6 && L[2].out_c == 64));
  CHECK(L[3].name == "dense1");
  CHECK(L[3].in_size() == 2304);
  CHECK(L[3].out_size() == 512);
  CHECK(L[4].name == "dense_out");
  CHECK(L[4].out_size() == 2);
  CHECK_FALSE(L[4].relu);
  CHECK(L[0].weight.shape() == Shape{32, 8, 8, 4});
  CHECK(L[3].weight.shape() == Shape{512, 2304});
  CHECK(net.parameter_count() == 8224 + 32832 + 36928 + 1180160 + 1026);

  NetworkSpec bad = NetworkSpec::dqn();
  bad.in_h = 12;
  bad.in_w = 12;
  CHECK_THROWS_AS(QNetwork<float>{bad}, ShapeError);
}

TEST_CASE("Tensor length must match its shape") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, AlignedVector<float>(5)), ShapeError);
  const Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5f);
}

TEST_CASE("forward: zero network gives zeros; output bias broadcasts") {
  QNetwork<float> net(NetworkSpec::dqn(4, 8, 8, 16));
  const auto batch = random_batch<float>(net.spec(), 3, 1);
  const auto q = net.forward(batch);
  CHECK(q.shape() == Shape{3, 2});
  for (float v : q.values()) CHECK(v == 0.0f);

  net.layers().back().bias.values() = {0.25f, -1.5f};
  const auto q2 = net.forward(batch);
  for (int b = 0; b < 3; ++b) {
    CHECK(q2.at(b, 0) == 0.25f);
    CHECK(q2.at(b, 1) == -1.5f);
  }
}

TEST_CASE("forward: scalar dense net computes w*x+b") {
  QNetwork<double> net(scalar_spec());
  REQUIRE(net.layers().size() == 1);
  net.layers()[0].weight.values()[0] = 1.5;
  net.layers()[0].bias.values()[0] = -0.25;
  Tensor<double> x({1, 1, 1, 1}, 2.0);
  CHECK(net.forward(x)[0] == 2.75);
}

TEST_CASE("forward: wrong input shape is a ShapeError naming both shapes") {
  const QNetwork<float> net(tiny_spec());
  const Tensor<float> wrong({1, 8, 8, 3});
  CHECK_THROWS_WITH_AS(net.forward(wrong), doctest::Contains("[B,8,8,2]"), ShapeError);
  CHECK_THROWS_AS(QNetwork<float>{}.forward(wrong), ShapeError);
}

TEST_CASE("forward: deterministic, batch-consistent, float close to double") {
  const auto net = QNetwork<float>::initialized(NetworkSpec::dqn(8, 16, 16, 64), 5);
  const auto batch = random_batch<float>(net.spec(), 4, 9);
  const auto a = net.forward(batch);
  const auto b = net.forward(batch);
  CHECK(a == b);

  Tensor<float> one({1, 80, 80, 4});
  std::copy(batch.data() + 2 * 25600, batch.data() + 3 * 25600, one.data());
  const auto q1 = net.forward(one);
  CHECK(q1[0] == doctest::Approx(a.at(2, 0)).epsilon(1e-5));
  CHECK(q1[1] == doctest::Approx(a.at(2, 1)).epsilon(1e-5));

  const auto d = net.cast<double>().forward(random_batch<double>(net.spec(), 4, 9));
  for (std::size_t i = 0; i < 8; ++i) CHECK(d[i] == doctest::Approx(a[i]).epsilon(1e-4));
}

TEST_CASE("initialization stays within the fan-in bound and is seeded") {
  const auto net = QNetwork<float>::initialized(NetworkSpec::dqn(8, 16, 16, 64), 11);
  for (const auto& l : net.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in()));
    double max_abs = 0;
    for (float w : l.weight.values()) max_abs = std::max(max_abs, std::abs(static_cast<double>(w)));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.5 * bound);
    for (float v : l.bias.values()) CHECK(v == 0.0f);
  }
  CHECK(net == QNetwork<float>::initialized(NetworkSpec::dqn(8, 16, 16, 64), 11));
  CHECK_FALSE(net == QNetwork<float>::initialized(NetworkSpec::dqn(8, 16, 16, 64), 12));
}

TEST_CASE("masked MSE on the scalar net: q=2, y=0 gives loss 4 and dL/dq 4") {
  QNetwork<double> net(scalar_spec());
  net.layers()[0].bias.values()[0] = 2.0;
  Tensor<double> x({1, 1, 1, 1}, 3.0);
  const std::vector<double> y{0.0};
  const std::vector<int> a{0};
  const auto bp = compute_gradients<double>(net, x, y, a);
  CHECK(bp.loss == 4.0);
  CHECK(bp.grads[0].bias[0] == 4.0);    // dL/dq * dq/db
  CHECK(bp.grads[0].weight[0] == 12.0); // dL/dq * x
}

TEST_CASE("masked MSE: the non-chosen output gets no gradient") {
  auto c = tiny_case(3, 4);
  c.actions = {0, 0, 0, 0};
  const auto bp = compute_gradients<double>(c.net, c.batch, c.targets, c.actions);
  const auto& out = bp.grads.back();
  const std::size_t hidden = 8;
  for (std::size_t k = 0; k < hidden; ++k) CHECK(out.weight[hidden + k] == 0.0);
  CHECK(out.bias[1] == 0.0);
  CHECK(out.bias[0] != 0.0);

  // Moving the unchosen output's parameters leaves loss and gradients alone.
  auto moved = c.net;
  for (std::size_t k = 0; k < hidden; ++k) moved.layers().back().weight.values()[hidden + k] += 3.0;
  moved.layers().back().bias.values()[1] -= 7.0;
  const auto bp2 = compute_gradients<double>(moved, c.batch, c.targets, c.actions);
  CHECK(bp2.loss == bp.loss);
  for (std::size_t li = 0; li + 1 < bp.grads.size(); ++li) {
    CHECK(bp2.grads[li].weight == bp.grads[li].weight);
    CHECK(bp2.grads[li].bias == bp.grads[li].bias);
  }
}

TEST_CASE("train_step: zero residual leaves parameters and only bumps the step") {
  auto c = tiny_case(4);
  const auto q = c.net.forward(c.batch);
  for (std::size_t b = 0; b < c.targets.size(); ++b) c.targets[b] = q[b * 2 + static_cast<std::size_t>(c.actions[b])];
  auto adam = AdamState<double>::for_network(c.net);
  const auto before = c.net;
  const double loss = train_step<double>(c.net, adam, c.batch, c.targets, c.actions, 1e-4);
  CHECK(loss == 0.0);
  CHECK(c.net == before);
  CHECK(adam.step == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto net = QNetwork<double>::initialized(tiny_spec(), 1);
  const auto before = net;
  auto adam = AdamState<double>::for_network(net);
  Gradients<double> zero;
  for (const auto& l : net.layers()) {
    zero.push_back({AlignedVector<double>(l.weight.size(), 0.0), AlignedVector<double>(l.bias.size(), 0.0)});
  }
  for (int i = 0; i < 3; ++i) adam_update(net, adam, zero, 1e-3);
  CHECK(net == before);
  CHECK(adam.step == 3);
}

TEST_CASE("adam: first step moves each parameter by about -lr*sign(g)") {
  auto c = tiny_case(6);
  const auto bp = compute_gradients<double>(c.net, c.batch, c.targets, c.actions);
  auto adam = AdamState<double>::for_network(c.net);
  const auto before = c.net;
  const double lr = 1e-4;
  adam_update(c.net, adam, bp.grads, lr);
  int checked = 0;
  for (std::size_t li = 0; li < before.layers().size(); ++li) {
    const auto& w0 = before.layers()[li].weight.values();
    const auto& w1 = c.net.layers()[li].weight.values();
    for (std::size_t i = 0; i < w0.size(); ++i) {
      const double g = bp.grads[li].weight[i];
      const double step = w1[i] - w0[i];
      if (g == 0.0) {
        CHECK(step == 0.0);
        continue;
      }
      // m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps).
      const double expect = -lr * g / (std::abs(g) + 1e-8);
      CHECK(step == doctest::Approx(expect).epsilon(1e-9));
      if (std::abs(g) > 1e-3) {
        CHECK(step == doctest::Approx(-lr * (g > 0 ? 1 : -1)).epsilon(1e-4));
        ++checked;
      }
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("adam: second step follows the bias-corrected recurrences") {
  QNetwork<double> net(scalar_spec());
  auto adam = AdamState<double>::for_network(net);
  const double g1 = 0.5, g2 = -0.2, lr = 0.01;
  Gradients<double> g(1);
  g[0].weight = {g1};
  g[0].bias = {0.0};
  adam_update(net, adam, g, lr);
  g[0].weight = {g2};
  adam_update(net, adam, g, lr);
  const double m1 = 0.1 * g1, v1 = 0.001 * g1 * g1;
  const double p1 = -lr * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double m2 = 0.9 * m1 + 0.1 * g2, v2 = 0.999 * v1 + 0.001 * g2 * g2;
  const double p2 = p1 - lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(net.layers()[0].weight.values()[0] == doctest::Approx(p2).epsilon(1e-12));
}

TEST_CASE("grad_check: tiny nets across 10 seeds") {
  // Central differences assume the loss is smooth within +-h, so a case only
  // counts when every ReLU input is at least 10h away from its kink.
  const double h = 1e-5;
  int accepted = 0, skipped = 0;
  for (std::uint64_t seed = 7; accepted < 10; ++seed) {
    const auto c = tiny_case(seed);
    if (relu_margin(c.net, c.batch) <= 10 * h) {
      ++skipped;
      continue;
    }
    ++accepted;
    CAPTURE(seed);
    CHECK(grad_check(c.net, c.batch, c.targets, c.actions, h) < 1e-4);
  }
  CHECK(skipped <= 2);
}

TEST_CASE("grad_check: a probe straddling a ReLU kink, and a smaller step") {
  // Seed 16 has a pre-activation within h of zero.
  const auto c = tiny_case(16);
  CHECK(relu_margin(c.net, c.batch) < 1e-5);
  CHECK(grad_check(c.net, c.batch, c.targets, c.actions, 1e-6) < 1e-4);
}

TEST_CASE("grad_check: zero-residual batch") {
  auto c = tiny_case(21);
  const auto q = c.net.forward(c.batch);
  for (std::size_t b = 0; b < c.targets.size(); ++b) c.targets[b] = q[b * 2 + static_cast<std::size_t>(c.actions[b])];
  CHECK(grad_check(c.net, c.batch, c.targets, c.actions, 1e-5) < 1e-4);
}

TEST_CASE("grad_check: a doubled analytic entry is caught") {
  const auto c = tiny_case(7);
  const auto bp = compute_gradients<double>(c.net, c.batch, c.targets, c.actions);
  // Sabotage the largest conv weight gradient so the entry is far from zero.
  std::size_t idx = 0;
  for (std::size_t i = 1; i < bp.grads[0].weight.size(); ++i) {
    if (std::abs(bp.grads[0].weight[i]) > std::abs(bp.grads[0].weight[idx])) idx = i;
  }
  const double err = grad_check(c.net, c.batch, c.targets, c.actions, 1e-5, GradSabotage{0, false, idx, 2.0});
  CHECK(err > 0.1);
  const double bias_err =
      grad_check(c.net, c.batch, c.targets, c.actions, 1e-5, GradSabotage{2, true, 0, 2.0});
  CHECK(bias_err > 0.1);
}

TEST_CASE("train_step: non-finite values raise NumericFault with a layer name") {
  auto c = tiny_case(8);
  auto adam = AdamState<double>::for_network(c.net);
  auto bad_targets = c.targets;
  bad_targets[0] = std::nan("");
  CHECK_THROWS_AS(train_step<double>(c.net, adam, c.batch, bad_targets, c.actions, 1e-4), NumericFault);

  auto f = c.net.cast<float>();
  for (auto& v : f.layers()[0].weight.values()) v = 1e30f;
  auto fadam = AdamState<float>::for_network(f);
  const auto before = f;
  const std::vector<float> ft(c.targets.begin(), c.targets.end());
  Tensor<float> fb(c.batch.shape());
  std::transform(c.batch.values().begin(), c.batch.values().end(), fb.values().begin(),
                 [](double v) { return static_cast<float>(v); });
  try {
    train_step<float>(f, fadam, fb, ft, c.actions, 1e-4);
    FAIL("expected NumericFault");
  } catch (const NumericFault& e) {
    const auto& names = f.layers();
    const bool known = std::any_of(names.begin(), names.end(), [&](const auto& l) { return l.name == e.layer(); });
    CHECK(known);
  }
  CHECK(f == before);
  CHECK(fadam.step == 0);
}

TEST_CASE("clone_weights is a deep copy") {
  auto src = QNetwork<float>::initialized(NetworkSpec::dqn(4, 8, 8, 16), 2);
  const auto clone = clone_weights(src);
  const auto batch = random_batch<float>(src.spec(), 2, 3);
  CHECK(src.forward(batch) == clone.forward(batch));
  CHECK(clone_weights(clone) == src);
  CHECK(encode_weights(clone_weights(clone)) == encode_weights(src));

  auto adam = AdamState<float>::for_network(src);
  const std::vector<float> y{5.0f, -5.0f};
  const std::vector<int> a{0, 1};
  train_step<float>(src, adam, batch, y, a, 1e-3);
  CHECK_FALSE(src.forward(batch) == clone.forward(batch));
}

TEST_CASE("weights: save/load round trip is bitwise") {
  testing::TempDir dir("weights");
  const auto net = QNetwork<float>::initialized(NetworkSpec::dqn(8, 16, 16, 64), 4);
  save_weights(net, dir.file("w.bin"));
  const auto loaded = load_weights(dir.file("w.bin"));
  CHECK(loaded == net);
  const auto batch = random_batch<float>(net.spec(), 2, 5);
  CHECK(loaded.forward(batch) == net.forward(batch));
  const auto bytes = binio::read_file(dir.file("w.bin"));
  CHECK(encode_weights(loaded) == bytes);

  // Header and the first layer record.
  REQUIRE(bytes.size() > 11);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "DINOQ1");
  CHECK(bytes[6] == 0x01);
  CHECK(bytes[7] == 4);  // conv1 weight rank, little-endian u32
  CHECK(bytes[8] == 0);

  const auto tiny = QNetwork<float>::initialized(tiny_spec(), 1);
  save_weights(tiny, dir.file("tiny.bin"));
  CHECK(load_weights(dir.file("tiny.bin"), tiny_spec()) == tiny);
  CHECK_THROWS_AS(load_weights(dir.file("tiny.bin"), NetworkSpec::dqn()), FormatError);

  // Full-size pyramid, inferred from the file.
  const auto full = QNetwork<float>::initialized(NetworkSpec::dqn(), 1);
  save_weights(full, dir.file("full.bin"));
  CHECK(load_weights(dir.file("full.bin")) == full);
}

TEST_CASE("weights: bad magic, version and truncation") {
  const auto net = QNetwork<float>::initialized(NetworkSpec::dqn(4, 8, 8, 16), 4);
  auto bytes = encode_weights(net);

  auto bad = bytes;
  std::fill(bad.begin(), bad.begin() + 6, 'X');
  try {
    (void)decode_weights(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  auto v2 = bytes;
  v2[6] = 0x02;
  CHECK_THROWS_AS((void)decode_weights(v2), UnsupportedVersion);

  for (std::size_t cut : {std::size_t{3}, std::size_t{7}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      (void)decode_weights(part);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CAPTURE(cut);
      CHECK(e.offset() == cut);
    }
  }

  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS((void)decode_weights(extra), FormatError);

  testing::TempDir dir("weights_bad");
  CHECK_THROWS((void)load_weights(dir.file("missing.bin")));
}
