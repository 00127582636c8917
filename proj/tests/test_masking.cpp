#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spurnet/masking.hpp"
#include "testutil.hpp"

using namespace spurnet;
using testutil::random_constant;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DenseNetwork small_net(std::uint64_t seed, std::vector<std::size_t> sizes = {3, 4, 2}) {
  Rng rng(seed);
  return DenseNetwork::make_mlp(sizes, rng);
}

}  // namespace

TEST_CASE("init_logits: every logit set to init, classifier excluded by default") {
  auto net = small_net(1, {2, 2, 2});
  MaskSet m = init_logits(net, 0.9);
  REQUIRE(m.logits.size() == 1);  // hidden layer only
  CHECK(m.masked_layers == std::vector<std::size_t>{0});
  CHECK(m.logits[0].value() == std::vector<double>(4, 0.9));

  MaskSet z = init_logits(net, 0.0, /*include_classifier=*/true);
  REQUIRE(z.logits.size() == 2);
  CHECK(z.logits[1].value() == std::vector<double>(4, 0.0));
}

TEST_CASE("init at 0.9: deterministic gates all open, keep_ratio 1") {
  auto net = small_net(2);
  MaskedModel model = make_masked_model(net, init_logits(net, 0.9), 7);
  model.masks.mode = MaskMode::kDeterministic;
  // sigma(0.9) = 0.7109 > 0.5
  CHECK(sigmoid_ref(0.9) == doctest::Approx(0.71095).epsilon(1e-4));
  CHECK(keep_ratio(model) == 1.0);
}

TEST_CASE("gumbel_sigmoid_sample matches an independent formula evaluation") {
  Rng logits_rng(5);
  Tensor pi = testutil::random_param({3, 3}, logits_rng, -2, 2);
  const double tau = 0.7;

  Rng noise_rng(99, streams::kMaskNoise);
  Rng replay = noise_rng;  // same stream, replayed in the oracle
  Tensor s = gumbel_sigmoid_sample(pi, tau, noise_rng);

  for (std::size_t i = 0; i < s.numel(); ++i) {
    double u1 = std::clamp(replay.uniform(), 1e-12, 1.0 - 1e-12);
    double u2 = std::clamp(replay.uniform(), 1e-12, 1.0 - 1e-12);
    double noise = std::log(std::log(u1) / std::log(u2));
    double want = sigmoid_ref((pi.value()[i] - noise) / tau);
    CHECK(s.value()[i] == doctest::Approx(want).epsilon(1e-15));
    CHECK(s.value()[i] > 0.0);
    CHECK(s.value()[i] < 1.0);
  }
}

TEST_CASE("gumbel_sigmoid_sample: saturated logits give gates near 1") {
  Tensor pi = Tensor::param({4}, std::vector<double>(4, 60.0));
  Rng rng(3, streams::kMaskNoise);
  Tensor s = gumbel_sigmoid_sample(pi, 1.0, rng);
  for (double v : s.value()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gumbel_sigmoid_sample: empirical mean at pi=0 matches Monte-Carlo oracle") {
  const std::size_t n = 100000;
  Tensor pi = Tensor::param({n}, std::vector<double>(n, 0.0));
  Rng rng(42, streams::kMaskNoise);
  Tensor s = gumbel_sigmoid_sample(pi, 1.0, rng);
  double mean = 0;
  for (double v : s.value()) mean += v;
  mean /= n;
  double var = 0;
  for (double v : s.value()) var += (v - mean) * (v - mean);
  var /= n;

  // independent oracle: same formula, straight scalar code, different stream
  Rng oracle(4242, 77);
  double omean = 0, osq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double u1 = std::clamp(oracle.uniform(), 1e-12, 1.0 - 1e-12);
    double u2 = std::clamp(oracle.uniform(), 1e-12, 1.0 - 1e-12);
    double v = sigmoid_ref(-std::log(std::log(u1) / std::log(u2)));
    omean += v;
    osq += v * v;
  }
  omean /= n;
  double ovar = osq / n - omean * omean;

  double se_mean = std::sqrt(var / n + ovar / n);
  CHECK(std::fabs(mean - omean) < 3 * se_mean);
}

TEST_CASE("binarize: hard forward values") {
  Tensor s = Tensor::param({2}, {0.7, 0.3});
  Tensor m = binarize(s, 0.5);
  CHECK(m.value() == std::vector<double>{1.0, 0.0});
}

TEST_CASE("binarize: straight-through gradient equals replace-m-by-s gradient") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor pi = testutil::random_param({8}, rng, -3, 3);
    Tensor c = random_constant({8}, rng, -2, 2);
    Rng noise(100 + trial, streams::kMaskNoise);
    Rng noise2 = noise;

    // path through the hard gate
    Tensor s1 = gumbel_sigmoid_sample(pi, 1.0, noise);
    Tensor loss1 = sum(mul(c, binarize(s1, 0.5)));
    pi.zero_grad();
    backward(loss1);
    auto grad_hard = pi.grad();

    // identical graph with m replaced by s (same noise draw)
    Tensor s2 = gumbel_sigmoid_sample(pi, 1.0, noise2);
    Tensor loss2 = sum(mul(c, s2));
    pi.zero_grad();
    backward(loss2);
    auto grad_soft = pi.grad();

    for (std::size_t i = 0; i < grad_hard.size(); ++i)
      CHECK(grad_hard[i] == doctest::Approx(grad_soft[i]).epsilon(1e-12));
    // forward stays exactly binary
    Tensor hard = binarize(s1, 0.5);
    for (double v : hard.value()) CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("masks are monotone in their logits under fixed noise") {
  Rng base(7, streams::kMaskNoise);
  for (int trial = 0; trial < 5; ++trial) {
    Rng n1 = base, n2 = base;
    Tensor lo = Tensor::param({6}, std::vector<double>(6, -0.4 + 0.1 * trial));
    Tensor hi = Tensor::param({6}, std::vector<double>(6, 0.3 + 0.1 * trial));
    Tensor s_lo = gumbel_sigmoid_sample(lo, 1.0, n1);
    Tensor s_hi = gumbel_sigmoid_sample(hi, 1.0, n2);
    for (std::size_t i = 0; i < 6; ++i) CHECK(s_hi.value()[i] >= s_lo.value()[i]);
    base.next_u64();  // advance so trials differ
  }
}

TEST_CASE("masked_forward: all-ones mask reproduces the dense forward") {
  auto net = small_net(8);
  MaskedModel model = make_masked_model(net, init_logits(net, 10.0, true), 3);
  model.masks.mode = MaskMode::kDeterministic;  // sigma(10) > 0.5 everywhere
  Rng rng(4);
  Tensor x = random_constant({5, 3}, rng);
  auto masked = masked_forward(model, x);
  auto dense = net.forward(x);
  for (std::size_t i = 0; i < masked.logits.numel(); ++i)
    CHECK(masked.logits.value()[i] == doctest::Approx(dense.logits.value()[i]).epsilon(1e-15));
}

TEST_CASE("masked_forward: all-zeros mask propagates biases only") {
  auto net = small_net(9, {2, 3, 2});
  // give the biases something visible
  for (auto& l : const_cast<std::vector<DenseLayer>&>(net.layers()))
    for (auto& b : l.bias.mutable_value()) b = 0.25;
  MaskedModel model = make_masked_model(net, init_logits(net, -10.0, true), 3);
  model.masks.mode = MaskMode::kDeterministic;
  Rng rng(4);
  Tensor x = random_constant({3, 2}, rng);
  auto out = masked_forward(model, x);
  // bias-only propagation: h1 = relu(b1), logits = b2 (all weights zeroed)
  double h = std::max(0.25, 0.0);
  (void)h;
  for (std::size_t i = 0; i < out.logits.numel(); ++i)
    CHECK(out.logits.value()[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("masked_forward: random frozen mask equals dense forward on zeroed weights") {
  auto net = small_net(10, {4, 6, 3});
  MaskSet masks = init_logits(net, 0.9, true);
  Rng gate_rng(55);
  masks.frozen.clear();
  for (const auto& t : masks.logits) {
    std::vector<double> m(t.numel());
    for (auto& v : m) v = gate_rng.bernoulli(0.5) ? 1.0 : 0.0;
    masks.frozen.push_back(std::move(m));
  }
  masks.mode = MaskMode::kFrozenBinary;
  MaskedModel model = make_masked_model(net, masks, 3);

  // oracle: hand-zeroed copy of the dense network
  DenseNetwork zeroed = net.clone();
  for (std::size_t s = 0; s < masks.masked_layers.size(); ++s) {
    auto& w = const_cast<std::vector<DenseLayer>&>(zeroed.layers())[masks.masked_layers[s]]
                  .weight.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i)
      if (masks.frozen[s][i] == 0.0) w[i] = 0.0;
  }

  Rng rng(6);
  Tensor x = random_constant({7, 4}, rng);
  auto got = masked_forward(model, x);
  auto want = zeroed.forward(x);
  for (std::size_t i = 0; i < got.logits.numel(); ++i)
    CHECK(got.logits.value()[i] == doctest::Approx(want.logits.value()[i]).epsilon(1e-15));
}

TEST_CASE("masked training leaves base weights bitwise unchanged") {
  auto net = small_net(12);
  auto before = net.parameters();
  std::vector<std::vector<double>> snapshot;
  for (const auto& p : before) snapshot.push_back(p.value());

  MaskedModel model = make_masked_model(net, init_logits(net, 0.9, true), 11);
  OptimizerState st(0.1, 0.9, 0.0, model.masks.logits);
  Rng rng(14);
  Tensor x = random_constant({6, 3}, rng);
  std::vector<int> ys = {0, 1, 0, 1, 1, 0};
  for (int step = 0; step < 5; ++step) {
    zero_grads(model.masks.logits);
    auto out = masked_forward(model, x);
    Tensor loss = add(cross_entropy(out.logits, ys), scale(sparsity_penalty(model.masks), 0.01));
    backward(loss);
    sgd_step(model.masks.logits, st);
  }
  auto after = net.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].value() == snapshot[i]);
}

TEST_CASE("sparsity_penalty: sums raw logits; gradient is one") {
  auto net = small_net(3, {10, 10, 2});  // hidden layer has 100 weights
  MaskSet m = init_logits(net, 0.9);
  REQUIRE(m.total_gates() == 100);
  Tensor pen = sparsity_penalty(m);
  CHECK(pen.item() == doctest::Approx(90.0).epsilon(1e-12));
  backward(pen);
  for (double g : m.logits[0].grad()) CHECK(g == doctest::Approx(1.0).epsilon(1e-15));

  MaskSet z = init_logits(net, 0.0);
  CHECK(sparsity_penalty(z).item() == 0.0);
}

TEST_CASE("sparsity_penalty: sigmoid variant") {
  auto net = small_net(3, {2, 2, 2});
  MaskSet m = init_logits(net, 0.9);
  m.penalty = SparsityPenalty::kSigmoid;
  CHECK(sparsity_penalty(m).item() == doctest::Approx(4 * sigmoid_ref(0.9)).epsilon(1e-12));
}

TEST_CASE("keep_ratio: frozen counts, sampled mode rejected") {
  auto net = small_net(4, {2, 2, 2});
  MaskSet m = init_logits(net, 0.9);
  m.frozen = {{1, 0, 1, 1}};
  m.mode = MaskMode::kFrozenBinary;
  CHECK(keep_ratio(m, 1.0) == doctest::Approx(0.75));

  m.mode = MaskMode::kSampled;
  CHECK_THROWS_AS(keep_ratio(m, 1.0), ValueError);
}

TEST_CASE("freeze_with_keep_ratio: hits the requested fraction within one gate") {
  auto net = small_net(6, {7, 13, 2});
  MaskSet m = init_logits(net, 0.9);
  Rng rng(77);
  for (auto& v : m.logits[0].mutable_value()) v = rng.uniform(-2, 2);
  const std::size_t total = m.total_gates();
  for (double keep : {0.25, 0.5, 0.8}) {
    MaskSet copy = m;
    freeze_with_keep_ratio(copy, keep, 1.0);
    double realized = keep_ratio(copy, 1.0);
    CHECK(std::fabs(realized - keep) <= 1.0 / static_cast<double>(total) + 1e-12);
  }
}

TEST_CASE("finalize_subnetwork") {
  auto net = small_net(15, {3, 5, 2});

  SUBCASE("identity mask returns the base network") {
    MaskedModel model = make_masked_model(net, init_logits(net, 5.0, true), 1);
    freeze(model.masks, model.masks.tau_g);
    DenseNetwork sub = finalize_subnetwork(model);
    for (std::size_t l = 0; l < sub.num_layers(); ++l)
      CHECK(sub.layers()[l].weight.value() == net.layers()[l].weight.value());
  }

  SUBCASE("zero mask zeroes all masked weights") {
    MaskedModel model = make_masked_model(net, init_logits(net, -5.0, true), 1);
    freeze(model.masks, model.masks.tau_g);
    DenseNetwork sub = finalize_subnetwork(model);
    for (std::size_t l = 0; l < sub.num_layers(); ++l)
      for (double w : sub.layers()[l].weight.value()) CHECK(w == 0.0);
  }

  SUBCASE("requires a frozen binary mask") {
    MaskedModel model = make_masked_model(net, init_logits(net, 0.9), 1);
    CHECK_THROWS_AS(finalize_subnetwork(model), ValueError);
  }

  SUBCASE("forward equivalence with frozen masked_forward on 100 random inputs") {
    MaskSet masks = init_logits(net, 0.9, true);
    Rng gate_rng(5);
    masks.frozen.clear();
    for (const auto& t : masks.logits) {
      std::vector<double> mm(t.numel());
      for (auto& v : mm) v = gate_rng.bernoulli(0.6) ? 1.0 : 0.0;
      masks.frozen.push_back(std::move(mm));
    }
    masks.mode = MaskMode::kFrozenBinary;
    MaskedModel model = make_masked_model(net, masks, 1);
    DenseNetwork sub = finalize_subnetwork(model);

    Rng rng(8);
    Tensor x = random_constant({100, 3}, rng, -3, 3);
    auto a = masked_forward(model, x);
    auto b = sub.forward(x);
    for (std::size_t i = 0; i < a.logits.numel(); ++i)
      CHECK(a.logits.value()[i] == doctest::Approx(b.logits.value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("clamp_logits bounds the values") {
  auto net = small_net(16, {2, 3, 2});
  MaskSet m = init_logits(net, 0.9);
  m.logits[0].mutable_value()[0] = 25.0;
  m.logits[0].mutable_value()[1] = -25.0;
  clamp_logits(m, 10.0);
  CHECK(m.logits[0].value()[0] == 10.0);
  CHECK(m.logits[0].value()[1] == -10.0);
}
