#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "l2caf/baselines.hpp"
#include "l2caf/evaluation.hpp"
#include "l2caf/kernels.hpp"
#include "l2caf/network.hpp"
#include "test_support.hpp"

using namespace l2caf;
using namespace l2caf::testing;
namespace k = l2caf::kernels;

namespace {

NetworkModel identity_feature_net(int h, int w, std::vector<LayerSpec> tail, HeadKind head) {
  std::vector<LayerSpec> layers{LayerSpec::conv(1, 1, 1, 1, 0)};
  for (auto& t : tail) layers.push_back(t);
  NetworkModel m = build_network({h, w, 1}, layers, head, 0);
  m.weights[0][0] = Tensor({1, 1, 1, 1}, {1.0});
  return m;
}

double pearson_on_positive_support(const Tensor& a, const Tensor& b) {
  std::vector<double> xs, ys;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] > 0.0 || b[i] > 0.0) {
      xs.push_back(a[i]);
      ys.push_back(b[i]);
    }
  REQUIRE(xs.size() >= 2);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    vx += (xs[i] - mx) * (xs[i] - mx);
    vy += (ys[i] - my) * (ys[i] - my);
  }
  REQUIRE(vx > 0.0);
  REQUIRE(vy > 0.0);
  return num / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("grad-cam on the averaging head recovers the rectified map") {
  // y = GAP(A) with one channel: dy/dA = 1/(w*h) everywhere
  NetworkModel m = identity_feature_net(5, 6, {LayerSpec::gap(), LayerSpec::dense(1)},
                                        HeadKind::kLogits);
  m.weights[2][0] = Tensor({1, 1}, {1.0});
  SplitRng rng(201);
  Tensor x = random_tensor({5, 6, 1}, rng);  // mixed signs

  SaliencyMap map = grad_cam(m, x, 0, 0);
  const double alpha = 1.0 / 30.0;
  for (int i = 0; i < x.size(); ++i)
    CHECK(map.grid[i] == doctest::Approx(std::max(0.0, x[i]) * alpha).epsilon(1e-12));
}

TEST_CASE("all-negative gradients annihilate the grad-cam map") {
  NetworkModel m = identity_feature_net(5, 5, {LayerSpec::gap(), LayerSpec::dense(1)},
                                        HeadKind::kLogits);
  m.weights[2][0] = Tensor({1, 1}, {-1.0});
  SplitRng rng(202);
  Tensor x = random_tensor({5, 5, 1}, rng, 0.1, 1.0);
  SaliencyMap map = grad_cam(m, x, 0, 0);
  CHECK(map.grid.max() == 0.0);
  CHECK(map.degenerate());
}

TEST_CASE("grad-cam equals cam up to one positive scale on GAP heads") {
  SplitRng rng(203);
  for (int rep = 0; rep < 20; ++rep) {
    NetworkModel m = random_toy_net(rng, HeadKind::kLogits);  // conv blocks + GAP + dense
    Tensor x = random_tensor(m.input_shape, rng, 0.0, 1.0);
    const int at = m.endpoint("features");
    const int cls = rng.uniform_int(0, m.head_size - 1);
    SaliencyMap g = grad_cam(m, x, at, cls);
    SaliencyMap c = cam(m, x, cls);
    if (g.grid.max() == 0.0) {
      CHECK(c.grid.max() == 0.0);  // both annihilated
      continue;
    }
    CHECK(pearson_on_positive_support(g.grid, c.grid) >= 0.999);
    // exact relation: cam = grad_cam * (w*h)
    const double scale = static_cast<double>(g.grid.size());
    for (int i = 0; i < g.grid.size(); ++i)
      CHECK(c.grid[i] == doctest::Approx(g.grid[i] * scale).epsilon(1e-9));
  }
}

TEST_CASE("grad-cam rejects embedding heads and bad classes") {
  NetworkModel ret = make_preset("tiny-ret", 7, true, 4, 16);
  NetworkModel cls = make_preset("tiny-cls", 7, true, 4, 16);
  SplitRng rng(204);
  Tensor x = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(grad_cam(ret, x, ret.endpoint("features"), 0), IncompatibilityError);
  CHECK_THROWS_AS(grad_cam(cls, x, cls.endpoint("features"), 9), std::out_of_range);
  CHECK_THROWS_AS(grad_cam_retrieval(cls, x, cls.endpoint("features"), RetrievalCamMode::kRelu),
                  IncompatibilityError);
}

TEST_CASE("negative-space embeddings break the rectified retrieval map but not the abs one") {
  // embedding = -GAP(A): every gradient is negative while A stays positive
  NetworkModel m = identity_feature_net(8, 8, {LayerSpec::gap(), LayerSpec::dense(1)},
                                        HeadKind::kEmbedding);
  m.weights[2][0] = Tensor({1, 1}, {-1.0});
  SplitRng rng(205);
  Tensor x = random_tensor({8, 8, 1}, rng, 0.1, 1.0);

  SaliencyMap vanilla = grad_cam_retrieval(m, x, 0, RetrievalCamMode::kRelu);
  SaliencyMap abs_map = grad_cam_retrieval(m, x, 0, RetrievalCamMode::kAbs);

  CHECK(vanilla.degenerate());
  CHECK_FALSE(abs_map.degenerate());
  // abs map is proportional to A itself
  Tensor flat_a({x.size()});
  Tensor flat_m({x.size()});
  for (int i = 0; i < x.size(); ++i) {
    flat_a[i] = x[i];
    flat_m[i] = abs_map.grid[i];
  }
  CHECK(cosine_similarity(flat_a, flat_m) > 0.999999);
}

TEST_CASE("abs map dominates the rectified map elementwise") {
  SplitRng rng(206);
  for (int rep = 0; rep < 10; ++rep) {
    NetworkModel m = random_toy_net(rng, HeadKind::kEmbedding);
    Tensor x = random_tensor(m.input_shape, rng, 0.0, 1.0);
    const int at = m.endpoint("features");
    SaliencyMap vanilla = grad_cam_retrieval(m, x, at, RetrievalCamMode::kRelu);
    SaliencyMap abs_map = grad_cam_retrieval(m, x, at, RetrievalCamMode::kAbs);
    for (int i = 0; i < vanilla.grid.size(); ++i) {
      CHECK(abs_map.grid[i] >= vanilla.grid[i] - 1e-15);
      CHECK(abs_map.grid[i] >= 0.0);
      // where the rectifier kept the value, the two maps agree
      if (vanilla.grid[i] > 0.0)
        CHECK(abs_map.grid[i] == doctest::Approx(vanilla.grid[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("retrieval channel weights match finite differences") {
  // unnormalized embedding so the scalar target is a plain sum of outputs
  NetworkModel m = make_preset("tiny-ret", 209, false, 4, 16);
  SplitRng rng(210);
  Tensor x = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
  const int at = m.endpoint("features");

  ActivationTrace trace;
  forward(m, x, &trace);
  const Tensor v = trace.outputs[static_cast<std::size_t>(at)];
  const int h = v.dim(0), w = v.dim(1), c = v.dim(2);

  // recompute alpha from the map relation: map = sum_k alpha_k A^k is hard to
  // invert, so check the underlying gradient along uniform channel bumps:
  // d(sum y)/d(uniform bump on channel k) = (w*h) * alpha_k
  SaliencyMap abs_map = grad_cam_retrieval(m, x, at, RetrievalCamMode::kAbs);
  for (int ch = 0; ch < c; ++ch) {
    const double step = 1e-6;
    Tensor vp = v, vm = v;
    for (int i = 0; i < h * w; ++i) {
      vp[i * c + ch] += step;
      vm[i * c + ch] -= step;
    }
    const double fd = (forward_from(m, vp, at).sum() - forward_from(m, vm, at).sum()) / (2 * step);

    // independent alpha via the tape
    Tape t;
    TapedWeights tw(t, m);
    std::vector<ValueId> nodes;
    taped_forward(t, tw, t.leaf(x), -1, m.output_layer(), std::nullopt, &nodes);
    t.backward(t.sum(nodes.back()));
    Tensor ga = t.grad(nodes[static_cast<std::size_t>(at)]);
    double alpha = 0.0;
    for (int i = 0; i < h * w; ++i) alpha += ga[i * c + ch];

    const double scale = std::max({1.0, std::fabs(fd), std::fabs(alpha)});
    CHECK(std::fabs(fd - alpha) / scale < 1e-5);
  }
  CHECK(abs_map.grid.min() >= 0.0);
}

TEST_CASE("cam selects the weighted channel combination") {
  NetworkModel m = build_network(
      {6, 6, 2},
      {LayerSpec::conv(1, 1, 3, 1, 0), LayerSpec::relu(), LayerSpec::gap(), LayerSpec::dense(2)},
      HeadKind::kLogits, 222);
  SplitRng rng(223);
  Tensor x = random_tensor({6, 6, 2}, rng, 0.0, 1.0);
  ActivationTrace trace;
  forward(m, x, &trace);
  const Tensor& a = trace.outputs[1];  // post-relu feature map

  SUBCASE("one-hot class column picks one channel") {
    m.weights[3][0] = Tensor({2, 3});
    m.weights[3][0][0 * 3 + 1] = 1.0;  // class 0 reads channel 1
    SaliencyMap map = cam(m, x, 0);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        CHECK(map.grid.at2(i, j) == doctest::Approx(std::max(0.0, a.at3(i, j, 1))).epsilon(1e-12));
  }
  SUBCASE("zero class column gives the zero map") {
    m.weights[3][0] = Tensor({2, 3});
    SaliencyMap map = cam(m, x, 0);
    CHECK(map.grid.max() == 0.0);
  }
  SUBCASE("architecture precondition is enforced") {
    NetworkModel flat = build_network(
        {6, 6, 2}, {LayerSpec::conv(3, 3, 2, 1, 0), LayerSpec::flatten(), LayerSpec::dense(2)},
        HeadKind::kLogits, 224);
    CHECK_THROWS_AS(cam(flat, x, 0), IncompatibilityError);
  }
}

TEST_CASE("grad-cam ignores the logit bias entirely") {
  NetworkModel m = make_preset("tiny-cls", 231, true, 4, 16);
  SplitRng rng(232);
  Tensor x = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
  const int at = m.endpoint("features");
  SaliencyMap before = grad_cam(m, x, at, 2);

  auto& bias = m.weights.back()[1];
  for (int i = 0; i < bias.size(); ++i) bias[i] = bias[i] * 7.5 + 0.3;
  SaliencyMap after = grad_cam(m, x, at, 2);

  CHECK(max_abs_diff(before.grid, after.grid) == 0.0);
}
