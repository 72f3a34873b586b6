#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "l2caf/data.hpp"
#include "l2caf/kernels.hpp"
#include "l2caf/model_io.hpp"
#include "l2caf/network.hpp"
#include "l2caf/training.hpp"
#include "test_support.hpp"

using namespace l2caf;
using namespace l2caf::testing;
namespace k = l2caf::kernels;
namespace fs = std::filesystem;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool models_bitwise_equal(const NetworkModel& a, const NetworkModel& b) {
  if (a.weights.size() != b.weights.size()) return false;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    if (a.weights[i].size() != b.weights[i].size()) return false;
    for (std::size_t j = 0; j < a.weights[i].size(); ++j)
      if (!bitwise_equal(a.weights[i][j], b.weights[i][j])) return false;
  }
  return true;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "l2caf_test_network";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("forward through a dense identity layer") {
  NetworkModel m = build_network({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2)},
                                 HeadKind::kLogits, 0);
  m.weights[1][0] = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
  m.weights[1][1] = Tensor({2});
  Tensor out = forward(m, Tensor({1, 1, 2}, {1.0, 2.0}));
  CHECK(bitwise_equal(out, Tensor({2}, {1.0, 2.0})));
}

TEST_CASE("identity conv plus GAP averages a constant input") {
  NetworkModel m = build_network({4, 4, 1}, {LayerSpec::conv(1, 1, 1, 1, 0), LayerSpec::gap()},
                                 HeadKind::kLogits, 0);
  m.weights[0][0] = Tensor({1, 1, 1, 1}, {1.0});
  Tensor out = forward(m, Tensor::full({4, 4, 1}, 3.25));
  REQUIRE(out.size() == 1);
  CHECK(out[0] == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("forward equals manual layer-by-layer composition") {
  SplitRng rng(11);
  for (int rep = 0; rep < 8; ++rep) {
    NetworkModel m = random_toy_net(rng, rep % 2 ? HeadKind::kLogits : HeadKind::kEmbedding);
    Tensor x = random_tensor(m.input_shape, rng);
    ActivationTrace trace;
    Tensor out = forward(m, x, &trace);

    Tensor cur = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      const LayerSpec& s = m.layers[i];
      switch (s.kind) {
        case LayerKind::kConv: cur = naive_conv2d(cur, m.weights[i][0], s.stride, s.padding); break;
        case LayerKind::kRelu: cur = k::relu(cur); break;
        case LayerKind::kGap: cur = k::global_average_pool(cur); break;
        case LayerKind::kFlatten:
          cur = Tensor({cur.size()}, std::vector<double>(cur.data(), cur.data() + cur.size()));
          break;
        case LayerKind::kDense: cur = k::dense(m.weights[i][0], cur, m.weights[i][1]); break;
        case LayerKind::kEmbedNormalize: cur = k::l2_normalize(cur); break;
        default: FAIL("unexpected layer");
      }
      CHECK(max_abs_diff(trace.outputs[i], cur) < 1e-12);
    }
    CHECK(max_abs_diff(out, cur) < 1e-12);
    CHECK(out.all_finite());
  }
}

TEST_CASE("forward rejects a wrong input shape") {
  NetworkModel m = make_preset("tiny-cls", 1);
  CHECK_THROWS_AS(forward(m, Tensor({16, 16, 3})), ShapeError);
}

TEST_CASE("filtered forward across a 1x1 spatial map is the identity") {
  NetworkModel m = build_network(
      {4, 4, 1}, {LayerSpec::conv(4, 4, 2, 1, 0), LayerSpec::gap(), LayerSpec::dense(2)},
      HeadKind::kLogits, 3);
  SplitRng rng(12);
  Tensor x = random_tensor({4, 4, 1}, rng);
  Tensor nt = forward(m, x);
  Tensor ft = filtered_forward(m, x, 0, Tensor({1, 1}, {0.7}));
  CHECK(bitwise_equal(nt, ft));
}

TEST_CASE("one-hot filter exposes only the selected cell downstream") {
  NetworkModel m = make_preset("tiny-cls", 5, true, 3, 16);
  const int at = m.endpoint("features");
  SplitRng rng(13);
  ActivationTrace trace;
  forward(m, random_tensor(m.input_shape, rng, 0.0, 1.0), &trace);
  Tensor v = trace.outputs[static_cast<std::size_t>(at)];

  Tensor onehot({v.dim(0), v.dim(1)});
  onehot.at2(1, 2) = 1.0;
  Tensor out1 = filtered_forward_from(m, v, at, onehot);

  Tensor v2 = v;  // change everything except the selected cell
  for (int i = 0; i < v2.dim(0); ++i)
    for (int j = 0; j < v2.dim(1); ++j)
      for (int c = 0; c < v2.dim(2); ++c)
        if (!(i == 1 && j == 2)) v2.at3(i, j, c) += rng.uniform(0.5, 1.0);
  Tensor out2 = filtered_forward_from(m, v2, at, onehot);
  CHECK(bitwise_equal(out1, out2));
}

TEST_CASE("filtered forward from input and from the cached activation agree bitwise") {
  SplitRng rng(14);
  for (int rep = 0; rep < 6; ++rep) {
    NetworkModel m = random_toy_net(rng, HeadKind::kLogits);
    const int at = m.endpoint("features");
    Tensor x = random_tensor(m.input_shape, rng);
    ActivationTrace trace;
    forward(m, x, &trace);
    const Tensor& v = trace.outputs[static_cast<std::size_t>(at)];
    Tensor f = random_tensor({v.dim(0), v.dim(1)}, rng, 0.1, 1.0);
    CHECK(bitwise_equal(filtered_forward(m, x, at, f), filtered_forward_from(m, v, at, f)));
  }
}

TEST_CASE("endpoint consistency: resuming from any traced layer matches the full pass") {
  SplitRng rng(15);
  for (int rep = 0; rep < 6; ++rep) {
    NetworkModel m = random_toy_net(rng, HeadKind::kEmbedding);
    Tensor x = random_tensor(m.input_shape, rng);
    ActivationTrace trace;
    Tensor out = forward(m, x, &trace);
    for (int i = 0; i < static_cast<int>(m.layers.size()); ++i)
      CHECK(bitwise_equal(forward_from(m, trace.outputs[static_cast<std::size_t>(i)], i), out));
  }
}

TEST_CASE("build-time shape checking matches an independent oracle on a fuzz corpus") {
  SplitRng rng(16);
  int accepted = 0, rejected = 0;
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<int> input{rng.uniform_int(4, 8), rng.uniform_int(4, 8), rng.uniform_int(1, 3)};
    std::vector<LayerSpec> layers;
    const int n = rng.uniform_int(1, 5);
    for (int i = 0; i < n; ++i) {
      switch (rng.uniform_int(0, 5)) {
        case 0:
          layers.push_back(LayerSpec::conv(rng.uniform_int(1, 5), rng.uniform_int(1, 5),
                                           rng.uniform_int(1, 4), rng.uniform_int(1, 2),
                                           rng.uniform_int(0, 1)));
          break;
        case 1: layers.push_back(LayerSpec::relu()); break;
        case 2: layers.push_back(LayerSpec::gap()); break;
        case 3: layers.push_back(LayerSpec::flatten()); break;
        case 4: layers.push_back(LayerSpec::dense(rng.uniform_int(1, 5))); break;
        case 5: layers.push_back(LayerSpec::embed_normalize()); break;
      }
    }

    // independent rank-tracking oracle
    bool oracle_ok = true;
    {
      std::vector<int> cur = input;
      for (const auto& s : layers) {
        if (s.kind == LayerKind::kConv) {
          if (cur.size() != 3 || cur[0] + 2 * s.padding < s.kh || cur[1] + 2 * s.padding < s.kw) {
            oracle_ok = false;
            break;
          }
          cur = {(cur[0] + 2 * s.padding - s.kh) / s.stride + 1,
                 (cur[1] + 2 * s.padding - s.kw) / s.stride + 1, s.c_out};
        } else if (s.kind == LayerKind::kGap) {
          if (cur.size() != 3) {
            oracle_ok = false;
            break;
          }
          cur = {cur[2]};
        } else if (s.kind == LayerKind::kFlatten) {
          int total = 1;
          for (int d : cur) total *= d;
          cur = {total};
        } else if (s.kind == LayerKind::kDense || s.kind == LayerKind::kEmbedNormalize) {
          if (cur.size() != 1) {
            oracle_ok = false;
            break;
          }
          if (s.kind == LayerKind::kDense) cur = {s.out_dim};
        }
      }
      if (oracle_ok && cur.size() != 1) oracle_ok = false;  // flat output required
    }

    bool built = true;
    NetworkModel m;
    try {
      m = build_network(input, layers, HeadKind::kLogits, rng.next_u64());
    } catch (const ShapeError&) {
      built = false;
    }
    CHECK(built == oracle_ok);
    if (built) {
      ++accepted;
      Tensor x = random_tensor(input, rng);
      CHECK_NOTHROW(forward(m, x));  // accepted networks never fail at run time
    } else {
      ++rejected;
    }
  }
  CHECK(accepted > 10);
  CHECK(rejected > 10);
}

TEST_CASE("classifier training separates two synthetic classes") {
  ShapeDatasetConfig cfg;
  cfg.n = 60;
  cfg.height = cfg.width = 16;
  cfg.classes = {ShapeClass::kSquare, ShapeClass::kDisk};
  cfg.seed = 21;
  auto data = generate_shapes(cfg);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (auto& s : data) {
    images.push_back(s.image);
    labels.push_back(s.class_id == static_cast<int>(ShapeClass::kSquare) ? 0 : 1);
  }

  NetworkModel m = build_network(
      {16, 16, 3},
      {LayerSpec::conv(3, 3, 6, 2, 1), LayerSpec::relu(), LayerSpec::conv(3, 3, 8, 2, 1),
       LayerSpec::relu(), LayerSpec::gap(), LayerSpec::dense(2)},
      HeadKind::kLogits, 22);

  SUBCASE("reaches high training accuracy") {
    NetworkModel trained = train_classifier(m, images, labels, 20, 0.8, 7);
    int correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
      correct += argmax(forward(trained, images[i])) == labels[i] ? 1 : 0;
    CHECK(static_cast<double>(correct) / images.size() >= 0.99);
  }
  SUBCASE("zero learning rate leaves the weights untouched") {
    NetworkModel out = train_classifier(m, images, labels, 2, 0.0, 7);
    CHECK(models_bitwise_equal(out, m));
  }
  SUBCASE("same seed reproduces the final weights bitwise") {
    NetworkModel a = train_classifier(m, images, labels, 3, 0.8, 7);
    NetworkModel b = train_classifier(m, images, labels, 3, 0.8, 7);
    CHECK(models_bitwise_equal(a, b));
  }
  SUBCASE("empty dataset is rejected") {
    CHECK_THROWS_AS(train_classifier(m, {}, {}, 1, 0.8, 7), std::invalid_argument);
  }
}

TEST_CASE("retrieval training pulls same-class samples together") {
  ShapeDatasetConfig cfg;
  cfg.n = 60;
  cfg.height = cfg.width = 16;
  cfg.classes = {ShapeClass::kSquare, ShapeClass::kDisk};
  cfg.seed = 23;
  auto data = generate_shapes(cfg);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (auto& s : data) {
    images.push_back(s.image);
    labels.push_back(s.class_id);
  }

  NetworkModel m = build_network(
      {16, 16, 3},
      {LayerSpec::conv(3, 3, 6, 2, 1), LayerSpec::relu(), LayerSpec::conv(3, 3, 8, 2, 1),
       LayerSpec::relu(), LayerSpec::gap(), LayerSpec::dense(8), LayerSpec::embed_normalize()},
      HeadKind::kEmbedding, 24);

  SUBCASE("triplet training achieves perfect R@1 on the training set") {
    TrainLog log;
    NetworkModel trained = train_retrieval(m, images, labels, RetrievalLoss::kTriplet, 12, 0.5, 9, &log);
    CHECK(log.monitor_final < log.monitor_initial);

    int hits = 0;
    std::vector<Tensor> emb;
    for (auto& img : images) emb.push_back(forward(trained, img));
    for (std::size_t i = 0; i < emb.size(); ++i) {
      int best = -1;
      double best_d = 1e300;
      for (std::size_t j = 0; j < emb.size(); ++j) {
        if (i == j) continue;
        double d = euclidean_distance(emb[i], emb[j]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(j);
        }
      }
      hits += labels[static_cast<std::size_t>(best)] == labels[i] ? 1 : 0;
    }
    CHECK(static_cast<double>(hits) / images.size() == 1.0);
  }
  SUBCASE("zero epochs leaves the model unchanged") {
    NetworkModel out = train_retrieval(m, images, labels, RetrievalLoss::kTriplet, 0, 0.5, 9);
    CHECK(models_bitwise_equal(out, m));
  }
  SUBCASE("logits-head models are rejected") {
    NetworkModel cls = make_preset("tiny-cls", 1, true, 2, 16);
    CHECK_THROWS_AS(train_retrieval(cls, images, labels, RetrievalLoss::kTriplet, 1, 0.5, 9),
                    IncompatibilityError);
  }
}

TEST_CASE("model serialization") {
  NetworkModel m = make_preset("tiny-rnn", 31, true, 4, 16);
  const auto dir = temp_dir();
  const std::string path = (dir / "model.tnet").string();
  save_model(m, path);

  SUBCASE("round-trip reproduces specs and weights bitwise") {
    NetworkModel r = load_model(path);
    CHECK(models_bitwise_equal(m, r));
    CHECK(r.layers.size() == m.layers.size());
    CHECK(r.head == m.head);
    CHECK(r.head_size == m.head_size);
    CHECK(r.endpoints == m.endpoints);
    CHECK(r.input_shape == m.input_shape);
  }
  SUBCASE("a corrupted blob byte raises a checksum error") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes[bytes.size() - 3] ^= 0x40;
    const std::string bad = (dir / "bad.tnet").string();
    std::ofstream(bad, std::ios::binary) << bytes;
    try {
      load_model(bad);
      FAIL("expected a checksum error");
    } catch (const ModelIoError& e) {
      CHECK(e.code() == ModelIoError::Code::kChecksumMismatch);
    }
  }
  SUBCASE("a truncated blob is reported as such") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes.resize(bytes.size() - 64);
    const std::string bad = (dir / "short.tnet").string();
    std::ofstream(bad, std::ios::binary) << bytes;
    try {
      load_model(bad);
      FAIL("expected a truncation error");
    } catch (const ModelIoError& e) {
      CHECK(e.code() == ModelIoError::Code::kTruncatedBlob);
    }
  }
  SUBCASE("a manifest that drops a tensor is a manifest error") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto sep = bytes.find('\0');
    std::string manifest = bytes.substr(0, sep);
    const auto cut = manifest.rfind(R"({"bytes")");
    REQUIRE(cut != std::string::npos);
    const auto end = manifest.find('}', cut);
    manifest.erase(cut, end - cut + 2);  // drop one tensor entry and the comma
    const std::string bad = (dir / "missing.tnet").string();
    std::ofstream(bad, std::ios::binary) << manifest << '\0' << bytes.substr(sep + 1);
    try {
      load_model(bad);
      FAIL("expected a manifest error");
    } catch (const ModelIoError& e) {
      CHECK(e.code() == ModelIoError::Code::kManifest);
    }
  }
  SUBCASE("garbage manifests are manifest errors") {
    const std::string bad = (dir / "garbage.tnet").string();
    std::ofstream(bad, std::ios::binary) << "this is not json" << '\0' << "blob";
    try {
      load_model(bad);
      FAIL("expected a manifest error");
    } catch (const ModelIoError& e) {
      CHECK(e.code() == ModelIoError::Code::kManifest);
    }
  }
  SUBCASE("missing files are io errors") {
    try {
      load_model((dir / "nope.tnet").string());
      FAIL("expected an io error");
    } catch (const ModelIoError& e) {
      CHECK(e.code() == ModelIoError::Code::kIo);
    }
  }
}

TEST_CASE("randomize") {
  NetworkModel m = make_preset("tiny-cls", 41);
  SUBCASE("logits scope keeps conv weights bitwise intact") {
    NetworkModel r = randomize(m, RandomizeScope::kLogitsLayer, 5);
    for (std::size_t i = 0; i + 1 < m.layers.size(); ++i)
      for (std::size_t j = 0; j < m.weights[i].size(); ++j)
        CHECK(bitwise_equal(m.weights[i][j], r.weights[i][j]));
    CHECK_FALSE(bitwise_equal(m.weights.back()[0], r.weights.back()[0]));
    for (int i = 0; i < r.weights.back()[0].size(); ++i) {
      CHECK(r.weights.back()[0][i] >= -0.1);
      CHECK(r.weights.back()[0][i] <= 0.1);
    }
  }
  SUBCASE("different seeds produce different logits weights") {
    NetworkModel a = randomize(m, RandomizeScope::kLogitsLayer, 5);
    NetworkModel b = randomize(m, RandomizeScope::kLogitsLayer, 6);
    CHECK_FALSE(bitwise_equal(a.weights.back()[0], b.weights.back()[0]));
  }
  SUBCASE("all-layers scope changes every weight tensor") {
    NetworkModel r = randomize(m, RandomizeScope::kAllLayers, 5);
    for (std::size_t i = 0; i < m.layers.size(); ++i)
      for (std::size_t j = 0; j < m.weights[i].size(); ++j)
        if (m.weights[i][j].size() > 0 && m.weights[i][j].l2_norm() > 0.0)
          CHECK_FALSE(bitwise_equal(m.weights[i][j], r.weights[i][j]));
  }
  SUBCASE("logits scope rejects embedding heads") {
    NetworkModel ret = make_preset("tiny-ret", 42);
    CHECK_THROWS_AS(randomize(ret, RandomizeScope::kLogitsLayer, 5), IncompatibilityError);
  }
}

TEST_CASE("recurrent forward consumes frame sequences") {
  NetworkModel m = make_preset("tiny-rnn", 51, true, 4, 16);
  SplitRng rng(52);
  std::vector<Tensor> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(random_tensor(m.input_shape, rng, 0.0, 1.0));

  SequenceTrace trace;
  Tensor out = forward_sequence(m, frames, &trace);
  CHECK(out.size() == 32);
  CHECK(out.all_finite());
  CHECK(trace.frames.size() == 3);
  CHECK(trace.hidden.size() == 3);

  // single-frame forward goes through the same machinery
  Tensor single = forward(m, frames[0]);
  Tensor single_seq = forward_sequence(m, {frames[0]});
  CHECK(bitwise_equal(single, single_seq));

  CHECK_THROWS_AS(forward_sequence(make_preset("tiny-cls", 1), frames), IncompatibilityError);
}
