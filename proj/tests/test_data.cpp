#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "l2caf/data.hpp"
#include "test_support.hpp"

using namespace l2caf;
using namespace l2caf::testing;
namespace fs = std::filesystem;

namespace {

// Tight box recovered by scanning for pure class-color pixels. Background
// noise is capped at 0.5, so a saturated channel only occurs on the shape.
BoundingBox pixel_scan_box(const SyntheticSample& s) {
  const Tensor& img = s.image;
  int rmin = img.dim(0), rmax = -1, cmin = img.dim(1), cmax = -1;
  for (int r = 0; r < img.dim(0); ++r)
    for (int c = 0; c < img.dim(1); ++c)
      if (img.at3(r, c, 0) > 0.9 || img.at3(r, c, 1) > 0.9 || img.at3(r, c, 2) > 0.9) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
  return BoundingBox{cmin, rmin, cmax + 1, rmax + 1};
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("shape generation basics") {
  ShapeDatasetConfig cfg;
  cfg.n = 50;
  cfg.seed = 401;
  auto samples = generate_shapes(cfg);
  REQUIRE(samples.size() == 50);

  SUBCASE("boxes are valid, in bounds, and tight against a pixel scan") {
    for (const auto& s : samples) {
      CHECK(s.box.valid());
      CHECK(s.box.x_min >= 0);
      CHECK(s.box.y_min >= 0);
      CHECK(s.box.x_max <= cfg.width);
      CHECK(s.box.y_max <= cfg.height);
      CHECK(s.box == pixel_scan_box(s));
    }
  }
  SUBCASE("pixel values stay in range") {
    for (const auto& s : samples) {
      CHECK(s.image.min() >= 0.0);
      CHECK(s.image.max() <= 1.0);
      CHECK(s.image.all_finite());
    }
  }
  SUBCASE("shape sizes respect the configured scale band") {
    for (const auto& s : samples) {
      const int side = std::max(s.box.x_max - s.box.x_min, s.box.y_max - s.box.y_min);
      CHECK(side >= 3);
      CHECK(side <= static_cast<int>(cfg.max_scale * cfg.width) + 1);
    }
  }
}

TEST_CASE("zero noise leaves the background exactly empty") {
  ShapeDatasetConfig cfg;
  cfg.n = 10;
  cfg.noise_sigma = 0.0;
  cfg.seed = 402;
  for (const auto& s : generate_shapes(cfg)) {
    for (int r = 0; r < cfg.height; ++r)
      for (int c = 0; c < cfg.width; ++c) {
        const bool inside = c >= s.box.x_min && c < s.box.x_max && r >= s.box.y_min && r < s.box.y_max;
        if (!inside)
          for (int ch = 0; ch < 3; ++ch) CHECK(s.image.at3(r, c, ch) == 0.0);
      }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  ShapeDatasetConfig cfg;
  cfg.n = 20;
  cfg.seed = 403;
  auto a = generate_shapes(cfg);
  auto b = generate_shapes(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bitwise_equal(a[i].image, b[i].image));
    CHECK(a[i].box == b[i].box);
    CHECK(a[i].class_id == b[i].class_id);
  }
  cfg.seed = 404;
  auto c = generate_shapes(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= !bitwise_equal(a[i].image, c[i].image);
  CHECK(any_diff);
}

TEST_CASE("classes are roughly balanced for large n") {
  ShapeDatasetConfig cfg;
  cfg.n = 400;
  cfg.seed = 405;
  auto samples = generate_shapes(cfg);
  std::map<int, int> counts;
  for (const auto& s : samples) ++counts[s.class_id];
  CHECK(counts.size() == cfg.classes.size());
  const double expect = static_cast<double>(cfg.n) / cfg.classes.size();
  for (auto& [cls, n] : counts) {
    CHECK(n >= expect * 0.8);
    CHECK(n <= expect * 1.2);
  }
}

TEST_CASE("config validation") {
  ShapeDatasetConfig cfg;
  cfg.height = 8;
  CHECK_THROWS_AS(generate_shapes(cfg), std::invalid_argument);
  cfg = ShapeDatasetConfig{};
  cfg.n = 0;
  CHECK_THROWS_AS(generate_shapes(cfg), std::invalid_argument);
  cfg = ShapeDatasetConfig{};
  cfg.classes.clear();
  CHECK_THROWS_AS(generate_shapes(cfg), std::invalid_argument);
}

TEST_CASE("sequences translate one shape along a line") {
  ShapeDatasetConfig cfg;
  cfg.seed = 406;
  auto events = generate_sequences(30, 4, cfg);
  REQUIRE(events.size() == 30);

  SUBCASE("every frame keeps the class and a valid tight box") {
    for (const auto& seq : events) {
      REQUIRE(seq.size() == 4);
      for (const auto& f : seq) {
        CHECK(f.class_id == seq[0].class_id);
        CHECK(f.box.valid());
        CHECK(f.box == pixel_scan_box(f));
      }
    }
  }
  SUBCASE("box sizes stay constant and centers move collinearly") {
    for (const auto& seq : events) {
      const int w0 = seq[0].box.x_max - seq[0].box.x_min;
      const int h0 = seq[0].box.y_max - seq[0].box.y_min;
      for (const auto& f : seq) {
        CHECK(f.box.x_max - f.box.x_min == w0);
        CHECK(f.box.y_max - f.box.y_min == h0);
      }
      // integer velocities: consecutive deltas repeat exactly
      const int dx = seq[1].box.x_min - seq[0].box.x_min;
      const int dy = seq[1].box.y_min - seq[0].box.y_min;
      for (std::size_t t = 1; t < seq.size(); ++t) {
        CHECK(seq[t].box.x_min - seq[t - 1].box.x_min == dx);
        CHECK(seq[t].box.y_min - seq[t - 1].box.y_min == dy);
      }
      // centers against the fitted line: exact for integer velocities
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const double cx = (seq[t].box.x_min + seq[t].box.x_max) / 2.0;
        const double ideal = (seq[0].box.x_min + seq[0].box.x_max) / 2.0 + dx * static_cast<double>(t);
        CHECK(std::fabs(cx - ideal) <= 0.5);
      }
    }
  }
  SUBCASE("single-frame sequences look like plain samples") {
    auto single = generate_sequences(5, 1, cfg);
    for (const auto& seq : single) {
      REQUIRE(seq.size() == 1);
      CHECK(seq[0].box == pixel_scan_box(seq[0]));
    }
  }
  SUBCASE("some events truly move and some may rest") {
    int moving = 0;
    for (const auto& seq : events)
      if (seq[1].box.x_min != seq[0].box.x_min || seq[1].box.y_min != seq[0].box.y_min) ++moving;
    CHECK(moving > 0);
  }
}

TEST_CASE("dataset dump writes images and a manifest") {
  ShapeDatasetConfig cfg;
  cfg.n = 4;
  cfg.seed = 407;
  auto samples = generate_shapes(cfg);
  const auto dir = fs::temp_directory_path() / "l2caf_test_dump";
  fs::remove_all(dir);
  dump_dataset(dir.string(), samples);

  CHECK(fs::exists(dir / "manifest.csv"));
  for (int i = 0; i < 4; ++i) CHECK(fs::exists(dir / ("img" + std::to_string(i) + ".ppm")));

  std::ifstream manifest(dir / "manifest.csv");
  std::string header;
  std::getline(manifest, header);
  CHECK(header == "id,class,x_min,y_min,x_max,y_max,seed");
  int rows = 0;
  for (std::string line; std::getline(manifest, line);) ++rows;
  CHECK(rows == 4);

  std::ifstream ppm(dir / "img0.ppm", std::ios::binary);
  std::string magic;
  ppm >> magic;
  CHECK(magic == "P6");
}
