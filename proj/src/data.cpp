#include "l2caf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "l2caf/csv.hpp"
#include "l2caf/image_io.hpp"
#include "l2caf/rng.hpp"

namespace l2caf {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb class_color(ShapeClass c) {
  switch (c) {
    case ShapeClass::kSquare: return {1.0, 0.15, 0.15};
    case ShapeClass::kDisk: return {0.15, 1.0, 0.15};
    case ShapeClass::kCross: return {0.15, 0.15, 1.0};
    case ShapeClass::kTriangle: return {1.0, 1.0, 0.15};
    case ShapeClass::kRing: return {1.0, 0.15, 1.0};
  }
  return {1.0, 1.0, 1.0};
}

// Rasterize the shape mask with its top-left corner at (r0, c0) and size s.
std::vector<std::uint8_t> rasterize(ShapeClass kind, int s) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(s) * s, 0);
  auto set = [&](int r, int c) { mask[static_cast<std::size_t>(r) * s + c] = 1; };
  const double mid = (s - 1) / 2.0;
  switch (kind) {
    case ShapeClass::kSquare:
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) set(r, c);
      break;
    case ShapeClass::kDisk: {
      const double rad = s / 2.0;
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
          if ((r - mid) * (r - mid) + (c - mid) * (c - mid) <= rad * rad) set(r, c);
      break;
    }
    case ShapeClass::kCross: {
      const int t = std::max(1, s / 3);
      const int lo = (s - t) / 2, hi = lo + t;
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
          if ((r >= lo && r < hi) || (c >= lo && c < hi)) set(r, c);
      break;
    }
    case ShapeClass::kTriangle:
      for (int r = 0; r < s; ++r) {
        const double half = (r + 1) * 0.5 * (s - 1) / s;
        for (int c = 0; c < s; ++c)
          if (std::fabs(c - mid) <= half) set(r, c);
      }
      break;
    case ShapeClass::kRing: {
      const double outer = s / 2.0;
      const double inner = std::max(0.0, outer - std::max(1.5, s * 0.25));
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
          const double d2 = (r - mid) * (r - mid) + (c - mid) * (c - mid);
          if (d2 <= outer * outer && d2 >= inner * inner) set(r, c);
        }
      break;
    }
  }
  return mask;
}

SyntheticSample make_sample(const ShapeDatasetConfig& cfg, ShapeClass kind, int r0, int c0,
                            int s, SplitRng& rng, std::uint64_t sample_seed) {
  SyntheticSample out;
  out.class_id = static_cast<int>(kind);
  out.seed = sample_seed;
  out.image = Tensor({cfg.height, cfg.width, 3});
  for (int i = 0; i < cfg.height * cfg.width; ++i) {
    for (int ch = 0; ch < 3; ++ch)
      out.image[i * 3 + ch] = cfg.noise_sigma > 0.0 ? rng.uniform(0.0, cfg.noise_sigma) : 0.0;
  }
  auto mask = rasterize(kind, s);
  const Rgb col = class_color(kind);
  int rmin = cfg.height, rmax = -1, cmin = cfg.width, cmax = -1;
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      if (!mask[static_cast<std::size_t>(r) * s + c]) continue;
      const int ir = r0 + r, ic = c0 + c;
      out.image.at3(ir, ic, 0) = col.r;
      out.image.at3(ir, ic, 1) = col.g;
      out.image.at3(ir, ic, 2) = col.b;
      rmin = std::min(rmin, ir);
      rmax = std::max(rmax, ir);
      cmin = std::min(cmin, ic);
      cmax = std::max(cmax, ic);
    }
  }
  out.box = BoundingBox{cmin, rmin, cmax + 1, rmax + 1};
  return out;
}

struct ShapeDraw {
  ShapeClass kind;
  int size = 0;
};

ShapeDraw draw_shape(const ShapeDatasetConfig& cfg, SplitRng& rng) {
  ShapeDraw d;
  d.kind = cfg.classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cfg.classes.size()) - 1))];
  const int base = std::min(cfg.height, cfg.width);
  d.size = std::max(3, static_cast<int>(std::lround(rng.uniform(cfg.min_scale, cfg.max_scale) * base)));
  d.size = std::min(d.size, base);
  return d;
}

void check_config(const ShapeDatasetConfig& cfg) {
  if (cfg.height < 16 || cfg.width < 16) throw std::invalid_argument("images must be at least 16x16");
  if (cfg.n < 1) throw std::invalid_argument("need at least one sample");
  if (cfg.classes.empty()) throw std::invalid_argument("need at least one shape class");
  if (cfg.noise_sigma < 0.0 || cfg.noise_sigma > 0.5)
    throw std::invalid_argument("noise amplitude must lie in [0, 0.5]");
}

}  // namespace

std::vector<SyntheticSample> generate_shapes(const ShapeDatasetConfig& cfg) {
  check_config(cfg);
  SplitRng root(cfg.seed);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    SplitRng rng = root.split(static_cast<std::uint64_t>(i));
    const std::uint64_t sample_seed = rng.seed();
    // resample until the shape fits (always true given max_scale <= 1)
    for (;;) {
      ShapeDraw d = draw_shape(cfg, rng);
      if (d.size > cfg.height || d.size > cfg.width) continue;
      const int r0 = rng.uniform_int(0, cfg.height - d.size);
      const int c0 = rng.uniform_int(0, cfg.width - d.size);
      out.push_back(make_sample(cfg, d.kind, r0, c0, d.size, rng, sample_seed));
      break;
    }
  }
  return out;
}

std::vector<std::vector<SyntheticSample>> generate_sequences(int n_events, int frames,
                                                             const ShapeDatasetConfig& cfg) {
  check_config(cfg);
  if (frames < 1) throw std::invalid_argument("sequences need at least one frame");
  SplitRng root(cfg.seed);
  std::vector<std::vector<SyntheticSample>> out;
  out.reserve(static_cast<std::size_t>(n_events));
  for (int e = 0; e < n_events; ++e) {
    SplitRng rng = root.split(0x5eed0000ULL + static_cast<std::uint64_t>(e));
    const std::uint64_t event_seed = rng.seed();
    ShapeDraw d = draw_shape(cfg, rng);

    // integer velocity, start chosen so every frame stays inside the image
    int vr = 0, vc = 0, r0 = 0, c0 = 0;
    for (;;) {
      vr = rng.uniform_int(-2, 2);
      vc = rng.uniform_int(-2, 2);
      const int travel_r = vr * (frames - 1), travel_c = vc * (frames - 1);
      const int rlo = std::max(0, -travel_r), rhi = cfg.height - d.size - std::max(0, travel_r);
      const int clo = std::max(0, -travel_c), chi = cfg.width - d.size - std::max(0, travel_c);
      if (rhi < rlo || chi < clo) continue;
      r0 = rng.uniform_int(rlo, rhi);
      c0 = rng.uniform_int(clo, chi);
      break;
    }

    std::vector<SyntheticSample> seq;
    for (int t = 0; t < frames; ++t) {
      SplitRng frng = rng.split(static_cast<std::uint64_t>(t));
      seq.push_back(make_sample(cfg, d.kind, r0 + vr * t, c0 + vc * t, d.size, frng, event_seed));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void dump_dataset(const std::string& dir, const std::vector<SyntheticSample>& samples) {
  std::filesystem::create_directories(dir);
  CsvWriter manifest(dir + "/manifest.csv",
                     {"id", "class", "x_min", "y_min", "x_max", "y_max", "seed"});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string id = "img" + std::to_string(i);
    write_ppm(dir + "/" + id + ".ppm", s.image);
    manifest.row({id, std::to_string(s.class_id), std::to_string(s.box.x_min),
                  std::to_string(s.box.y_min), std::to_string(s.box.x_max),
                  std::to_string(s.box.y_max), std::to_string(s.seed)});
  }
}

}  // namespace l2caf
