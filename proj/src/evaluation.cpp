#include "l2caf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "l2caf/losses.hpp"
#include "l2caf/rng.hpp"

namespace l2caf {

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: degenerate bounding box");
  const int ix = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const int iy = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long long inter = static_cast<long long>(ix) * iy;
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool Mask::empty() const {
  for (auto b : v)
    if (b) return false;
  return true;
}

Mask threshold_heatmap(const Heatmap& h, double theta_frac) {
  if (theta_frac <= 0.0 || theta_frac >= 1.0)
    throw std::invalid_argument("theta_frac must lie in (0, 1)");
  const Tensor& g = h.grid;
  if (g.rank() != 2) throw ShapeError("threshold_heatmap: heatmap must be 2-D");
  Mask m;
  m.h = g.dim(0);
  m.w = g.dim(1);
  m.v.assign(static_cast<std::size_t>(g.size()), 0);
  const double peak = g.max();
  if (peak <= 0.0) return m;  // zero heatmap: empty mask, caller counts a miss
  const double cut = theta_frac * peak;
  for (int i = 0; i < g.size(); ++i) m.v[static_cast<std::size_t>(i)] = g[i] >= cut ? 1 : 0;
  return m;
}

std::optional<BoundingBox> largest_component_box(const Mask& mask) {
  if (mask.empty()) return std::nullopt;
  std::vector<int> label(static_cast<std::size_t>(mask.h * mask.w), -1);
  BoundingBox best{};
  long long best_size = 0;

  std::vector<int> stack;
  int next_label = 0;
  for (int r = 0; r < mask.h; ++r) {
    for (int c = 0; c < mask.w; ++c) {
      const int idx = r * mask.w + c;
      if (!mask.v[static_cast<std::size_t>(idx)] || label[static_cast<std::size_t>(idx)] >= 0) continue;
      // flood fill with 8-connectivity from this seed
      long long size = 0;
      int rmin = r, rmax = r, cmin = c, cmax = c;
      stack.assign(1, idx);
      label[static_cast<std::size_t>(idx)] = next_label;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cr = cur / mask.w, cc = cur % mask.w;
        ++size;
        rmin = std::min(rmin, cr);
        rmax = std::max(rmax, cr);
        cmin = std::min(cmin, cc);
        cmax = std::max(cmax, cc);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int nr = cr + dr, nc = cc + dc;
            if (nr < 0 || nr >= mask.h || nc < 0 || nc >= mask.w) continue;
            const int nidx = nr * mask.w + nc;
            if (!mask.v[static_cast<std::size_t>(nidx)] || label[static_cast<std::size_t>(nidx)] >= 0) continue;
            label[static_cast<std::size_t>(nidx)] = next_label;
            stack.push_back(nidx);
          }
        }
      }
      // strictly greater keeps the earliest seed on ties (row-major scan)
      if (size > best_size) {
        best_size = size;
        best = BoundingBox{cmin, rmin, cmax + 1, rmax + 1};
      }
      ++next_label;
    }
  }
  return best;
}

EvalRecord make_record(std::string image_id, std::string method, bool prediction_correct,
                       std::optional<BoundingBox> estimated, BoundingBox truth) {
  EvalRecord r;
  r.image_id = std::move(image_id);
  r.method = std::move(method);
  r.prediction_correct = prediction_correct;
  r.estimated = estimated;
  r.truth = truth;
  r.iou_value = estimated ? iou(*estimated, truth) : 0.0;
  r.localization_hit = prediction_correct && r.iou_value >= 0.5;
  return r;
}

double localization_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("localization_accuracy: no records");
  long long hits = 0;
  for (const auto& r : records) hits += r.localization_hit ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

bool topk_localization_hit(const std::vector<RankedPrediction>& predictions, int true_class,
                           const BoundingBox& truth) {
  for (const auto& p : predictions) {
    if (p.predicted_class != true_class) continue;
    if (p.box && iou(*p.box, truth) >= 0.5) return true;
  }
  return false;
}

double recall_at_1(const std::vector<Tensor>& embeddings, const std::vector<int>& labels) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 2 || labels.size() != embeddings.size())
    throw std::invalid_argument("recall_at_1 needs at least two aligned samples");
  long long hits = 0;
  for (int i = 0; i < n; ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = euclidean_distance(embeddings[static_cast<std::size_t>(i)],
                                          embeddings[static_cast<std::size_t>(j)]);
      if (d < best_d) {  // strict: ties keep the lower index
        best_d = d;
        best = j;
      }
    }
    hits += labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

double sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct KmeansRun {
  std::vector<int> assign;
  double inertia = std::numeric_limits<double>::infinity();
};

KmeansRun kmeans_once(const std::vector<Tensor>& pts, int k, SplitRng& rng) {
  const int n = static_cast<int>(pts.size());
  const int dim = pts[0].size();

  // k-means++ seeding
  std::vector<Tensor> centers;
  centers.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(pts[static_cast<std::size_t>(i)], c));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
      continue;
    }
    double target = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      target -= d2[static_cast<std::size_t>(i)];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[static_cast<std::size_t>(pick)]);
  }

  KmeansRun run;
  run.assign.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(pts[static_cast<std::size_t>(i)], centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (run.assign[static_cast<std::size_t>(i)] != best) {
        run.assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    std::vector<Tensor> sums(static_cast<std::size_t>(k), Tensor({dim}));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = run.assign[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (int d = 0; d < dim; ++d) sums[static_cast<std::size_t>(c)][d] += pts[static_cast<std::size_t>(i)][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // empty cluster: reseed at the point farthest from its own center
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = sq_dist(pts[static_cast<std::size_t>(i)],
                                   centers[static_cast<std::size_t>(run.assign[static_cast<std::size_t>(i)])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[static_cast<std::size_t>(c)] = pts[static_cast<std::size_t>(far)];
        changed = true;
        continue;
      }
      for (int d = 0; d < dim; ++d)
        centers[static_cast<std::size_t>(c)][d] =
            sums[static_cast<std::size_t>(c)][d] / counts[static_cast<std::size_t>(c)];
    }
    if (!changed) break;
  }

  run.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    run.inertia += sq_dist(pts[static_cast<std::size_t>(i)],
                           centers[static_cast<std::size_t>(run.assign[static_cast<std::size_t>(i)])]);
  return run;
}

}  // namespace

std::vector<int> kmeans(const std::vector<Tensor>& points, int k, std::uint64_t seed) {
  if (points.empty()) throw std::invalid_argument("kmeans: empty input");
  if (k < 1 || k > static_cast<int>(points.size()))
    throw std::invalid_argument("kmeans: k must lie in [1, n]");
  SplitRng root(seed);
  KmeansRun best;
  for (int restart = 0; restart < 10; ++restart) {
    SplitRng rng = root.split(static_cast<std::uint64_t>(restart));
    KmeansRun run = kmeans_once(points, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best.assign;
}

double nmi(const std::vector<int>& labels_true, const std::vector<int>& labels_pred) {
  if (labels_true.empty() || labels_true.size() != labels_pred.size())
    throw std::invalid_argument("nmi: empty or misaligned partitions");
  const double n = static_cast<double>(labels_true.size());

  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < labels_true.size(); ++i) {
    pa[labels_true[i]] += 1.0;
    pb[labels_pred[i]] += 1.0;
    pab[{labels_true[i], labels_pred[i]}] += 1.0;
  }

  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (auto& [k, v] : pa) {
    const double p = v / n;
    ha -= p * std::log(p);
  }
  for (auto& [k, v] : pb) {
    const double p = v / n;
    hb -= p * std::log(p);
  }
  for (auto& [kk, v] : pab) {
    const double p = v / n;
    const double px = pa[kk.first] / n;
    const double py = pb[kk.second] / n;
    mi += p * std::log(p / (px * py));
  }

  if (ha <= 0.0 || hb <= 0.0) {
    // zero entropy means a single cluster; the partitions are identical
    // exactly when both collapse to one cluster
    return pa.size() == 1 && pb.size() == 1 ? 1.0 : 0.0;
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

namespace {

std::vector<double> average_ranks(const Tensor& t) {
  const int n = t.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return t[a] < t[b]; });
  std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && t[order[static_cast<std::size_t>(j + 1)]] == t[order[static_cast<std::size_t>(i)]]) ++j;
    const double r = (i + j) / 2.0 + 1.0;  // average rank, 1-based
    for (int q = i; q <= j; ++q) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(q)])] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("spearman_correlation: shape mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman_correlation: need at least two values");
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (double v : ra) ma += v;
  for (double v : rb) mb += v;
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return va <= 0.0 && vb <= 0.0 ? 1.0 : 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace l2caf
