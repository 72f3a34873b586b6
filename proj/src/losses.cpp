#include "l2caf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace l2caf {

double euclidean_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("euclidean_distance: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double triplet_loss(double d_ap, double d_an, const TripletConfig& cfg) {
  if (d_ap < 0.0 || d_an < 0.0) throw std::invalid_argument("triplet_loss: distances must be nonnegative");
  if (cfg.margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be nonnegative");
  return std::max(0.0, d_ap - d_an + cfg.margin);
}

namespace {

void check_batch(const MiniBatch& b) {
  if (b.embeddings.empty() || b.embeddings.size() != b.labels.size())
    throw std::invalid_argument("mini-batch embeddings and labels must be nonempty and aligned");
  for (const Tensor& e : b.embeddings)
    if (!e.same_shape(b.embeddings.front()))
      throw ShapeError("mini-batch embeddings must share one dimension");
}

}  // namespace

std::vector<int> semi_hard_negatives(const MiniBatch& batch, int anchor, int positive,
                                     const TripletConfig& cfg) {
  check_batch(batch);
  const double d_ap = euclidean_distance(batch.embeddings[anchor], batch.embeddings[positive]);
  std::vector<int> band;
  int hardest = -1;
  double hardest_d = 0.0;
  for (int n = 0; n < static_cast<int>(batch.labels.size()); ++n) {
    if (batch.labels[n] == batch.labels[anchor]) continue;
    const double d_an = euclidean_distance(batch.embeddings[anchor], batch.embeddings[n]);
    if (hardest < 0 || d_an < hardest_d) {
      hardest = n;
      hardest_d = d_an;
    }
    if (d_an > d_ap && d_an < d_ap + cfg.margin) band.push_back(n);
  }
  if (hardest < 0)
    throw std::invalid_argument("semi_hard_negatives: batch contains no negatives for the anchor");
  if (band.empty()) return {hardest};
  return band;
}

double npair_loss(const MiniBatch& batch) {
  check_batch(batch);
  // one positive pair per class
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(batch.labels.size()); ++i)
    by_class[batch.labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class)
    if (idx.size() != 2)
      throw std::invalid_argument("npair_loss: class " + std::to_string(cls) +
                                  " must appear exactly twice in the batch");

  const int b = static_cast<int>(batch.labels.size());
  double total = 0.0;
  int anchors = 0;
  for (const auto& [cls, idx] : by_class) {
    const Tensor& a = batch.embeddings[idx[0]];
    std::vector<double> logits;
    logits.push_back(0.0);  // slot for a.p
    double ap = 0.0;
    for (int i = 0; i < a.size(); ++i) ap += a[i] * batch.embeddings[idx[1]][i];
    logits[0] = ap;
    for (int n = 0; n < b; ++n) {
      if (n == idx[0] || n == idx[1]) continue;
      double an = 0.0;
      for (int i = 0; i < a.size(); ++i) an += a[i] * batch.embeddings[n][i];
      logits.push_back(an);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - m);
    total += -(logits[0] - m - std::log(denom));
    ++anchors;
  }
  return total / anchors;
}

ValueId triplet_batch_loss_on_tape(Tape& t, const std::vector<ValueId>& embeddings,
                                   const std::vector<int>& labels, const TripletConfig& cfg) {
  MiniBatch values;
  for (ValueId id : embeddings) values.embeddings.push_back(t.value(id));
  values.labels = labels;
  check_batch(values);

  std::vector<ValueId> terms;
  for (int a = 0; a < static_cast<int>(labels.size()); ++a) {
    for (int p = 0; p < static_cast<int>(labels.size()); ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      std::vector<int> band = semi_hard_negatives(values, a, p, cfg);
      // hardest negative within the mined set
      int n = band[0];
      double best = euclidean_distance(values.embeddings[a], values.embeddings[n]);
      for (std::size_t i = 1; i < band.size(); ++i) {
        const double d = euclidean_distance(values.embeddings[a], values.embeddings[band[i]]);
        if (d < best) {
          best = d;
          n = band[i];
        }
      }
      ValueId d_ap = t.sqrt(t.squared_distance(embeddings[a], embeddings[p]));
      ValueId d_an = t.sqrt(t.squared_distance(embeddings[a], embeddings[n]));
      ValueId hinge = t.relu(t.scale_add(t.add(d_ap, t.scale_add(d_an, -1.0, 0.0)), 1.0, cfg.margin));
      terms.push_back(hinge);
    }
  }
  if (terms.empty())
    throw std::invalid_argument("triplet_batch_loss_on_tape: batch has no anchor-positive pair");
  return t.scale_add(t.sum(t.pack(terms)), 1.0 / static_cast<double>(terms.size()), 0.0);
}

ValueId npair_loss_on_tape(Tape& t, const std::vector<ValueId>& embeddings,
                           const std::vector<int>& labels) {
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class)
    if (idx.size() != 2)
      throw std::invalid_argument("npair_loss_on_tape: class " + std::to_string(cls) +
                                  " must appear exactly twice in the batch");

  std::vector<ValueId> terms;
  for (const auto& [cls, idx] : by_class) {
    std::vector<ValueId> logits;
    logits.push_back(t.dot(embeddings[idx[0]], embeddings[idx[1]]));
    for (int n = 0; n < static_cast<int>(labels.size()); ++n) {
      if (n == idx[0] || n == idx[1]) continue;
      logits.push_back(t.dot(embeddings[idx[0]], embeddings[n]));
    }
    terms.push_back(t.cross_entropy_logits(t.pack(logits), 0));
  }
  return t.scale_add(t.sum(t.pack(terms)), 1.0 / static_cast<double>(terms.size()), 0.0);
}

}  // namespace l2caf
