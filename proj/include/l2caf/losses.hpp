#pragma once

#include <vector>

#include "l2caf/tape.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

struct TripletConfig {
  double margin = 0.2;
};

struct MiniBatch {
  std::vector<Tensor> embeddings;
  std::vector<int> labels;
};

/// Hinge ranking term max(0, d_ap - d_an + m) on Euclidean distances.
double triplet_loss(double d_ap, double d_an, const TripletConfig& cfg);

/// Indices n with label(n) != label(anchor) and d_ap < d_an < d_ap + m.
/// When the band is empty, falls back to the single hardest negative
/// (smallest d_an, ties by lower index). Throws when the batch holds no
/// negative at all.
std::vector<int> semi_hard_negatives(const MiniBatch& batch, int anchor, int positive,
                                     const TripletConfig& cfg);

/// Batch of b/2 positive pairs, one pair per class; every anchor is scored
/// against its positive and the b-2 remaining samples. Mean over anchors of
/// -log( exp(a.p) / (exp(a.p) + sum_n exp(a.n)) ), max-subtracted.
double npair_loss(const MiniBatch& batch);

double euclidean_distance(const Tensor& a, const Tensor& b);

// Taped batch losses for training. Embedding nodes must live on `t`; mining
// decisions are made from current values and then frozen into the graph.

/// Mean over all ordered same-label pairs of the triplet term against one
/// mined negative per pair (hardest in the semi-hard band, with the hardest
/// overall as fallback). Throws when the batch has no positive pair or no
/// negatives for some anchor.
ValueId triplet_batch_loss_on_tape(Tape& t, const std::vector<ValueId>& embeddings,
                                   const std::vector<int>& labels, const TripletConfig& cfg);

ValueId npair_loss_on_tape(Tape& t, const std::vector<ValueId>& embeddings,
                           const std::vector<int>& labels);

}  // namespace l2caf
