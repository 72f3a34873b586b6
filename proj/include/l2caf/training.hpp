#pragma once

#include <cstdint>
#include <vector>

#include "l2caf/losses.hpp"
#include "l2caf/network.hpp"

namespace l2caf {

struct TrainLog {
  std::vector<double> batch_losses;
  double monitor_initial = 0.0;
  double monitor_final = 0.0;
};

enum class RetrievalLoss { kTriplet, kNPair };

/// Mini-batch SGD on softmax cross-entropy. Deterministic given the seed.
NetworkModel train_classifier(NetworkModel m, const std::vector<Tensor>& images,
                              const std::vector<int>& labels, int epochs, double lr,
                              std::uint64_t seed, TrainLog* log = nullptr);

/// Ranking-loss SGD: triplet with semi-hard mining (P*K batches) or N-pair
/// (one positive pair per class). A slice of the data is held out and scored
/// before and after training into the log.
NetworkModel train_retrieval(NetworkModel m, const std::vector<Tensor>& images,
                             const std::vector<int>& labels, RetrievalLoss loss_kind,
                             int epochs, double lr, std::uint64_t seed,
                             TrainLog* log = nullptr);

/// Triplet training over frame sequences for recurrent models.
NetworkModel train_retrieval_sequences(NetworkModel m,
                                       const std::vector<std::vector<Tensor>>& sequences,
                                       const std::vector<int>& labels, int epochs, double lr,
                                       std::uint64_t seed, TrainLog* log = nullptr);

}  // namespace l2caf
