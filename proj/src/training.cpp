#include "l2caf/training.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "l2caf/rng.hpp"

namespace l2caf {

namespace {

void shuffle_indices(std::vector<int>& idx, SplitRng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
}

void sgd_update(NetworkModel& m, Tape& t, TapedWeights& w, double lr) {
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    for (std::size_t j = 0; j < m.weights[i].size(); ++j) {
      Tensor g = t.grad(w.id(static_cast<int>(i), static_cast<int>(j)));
      Tensor& param = m.weights[i][j];
      for (int e = 0; e < param.size(); ++e) param[e] -= lr * g[e];
    }
  }
}

std::map<int, std::vector<int>> group_by_class(const std::vector<int>& labels,
                                               const std::vector<int>& subset) {
  std::map<int, std::vector<int>> by_class;
  for (int i : subset) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
  return by_class;
}

// Embedding nodes for a list of samples on one tape.
std::vector<ValueId> embed_on_tape(Tape& t, TapedWeights& w, const NetworkModel& m,
                                   const std::vector<Tensor>& images,
                                   const std::vector<int>& which) {
  std::vector<ValueId> out;
  for (int i : which) {
    ValueId x = t.leaf(images[static_cast<std::size_t>(i)]);
    out.push_back(taped_forward(t, w, x, -1, m.output_layer()));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<int>& labels, const std::vector<int>& which) {
  std::vector<int> out;
  for (int i : which) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

NetworkModel train_classifier(NetworkModel m, const std::vector<Tensor>& images,
                              const std::vector<int>& labels, int epochs, double lr,
                              std::uint64_t seed, TrainLog* log) {
  if (images.empty() || images.size() != labels.size())
    throw std::invalid_argument("train_classifier: dataset is empty or misaligned");
  if (m.head != HeadKind::kLogits)
    throw IncompatibilityError("train_classifier requires a logits head");

  const int batch_size = 16;
  SplitRng root(seed);
  std::vector<int> idx(images.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    SplitRng erng = root.split(static_cast<std::uint64_t>(epoch));
    shuffle_indices(idx, erng);
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
      const std::size_t end = std::min(idx.size(), start + batch_size);
      Tape t;
      TapedWeights w(t, m);
      std::vector<ValueId> terms;
      for (std::size_t p = start; p < end; ++p) {
        const int i = idx[p];
        ValueId x = t.leaf(images[static_cast<std::size_t>(i)]);
        ValueId logits = taped_forward(t, w, x, -1, m.output_layer());
        terms.push_back(t.cross_entropy_logits(logits, labels[static_cast<std::size_t>(i)]));
      }
      ValueId loss = t.scale_add(t.sum(t.pack(terms)), 1.0 / static_cast<double>(terms.size()), 0.0);
      t.backward(loss);
      if (log) log->batch_losses.push_back(t.value(loss)[0]);
      sgd_update(m, t, w, lr);
    }
  }
  return m;
}

namespace {

double retrieval_batch_loss(const NetworkModel& m, const std::vector<Tensor>& images,
                            const std::vector<int>& labels, const std::vector<int>& which,
                            RetrievalLoss kind) {
  Tape t;
  TapedWeights w(t, m);
  auto emb = embed_on_tape(t, w, m, images, which);
  auto lab = labels_of(labels, which);
  ValueId loss = kind == RetrievalLoss::kTriplet
                     ? triplet_batch_loss_on_tape(t, emb, lab, TripletConfig{})
                     : npair_loss_on_tape(t, emb, lab);
  return t.value(loss)[0];
}

}  // namespace

NetworkModel train_retrieval(NetworkModel m, const std::vector<Tensor>& images,
                             const std::vector<int>& labels, RetrievalLoss loss_kind,
                             int epochs, double lr, std::uint64_t seed, TrainLog* log) {
  if (images.empty() || images.size() != labels.size())
    throw std::invalid_argument("train_retrieval: dataset is empty or misaligned");
  if (m.head != HeadKind::kEmbedding)
    throw IncompatibilityError("train_retrieval requires an embedding head");

  SplitRng root(seed);
  const int n = static_cast<int>(images.size());

  // Hold out a slice for the monitoring batch; train on the rest.
  const int held = std::min(32, std::max(4, n / 5));
  std::vector<int> monitor_idx, train_idx;
  for (int i = 0; i < n; ++i) (i < held ? monitor_idx : train_idx).push_back(i);
  if (train_idx.empty()) train_idx = monitor_idx;

  // Monitoring batch: for N-pair the structure must be one pair per class.
  std::vector<int> monitor_batch;
  {
    auto by_class = group_by_class(labels, monitor_idx);
    if (loss_kind == RetrievalLoss::kNPair) {
      for (auto& [cls, v] : by_class) {
        if (v.size() < 2)
          throw std::invalid_argument("train_retrieval: class " + std::to_string(cls) +
                                      " has fewer than 2 samples in the monitoring slice");
        monitor_batch.push_back(v[0]);
        monitor_batch.push_back(v[1]);
      }
    } else {
      monitor_batch = monitor_idx;
    }
  }

  if (log) log->monitor_initial = retrieval_batch_loss(m, images, labels, monitor_batch, loss_kind);

  auto by_class = group_by_class(labels, train_idx);
  std::vector<int> class_ids;
  for (auto& [cls, v] : by_class) class_ids.push_back(cls);
  if (loss_kind == RetrievalLoss::kNPair)
    for (auto& [cls, v] : by_class)
      if (v.size() < 2)
        throw std::invalid_argument("train_retrieval: class " + std::to_string(cls) +
                                    " has fewer than 2 samples; N-pair batches are impossible");

  const int p_classes = std::min<int>(4, static_cast<int>(class_ids.size()));
  const int k_per_class = 4;
  const int steps = std::max<std::size_t>(1, train_idx.size() / static_cast<std::size_t>(p_classes * k_per_class));

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      SplitRng srng = root.split(static_cast<std::uint64_t>(epoch) * 100003ULL + static_cast<std::uint64_t>(step));
      std::vector<int> cls_order = class_ids;
      shuffle_indices(cls_order, srng);

      std::vector<int> batch;
      if (loss_kind == RetrievalLoss::kTriplet) {
        for (int c = 0; c < p_classes; ++c) {
          auto& pool = by_class[cls_order[static_cast<std::size_t>(c)]];
          for (int j = 0; j < k_per_class; ++j)
            batch.push_back(pool[static_cast<std::size_t>(srng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
        }
      } else {
        for (int cls : cls_order) {
          auto& pool = by_class[cls];
          int a = srng.uniform_int(0, static_cast<int>(pool.size()) - 1);
          int b = srng.uniform_int(0, static_cast<int>(pool.size()) - 2);
          if (b >= a) ++b;
          batch.push_back(pool[static_cast<std::size_t>(a)]);
          batch.push_back(pool[static_cast<std::size_t>(b)]);
        }
      }

      Tape t;
      TapedWeights w(t, m);
      auto emb = embed_on_tape(t, w, m, images, batch);
      auto lab = labels_of(labels, batch);
      ValueId loss = loss_kind == RetrievalLoss::kTriplet
                         ? triplet_batch_loss_on_tape(t, emb, lab, TripletConfig{})
                         : npair_loss_on_tape(t, emb, lab);
      t.backward(loss);
      if (log) log->batch_losses.push_back(t.value(loss)[0]);
      sgd_update(m, t, w, lr);
    }
  }

  if (log) log->monitor_final = retrieval_batch_loss(m, images, labels, monitor_batch, loss_kind);
  return m;
}

NetworkModel train_retrieval_sequences(NetworkModel m,
                                       const std::vector<std::vector<Tensor>>& sequences,
                                       const std::vector<int>& labels, int epochs, double lr,
                                       std::uint64_t seed, TrainLog* log) {
  if (sequences.empty() || sequences.size() != labels.size())
    throw std::invalid_argument("train_retrieval_sequences: dataset is empty or misaligned");
  if (!m.is_recurrent())
    throw IncompatibilityError("train_retrieval_sequences requires a recurrent model");

  SplitRng root(seed);
  const int n = static_cast<int>(sequences.size());
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  auto by_class = group_by_class(labels, all);
  std::vector<int> class_ids;
  for (auto& [cls, v] : by_class) class_ids.push_back(cls);

  auto embed_batch = [&](Tape& t, TapedWeights& w, const std::vector<int>& batch) {
    std::vector<ValueId> emb;
    for (int i : batch) {
      std::vector<ValueId> frames;
      for (const Tensor& f : sequences[static_cast<std::size_t>(i)]) frames.push_back(t.leaf(f));
      emb.push_back(taped_forward_sequence(t, w, frames, -1));
    }
    return emb;
  };

  auto monitor = [&]() {
    std::vector<int> batch;
    for (auto& [cls, v] : by_class)
      for (std::size_t j = 0; j < std::min<std::size_t>(2, v.size()); ++j) batch.push_back(v[j]);
    Tape t;
    TapedWeights w(t, m);
    auto emb = embed_batch(t, w, batch);
    ValueId loss = triplet_batch_loss_on_tape(t, emb, labels_of(labels, batch), TripletConfig{});
    return t.value(loss)[0];
  };

  if (log) log->monitor_initial = monitor();

  const int p_classes = std::min<int>(4, static_cast<int>(class_ids.size()));
  const int k_per_class = 3;
  const int steps = std::max(1, n / (p_classes * k_per_class));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      SplitRng srng = root.split(static_cast<std::uint64_t>(epoch) * 100003ULL + static_cast<std::uint64_t>(step));
      std::vector<int> cls_order = class_ids;
      shuffle_indices(cls_order, srng);
      std::vector<int> batch;
      for (int c = 0; c < p_classes; ++c) {
        auto& pool = by_class[cls_order[static_cast<std::size_t>(c)]];
        for (int j = 0; j < k_per_class; ++j)
          batch.push_back(pool[static_cast<std::size_t>(srng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
      }
      Tape t;
      TapedWeights w(t, m);
      auto emb = embed_batch(t, w, batch);
      ValueId loss = triplet_batch_loss_on_tape(t, emb, labels_of(labels, batch), TripletConfig{});
      t.backward(loss);
      if (log) log->batch_losses.push_back(t.value(loss)[0]);
      sgd_update(m, t, w, lr);
    }
  }
  if (log) log->monitor_final = monitor();
  return m;
}

}  // namespace l2caf
