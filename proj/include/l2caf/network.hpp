#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "l2caf/tape.hpp"
#include "l2caf/tensor.hpp"

namespace l2caf {

class IncompatibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LayerKind { kConv, kRelu, kGap, kFlatten, kDense, kEmbedNormalize, kRecurrentFuse };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  // Conv
  int kh = 0, kw = 0, c_out = 0, stride = 1, padding = 0;
  // Dense
  int out_dim = 0;
  // RecurrentFuse
  int hidden_dim = 0;

  static LayerSpec conv(int kh, int kw, int c_out, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::kConv;
    s.kh = kh;
    s.kw = kw;
    s.c_out = c_out;
    s.stride = stride;
    s.padding = padding;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec gap() {
    LayerSpec s;
    s.kind = LayerKind::kGap;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::kFlatten;
    return s;
  }
  static LayerSpec dense(int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.out_dim = out_dim;
    return s;
  }
  static LayerSpec embed_normalize() {
    LayerSpec s;
    s.kind = LayerKind::kEmbedNormalize;
    return s;
  }
  static LayerSpec recurrent_fuse(int hidden_dim) {
    LayerSpec s;
    s.kind = LayerKind::kRecurrentFuse;
    s.hidden_dim = hidden_dim;
    return s;
  }
};

enum class HeadKind { kLogits, kEmbedding };

struct NetworkModel {
  std::vector<int> input_shape;  // {H, W, C}
  std::vector<LayerSpec> layers;
  std::vector<std::vector<Tensor>> weights;  // weights[i]: parameter tensors of layer i
  HeadKind head = HeadKind::kLogits;
  int head_size = 0;
  std::map<std::string, int> endpoints;  // name -> layer index whose output it is

  bool is_recurrent() const;
  int fuse_index() const;  // -1 when not recurrent
  int endpoint(const std::string& name) const;
  int output_layer() const { return static_cast<int>(layers.size()) - 1; }
  /// Output layer of the raw (pre unit-norm) embedding; equals output_layer()
  /// unless the model ends with EmbedNormalize.
  int raw_output_layer() const;
};

/// Per-layer output shapes for a layer stack; index 0 is the input shape.
/// Throws ShapeError on any inconsistent step — this is the build-time check.
std::vector<std::vector<int>> infer_shapes(const std::vector<int>& input_shape,
                                           const std::vector<LayerSpec>& layers);

/// Validates the stack, initializes weights uniform[-s, s] with
/// s = sqrt(1/fan_in) from the seed, and resolves spatial endpoints.
NetworkModel build_network(std::vector<int> input_shape, std::vector<LayerSpec> layers,
                           HeadKind head, std::uint64_t seed);

/// Presets: "tiny-cls", "tiny-ret", "tiny-deep", "tiny-rnn".
/// normalized_embedding adds a final EmbedNormalize layer on embedding heads.
NetworkModel make_preset(const std::string& name, std::uint64_t seed,
                         bool normalized_embedding = true, int n_classes = 4,
                         int input_hw = 32);

struct ActivationTrace {
  std::vector<Tensor> outputs;  // outputs[i] = value after layer i
};

/// Full forward pass; optionally captures every layer output.
Tensor forward(const NetworkModel& m, const Tensor& x, ActivationTrace* trace = nullptr);

/// Continue the pass from a cached activation: v is the output of layer
/// `after_layer`; runs layers (after_layer, last].
Tensor forward_from(const NetworkModel& m, const Tensor& v, int after_layer);

/// Forward with the unit-L2-normalized filter multiplied into the output of
/// layer at_layer. raw_filter is the unconstrained [h,w] variable.
Tensor filtered_forward(const NetworkModel& m, const Tensor& x, int at_layer,
                        const Tensor& raw_filter);
Tensor filtered_forward_from(const NetworkModel& m, const Tensor& v, int at_layer,
                             const Tensor& raw_filter);

struct SequenceTrace {
  std::vector<ActivationTrace> frames;  // per-frame traces of the pre-fuse stack
  std::vector<Tensor> hidden;           // hidden state after each step
  Tensor output;
};

/// Forward for recurrent models over T frames.
Tensor forward_sequence(const NetworkModel& m, const std::vector<Tensor>& frames,
                        SequenceTrace* trace = nullptr);

/// Lazily created tape leaves for model weights, shared across samples on
/// one tape so gradients accumulate for training.
class TapedWeights {
 public:
  TapedWeights(Tape& tape, const NetworkModel& m);
  ValueId id(int layer, int index);
  const NetworkModel& model() const { return *model_; }

 private:
  Tape* tape_;
  const NetworkModel* model_;
  std::vector<std::vector<ValueId>> ids_;
};

struct FilterHook {
  int at_layer = -1;        // filter multiplies the output of this layer
  ValueId filter_node = -1; // already-constrained [h,w] filter on the tape
};

/// Builds tape ops for layers (after_layer, upto_layer], starting from
/// `input` = output of after_layer (use after_layer = -1 to start at x).
/// The hook may reference after_layer itself, in which case it applies to
/// `input` before the first layer runs. Rejects RecurrentFuse layers.
ValueId taped_forward(Tape& t, TapedWeights& w, ValueId input, int after_layer,
                      int upto_layer, const std::optional<FilterHook>& hook = std::nullopt,
                      std::vector<ValueId>* layer_nodes = nullptr);

/// Recurrent counterpart: frame_inputs[t] is frame t's value at after_layer
/// (or raw x when after_layer = -1). The hook applies to exactly one frame.
ValueId taped_forward_sequence(Tape& t, TapedWeights& w,
                               const std::vector<ValueId>& frame_inputs, int after_layer,
                               const std::optional<FilterHook>& hook = std::nullopt,
                               int hook_frame = -1);

enum class RandomizeScope { kLogitsLayer, kAllLayers };

/// Resamples the targeted weights from uniform[-0.1, 0.1]; everything else
/// is untouched.
NetworkModel randomize(const NetworkModel& m, RandomizeScope scope, std::uint64_t seed);

}  // namespace l2caf
