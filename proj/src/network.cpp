#include "l2caf/network.hpp"

#include <algorithm>
#include <cmath>

#include "l2caf/kernels.hpp"
#include "l2caf/rng.hpp"

namespace l2caf {

namespace k = kernels;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

Tensor uniform_tensor(std::vector<int> shape, double lo, double hi, SplitRng& rng) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

std::vector<std::vector<int>> weight_shapes(const LayerSpec& s, const std::vector<int>& in) {
  switch (s.kind) {
    case LayerKind::kConv:
      return {{s.kh, s.kw, in[2], s.c_out}};
    case LayerKind::kDense:
      return {{s.out_dim, in[0]}, {s.out_dim}};
    case LayerKind::kRecurrentFuse: {
      const int hid = s.hidden_dim, d = in[0];
      return {{hid, d}, {hid, hid}, {hid}, {hid, d}, {hid, hid}, {hid}};
    }
    default:
      return {};
  }
}

int fan_in_of(const LayerSpec& s, const std::vector<int>& in, std::size_t tensor_index) {
  switch (s.kind) {
    case LayerKind::kConv:
      return s.kh * s.kw * in[2];
    case LayerKind::kDense:
      return in[0];
    case LayerKind::kRecurrentFuse:
      // Wg, Wc see the frame vector; Ug, Uc see the hidden state.
      return (tensor_index == 1 || tensor_index == 4) ? s.hidden_dim : in[0];
    default:
      return 1;
  }
}

}  // namespace

bool NetworkModel::is_recurrent() const { return fuse_index() >= 0; }

int NetworkModel::fuse_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::kRecurrentFuse) return static_cast<int>(i);
  return -1;
}

int NetworkModel::endpoint(const std::string& name) const {
  auto it = endpoints.find(name);
  if (it == endpoints.end()) throw IncompatibilityError("model has no endpoint named '" + name + "'");
  return it->second;
}

int NetworkModel::raw_output_layer() const {
  int last = output_layer();
  if (!layers.empty() && layers.back().kind == LayerKind::kEmbedNormalize) return last - 1;
  return last;
}

std::vector<std::vector<int>> infer_shapes(const std::vector<int>& input_shape,
                                           const std::vector<LayerSpec>& layers) {
  require(input_shape.size() == 3, "input shape must be [H,W,C]");
  for (int d : input_shape) require(d >= 1, "input dimensions must be positive");
  std::vector<std::vector<int>> shapes;
  shapes.push_back(input_shape);
  std::vector<int> cur = input_shape;
  int fuse_seen = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i];
    const std::string at = " at layer " + std::to_string(i);
    switch (s.kind) {
      case LayerKind::kConv: {
        require(cur.size() == 3, "Conv requires a [h,w,c] input" + at);
        require(s.kh >= 1 && s.kw >= 1 && s.c_out >= 1 && s.stride >= 1 && s.padding >= 0,
                "Conv has invalid parameters" + at);
        const int ph = cur[0] + 2 * s.padding, pw = cur[1] + 2 * s.padding;
        require(ph >= s.kh && pw >= s.kw, "Conv kernel larger than padded input" + at);
        cur = {(ph - s.kh) / s.stride + 1, (pw - s.kw) / s.stride + 1, s.c_out};
        break;
      }
      case LayerKind::kRelu:
        break;
      case LayerKind::kGap:
        require(cur.size() == 3, "GAP requires a [h,w,c] input" + at);
        cur = {cur[2]};
        break;
      case LayerKind::kFlatten: {
        int n = 1;
        for (int d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerKind::kDense:
        require(cur.size() == 1, "Dense requires a flat input" + at);
        require(s.out_dim >= 1, "Dense output dim must be positive" + at);
        cur = {s.out_dim};
        break;
      case LayerKind::kEmbedNormalize:
        require(cur.size() == 1, "EmbedNormalize requires a flat input" + at);
        break;
      case LayerKind::kRecurrentFuse:
        require(cur.size() == 1, "RecurrentFuse requires flat per-frame features" + at);
        require(s.hidden_dim >= 1, "RecurrentFuse hidden dim must be positive" + at);
        require(++fuse_seen == 1, "only one RecurrentFuse layer is supported" + at);
        cur = {s.hidden_dim};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

NetworkModel build_network(std::vector<int> input_shape, std::vector<LayerSpec> layers,
                           HeadKind head, std::uint64_t seed) {
  auto shapes = infer_shapes(input_shape, layers);
  require(shapes.back().size() == 1, "network output must be a flat vector");

  NetworkModel m;
  m.input_shape = std::move(input_shape);
  m.layers = std::move(layers);
  m.head = head;
  m.head_size = shapes.back()[0];

  SplitRng root(seed);
  m.weights.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    SplitRng lrng = root.split(i);
    auto ws = weight_shapes(m.layers[i], shapes[i]);
    for (std::size_t j = 0; j < ws.size(); ++j) {
      const bool is_bias = ws[j].size() == 1;
      if (is_bias) {
        m.weights[i].push_back(Tensor(ws[j]));  // zero biases
      } else {
        const double s = std::sqrt(1.0 / fan_in_of(m.layers[i], shapes[i], j));
        m.weights[i].push_back(uniform_tensor(ws[j], -s, s, lrng));
      }
    }
  }

  // Endpoints: last spatial output preceded by a Conv, plus head aliases.
  bool conv_seen = false;
  int features = -1;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind == LayerKind::kConv) conv_seen = true;
    if (conv_seen && shapes[i + 1].size() == 3) features = static_cast<int>(i);
  }
  if (features >= 0) m.endpoints["features"] = features;
  m.endpoints["output"] = m.output_layer();
  if (m.head == HeadKind::kLogits) m.endpoints["logits"] = m.output_layer();
  if (m.head == HeadKind::kEmbedding) m.endpoints["raw_embedding"] = m.raw_output_layer();
  return m;
}

NetworkModel make_preset(const std::string& name, std::uint64_t seed,
                         bool normalized_embedding, int n_classes, int input_hw) {
  const std::vector<int> in{input_hw, input_hw, 3};
  std::vector<LayerSpec> layers;
  auto block = [&](int c, int stride) {
    layers.push_back(LayerSpec::conv(3, 3, c, stride, 1));
    layers.push_back(LayerSpec::relu());
  };
  if (name == "tiny-cls") {
    block(8, 2);
    block(16, 2);
    block(16, 1);
    layers.push_back(LayerSpec::gap());
    layers.push_back(LayerSpec::dense(n_classes));
    return build_network(in, layers, HeadKind::kLogits, seed);
  }
  if (name == "tiny-ret") {
    block(8, 2);
    block(16, 2);
    block(16, 1);
    layers.push_back(LayerSpec::gap());
    layers.push_back(LayerSpec::dense(32));
    if (normalized_embedding) layers.push_back(LayerSpec::embed_normalize());
    return build_network(in, layers, HeadKind::kEmbedding, seed);
  }
  if (name == "tiny-deep") {
    block(8, 1);
    block(8, 2);
    block(16, 1);
    block(16, 2);
    block(16, 1);
    block(16, 1);
    block(16, 1);
    block(16, 1);
    layers.push_back(LayerSpec::gap());
    layers.push_back(LayerSpec::dense(n_classes));
    return build_network(in, layers, HeadKind::kLogits, seed);
  }
  if (name == "tiny-rnn") {
    block(8, 2);
    block(16, 2);
    block(16, 1);
    layers.push_back(LayerSpec::gap());
    layers.push_back(LayerSpec::recurrent_fuse(24));
    layers.push_back(LayerSpec::dense(32));
    if (normalized_embedding) layers.push_back(LayerSpec::embed_normalize());
    return build_network(in, layers, HeadKind::kEmbedding, seed);
  }
  throw IncompatibilityError("unknown preset '" + name + "'");
}

namespace {

Tensor apply_layer(const NetworkModel& m, int i, const Tensor& in) {
  const LayerSpec& s = m.layers[static_cast<std::size_t>(i)];
  const auto& w = m.weights[static_cast<std::size_t>(i)];
  switch (s.kind) {
    case LayerKind::kConv:
      return k::conv2d(in, w[0], s.stride, s.padding);
    case LayerKind::kRelu:
      return k::relu(in);
    case LayerKind::kGap:
      return k::global_average_pool(in);
    case LayerKind::kFlatten:
      return Tensor({in.size()}, std::vector<double>(in.data(), in.data() + in.size()));
    case LayerKind::kDense:
      return k::dense(w[0], in, w[1]);
    case LayerKind::kEmbedNormalize:
      return k::l2_normalize(in);
    case LayerKind::kRecurrentFuse:
      throw IncompatibilityError("recurrent layer reached outside a sequence pass");
  }
  throw IncompatibilityError("unknown layer kind");
}

void check_input(const NetworkModel& m, const Tensor& x) {
  require(x.shape() == m.input_shape,
          "input " + x.shape_str() + " does not match the model input " +
              Tensor(m.input_shape).shape_str());
}

void check_filter_layer(const NetworkModel& m, int at_layer) {
  if (at_layer < 0 || at_layer >= static_cast<int>(m.layers.size()))
    throw IncompatibilityError("filter layer index out of range");
  if (m.is_recurrent() && at_layer >= m.fuse_index())
    throw IncompatibilityError("filter must be inserted before the recurrent fuse");
  bool conv_before = false;
  for (int i = 0; i <= at_layer; ++i)
    if (m.layers[static_cast<std::size_t>(i)].kind == LayerKind::kConv) conv_before = true;
  if (!conv_before) throw IncompatibilityError("no convolution precedes the filter insertion point");
}

}  // namespace

Tensor forward(const NetworkModel& m, const Tensor& x, ActivationTrace* trace) {
  if (m.is_recurrent()) {
    SequenceTrace st;
    Tensor out = forward_sequence(m, {x}, trace ? &st : nullptr);
    if (trace) {
      trace->outputs = std::move(st.frames[0].outputs);
      // single-frame sequence: extend with fuse and head outputs
      const int fuse = m.fuse_index();
      trace->outputs.resize(m.layers.size());
      trace->outputs[static_cast<std::size_t>(fuse)] = st.hidden[0];
      Tensor cur = st.hidden[0];
      for (int i = fuse + 1; i < static_cast<int>(m.layers.size()); ++i) {
        cur = apply_layer(m, i, cur);
        trace->outputs[static_cast<std::size_t>(i)] = cur;
      }
    }
    return out;
  }
  check_input(m, x);
  Tensor cur = x;
  if (trace) trace->outputs.clear();
  for (int i = 0; i < static_cast<int>(m.layers.size()); ++i) {
    cur = apply_layer(m, i, cur);
    if (trace) trace->outputs.push_back(cur);
  }
  return cur;
}

Tensor forward_from(const NetworkModel& m, const Tensor& v, int after_layer) {
  Tensor cur = v;
  for (int i = after_layer + 1; i < static_cast<int>(m.layers.size()); ++i)
    cur = apply_layer(m, i, cur);
  return cur;
}

Tensor filtered_forward(const NetworkModel& m, const Tensor& x, int at_layer,
                        const Tensor& raw_filter) {
  check_input(m, x);
  check_filter_layer(m, at_layer);
  if (m.is_recurrent()) {
    // single-frame sequence with the filter active on that frame
    Tensor cur = x;
    for (int i = 0; i <= at_layer; ++i) cur = apply_layer(m, i, cur);
    cur = k::spatial_multiply(cur, k::l2_normalize(raw_filter));
    const int fuse = m.fuse_index();
    for (int i = at_layer + 1; i < fuse; ++i) cur = apply_layer(m, i, cur);
    const auto& w = m.weights[static_cast<std::size_t>(fuse)];
    Tensor h(std::vector<int>{m.layers[static_cast<std::size_t>(fuse)].hidden_dim});
    h = k::gated_cell_step(cur, h, w[0], w[1], w[2], w[3], w[4], w[5]);
    return forward_from(m, h, fuse);
  }
  Tensor cur = x;
  for (int i = 0; i <= at_layer; ++i) cur = apply_layer(m, i, cur);
  cur = k::spatial_multiply(cur, k::l2_normalize(raw_filter));
  return forward_from(m, cur, at_layer);
}

Tensor filtered_forward_from(const NetworkModel& m, const Tensor& v, int at_layer,
                             const Tensor& raw_filter) {
  check_filter_layer(m, at_layer);
  Tensor cur = k::spatial_multiply(v, k::l2_normalize(raw_filter));
  return forward_from(m, cur, at_layer);
}

Tensor forward_sequence(const NetworkModel& m, const std::vector<Tensor>& frames,
                        SequenceTrace* trace) {
  const int fuse = m.fuse_index();
  if (fuse < 0) throw IncompatibilityError("forward_sequence requires a recurrent model");
  if (frames.empty()) throw IncompatibilityError("forward_sequence requires at least one frame");
  if (trace) {
    trace->frames.clear();
    trace->hidden.clear();
  }
  const auto& w = m.weights[static_cast<std::size_t>(fuse)];
  Tensor h(std::vector<int>{m.layers[static_cast<std::size_t>(fuse)].hidden_dim});
  for (const Tensor& x : frames) {
    check_input(m, x);
    Tensor cur = x;
    ActivationTrace ft;
    for (int i = 0; i < fuse; ++i) {
      cur = apply_layer(m, i, cur);
      if (trace) ft.outputs.push_back(cur);
    }
    h = k::gated_cell_step(cur, h, w[0], w[1], w[2], w[3], w[4], w[5]);
    if (trace) {
      trace->frames.push_back(std::move(ft));
      trace->hidden.push_back(h);
    }
  }
  Tensor out = forward_from(m, h, fuse);
  if (trace) trace->output = out;
  return out;
}

TapedWeights::TapedWeights(Tape& tape, const NetworkModel& m) : tape_(&tape), model_(&m) {
  ids_.resize(m.weights.size());
  for (std::size_t i = 0; i < m.weights.size(); ++i)
    ids_[i].assign(m.weights[i].size(), -1);
}

ValueId TapedWeights::id(int layer, int index) {
  ValueId& slot = ids_[static_cast<std::size_t>(layer)][static_cast<std::size_t>(index)];
  if (slot < 0) slot = tape_->leaf(model_->weights[static_cast<std::size_t>(layer)][static_cast<std::size_t>(index)]);
  return slot;
}

namespace {

ValueId taped_layer(Tape& t, TapedWeights& w, const NetworkModel& m, int i, ValueId in) {
  const LayerSpec& s = m.layers[static_cast<std::size_t>(i)];
  switch (s.kind) {
    case LayerKind::kConv:
      return t.conv2d(in, w.id(i, 0), s.stride, s.padding);
    case LayerKind::kRelu:
      return t.relu(in);
    case LayerKind::kGap:
      return t.global_average_pool(in);
    case LayerKind::kFlatten:
      return t.flatten(in);
    case LayerKind::kDense:
      return t.dense(w.id(i, 0), in, w.id(i, 1));
    case LayerKind::kEmbedNormalize:
      return t.l2_normalize(in);
    case LayerKind::kRecurrentFuse:
      throw IncompatibilityError("recurrent layer reached outside a sequence pass");
  }
  throw IncompatibilityError("unknown layer kind");
}

}  // namespace

ValueId taped_forward(Tape& t, TapedWeights& w, ValueId input, int after_layer,
                      int upto_layer, const std::optional<FilterHook>& hook,
                      std::vector<ValueId>* layer_nodes) {
  const NetworkModel& m = w.model();
  ValueId cur = input;
  if (hook && hook->at_layer == after_layer) cur = t.spatial_multiply(cur, hook->filter_node);
  for (int i = after_layer + 1; i <= upto_layer; ++i) {
    cur = taped_layer(t, w, m, i, cur);
    if (hook && hook->at_layer == i) cur = t.spatial_multiply(cur, hook->filter_node);
    if (layer_nodes) layer_nodes->push_back(cur);
  }
  return cur;
}

ValueId taped_forward_sequence(Tape& t, TapedWeights& w,
                               const std::vector<ValueId>& frame_inputs, int after_layer,
                               const std::optional<FilterHook>& hook, int hook_frame) {
  const NetworkModel& m = w.model();
  const int fuse = m.fuse_index();
  if (fuse < 0) throw IncompatibilityError("taped_forward_sequence requires a recurrent model");
  ValueId h = t.leaf(Tensor(std::vector<int>{m.layers[static_cast<std::size_t>(fuse)].hidden_dim}));
  for (std::size_t f = 0; f < frame_inputs.size(); ++f) {
    std::optional<FilterHook> frame_hook;
    if (hook && static_cast<int>(f) == hook_frame) frame_hook = hook;
    ValueId z = taped_forward(t, w, frame_inputs[f], after_layer, fuse - 1, frame_hook);
    h = gated_cell_step(t, z, h, w.id(fuse, 0), w.id(fuse, 1), w.id(fuse, 2),
                        w.id(fuse, 3), w.id(fuse, 4), w.id(fuse, 5));
  }
  return taped_forward(t, w, h, fuse, m.output_layer());
}

NetworkModel randomize(const NetworkModel& m, RandomizeScope scope, std::uint64_t seed) {
  NetworkModel out = m;
  SplitRng root(seed);
  auto resample = [&](int layer) {
    SplitRng lrng = root.split(static_cast<std::uint64_t>(layer));
    for (Tensor& t : out.weights[static_cast<std::size_t>(layer)])
      for (int i = 0; i < t.size(); ++i) t[i] = lrng.uniform(-0.1, 0.1);
  };
  if (scope == RandomizeScope::kLogitsLayer) {
    if (m.head != HeadKind::kLogits)
      throw IncompatibilityError("logits-layer randomization requires a logits head");
    int target = -1;
    for (int i = 0; i < static_cast<int>(m.layers.size()); ++i)
      if (m.layers[static_cast<std::size_t>(i)].kind == LayerKind::kDense) target = i;
    if (target < 0) throw IncompatibilityError("model has no dense logits layer");
    resample(target);
  } else {
    for (int i = 0; i < static_cast<int>(m.layers.size()); ++i)
      if (!out.weights[static_cast<std::size_t>(i)].empty()) resample(i);
  }
  return out;
}

}  // namespace l2caf
