#include "l2caf/attention.hpp"

#include <cmath>
#include <functional>

#include "l2caf/kernels.hpp"
#include "l2caf/rng.hpp"

namespace l2caf {

namespace k = kernels;

Tensor AttentionFilter::normalized() const { return k::l2_normalize(raw); }

Tensor AttentionFilter::magnitude_normalized() const {
  Tensor a = raw;
  for (int i = 0; i < a.size(); ++i) a[i] = std::fabs(a[i]);
  return k::l2_normalize(a);
}

namespace {

void check_config(const CafConfig& cfg) {
  if (cfg.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  if (cfg.d < 1) throw std::invalid_argument("plateau window d must be >= 1");
  if (cfg.max_iters < cfg.d + 1) throw std::invalid_argument("max_iters must be >= d + 1");
  if (cfg.lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
}

Tensor random_unit_box_filter(int h, int w, std::uint64_t seed) {
  SplitRng rng(seed);
  Tensor f({h, w});
  for (int i = 0; i < f.size(); ++i) f[i] = rng.uniform();
  return f;
}

// One iteration: loss value, gradient w.r.t. the variable, and the applied
// (constrained) filter for the norm log.
struct IterationOutput {
  double loss = 0.0;
  Tensor grad;
  Tensor applied;
};

using IterationFn = std::function<IterationOutput(const Tensor&)>;

CafResult run_descent(Tensor var, const CafConfig& cfg, const IterationFn& step,
                      FilterConstraint constraint) {
  check_config(cfg);
  CafResult res;
  res.constraint = constraint;
  for (int l = 1; l <= cfg.max_iters; ++l) {
    IterationOutput out = step(var);
    if (!std::isfinite(out.loss))
      throw std::runtime_error("filter optimization diverged to a non-finite loss");
    res.loss_history.push_back(out.loss);
    res.applied_norm_history.push_back(out.applied.l2_norm());
    res.iterations = l;
    if (l > cfg.d &&
        std::fabs(res.loss_history[static_cast<std::size_t>(l - 1)] -
                  res.loss_history[static_cast<std::size_t>(l - 1 - cfg.d)]) < cfg.epsilon) {
      res.terminated_by = CafTermination::kConverged;
      res.filter.raw = std::move(var);
      return res;
    }
    if (l == cfg.max_iters) break;
    for (int i = 0; i < var.size(); ++i) var[i] -= cfg.lr * out.grad[i];
  }
  res.terminated_by = CafTermination::kMaxIters;
  res.filter.raw = std::move(var);
  return res;
}

ValueId objective_node(Tape& t, ValueId ft_out, const Tensor& target, const CafObjective& obj) {
  if (obj.kind == CafObjective::Kind::kOblivious)
    return t.squared_distance(ft_out, t.leaf(target));
  // -FT_c + sum_{i != c} FT_i  ==  sum(FT) - 2 FT_c
  return t.add(t.sum(ft_out), t.scale_add(t.component(ft_out, obj.target_class), -2.0, 0.0));
}

std::pair<int, int> filter_dims(const Tensor& at_output, int at_layer) {
  if (at_output.rank() != 3)
    throw IncompatibilityError("filter layer " + std::to_string(at_layer) +
                               " output is not spatial: " + at_output.shape_str());
  return {at_output.dim(0), at_output.dim(1)};
}

void check_class_target(const NetworkModel& m, int target_class) {
  if (m.head != HeadKind::kLogits)
    throw IncompatibilityError("class-specific objective requires a logits head");
  if (target_class < 0 || target_class >= m.head_size)
    throw std::out_of_range("class index " + std::to_string(target_class) + " out of range [0," +
                            std::to_string(m.head_size) + ")");
}

// Vanilla loop: each iteration rebuilds the full pass from x.
CafResult optimize_from_input(const NetworkModel& m, const Tensor& x, int at_layer,
                              const CafConfig& cfg, const CafObjective& obj,
                              FilterConstraint constraint) {
  ActivationTrace trace;
  Tensor target = forward(m, x, &trace);
  auto [fh, fw] = filter_dims(trace.outputs[static_cast<std::size_t>(at_layer)], at_layer);
  if (obj.kind == CafObjective::Kind::kClassSpecific) check_class_target(m, obj.target_class);

  const bool recurrent = m.is_recurrent();
  auto step = [&, fh = fh, fw = fw](const Tensor& var) {
    Tape t;
    TapedWeights w(t, m);
    ValueId raw = t.leaf(var);
    ValueId constrained = -1;
    switch (constraint) {
      case FilterConstraint::kUnitL2:
        constrained = t.l2_normalize(raw);
        break;
      case FilterConstraint::kSoftmax:
        constrained = t.reshape(t.softmax(t.flatten(raw)), {fh, fw});
        break;
      case FilterConstraint::kGaussian:
        constrained = t.gaussian_grid(raw, fh, fw);
        break;
    }
    FilterHook hook{at_layer, constrained};
    ValueId x_id = t.leaf(x);
    ValueId out = recurrent ? taped_forward_sequence(t, w, {x_id}, -1, hook, 0)
                            : taped_forward(t, w, x_id, -1, m.output_layer(), hook);
    ValueId loss = objective_node(t, out, target, obj);
    t.backward(loss);
    return IterationOutput{t.value(loss)[0], t.grad(raw), t.value(constrained)};
  };

  Tensor var0;
  if (constraint == FilterConstraint::kGaussian) {
    var0 = Tensor({2}, {(fh - 1) / 2.0, (fw - 1) / 2.0});
  } else {
    var0 = random_unit_box_filter(fh, fw, cfg.seed);
  }
  return run_descent(std::move(var0), cfg, step, constraint);
}

void check_filter_preconditions(const NetworkModel& m, int at_layer) {
  if (at_layer < 0 || at_layer >= static_cast<int>(m.layers.size()))
    throw IncompatibilityError("filter layer index out of range");
  bool conv_before = false;
  for (int i = 0; i <= at_layer; ++i)
    if (m.layers[static_cast<std::size_t>(i)].kind == LayerKind::kConv) conv_before = true;
  if (!conv_before) throw IncompatibilityError("no convolution precedes the filter insertion point");
  if (m.is_recurrent() && at_layer >= m.fuse_index())
    throw IncompatibilityError("filter must be inserted before the recurrent fuse");
}

}  // namespace

CafResult optimize_class_oblivious(const NetworkModel& m, const Tensor& x, int at_layer,
                                   const CafConfig& cfg) {
  check_filter_preconditions(m, at_layer);
  return optimize_from_input(m, x, at_layer, cfg, CafObjective::oblivious(),
                             FilterConstraint::kUnitL2);
}

CafResult optimize_class_specific(const NetworkModel& m, const Tensor& x, int at_layer,
                                  int target_class, const CafConfig& cfg) {
  check_filter_preconditions(m, at_layer);
  return optimize_from_input(m, x, at_layer, cfg, CafObjective::class_specific(target_class),
                             FilterConstraint::kUnitL2);
}

CafResult optimize_fast(const NetworkModel& m, const ActivationTrace& trace, int at_layer,
                        int endpoint_layer, const CafConfig& cfg, const CafObjective& obj) {
  check_filter_preconditions(m, at_layer);
  if (m.is_recurrent())
    throw IncompatibilityError("optimize_fast expects a feed-forward model");
  if (endpoint_layer <= at_layer)
    throw IncompatibilityError("endpoint layer must be strictly after the filter layer");
  if (endpoint_layer >= static_cast<int>(m.layers.size()))
    throw IncompatibilityError("endpoint layer index out of range");
  if (trace.outputs.size() != m.layers.size())
    throw IncompatibilityError("activation trace does not cover the model");
  if (obj.kind == CafObjective::Kind::kClassSpecific) {
    check_class_target(m, obj.target_class);
    if (endpoint_layer != m.output_layer())
      throw IncompatibilityError("class-specific endpoints must be the network logits");
  }

  const Tensor& v = trace.outputs[static_cast<std::size_t>(at_layer)];
  const Tensor target = trace.outputs[static_cast<std::size_t>(endpoint_layer)];
  auto [fh, fw] = filter_dims(v, at_layer);

  auto step = [&](const Tensor& var) {
    Tape t;
    TapedWeights w(t, m);
    ValueId raw = t.leaf(var);
    ValueId constrained = t.l2_normalize(raw);
    ValueId v_id = t.leaf(v);
    FilterHook hook{at_layer, constrained};
    ValueId out = taped_forward(t, w, v_id, at_layer, endpoint_layer, hook);
    ValueId loss = objective_node(t, out, target, obj);
    t.backward(loss);
    return IterationOutput{t.value(loss)[0], t.grad(raw), t.value(constrained)};
  };

  return run_descent(random_unit_box_filter(fh, fw, cfg.seed), cfg, step,
                     FilterConstraint::kUnitL2);
}

CafResult optimize_softmax_filter(const NetworkModel& m, const Tensor& x, int at_layer,
                                  const CafConfig& cfg, const CafObjective& obj) {
  check_filter_preconditions(m, at_layer);
  return optimize_from_input(m, x, at_layer, cfg, obj, FilterConstraint::kSoftmax);
}

std::pair<CafResult, GaussianFilterParams> optimize_gaussian_filter(
    const NetworkModel& m, const Tensor& x, int at_layer, const CafConfig& cfg,
    const CafObjective& obj) {
  check_filter_preconditions(m, at_layer);
  CafResult res = optimize_from_input(m, x, at_layer, cfg, obj, FilterConstraint::kGaussian);
  // the descent variable is the mean; expose the evaluated grid as the filter
  const Tensor mu = res.filter.raw;
  GaussianFilterParams params{mu[0], mu[1]};
  ActivationTrace trace;
  forward(m, x, &trace);
  const Tensor& v = trace.outputs[static_cast<std::size_t>(at_layer)];
  res.filter.raw = k::gaussian_grid(mu, v.dim(0), v.dim(1));
  return {std::move(res), params};
}

std::vector<CafResult> optimize_recurrent_sequence(const NetworkModel& m,
                                                   const std::vector<Tensor>& frames,
                                                   const CafConfig& cfg) {
  if (!m.is_recurrent())
    throw IncompatibilityError("optimize_recurrent_sequence requires a recurrent model");
  if (frames.empty()) throw IncompatibilityError("sequence must contain at least one frame");
  const int at_layer = m.endpoint("features");
  check_filter_preconditions(m, at_layer);

  SequenceTrace strace;
  Tensor target = forward_sequence(m, frames, &strace);

  std::vector<Tensor> cached;  // per-frame activations at the filter layer
  for (const auto& ft : strace.frames)
    cached.push_back(ft.outputs[static_cast<std::size_t>(at_layer)]);
  auto [fh, fw] = filter_dims(cached[0], at_layer);

  std::vector<CafResult> results;
  for (std::size_t active = 0; active < frames.size(); ++active) {
    auto step = [&](const Tensor& var) {
      Tape t;
      TapedWeights w(t, m);
      ValueId raw = t.leaf(var);
      ValueId constrained = t.l2_normalize(raw);
      std::vector<ValueId> frame_inputs;
      for (const Tensor& v : cached) frame_inputs.push_back(t.leaf(v));
      FilterHook hook{at_layer, constrained};
      ValueId out = taped_forward_sequence(t, w, frame_inputs, at_layer, hook,
                                           static_cast<int>(active));
      ValueId loss = t.squared_distance(out, t.leaf(target));
      t.backward(loss);
      return IterationOutput{t.value(loss)[0], t.grad(raw), t.value(constrained)};
    };
    results.push_back(run_descent(random_unit_box_filter(fh, fw, cfg.seed), cfg, step,
                                  FilterConstraint::kUnitL2));
  }
  return results;
}

Heatmap heatmap_from_grid(const Tensor& grid, int out_h, int out_w) {
  if (out_h < grid.dim(0) || out_w < grid.dim(1))
    throw std::invalid_argument("heatmap target size must be at least the grid size");
  return Heatmap{k::min_max_rescale(k::bilinear_resize(grid, out_h, out_w))};
}

Heatmap heatmap_from_filter(const CafResult& result, int out_h, int out_w) {
  switch (result.constraint) {
    case FilterConstraint::kUnitL2:
      return heatmap_from_grid(result.filter.magnitude_normalized(), out_h, out_w);
    case FilterConstraint::kSoftmax: {
      const Tensor& raw = result.filter.raw;
      Tensor flat({raw.size()}, std::vector<double>(raw.data(), raw.data() + raw.size()));
      Tensor sm = k::softmax(flat);
      return heatmap_from_grid(Tensor(raw.shape(), std::vector<double>(sm.data(), sm.data() + sm.size())),
                               out_h, out_w);
    }
    case FilterConstraint::kGaussian:
      return heatmap_from_grid(result.filter.raw, out_h, out_w);
  }
  throw std::logic_error("unknown filter constraint");
}

}  // namespace l2caf
