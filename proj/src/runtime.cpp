#include "okdad/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "okdad/losses.hpp"

namespace okdad::runtime {

using ad::Var;

int64_t StreamState::memory_bytes() const {
  int64_t n = (int64_t)sizeof(StreamState);
  n += (int64_t)(act.h.data.capacity() + act.c.data.capacity() +
                 cls.h.data.capacity() + cls.c.data.capacity()) *
       (int64_t)sizeof(double);
  n += (int64_t)open_actionness.capacity() * (int64_t)sizeof(double);
  for (const auto& d : open_dists)
    n += (int64_t)d.data.capacity() * (int64_t)sizeof(double) + sizeof(Tensor);
  return n;
}

sampling::OfflineSampleConfig crop_config(const nets::ModelConfig& cfg) {
  sampling::OfflineSampleConfig c;
  c.t_off = cfg.t_off;
  c.crop_margin = cfg.crop_margin;
  c.out_height = cfg.backbone.in_h;
  c.out_width = cfg.backbone.in_w;
  return c;
}

sampling::OnlineChunkConfig chunk_config(const nets::ModelConfig& cfg) {
  sampling::OnlineChunkConfig c;
  c.stride = cfg.stride;
  c.delta = cfg.delta;
  return c;
}

StreamState stream_init(const nets::Model& model) {
  if (!model.has_class_lstm())
    throw std::invalid_argument("stream_init: model has no streaming heads");
  StreamState st;
  st.cls = nets::RecurrentState::zeros(model.cfg.class_hidden);
  if (model.has_actionness())
    st.act = nets::RecurrentState::zeros(model.cfg.act_hidden);
  st.t = 0;
  return st;
}

namespace {

Var block_features(const nets::Model& model, const Tensor& block) {
  const auto& bb = model.cfg.backbone;
  check_shape(block, {model.cfg.delta, bb.in_h, bb.in_w}, "stream block");
  Tensor x({1, model.cfg.delta, 1, bb.in_h, bb.in_w});
  x.data = block.data;
  auto feats = model.features(ad::constant(std::move(x)));
  return ad::slice(feats, 0, bb.feature_dim);
}

// Segment bookkeeping shared by the online accumulator and stream_finish.
metrics::Segment close_segment(StreamState& st, int end_block) {
  std::vector<BlockOutput> outs;
  outs.reserve(st.open_dists.size());
  for (size_t i = 0; i < st.open_dists.size(); ++i) {
    BlockOutput o;
    o.t = st.open_start + (int)i;
    o.actionness = st.open_actionness[i];
    o.class_dist = st.open_dists[i];
    outs.push_back(std::move(o));
  }
  auto segs = propose_segments(outs, -1.0);  // every block is positive here
  metrics::Segment s = segs.at(0);
  s.start_block = st.open_start;
  s.end_block = end_block;
  st.open_start = -1;
  st.open_actionness.clear();
  st.open_dists.clear();
  return s;
}

}  // namespace

StepResult stream_step(const nets::Model& model, StreamState& state,
                       const Tensor& block,
                       std::optional<double> gate_override) {
  StepResult res;
  auto feat = block_features(model, block);

  double gate = 1.0;
  if (model.has_actionness()) {
    auto act = model.actionness_step(feat, ad::constant(state.act.h),
                                     ad::constant(state.act.c));
    state.act.h = act.h->value;
    state.act.c = act.c->value;
    const double y_a = act.y_a->value[0];
    res.output.actionness = y_a;
    gate = gate_override ? *gate_override : model.gate_value(y_a);
  } else if (gate_override) {
    gate = *gate_override;
  }

  auto h = ad::constant(state.cls.h);
  auto c = ad::constant(state.cls.c);
  if (model.has_actionness() || gate_override) {
    auto gated = nets::gate_memory(h, c, ad::constant_scalar(gate));
    h = gated.first;
    c = gated.second;
  }
  auto step = model.class_step(feat, h, c);
  state.cls.h = step.h->value;
  state.cls.c = step.c->value;

  res.output.t = state.t;
  res.output.class_dist = ad::softmax_value(step.logits->value);

  // online segment accumulator (okdad models only)
  if (model.has_actionness()) {
    const bool positive =
        *res.output.actionness > model.cfg.actionness_threshold;
    if (positive) {
      if (state.open_start < 0) state.open_start = state.t;
      state.open_actionness.push_back(*res.output.actionness);
      state.open_dists.push_back(res.output.class_dist);
    } else if (state.open_start >= 0) {
      res.closed_segment = close_segment(state, state.t);
    }
  }
  state.t += 1;
  return res;
}

std::optional<metrics::Segment> stream_finish(const nets::Model& model,
                                              StreamState& state) {
  (void)model;
  if (state.open_start < 0) return std::nullopt;
  return close_segment(state, state.t);
}

std::vector<BlockOutput> run_stream(const nets::Model& model,
                                    const synthvid::Video& video,
                                    int n_partial,
                                    std::vector<metrics::Segment>* segments) {
  const auto crop = crop_config(model.cfg);
  const auto chunk = chunk_config(model.cfg);
  if (n_partial < 0) n_partial = video.num_frames();
  auto blocks = sampling::chunk_online(video, chunk, crop, n_partial);
  auto st = stream_init(model);
  std::vector<BlockOutput> outputs;
  outputs.reserve(blocks.size());
  for (const auto& b : blocks) {
    auto res = stream_step(model, st, b.frames);
    if (segments && res.closed_segment)
      segments->push_back(*res.closed_segment);
    outputs.push_back(std::move(res.output));
  }
  if (segments) {
    auto tail = stream_finish(model, st);
    if (tail) segments->push_back(*tail);
  }
  return outputs;
}

std::vector<BlockOutput> batched_outputs(const nets::Model& model,
                                         const synthvid::Video& video) {
  const auto crop = crop_config(model.cfg);
  const auto chunk = chunk_config(model.cfg);
  auto blocks = sampling::chunk_online(video, chunk, crop);
  const auto& bb = model.cfg.backbone;
  const int T = (int)blocks.size();

  // one backbone call over all blocks
  Tensor x({T, model.cfg.delta, 1, bb.in_h, bb.in_w});
  const int64_t bsz = (int64_t)model.cfg.delta * bb.in_h * bb.in_w;
  for (int t = 0; t < T; ++t)
    std::copy(blocks[t].frames.data.begin(), blocks[t].frames.data.end(),
              x.data.begin() + t * bsz);
  auto feats = model.features(ad::constant(std::move(x)));  // [T, D]

  std::vector<BlockOutput> outputs(T);
  auto cls = nets::RecurrentState::zeros(model.cfg.class_hidden);
  auto act = model.has_actionness()
                 ? nets::RecurrentState::zeros(model.cfg.act_hidden)
                 : nets::RecurrentState{Tensor(), Tensor()};
  for (int t = 0; t < T; ++t) {
    auto feat = ad::slice(feats, (int64_t)t * bb.feature_dim, bb.feature_dim);
    double gate = 1.0;
    if (model.has_actionness()) {
      auto astep = model.actionness_step(feat, ad::constant(act.h),
                                         ad::constant(act.c));
      act.h = astep.h->value;
      act.c = astep.c->value;
      outputs[t].actionness = astep.y_a->value[0];
      gate = model.gate_value(astep.y_a->value[0]);
    }
    auto h = ad::constant(cls.h);
    auto c = ad::constant(cls.c);
    if (model.has_actionness()) {
      auto gated = nets::gate_memory(h, c, ad::constant_scalar(gate));
      h = gated.first;
      c = gated.second;
    }
    auto step = model.class_step(feat, h, c);
    cls.h = step.h->value;
    cls.c = step.c->value;
    outputs[t].t = t;
    outputs[t].class_dist = ad::softmax_value(step.logits->value);
  }
  return outputs;
}

std::vector<metrics::Segment> propose_segments(
    const std::vector<BlockOutput>& outputs, double threshold) {
  std::vector<metrics::Segment> segments;
  size_t i = 0;
  while (i < outputs.size()) {
    const bool pos =
        outputs[i].actionness && *outputs[i].actionness > threshold;
    if (!pos) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < outputs.size() && outputs[j].actionness &&
           *outputs[j].actionness > threshold)
      ++j;
    const int len = (int)(j - i);
    const auto sigma = losses::sigmoid_weights(len);
    const int C = (int)outputs[i].class_dist.numel();
    std::vector<double> avg(C, 0.0);
    double mean_act = 0.0;
    for (int k = 0; k < len; ++k) {
      for (int c = 0; c < C; ++c)
        avg[c] += sigma[k] * outputs[i + k].class_dist[c];
      mean_act += *outputs[i + k].actionness;
    }
    mean_act /= len;
    int label = 0;
    for (int c = 1; c < C; ++c)
      if (avg[c] > avg[label]) label = c;
    metrics::Segment s;
    s.start_block = outputs[i].t;
    s.end_block = outputs[i].t + len;
    s.label = label;
    s.confidence = mean_act * avg[label];
    segments.push_back(s);
    i = j;
  }
  return segments;
}

int predict_at_ratio(const nets::Model& model, const synthvid::Video& video,
                     double r) {
  const int N = video.num_frames();
  const int n_partial = sampling::truncate_ratio(N, r);
  auto outputs = run_stream(model, video, n_partial);
  const int T = (int)outputs.size();
  const auto sigma = losses::sigmoid_weights(T);
  const int C = (int)outputs[0].class_dist.numel();
  std::vector<double> acc(C, 0.0);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) acc[c] += sigma[t] * outputs[t].class_dist[c];
  int best = 0;
  for (int c = 1; c < C; ++c)
    if (acc[c] > acc[best]) best = c;
  return best;
}

std::pair<Tensor, Tensor> teacher_feature_at(nets::Model& teacher,
                                             const synthvid::Video& video,
                                             int n_partial) {
  const auto crop = crop_config(teacher.cfg);
  Tensor stack = sampling::sample_offline(video, n_partial, crop, nullptr);
  Tensor x({1, crop.t_off, 1, crop.out_height, crop.out_width});
  x.data = stack.data;
  auto xp = teacher.teacher_features(ad::constant(std::move(x)), false);
  Tensor feat({teacher.cfg.backbone.feature_dim});
  for (int64_t i = 0; i < feat.numel(); ++i) feat[i] = xp->value[i];
  Tensor dist = teacher.classify(feat);
  return {std::move(feat), std::move(dist)};
}

std::vector<int> block_owners(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta) {
  const int span = stride * delta;
  const int count = sampling::strided_count(num_frames, stride);
  const int T = sampling::num_blocks(count, delta);
  std::vector<int> owner(T, -1);
  for (int t = 0; t < T; ++t) {
    const int lo = t * span;
    const int hi = std::min((t + 1) * span, num_frames);
    const double block_len = hi - lo;
    int best = -1, best_ov = 0;
    for (size_t k = 0; k < intervals.size(); ++k) {
      const auto& iv = intervals[k];
      const int ov = std::max(
          0, std::min(hi, iv.end_frame) - std::max(lo, iv.start_frame));
      if (ov > best_ov) {
        best_ov = ov;
        best = (int)k;
      }
    }
    if (best >= 0 && best_ov * 2 >= block_len) owner[t] = best;
  }
  return owner;
}

std::vector<double> block_actionness_labels(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta) {
  auto owner = block_owners(intervals, num_frames, stride, delta);
  std::vector<double> labels(owner.size(), 0.0);
  for (size_t t = 0; t < owner.size(); ++t)
    if (owner[t] >= 0) labels[t] = 1.0;
  return labels;
}

std::vector<metrics::Segment> gt_block_segments(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta) {
  auto owner = block_owners(intervals, num_frames, stride, delta);
  const int T = (int)owner.size();
  std::vector<metrics::Segment> segments;
  int t = 0;
  while (t < T) {
    if (owner[t] < 0) {
      ++t;
      continue;
    }
    int j = t;
    while (j < T && owner[j] == owner[t]) ++j;
    metrics::Segment s;
    s.start_block = t;
    s.end_block = j;
    s.label = intervals[(size_t)owner[t]].label;
    s.confidence = 1.0;
    segments.push_back(s);
    t = j;
  }
  return segments;
}

}  // namespace okdad::runtime
