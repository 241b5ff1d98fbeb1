#include "okdad/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace okdad::nets {

using ad::Var;

void BackboneConfig::validate() const {
  if (feature_dim < 8)
    throw std::invalid_argument("backbone: feature_dim must be >= 8");
  if (widths.size() < 2)
    throw std::invalid_argument("backbone: need a stem and at least one stage");
  if (spatial_strides.size() != widths.size() ||
      temporal_strides.size() != widths.size())
    throw std::invalid_argument("backbone: stride lists must match widths");
  if (blocks_per_stage < 1)
    throw std::invalid_argument("backbone: blocks_per_stage must be >= 1");
  if (in_t < 1 || in_h < 4 || in_w < 4)
    throw std::invalid_argument("backbone: input dims too small");
}

ad::Parameter* ParamStore::add(const std::string& name, Tensor init) {
  if (find(name)) throw std::logic_error("duplicate parameter: " + name);
  params.push_back(std::make_unique<ad::Parameter>(name, std::move(init)));
  return params.back().get();
}

ad::Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<ad::Parameter*> ParamStore::all() const {
  std::vector<ad::Parameter*> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.get());
  return out;
}

void init_fanin_uniform(Tensor& t, int fan_in, rng::Stream& rs) {
  const double bound = 1.0 / std::sqrt((double)std::max(1, fan_in));
  for (auto& v : t.data) v = rs.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

Lstm Lstm::build(const std::string& prefix, int input, int hidden,
                 ParamStore& ps, rng::Stream& rs) {
  Lstm l;
  l.input = input;
  l.hidden = hidden;
  Tensor wx({4 * hidden, input}), wh({4 * hidden, hidden}), b({4 * hidden});
  init_fanin_uniform(wx, input, rs);
  init_fanin_uniform(wh, hidden, rs);
  init_fanin_uniform(b, hidden, rs);
  // forget-gate bias +1 (gate order: i, f, g, o)
  for (int i = hidden; i < 2 * hidden; ++i) b[i] += 1.0;
  l.wx = ps.add(prefix + ".wx", std::move(wx));
  l.wh = ps.add(prefix + ".wh", std::move(wh));
  l.b = ps.add(prefix + ".b", std::move(b));
  return l;
}

std::pair<Var, Var> Lstm::step(const Var& x, const Var& h,
                               const Var& c) const {
  if (x->value.numel() != input || h->value.numel() != hidden ||
      c->value.numel() != hidden)
    throw std::invalid_argument("lstm: state/input width mismatch");
  const int H = hidden;
  auto z = ad::add(ad::linear(x, ad::leaf(*wx), ad::leaf(*b)),
                   ad::linear(h, ad::leaf(*wh), nullptr));
  auto i = ad::sigmoid(ad::slice(z, 0, H));
  auto f = ad::sigmoid(ad::slice(z, H, H));
  auto g = ad::tanh_v(ad::slice(z, 2 * H, H));
  auto o = ad::sigmoid(ad::slice(z, 3 * H, H));
  auto c1 = ad::add(ad::mul(f, c), ad::mul(i, g));
  auto h1 = ad::mul(o, ad::tanh_v(c1));
  return {h1, c1};
}

// ---------------------------------------------------------------------------
// backbone
// ---------------------------------------------------------------------------

namespace {

Backbone::FactoredConv make_conv(const std::string& prefix, int cin, int cout,
                                 int sp, int st, int ksp, int ktm,
                                 ParamStore& ps, rng::Stream& rs, bool bias) {
  Backbone::FactoredConv c;
  c.sp = sp;
  c.st = st;
  c.ksp = ksp;
  c.ktm = ktm;
  Tensor ws({cout, cin, ksp, ksp});
  init_fanin_uniform(ws, cin * ksp * ksp, rs);
  c.ws = ps.add(prefix + ".ws", std::move(ws));
  Tensor wt({cout, cout, ktm});
  init_fanin_uniform(wt, cout * ktm, rs);
  c.wt = ps.add(prefix + ".wt", std::move(wt));
  if (bias) {
    Tensor bs({cout}), bt({cout});
    init_fanin_uniform(bs, cin * ksp * ksp, rs);
    init_fanin_uniform(bt, cout * ktm, rs);
    c.bs = ps.add(prefix + ".bs", std::move(bs));
    c.bt = ps.add(prefix + ".bt", std::move(bt));
  }
  return c;
}

// spatial conv, nonlinearity, temporal conv (the factored spatiotemporal
// convolution); linear when relu_between is false (projection shortcut)
Var apply_conv(const Backbone::FactoredConv& c, const Var& x,
               bool relu_between) {
  const int pad_sp = c.ksp / 2;
  const int pad_tm = c.ktm / 2;
  auto h = ad::conv_spatial(x, ad::leaf(*c.ws),
                            c.bs ? ad::leaf(*c.bs) : nullptr, c.sp, pad_sp);
  if (relu_between) h = ad::relu(h);
  return ad::conv_temporal(h, ad::leaf(*c.wt),
                           c.bt ? ad::leaf(*c.bt) : nullptr, c.st, pad_tm);
}

}  // namespace

Backbone Backbone::build(const std::string& prefix, const BackboneConfig& cfg,
                         ParamStore& ps, rng::Stream& rs) {
  cfg.validate();
  Backbone bb;
  bb.cfg = cfg;
  bb.stem = make_conv(prefix + ".stem", 1, cfg.widths[0],
                      cfg.spatial_strides[0], cfg.temporal_strides[0], 3, 3,
                      ps, rs, true);
  int cin = cfg.widths[0];
  for (size_t stage = 1; stage < cfg.widths.size(); ++stage) {
    const int cout = cfg.widths[stage];
    for (int blk = 0; blk < cfg.blocks_per_stage; ++blk) {
      const int sp = blk == 0 ? cfg.spatial_strides[stage] : 1;
      const int st = blk == 0 ? cfg.temporal_strides[stage] : 1;
      const std::string bp = prefix + ".s" + std::to_string(stage) + "b" +
                             std::to_string(blk);
      Block b;
      b.c1 = make_conv(bp + ".c1", cin, cout, sp, st, 3, 3, ps, rs, true);
      b.c2 = make_conv(bp + ".c2", cout, cout, 1, 1, 3, 3, ps, rs, true);
      b.has_proj = (cin != cout || sp != 1 || st != 1);
      if (b.has_proj)
        b.proj = make_conv(bp + ".proj", cin, cout, sp, st, 1, 1, ps, rs,
                           false);
      bb.blocks.push_back(b);
      cin = cout;
    }
  }
  Tensor fw({cfg.feature_dim, cin}), fb({cfg.feature_dim});
  init_fanin_uniform(fw, cin, rs);
  init_fanin_uniform(fb, cin, rs);
  bb.fc_w = ps.add(prefix + ".fc.w", std::move(fw));
  bb.fc_b = ps.add(prefix + ".fc.b", std::move(fb));
  return bb;
}

Var Backbone::forward(const Var& x) const {
  const auto& s = x->value.shape;
  if (s.size() != 5 || s[1] != cfg.in_t || s[2] != 1 || s[3] != cfg.in_h ||
      s[4] != cfg.in_w)
    throw std::invalid_argument("backbone: input shape mismatch, got " +
                                x->value.shape_str());
  auto h = ad::relu(apply_conv(stem, x, true));
  for (const auto& b : blocks) {
    auto f = ad::relu(apply_conv(b.c1, h, true));
    f = apply_conv(b.c2, f, true);
    auto skip = b.has_proj ? apply_conv(b.proj, h, false) : h;
    h = ad::relu(ad::add(f, skip));
  }
  auto pooled = ad::global_pool(h);
  return ad::linear(pooled, ad::leaf(*fc_w), ad::leaf(*fc_b));
}

// ---------------------------------------------------------------------------
// heads and gating
// ---------------------------------------------------------------------------

BnHead BnHead::build(const std::string& prefix, int dim, ParamStore& ps) {
  BnHead h;
  h.gamma = ps.add(prefix + ".gamma", Tensor({dim}, 1.0));
  h.beta = ps.add(prefix + ".beta", Tensor({dim}, 0.0));
  h.running_mean = Tensor({dim}, 0.0);
  h.running_var = Tensor({dim}, 1.0);
  return h;
}

Var BnHead::forward(const Var& x, bool training) {
  if (training)
    return ad::batchnorm_train(x, ad::leaf(*gamma), ad::leaf(*beta),
                               &running_mean, &running_var, momentum, eps);
  return ad::batchnorm_eval(x, ad::leaf(*gamma), ad::leaf(*beta), running_mean,
                            running_var, eps);
}

std::pair<Var, Var> gate_memory(const Var& h, const Var& c, const Var& y_a) {
  const double g = y_a->value[0];
  if (g < 0.0 || g > 1.0)
    throw std::invalid_argument("gate_memory: y_a must be in [0,1]");
  return {ad::scale(h, y_a), ad::scale(c, y_a)};
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::teacher: return "teacher";
    case ModelKind::student: return "student";
    case ModelKind::okdad: return "okdad";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "teacher") return ModelKind::teacher;
  if (s == "student") return ModelKind::student;
  if (s == "okdad") return ModelKind::okdad;
  throw std::invalid_argument("unknown model kind: " + s);
}

void ModelConfig::validate() const {
  backbone.validate();
  if (num_classes < 2)
    throw std::invalid_argument("model: num_classes must be >= 2");
  if (class_hidden < 4 || act_hidden < 4)
    throw std::invalid_argument("model: hidden widths too small");
  if (stride < 1 || delta < 1 || t_off < 1)
    throw std::invalid_argument("model: bad online geometry");
  if (actionness_threshold <= 0.0 || actionness_threshold >= 1.0)
    throw std::invalid_argument("model: actionness_threshold must be in (0,1)");
}

Model Model::build(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  rng::Stream rs(rng::derive(seed, {0xA0D, (uint64_t)cfg.kind}));
  m.backbone = Backbone::build("backbone", cfg.backbone, m.store, rs);
  const int D = cfg.backbone.feature_dim;
  if (cfg.kind == ModelKind::teacher)
    m.bn = BnHead::build("bn", D, m.store);
  Tensor cw({cfg.num_classes, D}), cb({cfg.num_classes});
  init_fanin_uniform(cw, D, rs);
  init_fanin_uniform(cb, D, rs);
  m.cls_w = m.store.add("classifier.w", std::move(cw));
  m.cls_b = m.store.add("classifier.b", std::move(cb));
  if (cfg.kind != ModelKind::teacher) {
    m.class_lstm = Lstm::build("class_lstm", D, cfg.class_hidden, m.store, rs);
    Tensor rw({D, cfg.class_hidden}), rb({D});
    init_fanin_uniform(rw, cfg.class_hidden, rs);
    init_fanin_uniform(rb, cfg.class_hidden, rs);
    m.rec_w = m.store.add("reconstruct.w", std::move(rw));
    m.rec_b = m.store.add("reconstruct.b", std::move(rb));
  }
  if (cfg.kind == ModelKind::okdad) {
    m.act_lstm = Lstm::build("act_lstm", D, cfg.act_hidden, m.store, rs);
    Tensor aw({1, cfg.act_hidden}), abias({1});
    init_fanin_uniform(aw, cfg.act_hidden, rs);
    init_fanin_uniform(abias, cfg.act_hidden, rs);
    m.act_w = m.store.add("act_head.w", std::move(aw));
    m.act_b = m.store.add("act_head.b", std::move(abias));
  }
  return m;
}

Var Model::teacher_features(const Var& x, bool training) {
  if (cfg.kind != ModelKind::teacher)
    throw std::logic_error("teacher_features on a non-teacher model");
  return bn.forward(backbone.forward(x), training);
}

Var Model::classifier_logits(const Var& feat) const {
  return ad::linear(feat, ad::leaf(*cls_w), ad::leaf(*cls_b));
}

Tensor Model::classify(const Tensor& feature) const {
  auto logits = classifier_logits(ad::constant(feature));
  return ad::softmax_value(logits->value);
}

Model::ClassStep Model::class_step(const Var& feat, const Var& h,
                                   const Var& c) const {
  if (!has_class_lstm())
    throw std::logic_error("class_step on a teacher model");
  ClassStep out;
  auto hc = class_lstm.step(feat, h, c);
  out.h = hc.first;
  out.c = hc.second;
  out.x_c = ad::linear(out.h, ad::leaf(*rec_w), ad::leaf(*rec_b));
  out.logits = classifier_logits(out.x_c);
  return out;
}

Model::ActStep Model::actionness_step(const Var& feat, const Var& h,
                                      const Var& c) const {
  if (!has_actionness())
    throw std::logic_error("actionness_step without an actionness LSTM");
  ActStep out;
  auto hc = act_lstm.step(feat, h, c);
  out.h = hc.first;
  out.c = hc.second;
  out.y_a = ad::sigmoid(ad::linear(out.h, ad::leaf(*act_w), ad::leaf(*act_b)));
  return out;
}

double Model::gate_value(double y_a) const {
  if (!cfg.hard_gating) return y_a;
  return y_a >= cfg.actionness_threshold ? 1.0 : 0.0;
}

}  // namespace okdad::nets
