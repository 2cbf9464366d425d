#include "fetalsep/cyclegan.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fetalsep/config.hpp"
#include "fetalsep/error.hpp"

namespace fetalsep {

using nn::Tensor;

Activation parse_activation(const std::string& name) {
  if (name == "sine") return Activation::Sine;
  if (name == "leaky_relu" || name == "leakyrelu") return Activation::LeakyRelu;
  if (name == "linear") return Activation::Linear;
  throw Error(ErrorCode::BadConfig, "unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Sine: return "sine";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

nn::MaskEnergy parse_mask_energy(const std::string& name) {
  if (name == "suppress") return nn::MaskEnergy::Suppress;
  if (name == "channel_mean") return nn::MaskEnergy::ChannelMean;
  throw Error(ErrorCode::BadConfig, "unknown mask energy '" + name + "'");
}

std::string to_string(nn::MaskEnergy e) {
  return e == nn::MaskEnergy::Suppress ? "suppress" : "channel_mean";
}

namespace {

void check_layers(const std::vector<ConvLayerSpec>& layers, const char* who) {
  if (layers.empty()) throw Error(ErrorCode::BadConfig, std::string(who) + " needs at least one conv layer");
  for (const auto& l : layers) {
    if (l.out_ch < 1 || l.kernel < 1 || l.kernel % 2 == 0) {
      throw Error(ErrorCode::BadConfig, std::string(who) + " conv kernels must be odd and channels >= 1");
    }
    if (l.stride != 1 && l.stride != 2) throw Error(ErrorCode::BadConfig, "conv stride must be 1 or 2");
    if (!(l.omega > 0.0) || !std::isfinite(l.omega)) throw Error(ErrorCode::BadConfig, "omega must be positive");
  }
}

std::size_t stack_length(const std::vector<ConvLayerSpec>& layers, std::size_t len) {
  for (const auto& l : layers) len = (len + l.stride - 1) / l.stride;
  return len;
}

Tensor activate(const Tensor& z, const ConvLayerSpec& l, double slope) {
  switch (l.activation) {
    case Activation::Sine: return nn::sine_forward(z, l.omega);
    case Activation::LeakyRelu: return nn::leaky_relu_forward(z, slope);
    case Activation::Linear: return z;
  }
  return z;
}

Tensor activate_backward(const Tensor& z, const ConvLayerSpec& l, double slope, const Tensor& g) {
  switch (l.activation) {
    case Activation::Sine: return nn::sine_backward(z, l.omega, g);
    case Activation::LeakyRelu: return nn::leaky_relu_backward(z, slope, g);
    case Activation::Linear: return g;
  }
  return g;
}

std::string wname(std::size_t i) { return "conv" + std::to_string(i) + ".w"; }
std::string bname(std::size_t i) { return "conv" + std::to_string(i) + ".b"; }

void add_conv_params(nn::ParamStore& store, const std::vector<ConvLayerSpec>& layers) {
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    store.add(wname(i), {layers[i].out_ch, in_ch, layers[i].kernel});
    store.add(bname(i), {layers[i].out_ch});
    in_ch = layers[i].out_ch;
  }
}

// SIREN-style bounds for sine layers, He-uniform otherwise.
void init_conv_params(nn::ParamStore& store, const std::vector<ConvLayerSpec>& layers, Rng& rng) {
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const double fan_in = static_cast<double>(in_ch * l.kernel);
    double bound = std::sqrt(6.0 / fan_in);
    if (l.activation == Activation::Sine) bound = l.omega > 1.0 ? 1.0 / fan_in : bound / l.omega;
    for (double& v : store.at(wname(i)).value) v = rng.uniform(-bound, bound);
    for (double& v : store.at(bname(i)).value) v = rng.uniform(-bound, bound);
    in_ch = l.out_ch;
  }
}

nn::ConvGeometry geometry(const ConvLayerSpec& l, std::size_t in_ch) {
  return {in_ch, l.out_ch, l.kernel, l.stride};
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor scaled(const Tensor& t, double k) {
  Tensor out = t;
  for (double& v : out.data()) v *= k;
  return out;
}

// Runs the conv stack forward, recording inputs and pre-activations.
Tensor conv_stack_forward(const nn::ParamStore& store, const std::vector<ConvLayerSpec>& layers,
                          double slope, Tensor h, std::vector<Tensor>* ins, std::vector<Tensor>* outs) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto geom = geometry(layers[i], h.channels());
    Tensor z = nn::conv1d_forward(h, store.at(wname(i)).value, store.at(bname(i)).value, geom);
    Tensor a = activate(z, layers[i], slope);
    if (ins) ins->push_back(std::move(h));
    if (outs) outs->push_back(std::move(z));
    h = std::move(a);
  }
  return h;
}

Tensor conv_stack_backward(nn::ParamStore& store, const std::vector<ConvLayerSpec>& layers, double slope,
                           const std::vector<Tensor>& ins, const std::vector<Tensor>& outs, Tensor g,
                           bool params) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = activate_backward(outs[i], layers[i], slope, g);
    const auto geom = geometry(layers[i], ins[i].channels());
    auto cg = nn::conv1d_backward(ins[i], store.at(wname(i)).value, geom, g);
    if (params) {
      accumulate(store.at(wname(i)).grad, cg.weight);
      accumulate(store.at(bname(i)).grad, cg.bias);
    }
    g = std::move(cg.x);
  }
  return g;
}

}  // namespace

void GeneratorSpec::validate() const {
  check_layers(layers, "generator");
  if (layers.back().out_ch != 1) throw Error(ErrorCode::BadConfig, "generator must end with one channel");
  if (window_len < 2) throw Error(ErrorCode::BadConfig, "window_len must be >= 2");
  if (attention && attention_dim < 1) throw Error(ErrorCode::BadConfig, "attention_dim must be >= 1");
  if (!(mask_threshold > 0.0 && mask_threshold <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "mask_threshold must lie in (0, 1]");
  }
  if (leaky_slope < 0.0) throw Error(ErrorCode::BadConfig, "leaky_slope must be >= 0");
  const std::size_t out = stack_length(layers, window_len) * (upsample ? 2 : 1);
  if (out != window_len) {
    throw Error(ErrorCode::BadConfig, "generator output length " + std::to_string(out) +
                                          " differs from window_len " + std::to_string(window_len));
  }
}

GeneratorSpec default_generator_spec(int depth, Activation hidden, bool attention) {
  if (depth != 3 && depth != 4) throw Error(ErrorCode::BadConfig, "generator depth must be 3 or 4");
  if (hidden == Activation::Linear) throw Error(ErrorCode::BadConfig, "hidden activation must be sine or leaky_relu");
  GeneratorSpec s;
  s.attention = attention;
  std::vector<std::size_t> chans = depth == 4 ? std::vector<std::size_t>{32, 32, 64} : std::vector<std::size_t>{32, 64};
  for (std::size_t i = 0; i < chans.size(); ++i) {
    const double omega = (hidden == Activation::Sine && i == 0) ? 30.0 : 1.0;
    s.layers.push_back({chans[i], 15, 1, hidden, omega});
  }
  s.layers.push_back({1, 31, 2, Activation::Linear, 1.0});
  s.upsample = true;
  return s;
}

void DiscriminatorSpec::validate() const {
  check_layers(layers, "discriminator");
  if (classes != 2) throw Error(ErrorCode::BadConfig, "discriminator must have 2 classes");
  if (window_len < 2) throw Error(ErrorCode::BadConfig, "window_len must be >= 2");
}

std::size_t DiscriminatorSpec::flat_features() const {
  return layers.back().out_ch * stack_length(layers, window_len);
}

DiscriminatorSpec default_discriminator_spec() {
  DiscriminatorSpec s;
  for (std::size_t ch : {16, 32, 32, 32}) s.layers.push_back({ch, 15, 2, Activation::Sine, 1.0});
  return s;
}

// ---------------------------------------------------------------------------

Generator::Generator(GeneratorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.attention) {
    const std::size_t d = spec_.attention_dim;
    for (const char* p : {"q", "k", "v"}) {
      store_.add(std::string("att.w") + p, {d, 1});
      store_.add(std::string("att.b") + p, {d});
    }
  }
  add_conv_params(store_, spec_.layers);
}

void Generator::init(Rng& rng) {
  if (spec_.attention) {
    const double bound = std::sqrt(6.0 / (1.0 + static_cast<double>(spec_.attention_dim)));
    for (const char* p : {"q", "k", "v"}) {
      for (double& v : store_.at(std::string("att.w") + p).value) v = rng.uniform(-bound, bound);
      std::fill(store_.at(std::string("att.b") + p).value.begin(), store_.at(std::string("att.b") + p).value.end(), 0.0);
    }
  }
  init_conv_params(store_, spec_.layers, rng);
}

nn::AttentionWeights Generator::attention_weights() const {
  nn::AttentionWeights w;
  w.wq = store_.at("att.wq").value;
  w.bq = store_.at("att.bq").value;
  w.wk = store_.at("att.wk").value;
  w.bk = store_.at("att.bk").value;
  w.wv = store_.at("att.wv").value;
  w.bv = store_.at("att.bv").value;
  w.in_ch = 1;
  w.dim = spec_.attention_dim;
  return w;
}

Tensor Generator::forward(const Tensor& x, Trace* trace) const {
  if (x.channels() != 1 || x.length() != spec_.window_len) {
    throw Error(ErrorCode::ShapeMismatch, "generator expects B x 1 x " + std::to_string(spec_.window_len));
  }
  Tensor h = x;
  if (trace) {
    trace->input = x;
    trace->attention.reset();
    trace->conv_in.clear();
    trace->conv_out.clear();
  }
  if (spec_.attention) {
    auto a = nn::attention_mask_forward(x, attention_weights(), spec_.mask_threshold, spec_.mask_energy);
    h = std::move(a.masked);
    if (trace) trace->attention = std::move(a.trace);
  }
  h = conv_stack_forward(store_, spec_.layers, spec_.leaky_slope, std::move(h),
                         trace ? &trace->conv_in : nullptr, trace ? &trace->conv_out : nullptr);
  return spec_.upsample ? nn::upsample2_forward(h) : h;
}

Tensor Generator::backward(const Trace& trace, const Tensor& grad_out, bool params) {
  Tensor g = spec_.upsample ? nn::upsample2_backward(grad_out) : grad_out;
  g = conv_stack_backward(store_, spec_.layers, spec_.leaky_slope, trace.conv_in, trace.conv_out,
                          std::move(g), params);
  if (spec_.attention) {
    auto ag = nn::attention_mask_backward(*trace.attention, attention_weights(), g);
    if (params) {
      accumulate(store_.at("att.wq").grad, ag.wq);
      accumulate(store_.at("att.bq").grad, ag.bq);
      accumulate(store_.at("att.wk").grad, ag.wk);
      accumulate(store_.at("att.bk").grad, ag.bk);
      accumulate(store_.at("att.wv").grad, ag.wv);
      accumulate(store_.at("att.bv").grad, ag.bv);
    }
    g = std::move(ag.x);
  }
  return g;
}

Discriminator::Discriminator(DiscriminatorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  add_conv_params(store_, spec_.layers);
  store_.add("dense.w", {spec_.classes, spec_.flat_features()});
  store_.add("dense.b", {spec_.classes});
}

void Discriminator::init(Rng& rng) {
  init_conv_params(store_, spec_.layers, rng);
  const double bound = std::sqrt(6.0 / static_cast<double>(spec_.flat_features()));
  for (double& v : store_.at("dense.w").value) v = rng.uniform(-bound, bound);
  for (double& v : store_.at("dense.b").value) v = rng.uniform(-bound, bound);
}

std::vector<double> Discriminator::forward(const Tensor& x, Trace* trace) const {
  if (x.channels() != 1 || x.length() != spec_.window_len) {
    throw Error(ErrorCode::ShapeMismatch, "discriminator expects B x 1 x " + std::to_string(spec_.window_len));
  }
  if (trace) {
    trace->conv_in.clear();
    trace->conv_out.clear();
  }
  Tensor h = conv_stack_forward(store_, spec_.layers, 0.2, x, trace ? &trace->conv_in : nullptr,
                                trace ? &trace->conv_out : nullptr);
  auto out = nn::dense_softmax_forward(h, store_.at("dense.w").value, store_.at("dense.b").value, spec_.classes);
  std::vector<double> real(x.batch());
  for (std::size_t n = 0; n < x.batch(); ++n) real[n] = out.probs[n * spec_.classes + 1];
  if (trace) {
    trace->features = std::move(h);
    trace->out = std::move(out);
  }
  return real;
}

Tensor Discriminator::backward(const Trace& trace, const std::vector<double>& grad_real_prob, bool params) {
  const std::size_t batch = trace.features.batch();
  if (grad_real_prob.size() != batch) throw Error(ErrorCode::ShapeMismatch, "gradient batch size mismatch");
  std::vector<double> gp(batch * spec_.classes, 0.0);
  for (std::size_t n = 0; n < batch; ++n) gp[n * spec_.classes + 1] = grad_real_prob[n];
  auto dg = nn::dense_softmax_backward(trace.features, store_.at("dense.w").value, trace.out, gp);
  if (params) {
    accumulate(store_.at("dense.w").grad, dg.weight);
    accumulate(store_.at("dense.b").grad, dg.bias);
  }
  return conv_stack_backward(store_, spec_.layers, 0.2, trace.conv_in, trace.conv_out, std::move(dg.x), params);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::BadConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::BadConfig, "batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::BadConfig, "lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::BadConfig, "betas must lie in [0, 1)");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::BadConfig, "lambda must be positive");
}

CycleGanModel build_model(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec, double lambda,
                          std::uint64_t seed) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::BadConfig, "lambda must be positive");
  if (gspec.window_len != dspec.window_len) {
    throw Error(ErrorCode::BadConfig, "generator and discriminator window lengths differ");
  }
  CycleGanModel m{Generator(gspec), Generator(gspec), Discriminator(dspec), Discriminator(dspec), lambda, {}};
  Rng rng(seed);
  m.g.init(rng);
  m.f.init(rng);
  m.dx.init(rng);
  m.dy.init(rng);
  return m;
}

double cycle_loss(const Generator& g, const Generator& f, const Tensor& x_batch, const Tensor& y_batch,
                  nn::ElementLoss kind) {
  const double lx = nn::element_loss(kind, f.forward(g.forward(x_batch)), x_batch).value;
  const double ly = nn::element_loss(kind, g.forward(f.forward(y_batch)), y_batch).value;
  return lx + ly;
}

ObjectiveParts total_objective(const CycleGanModel& model, const Tensor& x_batch, const Tensor& y_batch,
                               nn::ElementLoss kind, nn::AdversarialForm form) {
  const Tensor fy = model.g.forward(x_batch);
  const Tensor fx = model.f.forward(y_batch);
  const auto dy_fake = model.dy.forward(fy);
  const auto dx_fake = model.dx.forward(fx);
  ObjectiveParts p;
  p.loss_dy = nn::discriminator_loss(model.dy.forward(y_batch), dy_fake).value;
  p.loss_dx = nn::discriminator_loss(model.dx.forward(x_batch), dx_fake).value;
  p.adv_g = nn::generator_adversarial_loss(dy_fake, form).value;
  p.adv_f = nn::generator_adversarial_loss(dx_fake, form).value;
  p.cycle = nn::element_loss(kind, model.f.forward(fy), x_batch).value +
            nn::element_loss(kind, model.g.forward(fx), y_batch).value;
  p.loss_g_total = p.adv_g + p.adv_f + model.lambda * p.cycle;
  return p;
}

namespace {

Tensor gather(const WindowSet& ws, const std::vector<std::size_t>& perm, std::size_t start, std::size_t count) {
  Tensor t(count, 1, ws.window_len);
  for (std::size_t j = 0; j < count; ++j) {
    auto row = ws.row(perm[(start + j) % perm.size()]);
    std::copy(row.begin(), row.end(), t.sample(j).begin());
  }
  return t;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

struct StepLosses {
  double loss_dx, loss_dy, cycle, adv_g, adv_f;
};

StepLosses train_step(CycleGanModel& m, const Tensor& xb, const Tensor& yb, const TrainConfig& cfg) {
  const auto opt = cfg.nadam();
  const double lambda = cfg.lambda;
  Generator::Trace tg1, tf1, tg2, tf2;
  const Tensor fy = m.g.forward(xb, &tg1);
  const Tensor fx = m.f.forward(yb, &tf1);

  // discriminators, against the current generators
  StepLosses out{};
  {
    Discriminator::Trace tr, tf;
    auto real = m.dy.forward(yb, &tr);
    auto fake = m.dy.forward(fy, &tf);
    auto dl = nn::discriminator_loss(real, fake);
    m.dy.backward(tr, dl.grad_real);
    m.dy.backward(tf, dl.grad_fake);
    out.loss_dy = dl.value;
  }
  {
    Discriminator::Trace tr, tf;
    auto real = m.dx.forward(xb, &tr);
    auto fake = m.dx.forward(fx, &tf);
    auto dl = nn::discriminator_loss(real, fake);
    m.dx.backward(tr, dl.grad_real);
    m.dx.backward(tf, dl.grad_fake);
    out.loss_dx = dl.value;
  }
  ++m.state.step;
  nn::nadam_step(m.dx.store(), opt, m.state.step);
  nn::nadam_step(m.dy.store(), opt, m.state.step);

  // generators, against the updated discriminators
  const Tensor cyc_x = m.f.forward(fy, &tf2);
  const Tensor cyc_y = m.g.forward(fx, &tg2);
  auto lx = nn::element_loss(cfg.cycle_loss_kind, cyc_x, xb);
  auto ly = nn::element_loss(cfg.cycle_loss_kind, cyc_y, yb);
  out.cycle = lx.value + ly.value;

  Discriminator::Trace tdy, tdx;
  auto ag = nn::generator_adversarial_loss(m.dy.forward(fy, &tdy), cfg.adversarial_form);
  auto af = nn::generator_adversarial_loss(m.dx.forward(fx, &tdx), cfg.adversarial_form);
  out.adv_g = ag.value;
  out.adv_f = af.value;

  Tensor g_fy = m.dy.backward(tdy, ag.grad, false);
  add_into(g_fy, m.f.backward(tf2, scaled(lx.grad, lambda)));
  Tensor g_fx = m.dx.backward(tdx, af.grad, false);
  add_into(g_fx, m.g.backward(tg2, scaled(ly.grad, lambda)));
  m.g.backward(tg1, g_fy);
  m.f.backward(tf1, g_fx);
  nn::nadam_step(m.g.store(), opt, m.state.step);
  nn::nadam_step(m.f.store(), opt, m.state.step);
  return out;
}

}  // namespace

std::vector<EpochLosses> train(CycleGanModel& model, const WindowSet& x, const WindowSet& y,
                               const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (x.rows() == 0 || y.rows() == 0) throw Error(ErrorCode::EmptyDataset, "training needs windows in both domains");
  const std::size_t len = model.g.spec().window_len;
  if (x.window_len != len || y.window_len != len) {
    throw Error(ErrorCode::ShapeMismatch, "window length differs from the model's");
  }
  model.lambda = cfg.lambda;
  Rng rng(cfg.seed);
  if (!model.state.rng_state.empty()) rng.restore(model.state.rng_state);

  const std::size_t total = std::max(x.rows(), y.rows());
  const std::size_t batches = (total + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<EpochLosses> table;
  for (std::size_t epoch = model.state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto px = shuffled(x.rows(), rng);
    const auto py = shuffled(y.rows(), rng);
    EpochLosses row;
    row.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, total - start);
      auto s = train_step(model, gather(x, px, start, count), gather(y, py, start, count), cfg);
      row.loss_dx += s.loss_dx;
      row.loss_dy += s.loss_dy;
      row.cycle += s.cycle;
      row.adv_g += s.adv_g;
      row.adv_f += s.adv_f;
    }
    const double nb = static_cast<double>(batches);
    row.loss_dx /= nb;
    row.loss_dy /= nb;
    row.cycle /= nb;
    row.adv_g /= nb;
    row.adv_f /= nb;
    row.loss_g = row.adv_g + row.adv_f + cfg.lambda * row.cycle;
    table.push_back(row);
    model.state.epoch = epoch;
    model.state.rng_state = rng.state();
    if (on_epoch) on_epoch(row);
  }
  return table;
}

std::vector<double> apply_generator(const Generator& g, const WindowSet& ws, std::size_t batch) {
  if (ws.window_len != g.spec().window_len) throw Error(ErrorCode::ShapeMismatch, "window length differs from the model's");
  batch = std::max<std::size_t>(batch, 1);
  std::vector<double> out(ws.rows() * ws.window_len);
  std::vector<std::size_t> order(ws.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < ws.rows(); start += batch) {
    const std::size_t count = std::min(batch, ws.rows() - start);
    const Tensor y = g.forward(gather(ws, order, start, count));
    std::copy(y.data().begin(), y.data().end(), out.begin() + static_cast<std::ptrdiff_t>(start * ws.window_len));
  }
  return out;
}

Signal extract_fecg(const CycleGanModel& model, const Signal& abdominal, const PreprocessConfig& pp) {
  const Signal clean = preprocess(abdominal, pp);
  if (clean.size() < pp.window_len) throw Error(ErrorCode::TooShort, "signal shorter than one window after preprocessing");
  const WindowSet ws = slide(clean, pp.window_len, pp.eval_stride);
  Signal out = stitch(ws, apply_generator(model.g, ws));
  out.label = "fecg";
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'F', 'S', 'C', 'K'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename Model>
auto stores(Model& m) {
  using Store = decltype(&m.g.store());
  return std::vector<std::pair<const char*, Store>>{
      {"g", &m.g.store()}, {"f", &m.f.store()}, {"dx", &m.dx.store()}, {"dy", &m.dy.store()}};
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const CycleGanModel& model, const TrainConfig& cfg, const std::string& path) {
  std::string payload;
  Json tensors = Json::array();
  for (const auto& [net, store] : stores(model)) {
    for (const auto& p : *store) {
      tensors.push_back({{"net", net}, {"name", p.name}, {"shape", p.shape}, {"count", p.size()}});
      for (const auto* arr : {&p.value, &p.m, &p.v}) {
        payload.append(reinterpret_cast<const char*>(arr->data()), arr->size() * sizeof(double));
      }
    }
  }
  Json header = {{"gspec", to_json(model.g.spec())},
                 {"dspec", to_json(model.dx.spec())},
                 {"train", to_json(cfg)},
                 {"lambda", model.lambda},
                 {"state", {{"epoch", model.state.epoch}, {"step", model.state.step}, {"rng", model.state.rng_state}}},
                 {"tensors", tensors},
                 {"checksum", hex64(fnv1a(payload))}};
  const std::string text = header.dump();

  std::string file(kMagic, 4);
  put(file, kCheckpointVersion);
  put(file, static_cast<std::uint64_t>(text.size()));
  file += text;
  file += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint '" + path + "'");
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint '" + path + "'");
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto corrupt = [&](const std::string& why) { return Error(ErrorCode::CorruptFile, path + ": " + why); };

  if (file.size() < 16 || std::memcmp(file.data(), kMagic, 4) != 0) throw corrupt("not a checkpoint");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, file.data() + 4, 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  std::memcpy(&hlen, file.data() + 8, 8);
  if (hlen > file.size() - 16) throw corrupt("truncated header");

  Json header;
  try {
    header = Json::parse(file.substr(16, hlen));
  } catch (const nlohmann::json::exception&) {
    throw corrupt("unreadable header");
  }
  const std::string payload = file.substr(16 + hlen);

  try {
    if (header.at("checksum").get<std::string>() != hex64(fnv1a(payload))) throw corrupt("checksum mismatch");
    LoadedCheckpoint out{build_model(generator_spec_from_json(header.at("gspec")),
                                     discriminator_spec_from_json(header.at("dspec")),
                                     header.at("lambda").get<double>(), 0),
                         train_config_from_json(header.at("train"))};
    const auto& st = header.at("state");
    out.model.state.epoch = st.at("epoch").get<std::size_t>();
    out.model.state.step = st.at("step").get<std::uint64_t>();
    out.model.state.rng_state = st.at("rng").get<std::string>();

    const Json& tensors = header.at("tensors");
    std::size_t k = 0;
    std::size_t pos = 0;
    for (const auto& [net, store] : stores(out.model)) {
      for (auto& p : *store) {
        if (k >= tensors.size()) throw corrupt("missing tensors");
        const Json& t = tensors[k++];
        if (t.at("net") != net || t.at("name") != p.name || t.at("shape").get<std::vector<std::size_t>>() != p.shape) {
          throw corrupt("tensor " + p.name + " does not match the stored specs");
        }
        for (auto* arr : {&p.value, &p.m, &p.v}) {
          const std::size_t bytes = arr->size() * sizeof(double);
          if (pos + bytes > payload.size()) throw corrupt("truncated payload");
          std::memcpy(arr->data(), payload.data() + pos, bytes);
          pos += bytes;
        }
      }
    }
    if (k != tensors.size() || pos != payload.size()) throw corrupt("payload size mismatch");
    return out;
  } catch (const nlohmann::json::exception&) {
    throw corrupt("malformed header");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptFile) throw;
    throw corrupt(e.what());
  }
}

}  // namespace fetalsep
