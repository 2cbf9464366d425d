#include "fetalsep/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "fetalsep/error.hpp"

namespace fetalsep {
namespace {

// Reads keys from one JSON object and complains about anything left over.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error(ErrorCode::BadConfig, "'" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::BadConfig, "bad value for '" + where_ + "." + key + "'");
    }
  }

  // Numbers that may be written as the string "inf".
  void get_real(const std::string& key, double& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if (v.is_number()) {
      out = v.get<double>();
    } else if (v.is_string() && (v == "inf" || v == "+inf" || v == "infinity")) {
      out = std::numeric_limits<double>::infinity();
    } else if (v.is_null()) {
      out = std::numeric_limits<double>::infinity();
    } else {
      throw Error(ErrorCode::BadConfig, "bad value for '" + where_ + "." + key + "'");
    }
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(ErrorCode::BadConfig, "unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json real_to_json(double v) { return std::isinf(v) ? Json("inf") : Json(v); }

Json to_json(const ConvLayerSpec& l) {
  return {{"out_ch", l.out_ch}, {"kernel", l.kernel}, {"stride", l.stride},
          {"activation", to_string(l.activation)}, {"omega", l.omega}};
}

ConvLayerSpec layer_from_json(const Json& j, const std::string& where) {
  ConvLayerSpec l;
  Reader r(j, where);
  r.get("out_ch", l.out_ch);
  r.get("kernel", l.kernel);
  r.get("stride", l.stride);
  std::string act = to_string(l.activation);
  r.get("activation", act);
  l.activation = parse_activation(act);
  r.get("omega", l.omega);
  r.finish();
  return l;
}

std::vector<ConvLayerSpec> layers_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::BadConfig, "'" + where + "' must be an array");
  std::vector<ConvLayerSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(layer_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

Json to_json(const PreprocessConfig& c) {
  return {{"target_fs", c.target_fs},         {"band_lo", c.band_lo},
          {"band_hi", c.band_hi},             {"savgol_window", c.savgol_window},
          {"savgol_order", c.savgol_order},   {"truncate_s", c.truncate_s},
          {"window_len", c.window_len},       {"train_stride", c.train_stride},
          {"eval_stride", c.eval_stride}};
}

PreprocessConfig preprocess_config_from_json(const Json& j) {
  PreprocessConfig c;
  Reader r(j, "preprocess");
  r.get("target_fs", c.target_fs);
  r.get("band_lo", c.band_lo);
  r.get("band_hi", c.band_hi);
  r.get("savgol_window", c.savgol_window);
  r.get("savgol_order", c.savgol_order);
  r.get("truncate_s", c.truncate_s);
  r.get("window_len", c.window_len);
  r.get("train_stride", c.train_stride);
  r.get("eval_stride", c.eval_stride);
  r.finish();
  return c;
}

Json to_json(const MixtureConfig& c) {
  return {{"maternal_hr", c.maternal_hr},
          {"fetal_hr", c.fetal_hr},
          {"hrv_std", c.hrv_std},
          {"fetal_hrv_std", c.fetal_hrv_std},
          {"fetal_amp_ratio", c.fetal_amp_ratio},
          {"noise_snr_db", real_to_json(c.noise_snr_db)},
          {"noise_kind", to_string(c.noise_kind)},
          {"fs", c.fs},
          {"duration_s", c.duration_s},
          {"seed", c.seed}};
}

MixtureConfig mixture_config_from_json(const Json& j) {
  MixtureConfig c;
  Reader r(j, "mixture");
  r.get("maternal_hr", c.maternal_hr);
  r.get("fetal_hr", c.fetal_hr);
  r.get("hrv_std", c.hrv_std);
  r.get("fetal_hrv_std", c.fetal_hrv_std);
  r.get("fetal_amp_ratio", c.fetal_amp_ratio);
  r.get_real("noise_snr_db", c.noise_snr_db);
  std::string kind = to_string(c.noise_kind);
  r.get("noise_kind", kind);
  c.noise_kind = parse_noise_kind(kind);
  r.get("fs", c.fs);
  r.get("duration_s", c.duration_s);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

Json to_json(const GridConfig& c) {
  Json held = Json::array();
  for (const auto& [f, m] : c.held_out) held.push_back({f, m});
  return {{"fetal_hr", c.fetal_hr}, {"maternal_hr", c.maternal_hr}, {"held_out", held}};
}

GridConfig grid_config_from_json(const Json& j) {
  GridConfig c;
  Reader r(j, "grid");
  r.get("fetal_hr", c.fetal_hr);
  r.get("maternal_hr", c.maternal_hr);
  if (const Json* held = r.child("held_out")) {
    c.held_out.clear();
    if (!held->is_array()) throw Error(ErrorCode::BadConfig, "'grid.held_out' must be an array of pairs");
    for (const Json& cell : *held) {
      if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number() || !cell[1].is_number()) {
        throw Error(ErrorCode::BadConfig, "'grid.held_out' entries must be [fetal_hr, maternal_hr]");
      }
      c.held_out.emplace_back(cell[0].get<double>(), cell[1].get<double>());
    }
  }
  r.finish();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"seed", c.seed},
          {"cycle_loss_kind", nn::to_string(c.cycle_loss_kind)},
          {"lambda", c.lambda},
          {"adversarial_form", nn::to_string(c.adversarial_form)}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  Reader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("seed", c.seed);
  std::string kind = nn::to_string(c.cycle_loss_kind);
  r.get("cycle_loss_kind", kind);
  c.cycle_loss_kind = nn::parse_element_loss(kind);
  r.get("lambda", c.lambda);
  std::string form = nn::to_string(c.adversarial_form);
  r.get("adversarial_form", form);
  c.adversarial_form = nn::parse_adversarial_form(form);
  r.finish();
  return c;
}

Json to_json(const GeneratorSpec& s) {
  Json layers = Json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return {{"attention", s.attention},
          {"attention_dim", s.attention_dim},
          {"mask_threshold", s.mask_threshold},
          {"mask_energy", to_string(s.mask_energy)},
          {"layers", layers},
          {"upsample", s.upsample},
          {"leaky_slope", s.leaky_slope},
          {"window_len", s.window_len}};
}

GeneratorSpec generator_spec_from_json(const Json& j) {
  GeneratorSpec s = default_generator_spec();
  Reader r(j, "generator");
  // shorthand for the stock stacks
  int depth = 4;
  std::string hidden = "sine";
  r.get("depth", depth);
  r.get("hidden_activation", hidden);
  bool attention = true;
  r.get("attention", attention);
  s = default_generator_spec(depth, parse_activation(hidden), attention);
  r.get("attention_dim", s.attention_dim);
  r.get("mask_threshold", s.mask_threshold);
  std::string energy = to_string(s.mask_energy);
  r.get("mask_energy", energy);
  s.mask_energy = parse_mask_energy(energy);
  if (const Json* layers = r.child("layers")) s.layers = layers_from_json(*layers, "generator.layers");
  r.get("upsample", s.upsample);
  r.get("leaky_slope", s.leaky_slope);
  r.get("window_len", s.window_len);
  r.finish();
  s.validate();
  return s;
}

Json to_json(const DiscriminatorSpec& s) {
  Json layers = Json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return {{"layers", layers}, {"window_len", s.window_len}, {"classes", s.classes}};
}

DiscriminatorSpec discriminator_spec_from_json(const Json& j) {
  DiscriminatorSpec s = default_discriminator_spec();
  Reader r(j, "discriminator");
  if (const Json* layers = r.child("layers")) s.layers = layers_from_json(*layers, "discriminator.layers");
  r.get("window_len", s.window_len);
  r.get("classes", s.classes);
  r.finish();
  s.validate();
  return s;
}

Json to_json(const RunConfig& c) {
  return {{"preprocess", to_json(c.preprocess)},       {"mixture", to_json(c.mixture)},
          {"grid", to_json(c.grid)},                   {"train", to_json(c.train)},
          {"generator", to_json(c.generator)},         {"discriminator", to_json(c.discriminator)},
          {"out", c.out},                              {"seed", c.seed}};
}

void RunConfig::validate() const {
  preprocess.validate();
  mixture.validate();
  train.validate();
  generator.validate();
  discriminator.validate();
  if (grid.fetal_hr.empty() || grid.maternal_hr.empty()) {
    throw Error(ErrorCode::BadConfig, "grid needs at least one fetal and one maternal rate");
  }
  if (generator.window_len != preprocess.window_len || discriminator.window_len != preprocess.window_len) {
    throw Error(ErrorCode::BadConfig, "network window_len must match preprocess.window_len");
  }
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Reader r(j, "config");
  if (const Json* p = r.child("preprocess")) c.preprocess = preprocess_config_from_json(*p);
  if (const Json* p = r.child("mixture")) c.mixture = mixture_config_from_json(*p);
  if (const Json* p = r.child("grid")) c.grid = grid_config_from_json(*p);
  if (const Json* p = r.child("train")) c.train = train_config_from_json(*p);
  if (const Json* p = r.child("generator")) c.generator = generator_spec_from_json(*p);
  if (const Json* p = r.child("discriminator")) c.discriminator = discriminator_spec_from_json(*p);
  r.get("out", c.out);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace fetalsep
