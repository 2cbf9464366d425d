#include "fetalsep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fetalsep/error.hpp"
#include "fetalsep/io.hpp"

namespace fetalsep {

std::string GridCell::name() const {
  std::ostringstream os;
  os << 'f' << fetal_hr << "_m" << maternal_hr;
  return os.str();
}

std::vector<GridCell> grid_cells(const GridConfig& grid) {
  std::vector<GridCell> cells;
  for (double f : grid.fetal_hr) {
    for (double m : grid.maternal_hr) {
      GridCell c{cells.size(), f, m, false};
      for (const auto& [hf, hm] : grid.held_out) {
        if (hf == f && hm == m) c.held_out = true;
      }
      cells.push_back(c);
    }
  }
  return cells;
}

MixtureConfig cell_mixture(const RunConfig& run, const GridCell& cell) {
  MixtureConfig mc = run.mixture;
  mc.fetal_hr = cell.fetal_hr;
  mc.maternal_hr = cell.maternal_hr;
  mc.seed = run.seed + cell.index;
  return mc;
}

GridSplit make_split(const RunConfig& run) {
  GridSplit split;
  for (const auto& cell : grid_cells(run.grid)) {
    const auto mc = cell_mixture(run, cell);
    auto mix = mix_abdominal(mc);
    if (cell.held_out) {
      split.test_cells.push_back(cell);
      split.test_configs.push_back(mc);
      split.test.push_back(std::move(mix));
    } else {
      split.train_cells.push_back(cell);
      split.train.push_back(std::move(mix));
    }
  }
  if (split.train.empty()) throw Error(ErrorCode::EmptyDataset, "every grid cell is held out");
  return split;
}

void append_windows(WindowSet& dst, const WindowSet& src) {
  if (dst.rows() == 0 && dst.window_len == 0) {
    dst = src;
    return;
  }
  if (dst.window_len != src.window_len) throw Error(ErrorCode::ShapeMismatch, "window lengths differ");
  dst.offsets.insert(dst.offsets.end(), src.offsets.begin(), src.offsets.end());
  dst.constant.insert(dst.constant.end(), src.constant.begin(), src.constant.end());
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
}

TrainingData training_data(std::span<const Mixture> cells, const PreprocessConfig& pp) {
  TrainingData d;
  for (const auto& mix : cells) {
    append_windows(d.x, slide(preprocess(mix.abdominal, pp), pp.window_len, pp.train_stride));
    append_windows(d.y, slide(preprocess(mix.fetal_truth, pp), pp.window_len, pp.train_stride));
  }
  if (d.x.rows() == 0 || d.y.rows() == 0) throw Error(ErrorCode::EmptyDataset, "no training windows");
  return d;
}

FetalReference fetal_reference(const Mixture& mix, const PreprocessConfig& pp) {
  const Signal clean = preprocess(mix.fetal_truth, pp);
  const WindowSet ws = slide(clean, pp.window_len, pp.eval_stride);
  FetalReference ref{stitch(ws, ws.data), {{}, clean.fs}};
  ref.signal.label = "fetal_reference";
  const int src_fs = mix.fetal_truth.fs;
  for (std::size_t p : mix.fetal_r_peaks) {
    const double t = mix.fetal_truth.t0 + static_cast<double>(p) / src_fs - clean.t0;
    const double idx = std::round(t * clean.fs);
    if (idx >= 0.0 && idx < static_cast<double>(ref.signal.size())) {
      ref.r_peaks.indices.push_back(static_cast<std::size_t>(idx));
    }
  }
  return ref;
}

RecordEval evaluate_record(const std::string& label, const Signal& extracted, const FetalReference& ref) {
  if (extracted.size() != ref.signal.size()) {
    throw Error(ErrorCode::ShapeMismatch, label + ": extracted and reference lengths differ");
  }
  if (extracted.fs != ref.r_peaks.fs) throw Error(ErrorCode::FsMismatch, label + ": sample rates differ");
  RecordEval r;
  r.label = label;
  const auto a = agreement(ref.signal.samples, extracted.samples);
  r.r2 = a.r2;
  r.icc = a.icc;
  r.bias = a.bias;
  r.loa_lo = a.loa_lo;
  r.loa_hi = a.loa_hi;
  r.t_stat = a.t_stat;
  r.p_value = a.p_value;
  const auto w = wedd(ref.signal.samples, extracted.samples);
  r.wedd = w.wedd;
  r.category = w.category;
  const auto m = match_beats(pan_tompkins(extracted), ref.r_peaks, 6);
  const auto s = prf(m);
  r.tp = m.tp;
  r.fp = m.fp;
  r.fn = m.fn;
  r.se = s.se;
  r.ppv = s.ppv;
  r.f1 = s.f1;
  return r;
}

Summary summarize(std::span<const double> values, std::uint64_t seed, std::size_t resamples) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  Rng rng(seed);
  std::vector<double> means(std::max<std::size_t>(resamples, 1));
  for (double& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += values[rng.below(values.size())];
    m = acc / n;
  }
  std::sort(means.begin(), means.end());
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  s.ci_lo = pct(0.025);
  s.ci_hi = pct(0.975);
  return s;
}

const std::vector<std::string>& report_metrics() {
  static const std::vector<std::string> names{"r2",     "icc",    "wedd",    "bias", "loa_lo", "loa_hi",
                                              "t_stat", "p_value", "se",     "ppv",  "f1"};
  return names;
}

double metric_value(const RecordEval& r, const std::string& name) {
  if (name == "r2") return r.r2;
  if (name == "icc") return r.icc;
  if (name == "wedd") return r.wedd;
  if (name == "bias") return r.bias;
  if (name == "loa_lo") return r.loa_lo;
  if (name == "loa_hi") return r.loa_hi;
  if (name == "t_stat") return r.t_stat;
  if (name == "p_value") return r.p_value;
  if (name == "se") return r.se;
  if (name == "ppv") return r.ppv;
  if (name == "f1") return r.f1;
  throw Error(ErrorCode::BadConfig, "unknown metric '" + name + "'");
}

EvalReport make_report(std::vector<RecordEval> records, std::uint64_t seed) {
  EvalReport rep;
  rep.records = std::move(records);
  std::uint64_t k = 0;
  for (const auto& name : report_metrics()) {
    std::vector<double> v;
    for (const auto& r : rep.records) v.push_back(metric_value(r, name));
    rep.aggregate[name] = summarize(v, seed + k++);
  }
  return rep;
}

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(format_double(v)); }

double read_number(const Json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return NAN;
}

WeddCategory parse_category(const std::string& s) {
  for (auto c : {WeddCategory::Excellent, WeddCategory::VeryGood, WeddCategory::Good, WeddCategory::NotBad,
                 WeddCategory::Bad}) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::BadConfig, "unknown WEDD category '" + s + "'");
}

}  // namespace

Json to_json(const RecordEval& r) {
  return {{"label", r.label},         {"r2", number(r.r2)},       {"icc", number(r.icc)},
          {"wedd", number(r.wedd)},   {"category", to_string(r.category)},
          {"bias", number(r.bias)},   {"loa_lo", number(r.loa_lo)}, {"loa_hi", number(r.loa_hi)},
          {"t_stat", number(r.t_stat)}, {"p_value", number(r.p_value)},
          {"tp", r.tp},               {"fp", r.fp},               {"fn", r.fn},
          {"se", number(r.se)},       {"ppv", number(r.ppv)},     {"f1", number(r.f1)}};
}

RecordEval record_from_json(const Json& j) {
  try {
    RecordEval r;
    r.label = j.at("label").get<std::string>();
    r.r2 = read_number(j.at("r2"));
    r.icc = read_number(j.at("icc"));
    r.wedd = read_number(j.at("wedd"));
    r.category = parse_category(j.at("category").get<std::string>());
    r.bias = read_number(j.at("bias"));
    r.loa_lo = read_number(j.at("loa_lo"));
    r.loa_hi = read_number(j.at("loa_hi"));
    r.t_stat = read_number(j.at("t_stat"));
    r.p_value = read_number(j.at("p_value"));
    r.tp = j.at("tp").get<std::size_t>();
    r.fp = j.at("fp").get<std::size_t>();
    r.fn = j.at("fn").get<std::size_t>();
    r.se = read_number(j.at("se"));
    r.ppv = read_number(j.at("ppv"));
    r.f1 = read_number(j.at("f1"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed record: ") + e.what());
  }
}

Json to_json(const Summary& s) {
  return {{"n", s.n}, {"mean", number(s.mean)}, {"sd", number(s.sd)}, {"ci95", {number(s.ci_lo), number(s.ci_hi)}}};
}

Json to_json(const EvalReport& r) {
  Json records = Json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  Json agg = Json::object();
  for (const auto& [name, s] : r.aggregate) agg[name] = to_json(s);
  return {{"records", records}, {"aggregate", agg}};
}

EvalReport evaluate_model(const CycleGanModel& model, const std::vector<GridCell>& cells,
                          std::span<const Mixture> mixtures, const PreprocessConfig& pp, std::uint64_t seed) {
  if (cells.size() != mixtures.size()) throw Error(ErrorCode::ShapeMismatch, "cells and mixtures differ in count");
  std::vector<RecordEval> records;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Signal out = extract_fecg(model, mixtures[i].abdominal, pp);
    records.push_back(evaluate_record(cells[i].name(), out, fetal_reference(mixtures[i], pp)));
  }
  return make_report(std::move(records), seed);
}

RunResult train_and_evaluate(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                             const LogFn& log) {
  if (split.test.empty()) throw Error(ErrorCode::EmptyDataset, "no held-out cells to evaluate");
  RunResult res{build_model(run.generator, run.discriminator, run.train.lambda, run.seed), {}, {}, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  res.losses = train(res.model, data.x, data.y, run.train, [&](const EpochLosses& e) {
    if (!log) return;
    std::ostringstream os;
    os << "epoch " << e.epoch << "/" << run.train.epochs << " loss_G " << e.loss_g << " loss_Dx " << e.loss_dx
       << " loss_Dy " << e.loss_dy << " cycle " << e.cycle;
    log(os.str());
  });
  res.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.report = evaluate_model(res.model, split.test_cells, split.test, run.preprocess, run.seed);
  return res;
}

namespace {

SweepRow row_from(const std::string& key, const EvalReport& rep) {
  return {key, rep.aggregate.at("r2").mean, rep.aggregate.at("f1").mean, rep.aggregate.at("wedd").mean};
}

}  // namespace

std::vector<SweepRow> lambda_sweep(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                                   std::span<const double> lambdas, const LogFn& log) {
  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    RunConfig cfg = run;
    cfg.train.lambda = lambda;
    if (log) log("lambda " + format_double(lambda));
    const auto res = train_and_evaluate(cfg, split, data, log);
    rows.push_back(row_from(format_double(lambda), res.report));
  }
  return rows;
}

std::vector<SweepRow> ablation_sweep(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                                     const LogFn& log) {
  const int depth = static_cast<int>(run.generator.layers.size());
  struct Variant {
    const char* name;
    Activation hidden;
    bool attention;
  };
  const Variant variants[] = {{"no_attention_leaky_relu", Activation::LeakyRelu, false},
                              {"no_attention_sine", Activation::Sine, false},
                              {"full", Activation::Sine, true}};
  std::vector<SweepRow> rows;
  for (const auto& v : variants) {
    RunConfig cfg = run;
    const auto keep = run.generator;
    cfg.generator = default_generator_spec(depth == 3 ? 3 : 4, v.hidden, v.attention);
    cfg.generator.attention_dim = keep.attention_dim;
    cfg.generator.mask_threshold = keep.mask_threshold;
    cfg.generator.mask_energy = keep.mask_energy;
    cfg.generator.leaky_slope = keep.leaky_slope;
    if (log) log(std::string("variant ") + v.name);
    const auto res = train_and_evaluate(cfg, split, data, log);
    rows.push_back(row_from(v.name, res.report));
  }
  return rows;
}

std::vector<SweepRow> snr_sweep(const RunConfig& run, const CycleGanModel& model, const GridSplit& split,
                                std::span<const double> levels, const LogFn& log) {
  if (levels.empty()) throw Error(ErrorCode::BadConfig, "snr sweep needs at least one level");
  std::vector<SweepRow> rows;
  if (split.test_configs.size() != split.test_cells.size()) {
    throw Error(ErrorCode::BadConfig, "held-out cells lack their mixture settings");
  }
  for (double level : levels) {
    std::vector<Mixture> noisy;
    for (auto mc : split.test_configs) {
      mc.noise_snr_db = level;
      noisy.push_back(mix_abdominal(mc));
    }
    if (log) log("snr " + format_double(level) + " dB");
    const auto rep = evaluate_model(model, split.test_cells, noisy, run.preprocess, run.seed);
    rows.push_back(row_from(format_double(level), rep));
  }
  return rows;
}

void write_cell(const std::string& dir, const Mixture& mix) {
  write_signal_csv(dir + "/abdominal.csv", mix.abdominal);
  write_signal_csv(dir + "/fetal.csv", mix.fetal_truth);
  write_signal_csv(dir + "/maternal.csv", mix.maternal_truth);
  const Json peaks{{"fs", mix.abdominal.fs},
                   {"t0", mix.abdominal.t0},
                   {"fetal", mix.fetal_r_peaks},
                   {"maternal", mix.maternal_r_peaks}};
  write_text(dir + "/peaks.json", peaks.dump() + "\n");
}

Mixture read_cell(const std::string& dir) {
  Mixture mix;
  mix.abdominal = read_signal_csv(dir + "/abdominal.csv");
  mix.fetal_truth = read_signal_csv(dir + "/fetal.csv");
  mix.maternal_truth = read_signal_csv(dir + "/maternal.csv");
  try {
    const Json peaks = Json::parse(read_text(dir + "/peaks.json"));
    mix.fetal_r_peaks = peaks.at("fetal").get<std::vector<std::size_t>>();
    mix.maternal_r_peaks = peaks.at("maternal").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, dir + "/peaks.json: malformed peak file");
  }
  if (mix.abdominal.size() != mix.fetal_truth.size() || mix.abdominal.fs != mix.fetal_truth.fs) {
    throw Error(ErrorCode::ShapeMismatch, dir + ": abdominal and fetal records differ in length or rate");
  }
  return mix;
}

void write_dataset(const std::string& dir, const RunConfig& run, const std::vector<GridCell>& cells,
                   const LogFn& log) {
  Json index = Json::array();
  for (const auto& cell : cells) {
    const auto mc = cell_mixture(run, cell);
    write_cell(dir + "/" + cell.name(), mix_abdominal(mc));
    index.push_back({{"name", cell.name()},
                     {"index", cell.index},
                     {"fetal_hr", cell.fetal_hr},
                     {"maternal_hr", cell.maternal_hr},
                     {"held_out", cell.held_out},
                     {"mixture", to_json(mc)}});
    if (log) log("wrote " + cell.name());
  }
  write_text(dir + "/grid.json", Json{{"cells", index}}.dump(2) + "\n");
}

GridSplit load_dataset(const std::string& dir) {
  Json index;
  try {
    index = Json::parse(read_text(dir + "/grid.json"));
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, dir + "/grid.json: malformed dataset index");
  }
  GridSplit split;
  try {
    for (const auto& c : index.at("cells")) {
      GridCell cell{c.at("index").get<std::size_t>(), c.at("fetal_hr").get<double>(),
                    c.at("maternal_hr").get<double>(), c.at("held_out").get<bool>()};
      auto mix = read_cell(dir + "/" + c.at("name").get<std::string>());
      if (cell.held_out) split.test_configs.push_back(mixture_config_from_json(c.at("mixture")));
      (cell.held_out ? split.test_cells : split.train_cells).push_back(cell);
      (cell.held_out ? split.test : split.train).push_back(std::move(mix));
    }
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, dir + "/grid.json: malformed dataset index");
  }
  return split;
}

std::string sweep_csv(const std::string& key_name, const std::vector<SweepRow>& rows) {
  std::string out = key_name + ",r2,f1,wedd\n";
  for (const auto& r : rows) {
    out += r.key + "," + format_double(r.r2) + "," + format_double(r.f1) + "," + format_double(r.wedd) + "\n";
  }
  return out;
}

std::string loss_csv(const std::vector<EpochLosses>& rows) {
  std::string out = "epoch,loss_G,loss_Dx,loss_Dy,cycle,adv_G,adv_F\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + format_double(r.loss_g) + "," + format_double(r.loss_dx) + "," +
           format_double(r.loss_dy) + "," + format_double(r.cycle) + "," + format_double(r.adv_g) + "," +
           format_double(r.adv_f) + "\n";
  }
  return out;
}

}  // namespace fetalsep
