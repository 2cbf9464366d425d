#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "fetalsep/config.hpp"
#include "fetalsep/cyclegan.hpp"
#include "fetalsep/error.hpp"
#include "fetalsep/io.hpp"
#include "fetalsep/metrics.hpp"
#include "fetalsep/pipeline.hpp"
#include "fetalsep/qrs.hpp"
#include "fetalsep/signal.hpp"

namespace fs = std::filesystem;
using namespace fetalsep;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

RunConfig load_run(const Globals& g) {
  RunConfig run = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (g.seed) {
    run.seed = *g.seed;
    run.train.seed = *g.seed;
  }
  if (!g.out.empty()) run.out = g.out;
  run.validate();
  return run;
}

LogFn logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(format_double(v)); }

Signal load_signal(const std::string& path, int fs_override) {
  Signal s = read_signal_csv(path);
  if (fs_override > 0) s.fs = fs_override;
  validate(s);
  return s;
}

std::string out_path(const RunConfig& run, const std::string& explicit_path, const std::string& name) {
  return explicit_path.empty() ? run.out + "/" + name : explicit_path;
}

// Reads {"indices"} peak files or a dataset peaks.json (fetal peaks), and maps
// them by time onto the timeline of `target`.
PeakList reference_peaks(const std::string& path, const Signal& target) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, path + ": malformed peak file");
  }
  std::vector<std::size_t> idx;
  int src_fs = 0;
  double t0 = 0.0;
  try {
    idx = j.contains("indices") ? j.at("indices").get<std::vector<std::size_t>>()
                                : j.at("fetal").get<std::vector<std::size_t>>();
    src_fs = j.at("fs").get<int>();
    t0 = j.value("t0", 0.0);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, path + ": peak file needs fs and indices (or fetal)");
  }
  if (src_fs <= 0) throw Error(ErrorCode::IoError, path + ": bad fs");
  PeakList p{{}, target.fs};
  for (std::size_t i : idx) {
    const double k = std::round((t0 + static_cast<double>(i) / src_fs - target.t0) * target.fs);
    if (k >= 0.0 && k < static_cast<double>(target.size())) p.indices.push_back(static_cast<std::size_t>(k));
  }
  return p;
}

Json match_json(const MatchResult& m) {
  const Prf s = prf(m);
  return {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"se", s.se}, {"ppv", s.ppv}, {"f1", s.f1},
          {"vacuous", m.tp + m.fp + m.fn == 0}};
}

std::size_t tol_samples(double tol_ms, int fs) {
  if (!(tol_ms >= 0.0)) throw Error(ErrorCode::BadConfig, "--tol-ms must be >= 0");
  return static_cast<std::size_t>(std::llround(tol_ms * fs / 1000.0));
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf") {
      v.push_back(INFINITY);
      continue;
    }
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadConfig, "bad number '" + item + "' in list");
    }
  }
  if (v.empty()) throw Error(ErrorCode::BadConfig, "empty list");
  return v;
}

// ---- synth

void cmd_synth(const Globals& g, const std::string& grid_spec) {
  RunConfig run = load_run(g);
  if (!grid_spec.empty()) {
    std::smatch m;
    if (!std::regex_match(grid_spec, m, std::regex(R"((\d+)x(\d+))"))) {
      throw Error(ErrorCode::BadConfig, "--grid expects FxM, e.g. 2x2");
    }
    const auto nf = std::stoul(m[1]);
    const auto nm = std::stoul(m[2]);
    if (nf == 0 || nm == 0 || nf > run.grid.fetal_hr.size() || nm > run.grid.maternal_hr.size()) {
      throw Error(ErrorCode::BadConfig, "--grid exceeds the configured heart-rate grid");
    }
    run.grid.fetal_hr.resize(nf);
    run.grid.maternal_hr.resize(nm);
  }
  const auto cells = grid_cells(run.grid);
  write_dataset(run.out, run, cells, logger(g));
  Json names = Json::array();
  for (const auto& c : cells) names.push_back(c.name());
  print({{"out", run.out}, {"cells", names}});
}

// ---- preprocess

void cmd_preprocess(const Globals& g, const std::string& in, int fs, const std::string& output) {
  const RunConfig run = load_run(g);
  const Signal clean = preprocess(load_signal(in, fs), run.preprocess);
  const std::string path = out_path(run, output, "preprocessed.csv");
  write_signal_csv(path, clean);
  print({{"output", path}, {"fs", clean.fs}, {"t0", clean.t0}, {"samples", clean.size()}});
}

// ---- train

std::vector<std::string> kept_loss_lines(const std::string& path, std::size_t upto) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::stringstream ss(read_text(path));
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (std::stoul(line.substr(0, line.find(','))) <= upto) lines.push_back(line);
  }
  return lines;
}

void cmd_train(const Globals& g, const std::string& data_dir, std::optional<std::size_t> epochs,
               std::optional<double> lambda, const std::string& resume) {
  RunConfig run = load_run(g);
  CycleGanModel model;
  if (!resume.empty()) {
    // the checkpoint's training settings win over the config
    auto ck = load_checkpoint(resume);
    model = std::move(ck.model);
    run.train = ck.cfg;
  }
  if (epochs) run.train.epochs = *epochs;
  if (lambda) run.train.lambda = *lambda;
  run.train.validate();
  const LogFn log = logger(g);

  const GridSplit split = load_dataset(data_dir);
  if (split.train.empty()) throw Error(ErrorCode::EmptyDataset, data_dir + ": no training cells");
  const TrainingData data = training_data(split.train, run.preprocess);
  if (log) log("training windows: " + std::to_string(data.x.rows()) + " mixture, " + std::to_string(data.y.rows()) + " fetal");

  const std::string loss_path = run.out + "/losses.csv";
  std::vector<std::string> previous;
  if (resume.empty()) {
    model = build_model(run.generator, run.discriminator, run.train.lambda, run.seed);
  } else {
    previous = kept_loss_lines(loss_path, model.state.epoch);
    if (log) log("resuming after epoch " + std::to_string(model.state.epoch));
  }

  const auto rows = train(model, data.x, data.y, run.train, [&](const EpochLosses& e) {
    if (!log) return;
    std::ostringstream os;
    os << "epoch " << e.epoch << "/" << run.train.epochs << " loss_G " << e.loss_g << " loss_Dx " << e.loss_dx
       << " loss_Dy " << e.loss_dy << " cycle " << e.cycle;
    log(os.str());
  });

  const std::string ckpt = run.out + "/model.ckpt";
  fs::create_directories(run.out);
  save_checkpoint(model, run.train, ckpt);
  std::string csv = loss_csv(rows);
  if (!previous.empty()) {
    const auto header_end = csv.find('\n') + 1;
    std::string old;
    for (const auto& l : previous) old += l + "\n";
    csv.insert(header_end, old);
  }
  write_text(loss_path, csv);

  Json last = Json::object();
  if (!rows.empty()) {
    const auto& r = rows.back();
    last = {{"epoch", r.epoch}, {"loss_G", num(r.loss_g)}, {"loss_Dx", num(r.loss_dx)},
            {"loss_Dy", num(r.loss_dy)}, {"cycle", num(r.cycle)}};
  }
  print({{"checkpoint", ckpt}, {"losses", loss_path}, {"epochs_run", rows.size()}, {"last", last}});
}

// ---- extract

void cmd_extract(const Globals& g, const std::string& model_path, const std::string& in, int fs,
                 const std::string& output) {
  const RunConfig run = load_run(g);
  const auto ck = load_checkpoint(model_path);
  const Signal fecg = extract_fecg(ck.model, load_signal(in, fs), run.preprocess);
  const std::string path = out_path(run, output, "fecg.csv");
  write_signal_csv(path, fecg);
  print({{"output", path}, {"fs", fecg.fs}, {"t0", fecg.t0}, {"samples", fecg.size()}});
}

// ---- qrs

void cmd_qrs(const std::string& in, int fs, const std::string& ref, double tol_ms,
             const std::string& output) {
  const Signal s = load_signal(in, fs);
  const PeakList peaks = pan_tompkins(s);
  Json j{{"fs", s.fs}, {"count", peaks.indices.size()}, {"peaks", peaks.indices}};
  if (!ref.empty()) {
    j["match"] = match_json(match_beats(peaks, reference_peaks(ref, s), tol_samples(tol_ms, s.fs)));
    j["tol_samples"] = tol_samples(tol_ms, s.fs);
  }
  if (!output.empty()) write_peaks_json(output, peaks);
  print(j);
}

// ---- eval

void write_bland_altman(const std::string& path, const BlandAltman& ba) {
  std::string csv = "mean,diff\n";
  for (std::size_t i = 0; i < ba.means.size(); ++i) {
    csv += format_double(ba.means[i]) + "," + format_double(ba.diffs[i]) + "\n";
  }
  write_text(path, csv);
}

std::string records_csv(const EvalReport& rep) {
  std::string csv = "label";
  for (const auto& m : report_metrics()) csv += "," + m;
  csv += ",category,tp,fp,fn\n";
  for (const auto& r : rep.records) {
    csv += r.label;
    for (const auto& m : report_metrics()) csv += "," + format_double(metric_value(r, m));
    csv += "," + to_string(r.category) + "," + std::to_string(r.tp) + "," + std::to_string(r.fp) + "," +
           std::to_string(r.fn) + "\n";
  }
  return csv;
}

void cmd_eval_files(const std::string& truth_path, const std::string& pred_path, int fs,
                    const std::string& peaks_path, double tol_ms, const std::string& plot) {
  const Signal truth = load_signal(truth_path, fs);
  const Signal pred = load_signal(pred_path, fs);
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::ShapeMismatch, "truth has " + std::to_string(truth.size()) + " samples, pred has " +
                                              std::to_string(pred.size()));
  }
  if (truth.fs != pred.fs) throw Error(ErrorCode::FsMismatch, "truth and pred sample rates differ");
  const auto a = agreement(truth.samples, pred.samples);
  const auto w = wedd(truth.samples, pred.samples);
  const PeakList ref = peaks_path.empty() ? pan_tompkins(truth) : reference_peaks(peaks_path, truth);
  const auto m = match_beats(pan_tompkins(pred), ref, tol_samples(tol_ms, truth.fs));

  Json wj{{"wedd", num(w.wedd)}, {"category", to_string(w.category)}, {"weights", w.weights}};
  Json wprd = Json::array();
  for (double v : w.wprd) wprd.push_back(num(v));
  wj["wprd"] = wprd;
  print({{"agreement",
          {{"r2", num(a.r2)}, {"icc", num(a.icc)}, {"bias", num(a.bias)}, {"loa_lo", num(a.loa_lo)},
           {"loa_hi", num(a.loa_hi)}, {"t_stat", num(a.t_stat)}, {"p_value", num(a.p_value)}}},
         {"wedd", wj},
         {"qrs", match_json(m)}});
  if (!plot.empty()) write_bland_altman(plot, bland_altman(truth.samples, pred.samples));
}

void cmd_eval_model(const Globals& g, const std::string& model_path, const std::string& data_dir, bool all) {
  const RunConfig run = load_run(g);
  const auto ck = load_checkpoint(model_path);
  GridSplit split = load_dataset(data_dir);
  if (all) {
    split.test_cells.insert(split.test_cells.end(), split.train_cells.begin(), split.train_cells.end());
    split.test.insert(split.test.end(), split.train.begin(), split.train.end());
  }
  if (split.test.empty()) throw Error(ErrorCode::EmptyDataset, data_dir + ": no held-out cells (use --all)");
  const EvalReport rep = evaluate_model(ck.model, split.test_cells, split.test, run.preprocess, run.seed);
  const Json j = to_json(rep);
  write_text(run.out + "/eval_report.json", j.dump(2) + "\n");
  write_text(run.out + "/eval_records.csv", records_csv(rep));
  print(j);
}

// ---- report

void cmd_report(const Globals& g, const std::vector<std::string>& inputs, const std::string& csv_path) {
  const RunConfig run = load_run(g);
  std::vector<RecordEval> records;
  for (const auto& path : inputs) {
    Json j;
    try {
      j = Json::parse(read_text(path));
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::IoError, path + ": not JSON");
    }
    try {
      const Json& rows = j.is_object() && j.contains("records") ? j.at("records") : j;
      if (rows.is_array()) {
        for (const auto& r : rows) records.push_back(record_from_json(r));
      } else {
        records.push_back(record_from_json(rows));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, path + ": malformed record (" + e.what() + ")");
    }
  }
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no records to report");
  const EvalReport rep = make_report(std::move(records), run.seed);
  std::string csv = "metric,n,mean,sd,ci_lo,ci_hi\n";
  for (const auto& m : report_metrics()) {
    const auto& s = rep.aggregate.at(m);
    csv += m + "," + std::to_string(s.n) + "," + format_double(s.mean) + "," + format_double(s.sd) + "," +
           format_double(s.ci_lo) + "," + format_double(s.ci_hi) + "\n";
  }
  write_text(out_path(run, csv_path, "report.csv"), csv);
  print(to_json(rep));
}

// ---- sweep

void cmd_sweep(const Globals& g, const std::string& kind, const std::string& data_dir,
               std::optional<std::size_t> epochs, const std::string& model_path, const std::string& levels,
               const std::string& lambdas) {
  RunConfig run = load_run(g);
  if (epochs) run.train.epochs = *epochs;
  const LogFn log = logger(g);
  const GridSplit split = load_dataset(data_dir);
  if (split.test.empty()) throw Error(ErrorCode::EmptyDataset, data_dir + ": no held-out cells");

  std::vector<SweepRow> rows;
  std::string key;
  if (kind == "lambda") {
    key = "lambda";
    const auto grid = lambdas.empty() ? kLambdaGrid : parse_list(lambdas);
    rows = lambda_sweep(run, split, training_data(split.train, run.preprocess), grid, log);
  } else if (kind == "ablation") {
    key = "variant";
    rows = ablation_sweep(run, split, training_data(split.train, run.preprocess), log);
  } else if (kind == "snr") {
    key = "snr_db";
    if (model_path.empty()) throw Error(ErrorCode::BadConfig, "snr sweep needs --model");
    if (levels.empty()) throw Error(ErrorCode::BadConfig, "snr sweep needs --levels");
    const auto ck = load_checkpoint(model_path);
    rows = snr_sweep(run, ck.model, split, parse_list(levels), log);
  } else {
    throw Error(ErrorCode::BadConfig, "unknown sweep kind '" + kind + "'");
  }

  const std::string path = run.out + "/sweep_" + kind + ".csv";
  write_text(path, sweep_csv(key, rows));
  Json jr = Json::array();
  for (const auto& r : rows) jr.push_back({{key, r.key}, {"r2", num(r.r2)}, {"f1", num(r.f1)}, {"wedd", num(r.wedd)}});
  print({{"output", path}, {"rows", jr}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fetalsep: fetal ECG extraction from single-channel abdominal recordings"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "run configuration (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "override the run seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--quiet", g.quiet, "no progress output");

  std::string grid, in, output, ref, model, data, peaks, plot, kind, levels, lambdas;
  int fs = 0;
  double tol_ms = 30.0;
  std::size_t epochs_v = 0;
  double lambda_v = 0.0;
  bool all = false;
  std::string truth, pred, resume;
  std::vector<std::string> inputs;

  auto* synth = app.add_subcommand("synth", "write the synthetic heart-rate grid");
  synth->add_option("--grid", grid, "subset FxM of the heart-rate grid");

  auto* prep = app.add_subcommand("preprocess", "filter, resample and smooth a signal");
  prep->add_option("--in", in, "signal CSV")->required();
  prep->add_option("--fs", fs, "sample rate when there is no sidecar");
  prep->add_option("--output", output, "output CSV (default <out>/preprocessed.csv)");

  auto* trn = app.add_subcommand("train", "train the CycleGAN on a dataset directory");
  trn->add_option("--data", data, "dataset directory from synth")->required();
  auto* ep_opt = trn->add_option("--epochs", epochs_v, "override the epoch count");
  auto* lam_opt = trn->add_option("--lambda", lambda_v, "override the cycle weight");
  trn->add_option("--resume", resume, "checkpoint to continue from");

  auto* ext = app.add_subcommand("extract", "extract the fetal ECG from an abdominal signal");
  ext->add_option("--model", model, "checkpoint")->required();
  ext->add_option("--in", in, "abdominal signal CSV")->required();
  ext->add_option("--fs", fs, "sample rate when there is no sidecar");
  ext->add_option("--output", output, "output CSV (default <out>/fecg.csv)");

  auto* qrs = app.add_subcommand("qrs", "detect R peaks and score them");
  qrs->add_option("--in", in, "signal CSV")->required();
  qrs->add_option("--fs", fs, "sample rate when there is no sidecar");
  qrs->add_option("--ref", ref, "reference peaks JSON");
  qrs->add_option("--tol-ms", tol_ms, "matching tolerance in ms");
  qrs->add_option("--output", output, "write detected peaks JSON");

  auto* ev = app.add_subcommand("eval", "agreement metrics between signals, or a model on a dataset");
  ev->add_option("--truth", truth, "reference signal CSV");
  ev->add_option("--pred", pred, "estimated signal CSV");
  ev->add_option("--fs", fs, "sample rate when there is no sidecar");
  ev->add_option("--peaks", peaks, "reference peaks JSON (default: detected on truth)");
  ev->add_option("--tol-ms", tol_ms, "matching tolerance in ms");
  ev->add_option("--plot-data", plot, "write Bland-Altman (mean, diff) pairs");
  ev->add_option("--model", model, "checkpoint (dataset mode)");
  ev->add_option("--data", data, "dataset directory (dataset mode)");
  ev->add_flag("--all", all, "evaluate every cell, not only held-out ones");

  auto* sw = app.add_subcommand("sweep", "lambda, snr or ablation sweep");
  sw->add_option("kind", kind, "lambda | snr | ablation")->required();
  sw->add_option("--data", data, "dataset directory from synth")->required();
  auto* sw_ep = sw->add_option("--epochs", epochs_v, "override the epoch count");
  sw->add_option("--model", model, "checkpoint (snr)");
  sw->add_option("--levels", levels, "comma-separated SNR levels in dB (snr)");
  sw->add_option("--lambdas", lambdas, "comma-separated cycle weights (lambda)");

  auto* rep = app.add_subcommand("report", "aggregate evaluation records");
  rep->add_option("--in", inputs, "eval JSON files")->required();
  rep->add_option("--csv", output, "summary CSV (default <out>/report.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*synth) {
      cmd_synth(g, grid);
    } else if (*prep) {
      cmd_preprocess(g, in, fs, output);
    } else if (*trn) {
      cmd_train(g, data, *ep_opt ? std::optional(epochs_v) : std::nullopt,
                *lam_opt ? std::optional(lambda_v) : std::nullopt, resume);
    } else if (*ext) {
      cmd_extract(g, model, in, fs, output);
    } else if (*qrs) {
      cmd_qrs(in, fs, ref, tol_ms, output);
    } else if (*ev) {
      if (!truth.empty() || !pred.empty()) {
        if (truth.empty() || pred.empty()) throw Error(ErrorCode::BadConfig, "eval needs both --truth and --pred");
        cmd_eval_files(truth, pred, fs, peaks, tol_ms, plot);
      } else if (!model.empty() && !data.empty()) {
        cmd_eval_model(g, model, data, all);
      } else {
        throw Error(ErrorCode::BadConfig, "eval needs --truth/--pred or --model/--data");
      }
    } else if (*sw) {
      cmd_sweep(g, kind, data, *sw_ep ? std::optional(epochs_v) : std::nullopt, model, levels, lambdas);
    } else if (*rep) {
      cmd_report(g, inputs, output);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
