#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fetalsep/config.hpp"
#include "fetalsep/cyclegan.hpp"
#include "fetalsep/metrics.hpp"
#include "fetalsep/qrs.hpp"
#include "fetalsep/synth.hpp"

namespace fetalsep {

struct GridCell {
  std::size_t index = 0;  // row-major over (fetal, maternal)
  double fetal_hr = 0.0;
  double maternal_hr = 0.0;
  bool held_out = false;

  std::string name() const;  // "f135_m77"
};

std::vector<GridCell> grid_cells(const GridConfig& grid);

// Mixture settings for one cell; the cell seed is run.seed + index.
MixtureConfig cell_mixture(const RunConfig& run, const GridCell& cell);

/// Synthesized grid split into training and held-out cells.
struct GridSplit {
  std::vector<GridCell> train_cells, test_cells;
  std::vector<Mixture> train, test;
  std::vector<MixtureConfig> test_configs;  // settings that produced `test`
};

GridSplit make_split(const RunConfig& run);

/// Unpaired training domains: X from abdominal mixtures, Y from fetal truth.
struct TrainingData {
  WindowSet x, y;
};

void append_windows(WindowSet& dst, const WindowSet& src);
TrainingData training_data(std::span<const Mixture> cells, const PreprocessConfig& pp);

/// Fetal truth prepared like the extractor output: preprocessed, windowed at
/// the evaluation stride, z-scored and stitched. Peaks are on that timeline.
struct FetalReference {
  Signal signal;
  PeakList r_peaks;
};

FetalReference fetal_reference(const Mixture& mix, const PreprocessConfig& pp);

struct RecordEval {
  std::string label;
  double r2 = 0.0;
  double icc = 0.0;
  double wedd = 0.0;
  WeddCategory category = WeddCategory::Bad;
  double bias = 0.0;
  double loa_lo = 0.0;
  double loa_hi = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double se = 0.0;
  double ppv = 0.0;
  double f1 = 0.0;
};

// Signal metrics of `extracted` against the reference, and Pan-Tompkins on
// `extracted` scored against the true fetal R-peaks (6-sample tolerance).
RecordEval evaluate_record(const std::string& label, const Signal& extracted, const FetalReference& ref);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample sd, 0 for a single record
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Mean, sd and a percentile-bootstrap 95% CI of the mean.
Summary summarize(std::span<const double> values, std::uint64_t seed, std::size_t resamples = 1000);

struct EvalReport {
  std::vector<RecordEval> records;
  std::map<std::string, Summary> aggregate;  // keyed by metric name
};

// Metric names aggregated over records.
const std::vector<std::string>& report_metrics();
double metric_value(const RecordEval& r, const std::string& name);

EvalReport make_report(std::vector<RecordEval> records, std::uint64_t seed);

Json to_json(const RecordEval& r);
RecordEval record_from_json(const Json& j);
Json to_json(const Summary& s);
Json to_json(const EvalReport& r);

EvalReport evaluate_model(const CycleGanModel& model, const std::vector<GridCell>& cells,
                          std::span<const Mixture> mixtures, const PreprocessConfig& pp, std::uint64_t seed);

using LogFn = std::function<void(const std::string&)>;

struct RunResult {
  CycleGanModel model;
  std::vector<EpochLosses> losses;
  EvalReport report;
  double train_seconds = 0.0;
};

// Builds the model from run.generator / run.discriminator (init seed run.seed),
// trains with run.train and evaluates the held-out cells.
RunResult train_and_evaluate(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                             const LogFn& log = {});

struct SweepRow {
  std::string key;  // lambda value, SNR level or variant name
  double r2 = 0.0;
  double f1 = 0.0;
  double wedd = 0.0;
};

inline const std::vector<double> kLambdaGrid{0.1, 1, 2, 4, 10, 20, 40};

std::vector<SweepRow> lambda_sweep(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                                   std::span<const double> lambdas, const LogFn& log = {});

// Variants: no-attention + leaky ReLU, no-attention + sine, full.
std::vector<SweepRow> ablation_sweep(const RunConfig& run, const GridSplit& split, const TrainingData& data,
                                     const LogFn& log = {});

// Held-out cells regenerated with noise at each level, then extracted by `model`.
std::vector<SweepRow> snr_sweep(const RunConfig& run, const CycleGanModel& model, const GridSplit& split,
                                std::span<const double> levels, const LogFn& log = {});

// Dataset directory: grid.json plus one folder per cell holding abdominal.csv,
// fetal.csv, maternal.csv (with sidecars) and peaks.json {fs, t0, fetal, maternal}.
void write_cell(const std::string& dir, const Mixture& mix);
Mixture read_cell(const std::string& dir);
void write_dataset(const std::string& dir, const RunConfig& run, const std::vector<GridCell>& cells,
                   const LogFn& log = {});
GridSplit load_dataset(const std::string& dir);

std::string sweep_csv(const std::string& key_name, const std::vector<SweepRow>& rows);
std::string loss_csv(const std::vector<EpochLosses>& rows);

}  // namespace fetalsep
