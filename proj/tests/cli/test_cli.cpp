#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fetalsep/config.hpp"
#include "fetalsep/cyclegan.hpp"
#include "fetalsep/io.hpp"
#include "fetalsep/pipeline.hpp"
#include "fetalsep/qrs.hpp"

namespace fs = std::filesystem;
using namespace fetalsep;

namespace {

const fs::path kWork = FETALSEP_CLI_WORK;

struct Run {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path o = kWork / "stdout.txt", e = kWork / "stderr.txt";
  const std::string cmd = "cd '" + kWork.string() + "' && '" FETALSEP_CLI "' " + args + " >'" + o.string() +
                          "' 2>'" + e.string() + "'";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

Json cli_json(const std::string& args) {
  const Run r = cli(args);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  return Json::parse(r.out);
}

// small networks so training takes seconds
const char* kTinyConfig = R"({
  "generator": {"attention": false, "layers": [
    {"out_ch": 4, "kernel": 5, "activation": "sine", "omega": 30},
    {"out_ch": 1, "kernel": 7, "stride": 2, "activation": "linear"}]},
  "discriminator": {"layers": [
    {"out_ch": 4, "kernel": 5, "stride": 2, "activation": "leaky_relu"}]},
  "train": {"epochs": 1, "batch_size": 32}
})";

void setup_once() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  std::ofstream(kWork / "tiny.json") << kTinyConfig;
  done = true;
}

std::size_t subdirs(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_directory();
  return n;
}

std::vector<std::vector<double>> parse_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string line;
  std::getline(ss, line);
  while (std::getline(ss, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("synth writes the grid and reruns byte-identically") {
  setup_once();
  const Json j = cli_json("--quiet --out data synth --grid 2x2");
  CHECK(j.at("cells").size() == 4);
  CHECK(subdirs(kWork / "data") == 4);
  for (const char* f : {"abdominal.csv", "fetal.csv", "maternal.csv", "peaks.json"}) {
    CHECK(fs::exists(kWork / "data" / "f115_m65" / f));
  }
  cli_json("--quiet --out data_again synth --grid 2x2");
  for (const auto& e : fs::recursive_directory_iterator(kWork / "data")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), kWork / "data");
    CHECK_MESSAGE(slurp(e.path()) == slurp(kWork / "data_again" / rel), rel.string());
  }
}

TEST_CASE("synth of the full grid gives 24 cells") {
  setup_once();
  cli_json("--quiet --out full synth");
  CHECK(subdirs(kWork / "full") == 24);
  const auto split = load_dataset((kWork / "full").string());
  CHECK(split.test_cells.size() == 4);
  CHECK(split.train_cells.size() == 20);
}

TEST_CASE("bad grid subset is a usage error") {
  setup_once();
  const Run r = cli("--out nowhere synth --grid 9x9");
  CHECK(r.status == 2);
  CHECK(r.err.find("BadConfig") != std::string::npos);
}

TEST_CASE("train: one epoch, seed repeat and loss contract") {
  setup_once();
  if (!fs::exists(kWork / "data")) cli_json("--quiet --out data synth --grid 2x2");
  const Json j = cli_json("--quiet --config tiny.json --out m1 train --data data");
  CHECK(j.at("epochs_run") == 1);
  CHECK(fs::exists(kWork / "m1" / "model.ckpt"));
  const auto rows = parse_csv(slurp(kWork / "m1" / "losses.csv"));
  REQUIRE(rows.size() == 1);
  const double lambda = load_run_config((kWork / "tiny.json").string()).train.lambda;
  for (const auto& r : rows) {
    // epoch, loss_G, loss_Dx, loss_Dy, cycle, adv_G, adv_F
    CHECK(std::abs(r[1] - (r[5] + r[6] + lambda * r[4])) <= 1e-9);
  }
  cli_json("--quiet --config tiny.json --out m2 train --data data");
  CHECK(slurp(kWork / "m1" / "losses.csv") == slurp(kWork / "m2" / "losses.csv"));
  CHECK(slurp(kWork / "m1" / "model.ckpt") == slurp(kWork / "m2" / "model.ckpt"));

  cli_json("--quiet --config tiny.json --seed 9 --out m3 train --data data");
  CHECK(slurp(kWork / "m1" / "losses.csv") != slurp(kWork / "m3" / "losses.csv"));
}

TEST_CASE("train resume matches an uninterrupted run") {
  setup_once();
  if (!fs::exists(kWork / "data")) cli_json("--quiet --out data synth --grid 2x2");
  cli_json("--quiet --config tiny.json --out straight train --data data --epochs 3");
  cli_json("--quiet --config tiny.json --out split train --data data --epochs 1");
  cli_json("--quiet --config tiny.json --out split train --data data --epochs 3 --resume split/model.ckpt");
  CHECK(slurp(kWork / "straight" / "losses.csv") == slurp(kWork / "split" / "losses.csv"));
  CHECK(slurp(kWork / "straight" / "model.ckpt") == slurp(kWork / "split" / "model.ckpt"));
}

TEST_CASE("extract and qrs reproduce direct module calls") {
  setup_once();
  if (!fs::exists(kWork / "m1" / "model.ckpt")) {
    cli_json("--quiet --out data synth --grid 2x2");
    cli_json("--quiet --config tiny.json --out m1 train --data data");
  }
  cli_json("--quiet --config tiny.json --out x extract --model m1/model.ckpt --in data/f115_m65/abdominal.csv");
  const Signal via_cli = read_signal_csv((kWork / "x" / "fecg.csv").string());

  const RunConfig run = load_run_config((kWork / "tiny.json").string());
  const auto ck = load_checkpoint((kWork / "m1" / "model.ckpt").string());
  const Mixture mix = read_cell((kWork / "data" / "f115_m65").string());
  const Signal direct = extract_fecg(ck.model, mix.abdominal, run.preprocess);
  REQUIRE(via_cli.size() == direct.size());
  CHECK(via_cli.fs == direct.fs);
  CHECK(via_cli.samples == direct.samples);

  const Json q = cli_json("qrs --in x/fecg.csv --ref data/f115_m65/peaks.json --tol-ms 30");
  const PeakList peaks = pan_tompkins(direct);
  CHECK(q.at("peaks").get<std::vector<std::size_t>>() == peaks.indices);
  const auto m = match_beats(peaks, fetal_reference(mix, run.preprocess).r_peaks, 6);
  CHECK(q.at("match").at("tp") == m.tp);
  CHECK(q.at("match").at("fp") == m.fp);
  CHECK(q.at("match").at("fn") == m.fn);
  CHECK(q.at("tol_samples") == 6);
}

TEST_CASE("qrs on clean fetal truth matches its programmed peaks") {
  setup_once();
  if (!fs::exists(kWork / "data")) cli_json("--quiet --out data synth --grid 2x2");
  const Json q = cli_json("qrs --in data/f125_m77/fetal.csv --ref data/f125_m77/peaks.json");
  CHECK(q.at("match").at("f1").get<double>() >= 0.99);
}

TEST_CASE("eval: self comparison and mismatched lengths") {
  setup_once();
  if (!fs::exists(kWork / "data")) cli_json("--quiet --out data synth --grid 2x2");
  const Json j = cli_json("eval --truth data/f115_m65/fetal.csv --pred data/f115_m65/fetal.csv --plot-data ba.csv");
  CHECK(j.at("agreement").at("r2").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j.at("wedd").at("wedd").get<double>() == doctest::Approx(0.0));
  CHECK(j.at("wedd").at("category") == "excellent");
  CHECK(j.at("qrs").at("fp") == 0);
  CHECK(j.at("qrs").at("fn") == 0);
  const auto ba = parse_csv(slurp(kWork / "ba.csv"));
  CHECK(ba.size() == 60000);
  for (const auto& r : ba) CHECK(r[1] == 0.0);

  cli_json("--quiet --out pp preprocess --in data/f115_m65/fetal.csv");
  const Run bad = cli("eval --truth data/f115_m65/fetal.csv --pred pp/preprocessed.csv");
  CHECK(bad.status == 2);
  CHECK(bad.err.find("ShapeMismatch") != std::string::npos);
}

TEST_CASE("dataset eval and report aggregate agree") {
  setup_once();
  if (!fs::exists(kWork / "m1" / "model.ckpt")) {
    cli_json("--quiet --out data synth --grid 2x2");
    cli_json("--quiet --config tiny.json --out m1 train --data data");
  }
  const Json ev = cli_json("--quiet --config tiny.json --out ev eval --model m1/model.ckpt --data data --all");
  CHECK(ev.at("records").size() == 4);
  const Json rep = cli_json("--quiet --out ev report --in ev/eval_report.json");
  CHECK(rep.at("aggregate") == ev.at("aggregate"));
  CHECK(fs::exists(kWork / "ev" / "report.csv"));

  // aggregate recomputed by hand from the per-record rows
  double mean = 0.0;
  for (const auto& r : ev.at("records")) mean += r.at("r2").get<double>();
  mean /= 4.0;
  CHECK(ev.at("aggregate").at("r2").at("mean").get<double>() == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("sweeps emit one row per setting") {
  setup_once();
  if (!fs::exists(kWork / "m1" / "model.ckpt")) {
    cli_json("--quiet --out data synth --grid 2x2");
    cli_json("--quiet --config tiny.json --out m1 train --data data");
  }
  const Json s = cli_json("--quiet --config tiny.json --out sw sweep snr --data data --model m1/model.ckpt --levels 0,6,12");
  CHECK(s.at("rows").size() == 3);
  CHECK(parse_csv(slurp(kWork / "sw" / "sweep_snr.csv")).size() == 3);

  const Json l = cli_json("--quiet --config tiny.json --out sw sweep lambda --data data");
  CHECK(l.at("rows").size() == 7);
  const auto rows = parse_csv(slurp(kWork / "sw" / "sweep_lambda.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows.front()[0] == 0.1);
  CHECK(rows.back()[0] == 40.0);

  CHECK(cli("--out sw sweep snr --data data").status == 2);
  CHECK(cli("--out sw sweep sideways --data data").status == 2);
}

TEST_CASE("missing input is a data error") {
  setup_once();
  const Run r = cli("qrs --in does_not_exist.csv");
  CHECK(r.status == 3);
  CHECK(r.err.find("IoError") != std::string::npos);
}
