#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fetalsep/cyclegan.hpp"
#include "fetalsep/signal.hpp"
#include "fetalsep/synth.hpp"

namespace fetalsep {

using Json = nlohmann::json;

struct GridConfig {
  std::vector<double> fetal_hr{kFetalGridHr.begin(), kFetalGridHr.end()};
  std::vector<double> maternal_hr{kMaternalGridHr.begin(), kMaternalGridHr.end()};
  // (fetal, maternal) cells kept out of training
  std::vector<std::pair<double, double>> held_out{{125, 65}, {145, 77}, {160, 89}, {135, 100}};
};

/// Everything a pipeline run needs. Parsing rejects unknown keys.
struct RunConfig {
  PreprocessConfig preprocess;
  MixtureConfig mixture{.duration_s = 60.0};  // desk-scale cell length
  GridConfig grid;
  TrainConfig train;
  GeneratorSpec generator = default_generator_spec();
  DiscriminatorSpec discriminator = default_discriminator_spec();
  std::string out = "out";
  std::uint64_t seed = 1;

  void validate() const;
};

Json to_json(const PreprocessConfig& c);
Json to_json(const MixtureConfig& c);
Json to_json(const GridConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const GeneratorSpec& s);
Json to_json(const DiscriminatorSpec& s);
Json to_json(const RunConfig& c);

// Each parser starts from the defaults and overrides the keys present.
PreprocessConfig preprocess_config_from_json(const Json& j);
MixtureConfig mixture_config_from_json(const Json& j);
GridConfig grid_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);
GeneratorSpec generator_spec_from_json(const Json& j);
DiscriminatorSpec discriminator_spec_from_json(const Json& j);
RunConfig run_config_from_json(const Json& j);

RunConfig load_run_config(const std::string& path);

}  // namespace fetalsep
