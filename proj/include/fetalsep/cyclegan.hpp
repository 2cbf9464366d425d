#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fetalsep/nn/loss.hpp"
#include "fetalsep/nn/ops.hpp"
#include "fetalsep/nn/optim.hpp"
#include "fetalsep/nn/param_store.hpp"
#include "fetalsep/random.hpp"
#include "fetalsep/signal.hpp"

namespace fetalsep {

enum class Activation { Sine, LeakyRelu, Linear };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
nn::MaskEnergy parse_mask_energy(const std::string& name);
std::string to_string(nn::MaskEnergy e);

struct ConvLayerSpec {
  std::size_t out_ch = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  Activation activation = Activation::Linear;
  double omega = 1.0;  // sine frequency
};

struct GeneratorSpec {
  bool attention = true;
  std::size_t attention_dim = 16;
  double mask_threshold = 0.8;
  nn::MaskEnergy mask_energy = nn::MaskEnergy::Suppress;
  std::vector<ConvLayerSpec> layers;
  bool upsample = true;  // linear x2 after a stride-2 stack
  double leaky_slope = 0.2;
  std::size_t window_len = 200;

  void validate() const;
};

// depth 4: [32,k15,sine w0=30] [32,k15,sine] [64,k15,sine] [1,k31,s2,linear] + upsample.
// depth 3 drops the first conv; the first remaining layer takes w0.
GeneratorSpec default_generator_spec(int depth = 4, Activation hidden = Activation::Sine,
                                     bool attention = true);

struct DiscriminatorSpec {
  std::vector<ConvLayerSpec> layers;
  std::size_t window_len = 200;
  std::size_t classes = 2;

  void validate() const;
  std::size_t flat_features() const;
};

DiscriminatorSpec default_discriminator_spec();

/// Conv stack network sharing the parameter bookkeeping of G, F, D_x, D_y.
class Generator {
 public:
  struct Trace {
    nn::Tensor input;
    std::optional<nn::AttentionTrace> attention;
    std::vector<nn::Tensor> conv_in;   // input of each conv layer
    std::vector<nn::Tensor> conv_out;  // pre-activation output of each conv layer
  };

  Generator() = default;
  explicit Generator(GeneratorSpec spec);

  void init(Rng& rng);
  nn::Tensor forward(const nn::Tensor& x, Trace* trace = nullptr) const;
  // Accumulates parameter gradients when `params` is set; returns d/dx.
  nn::Tensor backward(const Trace& trace, const nn::Tensor& grad_out, bool params = true);

  const GeneratorSpec& spec() const { return spec_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 private:
  nn::AttentionWeights attention_weights() const;

  GeneratorSpec spec_;
  nn::ParamStore store_;
};

class Discriminator {
 public:
  struct Trace {
    std::vector<nn::Tensor> conv_in;
    std::vector<nn::Tensor> conv_out;
    nn::Tensor features;
    nn::DenseSoftmaxOutput out;
  };

  Discriminator() = default;
  explicit Discriminator(DiscriminatorSpec spec);

  void init(Rng& rng);
  // Probability of class 1 ("real") per batch element.
  std::vector<double> forward(const nn::Tensor& x, Trace* trace = nullptr) const;
  nn::Tensor backward(const Trace& trace, const std::vector<double>& grad_real_prob,
                      bool params = true);

  const DiscriminatorSpec& spec() const { return spec_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

 private:
  DiscriminatorSpec spec_;
  nn::ParamStore store_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  nn::ElementLoss cycle_loss_kind = nn::ElementLoss::LogCosh;
  double lambda = 4.0;
  nn::AdversarialForm adversarial_form = nn::AdversarialForm::NonSaturating;

  void validate() const;
  nn::NadamConfig nadam() const { return {lr, beta1, beta2, 1e-8}; }
};

/// Progress counters that make training resumable.
struct TrainState {
  std::size_t epoch = 0;   // completed epochs
  std::uint64_t step = 0;  // optimizer steps taken
  std::string rng_state;   // shuffle RNG, empty before the first epoch
};

struct CycleGanModel {
  Generator g;  // X -> Y
  Generator f;  // Y -> X
  Discriminator dx;
  Discriminator dy;
  double lambda = 4.0;
  TrainState state;
};

CycleGanModel build_model(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec, double lambda,
                          std::uint64_t seed);

double cycle_loss(const Generator& g, const Generator& f, const nn::Tensor& x_batch,
                  const nn::Tensor& y_batch, nn::ElementLoss kind);

struct ObjectiveParts {
  double loss_g_total = 0.0;
  double loss_dx = 0.0;
  double loss_dy = 0.0;
  double cycle = 0.0;
  double adv_g = 0.0;  // generator term against D_y
  double adv_f = 0.0;  // generator term against D_x
};

ObjectiveParts total_objective(const CycleGanModel& model, const nn::Tensor& x_batch,
                               const nn::Tensor& y_batch,
                               nn::ElementLoss kind = nn::ElementLoss::LogCosh,
                               nn::AdversarialForm form = nn::AdversarialForm::NonSaturating);

struct EpochLosses {
  std::size_t epoch = 0;  // 1-based
  double loss_g = 0.0;
  double loss_dx = 0.0;
  double loss_dy = 0.0;
  double cycle = 0.0;
  double adv_g = 0.0;
  double adv_f = 0.0;
};

using EpochCallback = std::function<void(const EpochLosses&)>;

/// Runs epochs state.epoch+1 .. cfg.epochs. Returns one row per epoch run.
std::vector<EpochLosses> train(CycleGanModel& model, const WindowSet& x, const WindowSet& y,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Batched G over every row of a window set.
std::vector<double> apply_generator(const Generator& g, const WindowSet& ws,
                                    std::size_t batch = 64);

Signal extract_fecg(const CycleGanModel& model, const Signal& abdominal, const PreprocessConfig& pp);

void save_checkpoint(const CycleGanModel& model, const TrainConfig& cfg, const std::string& path);

struct LoadedCheckpoint {
  CycleGanModel model;
  TrainConfig cfg;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace fetalsep
