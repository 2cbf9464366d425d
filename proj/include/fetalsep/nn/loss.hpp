#pragma once

#include <string>
#include <vector>

#include "fetalsep/nn/tensor.hpp"

namespace fetalsep::nn {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d pred
};

enum class ElementLoss { LogCosh, L1, L2 };

ElementLoss parse_element_loss(const std::string& name);
std::string to_string(ElementLoss kind);

LossResult logcosh_loss(const Tensor& pred, const Tensor& target);
LossResult l1_loss(const Tensor& pred, const Tensor& target);
LossResult l2_loss(const Tensor& pred, const Tensor& target);
LossResult element_loss(ElementLoss kind, const Tensor& pred, const Tensor& target);

/// Generator adversarial term: -log D(fake), or log(1 - D(fake)) for the
/// literal minimax objective.
enum class AdversarialForm { NonSaturating, Literal };

AdversarialForm parse_adversarial_form(const std::string& name);
std::string to_string(AdversarialForm form);

inline constexpr double kProbClamp = 1e-7;

struct ProbLoss {
  double value = 0.0;
  std::vector<double> grad;  // d value / d prob, per batch element
};

// -mean log D(real) - mean log(1 - D(fake)); probabilities clamped to
// [1e-7, 1 - 1e-7].
struct DiscriminatorLoss {
  double value = 0.0;
  std::vector<double> grad_real;
  std::vector<double> grad_fake;
};

DiscriminatorLoss discriminator_loss(const std::vector<double>& real_prob,
                                     const std::vector<double>& fake_prob);

ProbLoss generator_adversarial_loss(const std::vector<double>& fake_prob, AdversarialForm form);

struct AdversarialLosses {
  double loss_d = 0.0;
  double loss_g_term = 0.0;
};

AdversarialLosses adversarial_losses(const std::vector<double>& real_prob,
                                     const std::vector<double>& fake_prob,
                                     AdversarialForm form = AdversarialForm::NonSaturating);

}  // namespace fetalsep::nn
