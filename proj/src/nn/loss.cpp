#include "fetalsep/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fetalsep/error.hpp"

namespace fetalsep::nn {
namespace {

void check(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target) || pred.size() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "loss operands differ in shape");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// derivative of the clamp: zero where the clamp is active
double clamp_slope(double p) { return (p > kProbClamp && p < 1.0 - kProbClamp) ? 1.0 : 0.0; }

}  // namespace

ElementLoss parse_element_loss(const std::string& name) {
  if (name == "logcosh") return ElementLoss::LogCosh;
  if (name == "l1") return ElementLoss::L1;
  if (name == "l2") return ElementLoss::L2;
  throw Error(ErrorCode::BadConfig, "unknown loss kind '" + name + "'");
}

std::string to_string(ElementLoss kind) {
  switch (kind) {
    case ElementLoss::LogCosh: return "logcosh";
    case ElementLoss::L1: return "l1";
    case ElementLoss::L2: return "l2";
  }
  return "logcosh";
}

LossResult logcosh_loss(const Tensor& pred, const Tensor& target) {
  check(pred, target);
  LossResult out{0.0, Tensor(pred.batch(), pred.channels(), pred.length())};
  const auto n = static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto g = out.grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - t[i];
    const double a = std::abs(r);
    out.value += a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
    g[i] = std::tanh(r) / n;
  }
  out.value /= n;
  return out;
}

LossResult l1_loss(const Tensor& pred, const Tensor& target) {
  check(pred, target);
  LossResult out{0.0, Tensor(pred.batch(), pred.channels(), pred.length())};
  const auto n = static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto g = out.grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - t[i];
    out.value += std::abs(r);
    g[i] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / n;
  }
  out.value /= n;
  return out;
}

LossResult l2_loss(const Tensor& pred, const Tensor& target) {
  check(pred, target);
  LossResult out{0.0, Tensor(pred.batch(), pred.channels(), pred.length())};
  const auto n = static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto g = out.grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - t[i];
    out.value += r * r;
    g[i] = 2.0 * r / n;
  }
  out.value /= n;
  return out;
}

LossResult element_loss(ElementLoss kind, const Tensor& pred, const Tensor& target) {
  switch (kind) {
    case ElementLoss::L1: return l1_loss(pred, target);
    case ElementLoss::L2: return l2_loss(pred, target);
    case ElementLoss::LogCosh: break;
  }
  return logcosh_loss(pred, target);
}

AdversarialForm parse_adversarial_form(const std::string& name) {
  if (name == "nonsaturating") return AdversarialForm::NonSaturating;
  if (name == "literal") return AdversarialForm::Literal;
  throw Error(ErrorCode::BadConfig, "unknown adversarial form '" + name + "'");
}

std::string to_string(AdversarialForm form) {
  return form == AdversarialForm::Literal ? "literal" : "nonsaturating";
}

DiscriminatorLoss discriminator_loss(const std::vector<double>& real_prob,
                                     const std::vector<double>& fake_prob) {
  if (real_prob.empty() || fake_prob.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "empty discriminator batch");
  }
  DiscriminatorLoss out{0.0, std::vector<double>(real_prob.size()),
                        std::vector<double>(fake_prob.size())};
  const auto nr = static_cast<double>(real_prob.size());
  const auto nf = static_cast<double>(fake_prob.size());
  for (std::size_t i = 0; i < real_prob.size(); ++i) {
    const double p = clamp_prob(real_prob[i]);
    out.value -= std::log(p) / nr;
    out.grad_real[i] = -clamp_slope(real_prob[i]) / (p * nr);
  }
  for (std::size_t i = 0; i < fake_prob.size(); ++i) {
    const double p = clamp_prob(fake_prob[i]);
    out.value -= std::log(1.0 - p) / nf;
    out.grad_fake[i] = clamp_slope(fake_prob[i]) / ((1.0 - p) * nf);
  }
  return out;
}

ProbLoss generator_adversarial_loss(const std::vector<double>& fake_prob, AdversarialForm form) {
  if (fake_prob.empty()) throw Error(ErrorCode::ShapeMismatch, "empty generator batch");
  ProbLoss out{0.0, std::vector<double>(fake_prob.size())};
  const auto n = static_cast<double>(fake_prob.size());
  for (std::size_t i = 0; i < fake_prob.size(); ++i) {
    const double p = clamp_prob(fake_prob[i]);
    const double slope = clamp_slope(fake_prob[i]);
    if (form == AdversarialForm::NonSaturating) {
      out.value -= std::log(p) / n;
      out.grad[i] = -slope / (p * n);
    } else {
      out.value += std::log(1.0 - p) / n;
      out.grad[i] = -slope / ((1.0 - p) * n);
    }
  }
  return out;
}

AdversarialLosses adversarial_losses(const std::vector<double>& real_prob,
                                     const std::vector<double>& fake_prob, AdversarialForm form) {
  return {discriminator_loss(real_prob, fake_prob).value,
          generator_adversarial_loss(fake_prob, form).value};
}

}  // namespace fetalsep::nn
