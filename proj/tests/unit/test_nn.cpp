#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fetalsep/error.hpp"
#include "fetalsep/nn/loss.hpp"
#include "fetalsep/nn/ops.hpp"
#include "fetalsep/nn/optim.hpp"
#include "fetalsep/nn/param_store.hpp"
#include "gradcheck.hpp"

using namespace fetalsep;
using namespace fetalsep::nn;
using fetalsep::testing::check_gradient;
using fetalsep::testing::dot;
using fetalsep::testing::random_vector;

namespace {

Tensor random_tensor(std::mt19937_64& gen, std::size_t b, std::size_t c, std::size_t l, double scale = 1.0) {
  Tensor t(b, c, l);
  const auto v = random_vector(gen, t.size(), scale);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

Tensor from(std::vector<double> v) {
  Tensor t(1, 1, v.size());
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

}  // namespace

TEST_CASE("conv1d forward examples") {
  const Tensor x = from({1, 2, 3});
  const std::vector<double> one{1.0}, zero{0.0};
  const auto id = conv1d_forward(x, one, zero, {1, 1, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) CHECK(id(0, 0, i) == x(0, 0, i));
  const std::vector<double> w{1, 0, -1};
  const auto y = conv1d_forward(x, w, zero, {1, 1, 3, 1});
  CHECK(y(0, 0, 0) == -2.0);
  CHECK(y(0, 0, 1) == -2.0);
  CHECK(y(0, 0, 2) == 2.0);
  const Tensor long_x(2, 1, 200, 1.0);
  const std::vector<double> w5(5, 0.1);
  CHECK(conv1d_forward(long_x, w5, zero, {1, 1, 5, 2}).length() == 100);
  CHECK_THROWS_AS(conv1d_forward(x, w, zero, {2, 1, 3, 1}), Error);
}

TEST_CASE("conv1d backward examples and gradient check") {
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor(gen, 2, 3, 9);
  const auto w = random_vector(gen, 2 * 3 * 5);
  const auto g0 = conv1d_backward(x, w, {3, 2, 5, 1}, Tensor(2, 2, 9));
  for (double v : g0.x.data()) CHECK(v == 0.0);
  for (double v : g0.weight) CHECK(v == 0.0);

  const Tensor gout = random_tensor(gen, 1, 1, 6);
  const std::vector<double> one{1.0};
  const auto gid = conv1d_backward(random_tensor(gen, 1, 1, 6), one, {1, 1, 1, 1}, gout);
  for (std::size_t i = 0; i < 6; ++i) CHECK(gid.x(0, 0, i) == gout(0, 0, i));

  std::uniform_int_distribution<std::size_t> ch(1, 3), len(3, 16), kern(0, 3), str(1, 2);
  for (int trial = 0; trial < 20; ++trial) {
    ConvGeometry geo{ch(gen), ch(gen), 2 * kern(gen) + 1, str(gen)};
    const std::size_t L = len(gen);
    Tensor xx = random_tensor(gen, 2, geo.in_ch, L);
    auto ww = random_vector(gen, geo.weight_size());
    auto bb = random_vector(gen, geo.out_ch);
    const Tensor r = random_tensor(gen, 2, geo.out_ch, geo.out_length(L));
    auto f = [&] { return dot(conv1d_forward(xx, ww, bb, geo).data(), r.data()); };
    const auto g = conv1d_backward(xx, ww, geo, r);
    CHECK(check_gradient(xx.data(), g.x.data(), f) < 1e-4);
    CHECK(check_gradient(ww, g.weight, f) < 1e-4);
    CHECK(check_gradient(bb, g.bias, f) < 1e-4);
  }
}

TEST_CASE("sine activation") {
  const double w = 30.0;
  const Tensor z = from({0.0, std::numbers::pi / (2.0 * w)});
  const auto y = sine_forward(z, w);
  CHECK(y(0, 0, 0) == 0.0);
  CHECK(y(0, 0, 1) == doctest::Approx(1.0));
  const auto d = sine_backward(from({0.0}), w, from({1.0}));
  CHECK(d(0, 0, 0) == doctest::Approx(w));
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(gen, 2, 2, 7, 0.3);
    const Tensor r = random_tensor(gen, 2, 2, 7);
    const double om = trial % 2 ? 1.0 : 30.0;
    auto f = [&] { return dot(sine_forward(x, om).data(), r.data()); };
    CHECK(check_gradient(x.data(), sine_backward(x, om, r).data(), f) < 1e-6);
  }
}

TEST_CASE("leaky relu") {
  const auto y = leaky_relu_forward(from({1.0, -1.0}), 0.2);
  CHECK(y(0, 0, 0) == 1.0);
  CHECK(y(0, 0, 1) == doctest::Approx(-0.2));
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(gen, 2, 2, 7);
    for (double& v : x.data()) {
      if (std::abs(v) < 1e-3) v += 0.01;
    }
    const Tensor r = random_tensor(gen, 2, 2, 7);
    auto f = [&] { return dot(leaky_relu_forward(x, 0.2).data(), r.data()); };
    CHECK(check_gradient(x.data(), leaky_relu_backward(x, 0.2, r).data(), f) < 1e-4);
  }
}

TEST_CASE("upsample2") {
  const auto c = upsample2_forward(Tensor(1, 2, 4, 3.0));
  CHECK(c.length() == 8);
  for (double v : c.data()) CHECK(v == 3.0);
  const auto u = upsample2_forward(from({0.0, 2.0}));
  CHECK(u(0, 0, 0) == 0.0);
  CHECK(u(0, 0, 1) == 1.0);
  CHECK(u(0, 0, 2) == 2.0);
  CHECK(u(0, 0, 3) == 2.0);
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(gen, 2, 2, 3 + trial % 5);
    const Tensor r = random_tensor(gen, 2, 2, 2 * x.length());
    auto f = [&] { return dot(upsample2_forward(x).data(), r.data()); };
    CHECK(check_gradient(x.data(), upsample2_backward(r).data(), f) < 1e-4);
  }
}

TEST_CASE("dense softmax") {
  const Tensor x(1, 1, 1, 1.0);
  const std::vector<double> w{0.0, 0.0}, b{0.0, 0.0};
  auto p = dense_softmax_forward(x, w, b, 2);
  CHECK(p.probs[0] == doctest::Approx(0.5));
  const std::vector<double> b3{std::log(3.0), 0.0};
  p = dense_softmax_forward(x, w, b3, 2);
  CHECK(p.probs[0] == doctest::Approx(0.75));
  CHECK(p.probs[1] == doctest::Approx(0.25));

  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor xx = random_tensor(gen, 3, 2, 5);
    auto ww = random_vector(gen, 2 * 10, 0.5);
    auto bb = random_vector(gen, 2);
    // cross-entropy against fixed labels
    const std::vector<int> label{1, 0, 1};
    auto f = [&] {
      const auto o = dense_softmax_forward(xx, ww, bb, 2);
      double acc = 0.0;
      for (std::size_t n = 0; n < 3; ++n) acc -= std::log(o.probs[n * 2 + label[n]]);
      return acc;
    };
    const auto o = dense_softmax_forward(xx, ww, bb, 2);
    std::vector<double> gp(6, 0.0);
    for (std::size_t n = 0; n < 3; ++n) gp[n * 2 + label[n]] = -1.0 / o.probs[n * 2 + label[n]];
    for (std::size_t n = 0; n < 3; ++n) CHECK(o.probs[2 * n] + o.probs[2 * n + 1] == doctest::Approx(1.0).epsilon(1e-12));
    const auto g = dense_softmax_backward(xx, ww, o, gp);
    CHECK(check_gradient(xx.data(), g.x.data(), f) < 1e-4);
    CHECK(check_gradient(ww, g.weight, f) < 1e-4);
    CHECK(check_gradient(bb, g.bias, f) < 1e-4);
  }
}

TEST_CASE("attention mask rules") {
  std::mt19937_64 gen(6);
  const std::size_t d = 4;
  auto wq = random_vector(gen, d), bq = random_vector(gen, d), wk = random_vector(gen, d),
       bk = random_vector(gen, d), wv = random_vector(gen, d), bv = random_vector(gen, d);
  const AttentionWeights w{wq, bq, wk, bk, wv, bv, 1, d};

  const Tensor flat(2, 1, 12, 0.7);
  for (MaskEnergy e : {MaskEnergy::ChannelMean, MaskEnergy::Suppress}) {
    const auto o = attention_mask_forward(flat, w, 0.8, e);
    for (double v : o.mask.data()) CHECK(v == 1.0);
    for (std::size_t i = 0; i < flat.size(); ++i) CHECK(o.masked.data()[i] == flat.data()[i]);
  }
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor x = random_tensor(gen, 3, 1, 20);
    for (MaskEnergy e : {MaskEnergy::ChannelMean, MaskEnergy::Suppress}) {
      const auto o = attention_mask_forward(x, w, 0.8, e);
      for (std::size_t n = 0; n < 3; ++n) {
        double top = 0.0;
        for (std::size_t t = 0; t < 20; ++t) {
          const double m = o.mask(n, 0, t);
          if (m != 0.0) {
            CHECK(m >= 0.8);
            CHECK(m <= 1.0);
          }
          top = std::max(top, m);
          CHECK(o.masked(n, 0, t) == x(n, 0, t) * m);
        }
        CHECK(top == 1.0);
      }
    }
  }
}

TEST_CASE("attention mask gradient away from the gate and extremum ties") {
  std::mt19937_64 gen(7);
  int checked = 0;
  for (int attempt = 0; attempt < 400 && checked < 40; ++attempt) {
    const std::size_t d = 3, C = 1 + attempt % 2, L = 6 + attempt % 5;
    const MaskEnergy energy = attempt % 3 == 0 ? MaskEnergy::Suppress : MaskEnergy::ChannelMean;
    Tensor x = random_tensor(gen, 2, C, L);
    auto wq = random_vector(gen, d * C), bq = random_vector(gen, d), wk = random_vector(gen, d * C),
         bk = random_vector(gen, d), wv = random_vector(gen, d * C), bv = random_vector(gen, d);
    const AttentionWeights w{wq, bq, wk, bk, wv, bv, C, d};
    const double thr = 0.5;
    const auto o = attention_mask_forward(x, w, thr, energy);
    bool ok = true;
    for (std::size_t n = 0; n < 2 && ok; ++n) {
      std::vector<double> ws(o.trace.weight.begin() + static_cast<long>(n * L),
                             o.trace.weight.begin() + static_cast<long>((n + 1) * L));
      std::sort(ws.begin(), ws.end());
      if (o.trace.degenerate[n] || ws[1] < 1e-3 || ws[L - 2] > 1.0 - 1e-3) ok = false;
      for (double v : ws) {
        if (std::abs(v - thr) < 1e-3) ok = false;
      }
    }
    if (!ok) continue;
    ++checked;
    const Tensor r = random_tensor(gen, 2, C, L);
    auto f = [&] { return dot(attention_mask_forward(x, w, thr, energy).masked.data(), r.data()); };
    const auto g = attention_mask_backward(o.trace, w, r);
    CHECK(check_gradient(x.data(), g.x.data(), f) < 1e-4);
    CHECK(check_gradient(wq, g.wq, f) < 1e-4);
    CHECK(check_gradient(bq, g.bq, f) < 1e-4);
    CHECK(check_gradient(wk, g.wk, f) < 1e-4);
    CHECK(check_gradient(bk, g.bk, f) < 1e-4);
    CHECK(check_gradient(wv, g.wv, f) < 1e-4);
    CHECK(check_gradient(bv, g.bv, f) < 1e-4);
  }
  CHECK(checked >= 20);
}

TEST_CASE("element losses") {
  const Tensor a = from({0.5, -1.0, 2.0});
  CHECK(logcosh_loss(a, a).value == 0.0);
  CHECK(logcosh_loss(from({10.0}), from({0.0})).value == doctest::Approx(10.0 - std::log(2.0)).epsilon(1e-6));
  CHECK(l1_loss(a, a).value == 0.0);
  const Tensor shifted = from({0.5 + 0.3, -1.0 + 0.3, 2.0 + 0.3});
  CHECK(l1_loss(shifted, a).value == doctest::Approx(0.3));
  CHECK(l2_loss(shifted, a).value == doctest::Approx(0.09));
  CHECK_THROWS_AS(l2_loss(a, from({1.0})), Error);

  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = random_tensor(gen, 2, 1, 9);
    const Tensor t = random_tensor(gen, 2, 1, 9);
    for (ElementLoss kind : {ElementLoss::LogCosh, ElementLoss::L2, ElementLoss::L1}) {
      if (kind == ElementLoss::L1) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (std::abs(p.data()[i] - t.data()[i]) < 1e-3) p.data()[i] += 0.01;
        }
      }
      auto f = [&] { return element_loss(kind, p, t).value; };
      CHECK(check_gradient(p.data(), element_loss(kind, p, t).grad.data(), f) < 1e-4);
    }
  }
}

TEST_CASE("adversarial losses") {
  const std::vector<double> real{1.0 - 1e-7, 1.0 - 1e-7}, fake{1e-7, 1e-7};
  CHECK(adversarial_losses(real, fake).loss_d == doctest::Approx(0.0).epsilon(1e-6));
  const std::vector<double> half{0.5, 0.5, 0.5};
  CHECK(adversarial_losses(half, half).loss_d == doctest::Approx(2.0 * std::log(2.0)));
  double prev = 1e300;
  for (double p = 0.05; p < 1.0; p += 0.05) {
    const double g = generator_adversarial_loss({p}, AdversarialForm::NonSaturating).value;
    CHECK(g < prev);
    prev = g;
  }
  std::vector<double> pr{0.3, 0.8}, pf{0.6, 0.1};
  const auto dl = discriminator_loss(pr, pf);
  auto fd = [&] { return discriminator_loss(pr, pf).value; };
  CHECK(check_gradient(pr, dl.grad_real, fd) < 1e-4);
  CHECK(check_gradient(pf, dl.grad_fake, fd) < 1e-4);
  for (AdversarialForm form : {AdversarialForm::NonSaturating, AdversarialForm::Literal}) {
    const auto gl = generator_adversarial_loss(pf, form);
    auto fg = [&] { return generator_adversarial_loss(pf, form).value; };
    CHECK(check_gradient(pf, gl.grad, fg) < 1e-4);
  }
}

TEST_CASE("nadam") {
  ParamStore store;
  store.add("p", {3});
  store[0].value = {1.0, 2.0, 3.0};
  nadam_step(store, {}, 1);
  CHECK(store[0].value == std::vector<double>{1.0, 2.0, 3.0});

  ParamStore single;
  single.add("q", {1});
  single[0].grad[0] = 0.7;
  nadam_step(single, {}, 1);
  CHECK(single[0].value[0] < 0.0);
  CHECK(single[0].grad[0] == 0.0);

  ParamStore quad;
  quad.add("x", {1});
  NadamConfig cfg;
  cfg.lr = 0.05;
  for (std::uint64_t t = 1; t <= 500; ++t) {
    quad[0].grad[0] = 2.0 * (quad[0].value[0] - 3.0);
    nadam_step(quad, cfg, t);
  }
  CHECK(std::abs(quad[0].value[0] - 3.0) < 1e-2);
}

TEST_CASE("param store") {
  ParamStore s;
  const auto i = s.add("a", {2, 3});
  CHECK(s[i].value.size() == 6);
  CHECK(s[i].m.size() == 6);
  CHECK(s.contains("a"));
  CHECK_THROWS_AS(s.add("a", {1}), Error);
  CHECK_THROWS_AS(s.at("b"), Error);
  s.add("b", {4});
  CHECK(s.scalar_count() == 10);
}
