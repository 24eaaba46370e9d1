#include <doctest.h>

#include <cmath>
#include <limits>

#include "usd/errors.hpp"
#include "usd/model.hpp"
#include "usd/rng.hpp"

using usd::Matrix;
using usd::ModelParams;
using usd::Rng;

namespace {

ModelParams tiny_model(std::uint64_t seed = 1) {
  return usd::make_mlp(2, 8, 4, 3, Rng(seed));
}

}  // namespace

TEST_CASE("make_mlp shapes and activations") {
  ModelParams m = tiny_model();
  REQUIRE(m.layers.size() == 4);
  CHECK(m.input_dim() == 2);
  CHECK(m.class_count() == 3);
  CHECK(m.encoder_depth() == 3);
  CHECK(m.layers[0].tanh_act);
  CHECK(m.layers[1].tanh_act);
  CHECK_FALSE(m.layers[2].tanh_act);  // bottleneck is linear
  CHECK_FALSE(m.layers[3].tanh_act);
  CHECK(m.layers[2].w.rows == 4);
  CHECK(m.classifier().w.cols == 4);
  // everything trainable after init
  for (const auto& l : m.layers) {
    for (double v : l.w_mask.data) CHECK(v == 1.0);
    for (double v : l.b_mask) CHECK(v == 1.0);
  }
}

TEST_CASE("forward trace matches a manual pass") {
  ModelParams m = tiny_model();
  Matrix x(2, 2);
  x(0, 0) = 0.3; x(0, 1) = -0.7;
  x(1, 0) = 1.1; x(1, 1) = 0.2;
  auto [logits, trace] = usd::forward(m, x);
  REQUIRE(logits.rows == 2);
  REQUIRE(logits.cols == 3);
  CHECK(trace.post.back().data == logits.data);
  // recompute logit (0,0) by hand through the four layers
  std::vector<double> h = {x(0, 0), x(0, 1)};
  for (const auto& l : m.layers) {
    std::vector<double> next(l.w.rows);
    for (std::size_t o = 0; o < l.w.rows; ++o) {
      double z = l.b[o];
      for (std::size_t i = 0; i < l.w.cols; ++i) z += l.w(o, i) * h[i];
      next[o] = l.tanh_act ? std::tanh(z) : z;
    }
    h = std::move(next);
  }
  CHECK(logits(0, 0) == doctest::Approx(h[0]).epsilon(1e-12));
}

TEST_CASE("init_target_models adds a frozen-known unknown row") {
  ModelParams src = tiny_model(5);
  auto [student, teacher] = usd::init_target_models(src);
  CHECK(student.class_count() == 4);
  const usd::Layer& cls = student.classifier();
  // unknown row: zero weights, bias = mean of known biases, trainable
  double bias_mean = 0.0;
  for (std::size_t k = 0; k < 3; ++k) bias_mean += src.classifier().b[k];
  bias_mean /= 3.0;
  for (std::size_t j = 0; j < cls.w.cols; ++j) {
    CHECK(cls.w(3, j) == 0.0);
    CHECK(cls.w_mask(3, j) == 1.0);
  }
  CHECK(cls.b[3] == doctest::Approx(bias_mean).epsilon(1e-14));
  CHECK(cls.b_mask[3] == 1.0);
  // known rows copied and frozen
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(cls.b[k] == src.classifier().b[k]);
    CHECK(cls.b_mask[k] == 0.0);
    for (std::size_t j = 0; j < cls.w.cols; ++j) {
      CHECK(cls.w(k, j) == src.classifier().w(k, j));
      CHECK(cls.w_mask(k, j) == 0.0);
    }
  }
  // teacher starts identical to the student
  for (std::size_t li = 0; li < student.layers.size(); ++li) {
    CHECK(teacher.layers[li].w.data == student.layers[li].w.data);
    CHECK(teacher.layers[li].b == student.layers[li].b);
  }
}

TEST_CASE("init_target_models can leave known biases trainable") {
  ModelParams src = tiny_model(5);
  auto [student, teacher] = usd::init_target_models(src, false);
  (void)teacher;
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(student.classifier().b_mask[k] == 1.0);
}

TEST_CASE("sgd_step respects the trainable mask") {
  ModelParams src = tiny_model(9);
  auto [student, teacher] = usd::init_target_models(src);
  (void)teacher;
  usd::Gradients g = usd::zeros_like(student);
  for (auto& lg : g.layers) {
    for (auto& v : lg.dw.data) v = 1.0;
    for (auto& v : lg.db) v = 1.0;
  }
  ModelParams before = student;
  usd::SgdState sgd = usd::make_sgd_state(student);
  usd::sgd_step(student, g, 0.1, 0.9, 0.0, sgd);
  const usd::Layer& cls = student.classifier();
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < cls.w.cols; ++j)
      CHECK(cls.w(k, j) == before.classifier().w(k, j));  // frozen rows
  CHECK(cls.w(3, 0) != before.classifier().w(3, 0));  // unknown row moved
  CHECK(student.layers[0].w(0, 0) != before.layers[0].w(0, 0));
}

TEST_CASE("sgd_step accumulates momentum") {
  ModelParams m = tiny_model(2);
  usd::Gradients g = usd::zeros_like(m);
  g.layers[0].dw(0, 0) = 1.0;
  usd::SgdState sgd = usd::make_sgd_state(m);
  const double w0 = m.layers[0].w(0, 0);
  usd::sgd_step(m, g, 0.1, 0.9, 0.0, sgd);
  const double d1 = w0 - m.layers[0].w(0, 0);
  CHECK(d1 == doctest::Approx(0.1));
  usd::sgd_step(m, g, 0.1, 0.9, 0.0, sgd);
  const double d2 = (w0 - m.layers[0].w(0, 0)) - d1;
  CHECK(d2 == doctest::Approx(0.1 * 1.9));  // v = 0.9*1 + 1
}

TEST_CASE("sgd_step rejects non-finite gradients") {
  ModelParams m = tiny_model(2);
  usd::Gradients g = usd::zeros_like(m);
  g.layers[1].dw(0, 0) = std::numeric_limits<double>::quiet_NaN();
  usd::SgdState sgd = usd::make_sgd_state(m);
  CHECK_THROWS_AS(usd::sgd_step(m, g, 0.1, 0.9, 0.0, sgd), usd::NumericError);
}

TEST_CASE("ema_update is the convex combination") {
  ModelParams a = tiny_model(1);
  ModelParams b = tiny_model(2);
  ModelParams t = a;
  usd::ema_update(t, b, 0.75);
  const double expect = 0.75 * a.layers[0].w(0, 0) + 0.25 * b.layers[0].w(0, 0);
  CHECK(t.layers[0].w(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  // fixed point: teacher == student stays put
  ModelParams fp = a;
  usd::ema_update(fp, a, 0.9);
  for (std::size_t li = 0; li < fp.layers.size(); ++li)
    for (std::size_t i = 0; i < fp.layers[li].w.data.size(); ++i)
      CHECK(fp.layers[li].w.data[i] ==
            doctest::Approx(a.layers[li].w.data[i]).epsilon(1e-14));
}

TEST_CASE("ema momentum schedule caps at m_max") {
  CHECK(usd::ema_momentum_schedule(1, 0.9995) == doctest::Approx(0.5));
  CHECK(usd::ema_momentum_schedule(3, 0.9995) == doctest::Approx(0.75));
  CHECK(usd::ema_momentum_schedule(100000, 0.9995) == doctest::Approx(0.9995));
}
