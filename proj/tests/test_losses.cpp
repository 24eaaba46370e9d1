#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "usd/losses.hpp"
#include "usd/prob.hpp"

using usd::Matrix;
using usd::ProbVector;

TEST_CASE("curriculum first call records the baseline only") {
  usd::CurriculumState st;
  usd::curriculum_update(st, 2.0);
  CHECK(st.gamma == doctest::Approx(1.0));
  CHECK(st.prev_known_ce == doctest::Approx(2.0));
}

TEST_CASE("curriculum oracle at unit loss ratio") {
  usd::CurriculumState st;
  usd::curriculum_update(st, 2.0);
  usd::curriculum_update(st, 2.0);  // ratio 1 -> gamma *= 1 - 0.01 e^{-1}
  CHECK(st.gamma == doctest::Approx(0.99632120558828558).epsilon(1e-14));
}

TEST_CASE("curriculum trace is nonincreasing and floored at 0.5") {
  usd::CurriculumState st;
  usd::curriculum_update(st, 1.0);
  double prev = st.gamma;
  for (int i = 0; i < 2000; ++i) {
    // near-zero ratio maximizes the decay factor
    usd::curriculum_update(st, 1e-12);
    CHECK(st.gamma <= prev + 1e-15);
    CHECK(st.gamma >= 0.5);
    CHECK(st.gamma <= 1.0);
    prev = st.gamma;
  }
  CHECK(st.gamma == doctest::Approx(0.5));
}

TEST_CASE("curriculum_ce mixes the two terms") {
  CHECK(usd::curriculum_ce(2.0, 4.0, 0.75) == doctest::Approx(2.5));
  CHECK(usd::curriculum_ce(2.0, 4.0, 0.5) == doctest::Approx(3.0));
}

TEST_CASE("assemble_total composes the objective") {
  usd::LossBreakdown p;
  p.ce_known = 1.0;
  p.ce_unknown = 2.0;
  p.gamma_used = 0.75;
  p.im_ent = 0.3;
  p.im_div = 0.2;
  p.triplet = 4.0;
  p.zeta1 = 0.01;
  p.consistency = 2.0;
  p.zeta2 = 0.5;
  const double total = usd::assemble_total(p);
  CHECK(total == doctest::Approx(0.75 + 0.5 + 0.5 + 0.04 + 1.0));
  CHECK(p.total == doctest::Approx(total));
}

TEST_CASE("label-smoothed ce matches the closed form") {
  Matrix logits(1, 3);
  logits(0, 0) = 1.0;
  logits(0, 1) = 2.0;
  logits(0, 2) = 3.0;
  std::vector<int> labels = {2};
  std::vector<double> weights = {1.0};
  usd::LossValue v = usd::ce_label_smoothed(logits, labels, weights, 0.1, 3);
  ProbVector p = usd::softmax(logits.row(0));
  double expect = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double q = (k == 2 ? 0.9 : 0.0) + 0.1 / 3.0;
    expect -= q * std::log(p[k]);
  }
  CHECK(v.loss == doctest::Approx(expect).epsilon(1e-12));
  REQUIRE(v.d_logits.rows == 1);
  REQUIRE(v.d_logits.cols == 3);
}

TEST_CASE("label-smoothed ce scales with the instance weight") {
  Matrix logits(2, 3);
  for (std::size_t k = 0; k < 6; ++k) logits.data[k] = 0.1 * (k + 1);
  std::vector<int> labels = {0, 1};
  std::vector<double> w1 = {1.0, 1.0};
  std::vector<double> w2 = {2.0, 2.0};
  usd::LossValue a = usd::ce_label_smoothed(logits, labels, w1, 0.1, 3);
  usd::LossValue b = usd::ce_label_smoothed(logits, labels, w2, 0.1, 3);
  CHECK(b.loss == doctest::Approx(2.0 * a.loss).epsilon(1e-12));
}

TEST_CASE("im loss on uniform logits: max entropy, zero diversity") {
  Matrix logits(3, 4, 0.0);
  usd::ImLossValue v = usd::im_loss(logits);
  CHECK(v.entropy_term == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(v.diversity_term == doctest::Approx(0.0));
  CHECK_FALSE(v.diversity_skipped);
}

TEST_CASE("im loss skips diversity on a batch of one") {
  Matrix logits(1, 3);
  logits(0, 0) = 1.0;
  logits(0, 1) = 0.0;
  logits(0, 2) = -1.0;
  usd::ImLossValue v = usd::im_loss(logits);
  CHECK(v.diversity_skipped);
  CHECK(v.diversity_term == doctest::Approx(0.0));
  CHECK(v.entropy_term > 0.0);
}

TEST_CASE("consistency loss is zero when student matches teacher") {
  Matrix logits(2, 3);
  for (std::size_t k = 0; k < 6; ++k) logits.data[k] = 0.3 * k;
  std::vector<ProbVector> teacher;
  for (std::size_t i = 0; i < 2; ++i) teacher.push_back(usd::softmax(logits.row(i)));
  usd::LossValue v = usd::consistency_loss(logits, teacher);
  CHECK(v.loss == doctest::Approx(0.0).epsilon(1e-12));

  Matrix other = logits;
  other(0, 0) += 1.0;
  usd::LossValue w = usd::consistency_loss(other, teacher);
  CHECK(w.loss > 0.0);
}

TEST_CASE("cosine distance endpoints") {
  std::vector<double> a = {1.0, 0.0};
  std::vector<double> b = {0.0, 2.0};
  std::vector<double> c = {-3.0, 0.0};
  CHECK(usd::cosine_distance(a, a) == doctest::Approx(0.0));
  CHECK(usd::cosine_distance(a, b) == doctest::Approx(1.0));
  CHECK(usd::cosine_distance(a, c) == doctest::Approx(2.0));
}

TEST_CASE("triplet loss hinges at zero margin") {
  std::vector<double> anchor = {1.0, 0.0};
  std::vector<double> near = {0.9, 0.1};
  std::vector<double> far = {-1.0, 0.5};
  // positive closer than negative -> inactive hinge, zero subgradient
  usd::TripletValue inactive = usd::triplet_loss(anchor, near, far);
  CHECK(inactive.loss == doctest::Approx(0.0));
  for (double g : inactive.d_positive) CHECK(g == 0.0);
  for (double g : inactive.d_negative) CHECK(g == 0.0);
  // swapped roles -> active hinge with the distance gap as the loss
  usd::TripletValue active = usd::triplet_loss(anchor, far, near);
  const double expect =
      usd::cosine_distance(anchor, far) - usd::cosine_distance(anchor, near);
  CHECK(active.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(active.loss > 0.0);
}

TEST_CASE("zeta2 ramp follows the gaussian warmup") {
  const std::size_t total = 40;
  const double ramp = 32.0;  // ceil(0.8 * 40)
  const double zmax = 0.5;
  for (std::size_t e : {1, 7, 16, 31}) {
    const double f = 1.0 - static_cast<double>(e) / ramp;
    CHECK(usd::zeta2_schedule(e, total, zmax) ==
          doctest::Approx(zmax * std::exp(-5.0 * f * f)).epsilon(1e-12));
  }
  CHECK(usd::zeta2_schedule(32, total, zmax) == doctest::Approx(zmax));
  CHECK(usd::zeta2_schedule(40, total, zmax) == doctest::Approx(zmax));
  CHECK_THROWS_AS(usd::zeta2_schedule(0, total, zmax), std::invalid_argument);
  CHECK_THROWS_AS(usd::zeta2_schedule(41, total, zmax), std::invalid_argument);
  double prev = 0.0;
  for (std::size_t e = 1; e <= total; ++e) {
    const double z = usd::zeta2_schedule(e, total, zmax);
    CHECK(z >= prev - 1e-15);
    prev = z;
  }
}
