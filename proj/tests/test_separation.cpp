#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "usd/data.hpp"
#include "usd/model.hpp"
#include "usd/prob.hpp"
#include "usd/rng.hpp"
#include "usd/separation.hpp"

using usd::ProbVector;
using usd::Rng;

namespace {

std::vector<double> mixture_draws(std::size_t n, Rng rng) {
  std::vector<double> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = (i % 2 == 0) ? 0.2 : 0.6;
    v.push_back(mu + 0.05 * rng.normal());
  }
  return v;
}

struct Scenario {
  usd::ModelParams student;
  usd::ModelParams teacher;
  usd::UnlabeledSet target;
  usd::SeparationConfig cfg;
};

Scenario make_scenario(std::uint64_t seed) {
  Scenario s;
  usd::ModelParams source = usd::make_mlp(2, 8, 4, 3, Rng(seed));
  auto pair = usd::init_target_models(source);
  s.student = pair.first;
  s.teacher = pair.second;
  usd::SourceSpec spec;
  spec.class_count = 3;
  spec.sample_count = 60;
  usd::ShiftSpec shift;
  shift.sample_count = 60;
  s.target = usd::generate_target(spec, shift, Rng(seed + 100));
  s.cfg.known_classes = 3;
  s.cfg.delta_t = 0.8;
  const double fs = usd::feature_std(s.target.features);
  usd::AugmentPresets presets;
  s.cfg.weak_policy = presets.weak(fs);
  s.cfg.strong_policy = presets.strong(fs);
  return s;
}

}  // namespace

TEST_CASE("jsd oracle, symmetry, bounds") {
  ProbVector a = usd::one_hot(0, 3);
  ProbVector b{{0.5, 0.3, 0.2}};
  const double v = usd::compute_jsd(a, b);
  CHECK(v == doctest::Approx(0.21576155433883570).epsilon(1e-14));
  CHECK(usd::compute_jsd(b, a) == doctest::Approx(v).epsilon(1e-12));
  CHECK(v >= 0.0);
  CHECK(v <= std::log(2.0) + 1e-12);
  CHECK(usd::compute_jsd(b, b) == doctest::Approx(0.0));
  // maximal for disjoint supports
  CHECK(usd::compute_jsd(usd::one_hot(0, 2), usd::one_hot(1, 2)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("gmm recovers a well-separated mixture") {
  std::vector<double> v = mixture_draws(2000, Rng(1));
  usd::GmmFit fit = usd::fit_gmm_1d(v);
  CHECK(fit.converged);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.mu_low == doctest::Approx(0.2).epsilon(0.1));
  CHECK(fit.mu_high == doctest::Approx(0.6).epsilon(0.1));
  CHECK(fit.mu_low < fit.mu_high);
  CHECK(fit.var_low == doctest::Approx(0.0025).epsilon(0.3));
  CHECK(fit.var_high == doctest::Approx(0.0025).epsilon(0.3));
}

TEST_CASE("gmm flags a degenerate single-point fit") {
  std::vector<double> v(100, 0.4);
  usd::GmmFit fit = usd::fit_gmm_1d(v);
  CHECK(fit.degenerate);
  CHECK(usd::posterior_known(0.4, fit) == 1.0);
}

TEST_CASE("posterior oracle and monotonicity") {
  usd::GmmFit fit;
  fit.mu_low = 0.2;
  fit.mu_high = 0.6;
  fit.var_low = 0.0025;
  fit.var_high = 0.0025;
  CHECK(usd::posterior_known(0.3, fit) ==
        doctest::Approx(0.99999988746483794).epsilon(1e-12));
  CHECK(usd::posterior_known(0.4, fit) == doctest::Approx(0.5).epsilon(1e-9));
  // decreasing in the criterion value
  double prev = 1.0;
  for (double x = 0.0; x <= 0.8; x += 0.05) {
    const double p = usd::posterior_known(x, fit);
    CHECK(p <= prev + 1e-12);
    prev = p;
  }
}

TEST_CASE("entropy criterion normalizes by log C_s") {
  std::vector<ProbVector> probs = {ProbVector{{0.5, 0.25, 0.25}}};
  auto c = usd::entropy_criterion(probs, 3);
  REQUIRE(c.size() == 1);
  CHECK(c[0] == doctest::Approx(0.94639463035718616).epsilon(1e-14));
  std::vector<ProbVector> sharp = {usd::one_hot(1, 3)};
  CHECK(usd::entropy_criterion(sharp, 3)[0] == doctest::Approx(0.0));
}

TEST_CASE("ce criterion is the pseudolabel negative log-probability") {
  std::vector<ProbVector> probs = {ProbVector{{0.7, 0.3}}};
  std::vector<int> pseudo = {0};
  CHECK(usd::ce_criterion(pseudo, probs)[0] ==
        doctest::Approx(-std::log(0.7)).epsilon(1e-14));
}

TEST_CASE("known_class_probs ignores the unknown logit") {
  usd::ModelParams source = usd::make_mlp(2, 8, 4, 3, Rng(3));
  auto [student, teacher] = usd::init_target_models(source);
  (void)teacher;
  usd::Matrix x(4, 2);
  Rng rng(4);
  for (auto& v : x.data) v = rng.normal();
  auto probs = usd::known_class_probs(student, x, 3);
  REQUIRE(probs.size() == 4);
  for (const auto& p : probs) {
    REQUIRE(p.size() == 3);
    CHECK(p.is_valid());
  }
  // must match the source model's own softmax (known rows are copies)
  auto src_probs = usd::known_class_probs(source, x, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(probs[i][k] == doctest::Approx(src_probs[i][k]).epsilon(1e-12));
}

TEST_CASE("ensemble pseudolabels are deterministic and in range") {
  Scenario s = make_scenario(10);
  auto [labels1, probs1] =
      usd::ensemble_pseudolabels(s.student, s.target, s.cfg, Rng(77));
  auto [labels2, probs2] =
      usd::ensemble_pseudolabels(s.student, s.target, s.cfg, Rng(77));
  CHECK(labels1 == labels2);
  REQUIRE(labels1.size() == s.target.features.rows);
  for (std::size_t i = 0; i < labels1.size(); ++i) {
    CHECK(labels1[i] >= 0);
    CHECK(labels1[i] < 3);
    CHECK(probs1[i].is_valid());
    CHECK(probs1[i].size() == 3);
  }
}

TEST_CASE("separate partitions the target set") {
  Scenario s = make_scenario(20);
  usd::SeparationResult res =
      usd::separate(s.target, s.student, s.teacher, s.cfg, Rng(5));
  const std::size_t n = s.target.features.rows;
  REQUIRE(res.criterion.size() == n);
  REQUIRE(res.pseudo.size() == n);
  REQUIRE(res.instance_weight.size() == n);
  CHECK(res.known_indices.size() + res.unknown_indices.size() == n);
  std::set<std::size_t> seen;
  for (auto i : res.known_indices) seen.insert(i);
  for (auto i : res.unknown_indices) seen.insert(i);
  CHECK(seen.size() == n);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(res.w_known[i] >= 0.0);
    CHECK(res.w_known[i] <= 1.0);
    if (res.pseudo[i].is_unknown) {
      CHECK(res.pseudo[i].class_id == 3);  // C_s labels the catch-all class
      CHECK(res.instance_weight[i] == doctest::Approx(1.0 - res.w_known[i]));
    } else {
      CHECK(res.pseudo[i].class_id < 3);
      CHECK(res.instance_weight[i] == doctest::Approx(res.w_known[i]));
    }
  }
}

TEST_CASE("raising delta_t only grows the unknown set") {
  Scenario s = make_scenario(30);
  std::vector<double> thresholds = {0.2, 0.5, 0.8, 0.95};
  std::vector<std::set<std::size_t>> unknowns;
  for (double d : thresholds) {
    usd::SeparationConfig cfg = s.cfg;
    cfg.delta_t = d;
    usd::SeparationResult res =
        usd::separate(s.target, s.student, s.teacher, cfg, Rng(9));
    unknowns.emplace_back(res.unknown_indices.begin(), res.unknown_indices.end());
  }
  for (std::size_t i = 1; i < unknowns.size(); ++i)
    CHECK(std::includes(unknowns[i].begin(), unknowns[i].end(),
                        unknowns[i - 1].begin(), unknowns[i - 1].end()));
}

TEST_CASE("delta_t of zero keeps every sample known") {
  Scenario s = make_scenario(40);
  usd::SeparationConfig cfg = s.cfg;
  cfg.delta_t = 0.0;
  usd::SeparationResult res =
      usd::separate(s.target, s.student, s.teacher, cfg, Rng(2));
  CHECK(res.unknown_indices.empty());
  CHECK(res.known_indices.size() == s.target.features.rows);
}
