#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "usd/data.hpp"
#include "usd/errors.hpp"
#include "usd/rng.hpp"

using usd::Rng;

namespace {

std::string tmp_path(const char* name) {
  return std::string("/tmp/usd_test_") + name;
}

}  // namespace

TEST_CASE("generate_source produces balanced labeled clusters on a ring") {
  usd::SourceSpec spec;
  usd::LabeledSet set = usd::generate_source(spec, Rng(1));
  REQUIRE(set.features.rows == spec.sample_count);
  REQUIRE(set.features.cols == spec.dim);
  REQUIRE(set.labels.size() == spec.sample_count);
  CHECK(set.class_count == 4);

  std::vector<std::size_t> counts(4, 0);
  std::vector<std::vector<double>> mean(4, std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    REQUIRE(set.labels[i] >= 0);
    REQUIRE(set.labels[i] < 4);
    ++counts[set.labels[i]];
    mean[set.labels[i]][0] += set.features(i, 0);
    mean[set.labels[i]][1] += set.features(i, 1);
  }
  for (int c = 0; c < 4; ++c) {
    CHECK(counts[c] == 200);
    const double mx = mean[c][0] / counts[c];
    const double my = mean[c][1] / counts[c];
    const double r = std::sqrt(mx * mx + my * my);
    // empirical class mean sits near the configured ring radius
    CHECK(r == doctest::Approx(spec.radius).epsilon(0.05));
  }
}

TEST_CASE("generate_target splits known and unknown per the fraction") {
  usd::SourceSpec spec;
  usd::ShiftSpec shift;
  usd::UnlabeledSet tgt = usd::generate_target(spec, shift, Rng(1));
  REQUIRE(tgt.features.rows == shift.sample_count);
  REQUIRE(tgt.hidden_labels.has_value());
  std::size_t unknown = 0;
  for (int l : tgt.hidden_labels.value()) {
    REQUIRE(l >= 0);
    REQUIRE(l <= 4);  // 4 = catch-all unknown
    if (l == 4) ++unknown;
  }
  CHECK(unknown == 200);  // 0.25 * 800
}

TEST_CASE("known target clusters follow the configured shift") {
  usd::SourceSpec spec;
  usd::ShiftSpec shift;
  shift.unknown_fraction = 0.0;
  shift.unknown_cluster_count = 0;
  shift.noise_scale = 0.05;  // near-noiseless so means are sharp
  usd::UnlabeledSet tgt = usd::generate_target(spec, shift, Rng(2));
  // every sample should land near some rotated+translated source mean
  const double rot = shift.rotation_deg * std::acos(-1.0) / 180.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const double x = tgt.features(i, 0), y = tgt.features(i, 1);
    double best = 1e9;
    for (int c = 0; c < 4; ++c) {
      const double ang = 2.0 * std::acos(-1.0) * c / 4.0;
      const double sx = spec.radius * std::cos(ang);
      const double sy = spec.radius * std::sin(ang);
      const double tx = sx * std::cos(rot) - sy * std::sin(rot) + shift.translation[0];
      const double ty = sx * std::sin(rot) + sy * std::cos(rot) + shift.translation[1];
      best = std::min(best, std::hypot(x - tx, y - ty));
    }
    CHECK(best < 6.0 * shift.noise_scale * spec.sigma);
  }
}

TEST_CASE("unknown cluster means keep distance from shifted known means") {
  usd::SourceSpec spec;
  usd::ShiftSpec shift;
  usd::UnlabeledSet tgt = usd::generate_target(spec, shift, Rng(3));
  const double rot = shift.rotation_deg * std::acos(-1.0) / 180.0;
  const double sigma_t = shift.noise_scale * spec.sigma;
  const auto& labels = tgt.hidden_labels.value();
  // unknown rows come last, one block of 100 per cluster
  std::size_t first_unknown = 0;
  while (first_unknown < labels.size() && labels[first_unknown] != 4)
    ++first_unknown;
  REQUIRE(labels.size() - first_unknown == 200);
  for (std::size_t u = 0; u < 2; ++u) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      mx += tgt.features(first_unknown + u * 100 + i, 0);
      my += tgt.features(first_unknown + u * 100 + i, 1);
    }
    mx /= 100.0;
    my /= 100.0;
    // the recovered mean (sampling error ~sigma_t/10) must honor the
    // 4 sigma_t separation from every shifted known mean
    for (int c = 0; c < 4; ++c) {
      const double ang = 2.0 * std::acos(-1.0) * c / 4.0;
      const double sx = spec.radius * std::cos(ang);
      const double sy = spec.radius * std::sin(ang);
      const double tx = sx * std::cos(rot) - sy * std::sin(rot) + shift.translation[0];
      const double ty = sx * std::sin(rot) + sy * std::cos(rot) + shift.translation[1];
      CHECK(std::hypot(mx - tx, my - ty) > 3.5 * sigma_t);
    }
  }
}

TEST_CASE("augment with zero policy is the identity") {
  std::vector<double> x = {1.0, -2.0, 0.5};
  Rng rng(1);
  usd::AugmentPolicy none;
  CHECK(usd::augment(x, none, rng) == x);
}

TEST_CASE("dropout compensation preserves the expectation") {
  std::vector<double> x = {2.0, -3.0};
  usd::AugmentPolicy policy;
  policy.dropout_prob = 0.5;
  Rng rng(7);
  const int n = 50000;
  double sum0 = 0.0, sum1 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto a = usd::augment(x, policy, rng);
    sum0 += a[0];
    sum1 += a[1];
  }
  CHECK(sum0 / n == doctest::Approx(2.0).epsilon(0.03));
  CHECK(sum1 / n == doctest::Approx(-3.0).epsilon(0.03));
}

TEST_CASE("gaussian augmentation has the configured spread") {
  std::vector<double> x = {0.0};
  usd::AugmentPolicy policy;
  policy.gaussian_sigma = 0.3;
  Rng rng(11);
  const int n = 20000;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto a = usd::augment(x, policy, rng);
    sq += a[0] * a[0];
  }
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.3).epsilon(0.03));
}

TEST_CASE("feature_std oracle") {
  usd::Matrix m(2, 2);
  m(0, 0) = 0.0; m(0, 1) = 2.0;
  m(1, 0) = 2.0; m(1, 1) = 4.0;
  // each column has variance 1 -> pooled std 1
  CHECK(usd::feature_std(m) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("labeled csv round trip is exact") {
  usd::SourceSpec spec;
  spec.sample_count = 40;
  usd::LabeledSet set = usd::generate_source(spec, Rng(5));
  const std::string path = tmp_path("labeled.csv");
  usd::save_labeled(path, set);
  usd::LabeledSet back = usd::load_labeled(path);
  CHECK(back.features.data == set.features.data);
  CHECK(back.labels == set.labels);
  CHECK(back.class_count == set.class_count);
  std::remove(path.c_str());
}

TEST_CASE("unlabeled csv round trip keeps hidden labels") {
  usd::SourceSpec spec;
  usd::ShiftSpec shift;
  shift.sample_count = 40;
  usd::UnlabeledSet set = usd::generate_target(spec, shift, Rng(5));
  const std::string path = tmp_path("unlabeled.csv");
  usd::save_unlabeled(path, set);
  usd::UnlabeledSet back = usd::load_unlabeled(path);
  CHECK(back.features.data == set.features.data);
  REQUIRE(back.hidden_labels.has_value());
  CHECK(back.hidden_labels.value() == set.hidden_labels.value());
  std::remove(path.c_str());
}

TEST_CASE("loading a missing dataset reports a config error") {
  CHECK_THROWS_AS(usd::load_labeled("/nonexistent/usd.csv"), usd::ConfigError);
}
