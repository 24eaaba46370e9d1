#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usd/matrix.hpp"
#include "usd/rng.hpp"

namespace usd {

struct LabeledSet {
  Matrix features;          // [n x d]
  std::vector<int> labels;  // in [0, class_count)
  int class_count = 0;
};

// Target-domain view. Hidden labels (known class id, or class_count for the
// catch-all unknown) exist for evaluation only; the adaptation loop never
// reads them.
struct UnlabeledSet {
  Matrix features;
  std::optional<std::vector<int>> hidden_labels;
};

struct SourceSpec {
  std::size_t dim = 2;
  std::size_t class_count = 4;
  std::size_t sample_count = 800;
  double radius = 6.0;  // class means sit on a circle of this radius
  double sigma = 0.25;  // isotropic cluster std
};

struct ShiftSpec {
  double rotation_deg = 25.0;
  std::vector<double> translation = {0.5, 0.5};
  double scale = 1.0;
  double noise_scale = 1.5;  // multiplies the source sigma
  std::size_t unknown_cluster_count = 2;
  double unknown_fraction = 0.25;
  std::size_t sample_count = 800;
  // Minimum distance from an unknown cluster mean to every shifted known
  // mean, in units of the target-noise std.
  double unknown_separation_sigmas = 4.0;
};

struct AugmentPolicy {
  double gaussian_sigma = 0.0;
  double dropout_prob = 0.0;  // compensated by 1/(1-p)
  double scale_jitter = 0.0;
};

// Presets scaled by the feature std of the set being augmented.
struct AugmentPresets {
  double weak_sigma_scale = 0.05;
  double strong_sigma_scale = 0.2;
  double strong_dropout = 0.1;
  double strong_scale_jitter = 0.1;

  AugmentPolicy weak(double feature_std) const {
    return {weak_sigma_scale * feature_std, 0.0, 0.0};
  }
  AugmentPolicy strong(double feature_std) const {
    return {strong_sigma_scale * feature_std, strong_dropout, strong_scale_jitter};
  }
};

LabeledSet generate_source(const SourceSpec& spec, Rng rng);

// Known clusters get rotated/translated/scaled with inflated noise; unknown
// clusters are placed at enforced separation from the shifted known means.
// Hidden labels record the known class or class_count for unknowns.
UnlabeledSet generate_target(const SourceSpec& source_spec, const ShiftSpec& shift,
                             Rng rng);

std::vector<double> augment(std::span<const double> x, const AugmentPolicy& policy,
                            Rng& rng);

// Scalar feature std: sqrt of the mean per-dimension variance.
double feature_std(const Matrix& features);

// UTF-8 delimited text: '#' comment lines, then a header row
// f_0,...,f_{d-1}[,label], then one row per sample.
void save_labeled(const std::string& path, const LabeledSet& set);
void save_unlabeled(const std::string& path, const UnlabeledSet& set);
LabeledSet load_labeled(const std::string& path);
UnlabeledSet load_unlabeled(const std::string& path);

}  // namespace usd
