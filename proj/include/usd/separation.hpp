#pragma once

#include <cstddef>
#include <vector>

#include "usd/data.hpp"
#include "usd/model.hpp"
#include "usd/prob.hpp"
#include "usd/rng.hpp"

namespace usd {

struct PseudoLabel {
  int class_id = 0;
  bool is_unknown = false;
};

// Two equal-prior Gaussians fitted to a scalar criterion by EM.
struct GmmFit {
  double mu_low = 0.0;
  double mu_high = 0.0;
  double var_low = 0.0;
  double var_high = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  double log_likelihood = 0.0;
};

inline constexpr double kGmmVarFloor = 1e-6;

struct SeparationResult {
  std::vector<double> criterion;  // per-sample JSD (or entropy/CE under ablation)
  std::vector<double> w_known;    // posterior of the low-mean component
  std::vector<PseudoLabel> pseudo;
  std::vector<double> instance_weight;  // w for known, 1-w for unknown
  std::vector<std::size_t> known_indices;
  std::vector<std::size_t> unknown_indices;
  GmmFit fit;
  bool degenerate = false;  // fit collapsed; everything treated as known
};

enum class SeparationCriterion { kJsd, kEntropy, kCe };
enum class PseudolabelScheme { kEnsemble, kStudentArgmax };

struct SeparationConfig {
  std::size_t known_classes = 0;  // C_s
  double delta_t = 0.8;
  std::size_t weak_views = 1;
  std::size_t strong_views = 5;
  AugmentPolicy weak_policy;
  AugmentPolicy strong_policy;
  SeparationCriterion criterion = SeparationCriterion::kJsd;
  PseudolabelScheme scheme = PseudolabelScheme::kEnsemble;
  double gmm_tol = 1e-8;
  int gmm_max_iter = 200;
  const GmmFit* warm_start = nullptr;  // previous epoch's fit, optional
};

// Softmax over the first C_s logits for every sample; the unknown logit
// (when present) is excluded so it cannot contaminate the criterion.
std::vector<ProbVector> known_class_probs(const ModelParams& model,
                                          const Matrix& features,
                                          std::size_t known_classes);

// Averages softmax outputs over 1 weak + (M-1) strong views per sample and
// takes the argmax as the hard pseudolabel.
std::pair<std::vector<int>, std::vector<ProbVector>> ensemble_pseudolabels(
    const ModelParams& student, const UnlabeledSet& target,
    const SeparationConfig& cfg, Rng rng);

// 0.5*KL(a, m) + 0.5*KL(b, m) with m = (a+b)/2; in [0, log 2].
double compute_jsd(const ProbVector& pseudo_onehot, const ProbVector& teacher_probs);

GmmFit fit_gmm_1d(const std::vector<double>& values, double tol = 1e-8,
                  int max_iter = 200, const GmmFit* warm_start = nullptr);

// Bayes posterior of the low-mean component under equal priors, computed in
// log space. A degenerate fit returns 1.0.
double posterior_known(double value, const GmmFit& fit);

// Full per-epoch separation. `separator` is the model that scores the
// criterion (teacher under co-training, student without it).
SeparationResult separate(const UnlabeledSet& target, const ModelParams& student,
                          const ModelParams& separator, const SeparationConfig& cfg,
                          Rng rng);

// Ablation criteria.
std::vector<double> entropy_criterion(const std::vector<ProbVector>& probs,
                                      std::size_t known_classes);
std::vector<double> ce_criterion(const std::vector<int>& pseudo,
                                 const std::vector<ProbVector>& probs);

}  // namespace usd
