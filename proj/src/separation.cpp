#include "usd/separation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace usd {

std::vector<ProbVector> known_class_probs(const ModelParams& model,
                                          const Matrix& features,
                                          std::size_t known_classes) {
  auto [logits, trace] = forward(model, features);
  if (logits.cols < known_classes)
    throw std::invalid_argument("known_class_probs: model has fewer outputs than C_s");
  std::vector<ProbVector> out;
  out.reserve(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i)
    out.push_back(softmax(logits.row(i).subspan(0, known_classes)));
  return out;
}

std::pair<std::vector<int>, std::vector<ProbVector>> ensemble_pseudolabels(
    const ModelParams& student, const UnlabeledSet& target,
    const SeparationConfig& cfg, Rng rng) {
  const std::size_t n = target.features.rows;
  const std::size_t d = target.features.cols;
  const std::size_t views = cfg.weak_views + cfg.strong_views;
  if (views < 1) throw std::invalid_argument("ensemble_pseudolabels: need M >= 1");

  std::vector<std::vector<double>> sums(n, std::vector<double>(cfg.known_classes, 0.0));
  Rng view_rng = rng.stream("views");
  for (std::size_t v = 0; v < views; ++v) {
    const AugmentPolicy& policy =
        (v < cfg.weak_views) ? cfg.weak_policy : cfg.strong_policy;
    Matrix aug(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = augment(target.features.row(i), policy, view_rng);
      std::copy(row.begin(), row.end(), aug.row(i).begin());
    }
    const auto probs = known_class_probs(student, aug, cfg.known_classes);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < cfg.known_classes; ++k)
        sums[i][k] += probs[i][k];
  }

  std::vector<int> labels(n);
  std::vector<ProbVector> mean_probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ProbVector p;
    p.probs.resize(cfg.known_classes);
    for (std::size_t k = 0; k < cfg.known_classes; ++k)
      p.probs[k] = sums[i][k] / static_cast<double>(views);
    labels[i] = static_cast<int>(
        std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
    mean_probs[i] = std::move(p);
  }
  return {std::move(labels), std::move(mean_probs)};
}

double compute_jsd(const ProbVector& pseudo_onehot, const ProbVector& teacher_probs) {
  if (pseudo_onehot.size() != teacher_probs.size())
    throw std::invalid_argument("compute_jsd: length mismatch");
  ProbVector m;
  m.probs.resize(pseudo_onehot.size());
  for (std::size_t k = 0; k < m.size(); ++k)
    m.probs[k] = 0.5 * (pseudo_onehot[k] + teacher_probs[k]);
  return 0.5 * kl_divergence(pseudo_onehot, m) + 0.5 * kl_divergence(teacher_probs, m);
}

namespace {

double log_normal(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * 3.14159265358979323846 * var);
}

double percentile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

GmmFit fit_gmm_1d(const std::vector<double>& values, double tol, int max_iter,
                  const GmmFit* warm_start) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("fit_gmm_1d: need at least 4 values");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("fit_gmm_1d: non-finite value");

  GmmFit fit;
  if (warm_start != nullptr && !warm_start->degenerate) {
    fit = *warm_start;
    fit.iterations = 0;
    fit.converged = false;
    fit.degenerate = false;
  } else {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = std::max(var / static_cast<double>(n), kGmmVarFloor);
    fit.mu_low = percentile(sorted, 0.25);
    fit.mu_high = percentile(sorted, 0.75);
    fit.var_low = var;
    fit.var_high = var;
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> r_low(n);
  for (int it = 0; it < max_iter; ++it) {
    // E-step with fixed 0.5/0.5 priors, in log space.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double la = log_normal(values[i], fit.mu_low, fit.var_low);
      const double lb = log_normal(values[i], fit.mu_high, fit.var_high);
      const double mx = std::max(la, lb);
      const double za = std::exp(la - mx), zb = std::exp(lb - mx);
      r_low[i] = za / (za + zb);
      ll += mx + std::log(0.5 * (za + zb));
    }
    fit.log_likelihood = ll;
    fit.iterations = it + 1;
    if (ll - prev_ll < tol && it > 0) {
      fit.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step: means and variances only.
    double s_low = 0.0, s_high = 0.0, m_low = 0.0, m_high = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s_low += r_low[i];
      s_high += 1.0 - r_low[i];
      m_low += r_low[i] * values[i];
      m_high += (1.0 - r_low[i]) * values[i];
    }
    if (s_low > 0.0) fit.mu_low = m_low / s_low;
    if (s_high > 0.0) fit.mu_high = m_high / s_high;
    double v_low = 0.0, v_high = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dl = values[i] - fit.mu_low;
      const double dh = values[i] - fit.mu_high;
      v_low += r_low[i] * dl * dl;
      v_high += (1.0 - r_low[i]) * dh * dh;
    }
    fit.var_low = std::max(s_low > 0.0 ? v_low / s_low : kGmmVarFloor, kGmmVarFloor);
    fit.var_high =
        std::max(s_high > 0.0 ? v_high / s_high : kGmmVarFloor, kGmmVarFloor);
  }

  if (fit.mu_low > fit.mu_high) {
    std::swap(fit.mu_low, fit.mu_high);
    std::swap(fit.var_low, fit.var_high);
  }
  fit.degenerate = (fit.mu_high - fit.mu_low) <= 1e-9 &&
                   fit.var_low <= kGmmVarFloor * (1.0 + 1e-9) &&
                   fit.var_high <= kGmmVarFloor * (1.0 + 1e-9);
  return fit;
}

double posterior_known(double value, const GmmFit& fit) {
  if (fit.degenerate) return 1.0;
  const double la = log_normal(value, fit.mu_low, fit.var_low);
  const double lb = log_normal(value, fit.mu_high, fit.var_high);
  return 1.0 / (1.0 + std::exp(lb - la));
}

std::vector<double> entropy_criterion(const std::vector<ProbVector>& probs,
                                      std::size_t known_classes) {
  const double log_cs = std::log(static_cast<double>(known_classes));
  std::vector<double> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(entropy(p) / log_cs);
  return out;
}

std::vector<double> ce_criterion(const std::vector<int>& pseudo,
                                 const std::vector<ProbVector>& probs) {
  std::vector<double> out;
  out.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.push_back(-std::log(
        std::max(probs[i][static_cast<std::size_t>(pseudo[i])], kLogEps)));
  return out;
}

SeparationResult separate(const UnlabeledSet& target, const ModelParams& student,
                          const ModelParams& separator, const SeparationConfig& cfg,
                          Rng rng) {
  if (!(cfg.delta_t >= 0.0 && cfg.delta_t < 1.0))
    throw std::invalid_argument("separate: delta_t must be in [0,1)");
  const std::size_t n = target.features.rows;
  const int unknown_class = static_cast<int>(cfg.known_classes);

  std::vector<int> raw_labels;
  std::vector<ProbVector> mean_probs;
  if (cfg.scheme == PseudolabelScheme::kEnsemble) {
    std::tie(raw_labels, mean_probs) =
        ensemble_pseudolabels(student, target, cfg, rng);
  } else {
    mean_probs = known_class_probs(student, target.features, cfg.known_classes);
    raw_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      raw_labels[i] = static_cast<int>(
          std::max_element(mean_probs[i].probs.begin(), mean_probs[i].probs.end()) -
          mean_probs[i].probs.begin());
  }

  // Separator scores the unaugmented samples.
  const auto sep_probs =
      known_class_probs(separator, target.features, cfg.known_classes);

  SeparationResult res;
  res.criterion.resize(n);
  switch (cfg.criterion) {
    case SeparationCriterion::kJsd:
      for (std::size_t i = 0; i < n; ++i)
        res.criterion[i] =
            compute_jsd(one_hot(static_cast<std::size_t>(raw_labels[i]),
                                cfg.known_classes),
                        sep_probs[i]);
      break;
    case SeparationCriterion::kEntropy:
      res.criterion = entropy_criterion(sep_probs, cfg.known_classes);
      break;
    case SeparationCriterion::kCe:
      res.criterion = ce_criterion(raw_labels, sep_probs);
      break;
  }

  res.fit = fit_gmm_1d(res.criterion, cfg.gmm_tol, cfg.gmm_max_iter, cfg.warm_start);
  res.degenerate = res.fit.degenerate;

  res.w_known.resize(n);
  res.pseudo.resize(n);
  res.instance_weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.w_known[i] = posterior_known(res.criterion[i], res.fit);
    const bool known = res.degenerate || res.w_known[i] >= cfg.delta_t;
    if (known) {
      res.pseudo[i] = {raw_labels[i], false};
      res.instance_weight[i] = res.w_known[i];
      res.known_indices.push_back(i);
    } else {
      res.pseudo[i] = {unknown_class, true};
      res.instance_weight[i] = 1.0 - res.w_known[i];
      res.unknown_indices.push_back(i);
    }
  }
  return res;
}

}  // namespace usd
