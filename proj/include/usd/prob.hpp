#pragma once

#include <span>
#include <vector>

namespace usd {

inline constexpr double kLogEps = 1e-12;  // clamp before every log

// A normalized discrete distribution over >= 2 classes.
struct ProbVector {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t k) const { return probs[k]; }

  bool is_valid(double tol = 1e-9) const;
};

ProbVector one_hot(std::size_t index, std::size_t size);

// Numerically stable softmax (max-shift). Throws std::invalid_argument on
// non-finite input or length < 2.
ProbVector softmax(std::span<const double> logits);

// sum p log(p/q) with q clamped below by kLogEps and 0 log 0 = 0.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// -sum p log p, natural log.
double entropy(const ProbVector& p);

}  // namespace usd
