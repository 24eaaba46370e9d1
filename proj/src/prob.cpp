#include "usd/prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace usd {

bool ProbVector::is_valid(double tol) const {
  if (probs.size() < 2) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

ProbVector one_hot(std::size_t index, std::size_t size) {
  ProbVector v;
  v.probs.assign(size, 0.0);
  v.probs.at(index) = 1.0;
  return v;
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw std::invalid_argument("softmax: need length >= 2");
  double mx = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
    mx = std::max(mx, x);
  }
  ProbVector out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.probs[k] = std::exp(logits[k] - mx);
    sum += out.probs[k];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;  // 0 log 0 = 0
    acc += p[k] * std::log(p[k] / std::max(q[k], kLogEps));
  }
  return acc;
}

double entropy(const ProbVector& p) {
  double acc = 0.0;
  for (double x : p.probs) {
    if (x <= 0.0) continue;
    acc -= x * std::log(x);
  }
  return acc;
}

}  // namespace usd
