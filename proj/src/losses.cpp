#include "usd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace usd {

double assemble_total(LossBreakdown& parts) {
  parts.total = curriculum_ce(parts.ce_known, parts.ce_unknown, parts.gamma_used) +
                parts.im_ent + parts.im_div + parts.zeta1 * parts.triplet +
                parts.zeta2 * parts.consistency;
  return parts.total;
}

void curriculum_update(CurriculumState& state, double known_ce_now) {
  if (known_ce_now < 0.0)
    throw std::invalid_argument("curriculum_update: negative known CE");
  ++state.iteration;
  if (state.prev_known_ce < 0.0) {
    state.prev_known_ce = known_ce_now;  // baseline only
    return;
  }
  const double ratio =
      state.prev_known_ce == 0.0 ? 1.0 : known_ce_now / state.prev_known_ce;
  state.gamma = std::max(0.5, state.gamma * (1.0 - state.beta * std::exp(-ratio)));
  state.prev_known_ce = known_ce_now;
}

double curriculum_ce(double known_loss, double unknown_loss, double gamma) {
  return gamma * known_loss + (1.0 - gamma) * unknown_loss;
}

LossValue ce_label_smoothed(const Matrix& logits, std::span<const int> labels,
                            std::span<const double> weights, double alpha,
                            std::size_t classes) {
  const std::size_t n = logits.rows;
  if (labels.size() != n || weights.size() != n)
    throw std::invalid_argument("ce_label_smoothed: batch size mismatch");
  if (logits.cols != classes)
    throw std::invalid_argument("ce_label_smoothed: class count mismatch");
  LossValue out;
  out.d_logits = Matrix(n, classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes)
      throw std::invalid_argument("ce_label_smoothed: label out of range");
    const ProbVector p = softmax(logits.row(i));
    double li = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double q = (k == y ? 1.0 - alpha : 0.0) + alpha / static_cast<double>(classes);
      li -= q * std::log(std::max(p[k], kLogEps));
      out.d_logits(i, k) = weights[i] * (p[k] - q) * inv_n;
    }
    out.loss += weights[i] * li * inv_n;
  }
  return out;
}

ImLossValue im_loss(const Matrix& logits) {
  const std::size_t n = logits.rows;
  const std::size_t c = logits.cols;
  if (n == 0) throw std::invalid_argument("im_loss: empty batch");
  ImLossValue out;
  out.d_logits = Matrix(n, c);
  out.diversity_skipped = (n < 2);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<ProbVector> p(n);
  std::vector<double> p_bar(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = softmax(logits.row(i));
    for (std::size_t k = 0; k < c; ++k) p_bar[k] += p[i][k] * inv_n;
  }

  for (std::size_t i = 0; i < n; ++i) {
    // Gradient of the loss w.r.t. p_i, then chained through the softmax.
    std::vector<double> g(c, 0.0);
    double h = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double pk = std::max(p[i][k], kLogEps);
      h -= p[i][k] * std::log(pk);
      g[k] = -(std::log(pk) + 1.0) * inv_n;  // entropy term
      if (!out.diversity_skipped) {
        const double ratio = std::log(pk / std::max(p_bar[k], kLogEps));
        out.diversity_term += p[i][k] * ratio * inv_n;
        g[k] += ratio * inv_n;  // includes the p_bar dependence (see notes)
      }
    }
    out.entropy_term += h * inv_n;
    // dz_j = p_j * (g_j - sum_k p_k g_k)
    double dot = 0.0;
    for (std::size_t k = 0; k < c; ++k) dot += p[i][k] * g[k];
    for (std::size_t k = 0; k < c; ++k)
      out.d_logits(i, k) = p[i][k] * (g[k] - dot);
  }
  return out;
}

LossValue consistency_loss(const Matrix& student_logits,
                           const std::vector<ProbVector>& teacher_probs) {
  const std::size_t n = student_logits.rows;
  if (teacher_probs.size() != n)
    throw std::invalid_argument("consistency_loss: batch size mismatch");
  LossValue out;
  out.d_logits = Matrix(n, student_logits.cols);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (teacher_probs[i].size() != student_logits.cols)
      throw std::invalid_argument("consistency_loss: class count mismatch");
    const ProbVector ps = softmax(student_logits.row(i));
    for (std::size_t k = 0; k < student_logits.cols; ++k) {
      const double pt = teacher_probs[i][k];
      if (pt > 0.0)
        out.loss += pt * std::log(pt / std::max(ps[k], kLogEps)) * inv_n;
      out.d_logits(i, k) = (ps[k] - pt) * inv_n;
    }
  }
  return out;
}

namespace {
double norm2(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}
}  // namespace

double cosine_distance(std::span<const double> z1, std::span<const double> z2) {
  if (z1.size() != z2.size())
    throw std::invalid_argument("cosine_distance: length mismatch");
  const double n1 = std::max(norm2(z1), 1e-12);
  const double n2 = std::max(norm2(z2), 1e-12);
  double dot = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) dot += z1[i] * z2[i];
  return 1.0 - dot / (n1 * n2);
}

namespace {

// d/dz of D(a, z) = 1 - a.z / (|a||z|), anchor constant.
std::vector<double> cosine_distance_grad(std::span<const double> a,
                                         std::span<const double> z) {
  const double na = std::max(norm2(a), 1e-12);
  const double nz = std::max(norm2(z), 1e-12);
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * z[i];
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    g[i] = -a[i] / (na * nz) + dot * z[i] / (na * nz * nz * nz);
  return g;
}

}  // namespace

TripletValue triplet_loss(std::span<const double> anchor_teacher,
                          std::span<const double> positive_student,
                          std::span<const double> negative_student) {
  TripletValue out;
  out.d_positive.assign(positive_student.size(), 0.0);
  out.d_negative.assign(negative_student.size(), 0.0);
  const double d_pos = cosine_distance(anchor_teacher, positive_student);
  const double d_neg = cosine_distance(anchor_teacher, negative_student);
  const double margin = d_pos - d_neg;
  if (margin > 0.0) {
    out.loss = margin;
    out.d_positive = cosine_distance_grad(anchor_teacher, positive_student);
    auto gn = cosine_distance_grad(anchor_teacher, negative_student);
    for (std::size_t i = 0; i < gn.size(); ++i) out.d_negative[i] = -gn[i];
  }
  return out;
}

double zeta2_schedule(std::size_t epoch, std::size_t total_epochs, double zeta2_max) {
  if (epoch < 1 || epoch > total_epochs)
    throw std::invalid_argument("zeta2_schedule: epoch out of range");
  const std::size_t t_ramp = static_cast<std::size_t>(
      std::ceil(0.8 * static_cast<double>(total_epochs)));
  if (epoch >= t_ramp) return zeta2_max;
  const double f = 1.0 - static_cast<double>(epoch) / static_cast<double>(t_ramp);
  return zeta2_max * std::exp(-5.0 * f * f);
}

}  // namespace usd
