#pragma once

#include <span>
#include <vector>

#include "usd/matrix.hpp"
#include "usd/prob.hpp"
#include "usd/separation.hpp"

namespace usd {

struct LossBreakdown {
  double ce_known = 0.0;
  double ce_unknown = 0.0;
  double im_ent = 0.0;
  double im_div = 0.0;
  double triplet = 0.0;
  double consistency = 0.0;
  double gamma_used = 1.0;
  double zeta1 = 0.0;
  double zeta2 = 0.0;
  double total = 0.0;
};

// total = gamma*ce_known + (1-gamma)*ce_unknown + (im_ent + im_div)
//         + zeta1*triplet + zeta2*consistency
double assemble_total(LossBreakdown& parts);

struct CurriculumState {
  double gamma = 1.0;       // in [0.5, gamma_0]
  double prev_known_ce = -1.0;  // < 0 means unset
  double beta = 0.01;
  long iteration = 0;
};

// gamma_r = max(0.5, gamma_{r-1} * (1 - beta * exp(-L_r / L_{r-1}))).
// The first call only records the baseline.
void curriculum_update(CurriculumState& state, double known_ce_now);

double curriculum_ce(double known_loss, double unknown_loss, double gamma);

struct LossValue {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean over the batch of w_i * sum_k q^ls_k * (-log softmax_k), with
// q^ls = (1-alpha)*onehot + alpha/C.
LossValue ce_label_smoothed(const Matrix& logits, std::span<const int> labels,
                            std::span<const double> weights, double alpha,
                            std::size_t classes);

struct ImLossValue {
  double entropy_term = 0.0;
  double diversity_term = 0.0;
  Matrix d_logits;
  bool diversity_skipped = false;  // batch of 1
};

// Per-sample entropy plus batch-mean KL(p_i || p_bar); the gradient accounts
// for p_bar's dependence on every sample.
ImLossValue im_loss(const Matrix& logits);

// Mean over the batch of KL(p_T || p_S); teacher values are constants.
LossValue consistency_loss(const Matrix& student_logits,
                           const std::vector<ProbVector>& teacher_probs);

double cosine_distance(std::span<const double> z1, std::span<const double> z2);

struct TripletValue {
  double loss = 0.0;
  std::vector<double> d_positive;
  std::vector<double> d_negative;
};

// max(D(a, pos) - D(a, neg), 0) with cosine distance; the anchor is a
// constant and the subgradient at the hinge point is zero.
TripletValue triplet_loss(std::span<const double> anchor_teacher,
                          std::span<const double> positive_student,
                          std::span<const double> negative_student);

// zeta2(t) = zeta2_max * exp(-5 (1 - t/T_ramp)^2) for t < T_ramp, else
// zeta2_max, with T_ramp = ceil(0.8 * total_epochs).
double zeta2_schedule(std::size_t epoch, std::size_t total_epochs, double zeta2_max);

}  // namespace usd
