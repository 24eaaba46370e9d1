#pragma once

#include <optional>
#include <vector>

#include "usd/matrix.hpp"
#include "usd/model.hpp"

namespace usd {

struct EvalResult {
  std::vector<double> per_class_acc;  // over known classes; -1 if class absent
  std::vector<int> missing_classes;   // known classes with no samples
  double os_star = 0.0;
  std::optional<double> unk;  // absent when no unknown samples exist
  std::optional<double> hos;
  std::vector<std::vector<long>> confusion;  // [C_t x C_t], truth x pred
};

// counts[i][j] = #{truth = i, pred = j}. Throws on out-of-range labels.
std::vector<std::vector<long>> confusion_matrix(const std::vector<int>& pred,
                                                const std::vector<int>& truth,
                                                std::size_t class_count);

// OS* = class-mean accuracy over known classes, UNK = accuracy on hidden
// unknowns, HOS = harmonic mean (0 when the denominator is 0).
EvalResult evaluate_predictions(const std::vector<int>& pred,
                                const std::vector<int>& truth,
                                std::size_t known_classes);

// Predictions are argmax over all C_t outputs of the student.
EvalResult evaluate(const ModelParams& student, const Matrix& features,
                    const std::vector<int>& hidden_labels,
                    std::size_t known_classes);

double harmonic_mean(double a, double b);

}  // namespace usd
