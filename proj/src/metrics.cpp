#include "usd/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace usd {

double harmonic_mean(double a, double b) {
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

std::vector<std::vector<long>> confusion_matrix(const std::vector<int>& pred,
                                                const std::vector<int>& truth,
                                                std::size_t class_count) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("confusion_matrix: length mismatch");
  std::vector<std::vector<long>> counts(class_count,
                                        std::vector<long>(class_count, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 ||
        static_cast<std::size_t>(truth[i]) >= class_count ||
        static_cast<std::size_t>(pred[i]) >= class_count)
      throw std::invalid_argument("confusion_matrix: label out of range");
    counts[truth[i]][pred[i]]++;
  }
  return counts;
}

EvalResult evaluate_predictions(const std::vector<int>& pred,
                                const std::vector<int>& truth,
                                std::size_t known_classes) {
  const std::size_t c_t = known_classes + 1;
  EvalResult res;
  res.confusion = confusion_matrix(pred, truth, c_t);

  res.per_class_acc.assign(known_classes, -1.0);
  double acc_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < known_classes; ++c) {
    long total = 0;
    for (std::size_t j = 0; j < c_t; ++j) total += res.confusion[c][j];
    if (total == 0) {
      res.missing_classes.push_back(static_cast<int>(c));
      continue;
    }
    res.per_class_acc[c] =
        static_cast<double>(res.confusion[c][c]) / static_cast<double>(total);
    acc_sum += res.per_class_acc[c];
    ++present;
  }
  res.os_star = present > 0 ? acc_sum / static_cast<double>(present) : 0.0;

  long unk_total = 0;
  for (std::size_t j = 0; j < c_t; ++j) unk_total += res.confusion[known_classes][j];
  if (unk_total > 0) {
    res.unk = static_cast<double>(res.confusion[known_classes][known_classes]) /
              static_cast<double>(unk_total);
    res.hos = harmonic_mean(res.os_star, *res.unk);
  }
  return res;
}

EvalResult evaluate(const ModelParams& student, const Matrix& features,
                    const std::vector<int>& hidden_labels,
                    std::size_t known_classes) {
  if (features.rows != hidden_labels.size())
    throw std::invalid_argument("evaluate: label count mismatch");
  auto [logits, trace] = forward(student, features);
  std::vector<int> pred(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto row = logits.row(i);
    pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) -
                               row.begin());
  }
  return evaluate_predictions(pred, hidden_labels, known_classes);
}

}  // namespace usd
