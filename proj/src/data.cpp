#include "usd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "usd/errors.hpp"

namespace usd {

namespace {

std::vector<std::vector<double>> class_means(const SourceSpec& spec) {
  std::vector<std::vector<double>> means(spec.class_count,
                                         std::vector<double>(spec.dim, 0.0));
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const double theta =
        2.0 * std::numbers::pi * static_cast<double>(c) /
        static_cast<double>(spec.class_count);
    means[c][0] = spec.radius * std::cos(theta);
    means[c][1] = spec.radius * std::sin(theta);
  }
  return means;
}

// Even allocation of n samples over k groups; remainder goes to the first
// groups so the split is deterministic.
std::vector<std::size_t> even_split(std::size_t n, std::size_t k) {
  std::vector<std::size_t> counts(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) counts[i]++;
  return counts;
}

void validate_source_spec(const SourceSpec& spec) {
  if (spec.class_count < 2 || spec.dim < 2)
    throw std::invalid_argument("source spec: need class_count >= 2 and dim >= 2");
  if (spec.sample_count == 0)
    throw std::invalid_argument("source spec: sample_count must be positive");
  if (spec.radius == 0.0 && spec.sigma == 0.0)
    throw std::invalid_argument("source spec: degenerate (radius 0 with sigma 0)");
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

LabeledSet generate_source(const SourceSpec& spec, Rng rng) {
  validate_source_spec(spec);
  const auto means = class_means(spec);
  const auto counts = even_split(spec.sample_count, spec.class_count);
  LabeledSet set;
  set.class_count = static_cast<int>(spec.class_count);
  set.features = Matrix(spec.sample_count, spec.dim);
  set.labels.reserve(spec.sample_count);
  Rng noise = rng.stream("source_noise");
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
      for (std::size_t j = 0; j < spec.dim; ++j)
        set.features(row, j) = means[c][j] + spec.sigma * noise.normal();
      set.labels.push_back(static_cast<int>(c));
    }
  }
  return set;
}

UnlabeledSet generate_target(const SourceSpec& source_spec, const ShiftSpec& shift,
                             Rng rng) {
  validate_source_spec(source_spec);
  if (!(shift.unknown_fraction > 0.0 && shift.unknown_fraction < 1.0) &&
      shift.unknown_fraction != 0.0)
    throw std::invalid_argument("shift spec: unknown_fraction must be in [0,1)");
  if (shift.scale <= 0.0)
    throw std::invalid_argument("shift spec: scale must be positive");
  if (shift.sample_count == 0)
    throw std::invalid_argument("shift spec: sample_count must be positive");

  const std::size_t d = source_spec.dim;
  const double sigma_t = source_spec.sigma * shift.noise_scale;
  const double ang = shift.rotation_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(ang), sa = std::sin(ang);

  // Shifted known means: scale * Rot(first two dims) + translation.
  auto means = class_means(source_spec);
  for (auto& m : means) {
    const double x = m[0], y = m[1];
    m[0] = shift.scale * (ca * x - sa * y);
    m[1] = shift.scale * (sa * x + ca * y);
    for (std::size_t j = 2; j < d; ++j) m[j] *= shift.scale;
    for (std::size_t j = 0; j < d && j < shift.translation.size(); ++j)
      m[j] += shift.translation[j];
  }

  // Unknown cluster means: rejection-sampled inside the ring of known
  // means. Interior placements land in the classifier's low-confidence
  // region (novel, not just far away); separation from every shifted known
  // mean is still enforced.
  Rng placer = rng.stream("unknown_means");
  const double ring = 0.3 * std::max(source_spec.radius * shift.scale, 1.0);
  const double min_sep = shift.unknown_separation_sigmas * sigma_t;
  std::vector<std::vector<double>> unknown_means;
  for (std::size_t u = 0; u < shift.unknown_cluster_count; ++u) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<double> cand(d, 0.0);
      const double r = ring * std::sqrt(placer.uniform());
      const double phi = 2.0 * std::numbers::pi * placer.uniform();
      cand[0] = r * std::cos(phi);
      cand[1] = r * std::sin(phi);
      bool ok = true;
      for (const auto& m : means)
        if (dist2(cand, m) < min_sep * min_sep) ok = false;
      // Unknown clusters only need to stay distinguishable from each other.
      const double pair_sep = 2.0 * sigma_t;
      for (const auto& m : unknown_means)
        if (dist2(cand, m) < pair_sep * pair_sep) ok = false;
      if (ok) {
        unknown_means.push_back(std::move(cand));
        placed = true;
      }
    }
    if (!placed)
      throw NumericError("generate_target: could not place unknown cluster " +
                         std::to_string(u) + " at required separation");
  }

  const std::size_t n = shift.sample_count;
  const std::size_t n_unknown = static_cast<std::size_t>(
      std::llround(shift.unknown_fraction * static_cast<double>(n)));
  const std::size_t n_known = n - n_unknown;

  UnlabeledSet set;
  set.features = Matrix(n, d);
  std::vector<int> hidden;
  hidden.reserve(n);
  Rng noise = rng.stream("target_noise");

  std::size_t row = 0;
  const auto known_counts = even_split(n_known, source_spec.class_count);
  for (std::size_t c = 0; c < source_spec.class_count; ++c) {
    for (std::size_t i = 0; i < known_counts[c]; ++i, ++row) {
      for (std::size_t j = 0; j < d; ++j)
        set.features(row, j) = means[c][j] + sigma_t * noise.normal();
      hidden.push_back(static_cast<int>(c));
    }
  }
  if (n_unknown > 0) {
    const auto unk_counts = even_split(n_unknown, unknown_means.size());
    for (std::size_t u = 0; u < unknown_means.size(); ++u) {
      for (std::size_t i = 0; i < unk_counts[u]; ++i, ++row) {
        for (std::size_t j = 0; j < d; ++j)
          set.features(row, j) = unknown_means[u][j] + sigma_t * noise.normal();
        hidden.push_back(static_cast<int>(source_spec.class_count));
      }
    }
  }
  set.hidden_labels = std::move(hidden);
  return set;
}

std::vector<double> augment(std::span<const double> x, const AugmentPolicy& policy,
                            Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (policy.scale_jitter > 0.0) {
    const double s = 1.0 + policy.scale_jitter * rng.normal();
    for (double& v : out) v *= s;
  }
  if (policy.gaussian_sigma > 0.0) {
    for (double& v : out) v += policy.gaussian_sigma * rng.normal();
  }
  if (policy.dropout_prob > 0.0) {
    const double keep = 1.0 - policy.dropout_prob;
    for (double& v : out) {
      if (rng.uniform() < policy.dropout_prob)
        v = 0.0;
      else
        v /= keep;  // keeps the expectation at x
    }
  }
  return out;
}

double feature_std(const Matrix& features) {
  if (features.rows == 0) return 0.0;
  double var_sum = 0.0;
  for (std::size_t j = 0; j < features.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) mean += features(i, j);
    mean /= static_cast<double>(features.rows);
    double var = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) {
      const double dv = features(i, j) - mean;
      var += dv * dv;
    }
    var_sum += var / static_cast<double>(features.rows);
  }
  return std::sqrt(var_sum / static_cast<double>(features.cols));
}

namespace {

constexpr const char* kFileTag = "# usd dataset v1";

void write_rows(std::ostream& os, const Matrix& f, const std::vector<int>* labels) {
  os << kFileTag << "\n";
  for (std::size_t j = 0; j < f.cols; ++j) {
    if (j) os << ",";
    os << "f_" << j;
  }
  if (labels) os << ",label";
  os << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < f.rows; ++i) {
    for (std::size_t j = 0; j < f.cols; ++j) {
      if (j) os << ",";
      os << f(i, j);
    }
    if (labels) os << "," << (*labels)[i];
    os << "\n";
  }
}

struct ParsedFile {
  Matrix features;
  std::optional<std::vector<int>> labels;
};

ParsedFile parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::string line;
  std::size_t lineno = 0;
  // Header: first non-comment line.
  bool have_header = false;
  std::size_t dim = 0;
  bool has_label = false;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      has_label = !cells.empty() && cells.back() == "label";
      dim = cells.size() - (has_label ? 1 : 0);
      if (dim == 0)
        throw ParseError(path + ":" + std::to_string(lineno) + ": empty header");
      have_header = true;
      continue;
    }
    if (cells.size() != dim + (has_label ? 1 : 0))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(dim + (has_label ? 1 : 0)) + " columns, got " +
                       std::to_string(cells.size()));
    for (std::size_t j = 0; j < dim; ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": non-numeric value '" + cells[j] + "'");
      }
      if (used != cells[j].size())
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": trailing garbage in '" + cells[j] + "'");
      if (!std::isfinite(v))
        throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite value");
      values.push_back(v);
    }
    if (has_label) {
      int lv = 0;
      try {
        lv = std::stoi(cells.back());
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": non-integer label '" + cells.back() + "'");
      }
      if (lv < 0)
        throw ParseError(path + ":" + std::to_string(lineno) + ": negative label");
      labels.push_back(lv);
    }
    ++n;
  }
  if (!have_header) throw ParseError(path + ": missing header row");
  if (n == 0) throw ParseError(path + ": no data rows");
  ParsedFile out;
  out.features = Matrix(n, dim);
  out.features.data = std::move(values);
  if (has_label) out.labels = std::move(labels);
  return out;
}

}  // namespace

void save_labeled(const std::string& path, const LabeledSet& set) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write dataset file: " + path);
  write_rows(os, set.features, &set.labels);
}

void save_unlabeled(const std::string& path, const UnlabeledSet& set) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write dataset file: " + path);
  write_rows(os, set.features,
             set.hidden_labels ? &*set.hidden_labels : nullptr);
}

LabeledSet load_labeled(const std::string& path) {
  ParsedFile p = parse_file(path);
  if (!p.labels) throw ParseError(path + ": expected a label column");
  LabeledSet set;
  set.features = std::move(p.features);
  set.labels = std::move(*p.labels);
  set.class_count = *std::max_element(set.labels.begin(), set.labels.end()) + 1;
  return set;
}

UnlabeledSet load_unlabeled(const std::string& path) {
  ParsedFile p = parse_file(path);
  UnlabeledSet set;
  set.features = std::move(p.features);
  set.hidden_labels = std::move(p.labels);
  return set;
}

}  // namespace usd
