#pragma once

#include <string>
#include <vector>

#include "usd/config.hpp"
#include "usd/engine.hpp"

namespace usd {

struct RunSummary {
  std::string artifact_version = "usd-0.1.0";
  std::uint64_t cfg_hash = 0;
  std::uint64_t seed = 0;
  std::string ablation_id;
  std::string config_json;
  std::vector<EpochReport> reports;
  std::optional<EvalResult> final_eval;
  double source_val_accuracy = -1.0;
  double total_wall_seconds = 0.0;
};

RunSummary make_summary(const RunConfig& cfg, const AdaptResult& result,
                        double source_val_accuracy);

// JSON round trip. Doubles are serialized losslessly.
std::string summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const std::string& text);
void save_summary(const std::string& path, const RunSummary& s);
RunSummary load_summary(const std::string& path);

// Identical summaries except for wall-clock fields compare equal here.
std::string summary_fingerprint(const RunSummary& s);

// One row per epoch: epoch, OS*, UNK, HOS, losses, subset sizes, gamma, m,
// zeta2.
void write_epoch_metrics(const std::string& path,
                         const std::vector<EpochReport>& reports);

// 50-bin histogram of the separation criterion for bimodality plots.
void write_criterion_histogram(const std::string& path,
                               const std::vector<double>& values, double lo,
                               double hi, int bins = 50);

// Human-readable report: final metrics, separation stats, per-epoch HOS
// sparkline.
std::string report_text(const RunSummary& s);

}  // namespace usd
