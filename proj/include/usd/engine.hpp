#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "usd/config.hpp"
#include "usd/data.hpp"
#include "usd/losses.hpp"
#include "usd/metrics.hpp"
#include "usd/model.hpp"
#include "usd/separation.hpp"

namespace usd {

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t known_count = 0;
  std::size_t unknown_count = 0;
  GmmFit fit;
  bool degenerate = false;
  LossBreakdown mean_loss;
  double gamma = 1.0;
  double ema_m = 0.0;
  double zeta2 = 0.0;
  std::size_t triplet_skipped_batches = 0;
  std::optional<EvalResult> eval;  // present when hidden labels exist
  double wall_seconds = 0.0;
};

struct AdaptResult {
  ModelParams student;
  ModelParams teacher;
  std::vector<EpochReport> reports;
};

// Everything needed to continue an adaptation run bit-exactly.
struct EngineState {
  std::size_t epochs_done = 0;
  ModelParams student;
  ModelParams teacher;
  SgdState velocity;
  CurriculumState curriculum;
  GmmFit last_fit;
  bool has_last_fit = false;
};

// C_s-way source training with label-smoothed CE on a 90/10 train/val
// split; val accuracy is reported through val_accuracy when non-null.
ModelParams train_source(const RunConfig& cfg, const LabeledSet& source,
                         double* val_accuracy = nullptr);

// Called once per epoch with the separation result, before any gradient
// step of that epoch. Used by the CLI to dump criterion histograms.
using SeparationObserver =
    std::function<void(std::size_t epoch, const SeparationResult&)>;

AdaptResult adapt(const RunConfig& cfg, const ModelParams& source_model,
                  const UnlabeledSet& target,
                  const SeparationObserver& observer = {});

// Continues from a checkpointed state; reports cover only the remaining
// epochs.
AdaptResult adapt_resume(const RunConfig& cfg, EngineState state,
                         const UnlabeledSet& target,
                         const SeparationObserver& observer = {});

struct StepSchedules {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  double alpha = 0.1;
  double zeta1 = 0.01;
  double zeta2 = 0.0;
  Toggles toggles;
  TripletSource triplet_source = TripletSource::kLogits;
  AugmentPolicy weak_policy;
  AugmentPolicy strong_policy;
  std::size_t known_classes = 0;
};

// One optimization step: weak view through the separator-side model,
// strong view through the student, all enabled loss terms, one SGD update,
// curriculum update from the batch's known CE.
LossBreakdown minibatch_step(ModelParams& student, const ModelParams& teacher_view,
                             const Matrix& target_features,
                             const std::vector<std::size_t>& batch,
                             const SeparationResult& sep, CurriculumState& cur,
                             SgdState& velocity, const StepSchedules& sch, Rng rng,
                             std::size_t* triplet_skips = nullptr);

// Target-phase learning rate: lr0 * (1 + 10 p)^-0.75 at progress p in [0,1].
double lr_schedule(double lr0, double progress);

// Checkpoint I/O. Hex-float text with a trailing checksum; round trips are
// bit-exact.
void save_model_checkpoint(const std::string& path, std::uint64_t seed,
                           const ModelParams& params);
ModelParams load_model_checkpoint(const std::string& path,
                                  std::uint64_t* seed_out = nullptr);
void save_engine_state(const std::string& path, std::uint64_t cfg_hash,
                       std::uint64_t seed, const EngineState& state);
EngineState load_engine_state(const std::string& path, std::uint64_t expected_hash,
                              std::uint64_t* seed_out = nullptr);

}  // namespace usd
