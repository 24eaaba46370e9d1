#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "usd/data.hpp"
#include "usd/separation.hpp"

namespace usd {

struct Toggles {
  bool co_training = true;
  bool curriculum = true;
  bool triplet = true;
  bool consistency = true;
  bool im = true;
};

enum class TripletSource { kLogits, kBottleneck };

// Every hyperparameter of the adaptation loop plus the dataset spec.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  double delta_t = 0.8;
  double beta = 0.01;
  double alpha = 0.1;  // label smoothing
  double zeta1 = 0.01;
  double zeta2_max = 0.5;
  double m_max = 0.9995;
  double gamma0 = 1.0;
  std::size_t weak_views = 1;
  std::size_t strong_views = 5;
  AugmentPresets augment;
  SeparationCriterion criterion = SeparationCriterion::kJsd;
  PseudolabelScheme scheme = PseudolabelScheme::kEnsemble;
  Toggles toggles;
  TripletSource triplet_source = TripletSource::kLogits;
  bool gmm_warm_start = false;
  std::size_t warmup_epochs = 1;  // epochs that skip separation entirely
  bool freeze_known_bias = true;

  std::size_t hidden = 32;
  std::size_t bottleneck = 16;
  std::size_t source_epochs = 50;

  SourceSpec source_spec;
  ShiftSpec shift;

  // Optional file inputs; generated from the specs above when absent.
  std::optional<std::string> source_data_path;
  std::optional<std::string> target_data_path;
  std::optional<std::string> source_model_path;

  std::optional<std::string> checkpoint_path;  // write engine state here
  std::optional<std::size_t> checkpoint_epoch;

  std::string ablation_id = "full";
};

RunConfig load_config(const std::string& path);
RunConfig parse_config_json(const std::string& text, const std::string& origin);
std::string config_to_json(const RunConfig& cfg);

// FNV-1a over the canonical JSON form; used to guard checkpoint resume.
std::uint64_t config_hash(const RunConfig& cfg);

std::string criterion_name(SeparationCriterion c);
std::string scheme_name(PseudolabelScheme s);

}  // namespace usd
