#include "usd/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "usd/errors.hpp"

namespace usd {

using nlohmann::json;

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

SeparationCriterion parse_criterion(const std::string& s) {
  if (s == "jsd") return SeparationCriterion::kJsd;
  if (s == "entropy") return SeparationCriterion::kEntropy;
  if (s == "ce") return SeparationCriterion::kCe;
  throw ConfigError("unknown separation criterion: " + s);
}

PseudolabelScheme parse_scheme(const std::string& s) {
  if (s == "ensemble") return PseudolabelScheme::kEnsemble;
  if (s == "student_argmax") return PseudolabelScheme::kStudentArgmax;
  throw ConfigError("unknown pseudolabel scheme: " + s);
}

void validate(const RunConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.lr <= 0.0 || c.momentum < 0.0 || c.weight_decay < 0.0)
    throw ConfigError("rates must be positive");
  if (!(c.delta_t > 0.0 && c.delta_t < 1.0))
    throw ConfigError("delta_t must be in (0,1)");
  if (!(c.m_max >= 0.0 && c.m_max <= 1.0))
    throw ConfigError("m_max must be in [0,1]");
  if (c.weak_views != 1) throw ConfigError("exactly one weak view is required");
  if (!(c.shift.unknown_fraction >= 0.0 && c.shift.unknown_fraction < 1.0))
    throw ConfigError("unknown_fraction must be in [0,1)");
  if (c.shift.scale <= 0.0) throw ConfigError("shift scale must be positive");
  if (!(c.gamma0 >= 0.5 && c.gamma0 <= 1.0))
    throw ConfigError("gamma0 must be in [0.5,1]");
}

}  // namespace

std::string criterion_name(SeparationCriterion c) {
  switch (c) {
    case SeparationCriterion::kJsd: return "jsd";
    case SeparationCriterion::kEntropy: return "entropy";
    case SeparationCriterion::kCe: return "ce";
  }
  return "jsd";
}

std::string scheme_name(PseudolabelScheme s) {
  return s == PseudolabelScheme::kEnsemble ? "ensemble" : "student_argmax";
}

RunConfig parse_config_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  RunConfig c;
  read(j, "seed", c.seed);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.lr);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "delta_t", c.delta_t);
  read(j, "beta", c.beta);
  read(j, "alpha", c.alpha);
  read(j, "zeta1", c.zeta1);
  read(j, "zeta2_max", c.zeta2_max);
  read(j, "m_max", c.m_max);
  read(j, "gamma0", c.gamma0);
  read(j, "weak_views", c.weak_views);
  read(j, "strong_views", c.strong_views);
  read(j, "hidden", c.hidden);
  read(j, "bottleneck", c.bottleneck);
  read(j, "source_epochs", c.source_epochs);
  read(j, "gmm_warm_start", c.gmm_warm_start);
  read(j, "warmup_epochs", c.warmup_epochs);
  read(j, "freeze_known_bias", c.freeze_known_bias);
  read(j, "ablation_id", c.ablation_id);

  if (j.contains("augment")) {
    const json& a = j["augment"];
    read(a, "weak_sigma_scale", c.augment.weak_sigma_scale);
    read(a, "strong_sigma_scale", c.augment.strong_sigma_scale);
    read(a, "strong_dropout", c.augment.strong_dropout);
    read(a, "strong_scale_jitter", c.augment.strong_scale_jitter);
  }
  if (j.contains("criterion")) c.criterion = parse_criterion(j["criterion"]);
  if (j.contains("pseudolabel")) c.scheme = parse_scheme(j["pseudolabel"]);
  if (j.contains("triplet_source")) {
    const std::string s = j["triplet_source"];
    if (s == "logits")
      c.triplet_source = TripletSource::kLogits;
    else if (s == "bottleneck")
      c.triplet_source = TripletSource::kBottleneck;
    else
      throw ConfigError("unknown triplet_source: " + s);
  }
  if (j.contains("toggles")) {
    const json& t = j["toggles"];
    read(t, "co_training", c.toggles.co_training);
    read(t, "curriculum", c.toggles.curriculum);
    read(t, "triplet", c.toggles.triplet);
    read(t, "consistency", c.toggles.consistency);
    read(t, "im", c.toggles.im);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    read(d, "dim", c.source_spec.dim);
    read(d, "classes", c.source_spec.class_count);
    read(d, "n_source", c.source_spec.sample_count);
    read(d, "radius", c.source_spec.radius);
    read(d, "sigma", c.source_spec.sigma);
    if (d.contains("shift")) {
      const json& s = d["shift"];
      read(s, "rotation_deg", c.shift.rotation_deg);
      read(s, "translation", c.shift.translation);
      read(s, "scale", c.shift.scale);
      read(s, "noise_scale", c.shift.noise_scale);
      read(s, "unknown_clusters", c.shift.unknown_cluster_count);
      read(s, "unknown_fraction", c.shift.unknown_fraction);
      read(s, "n_target", c.shift.sample_count);
      read(s, "unknown_separation_sigmas", c.shift.unknown_separation_sigmas);
    }
  }
  if (j.contains("paths")) {
    const json& p = j["paths"];
    if (p.contains("source_data")) c.source_data_path = p["source_data"];
    if (p.contains("target_data")) c.target_data_path = p["target_data"];
    if (p.contains("source_model")) c.source_model_path = p["source_model"];
    if (p.contains("checkpoint")) c.checkpoint_path = p["checkpoint"];
  }
  if (j.contains("checkpoint_epoch"))
    c.checkpoint_epoch = j["checkpoint_epoch"].get<std::size_t>();

  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str(), path);
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["delta_t"] = c.delta_t;
  j["beta"] = c.beta;
  j["alpha"] = c.alpha;
  j["zeta1"] = c.zeta1;
  j["zeta2_max"] = c.zeta2_max;
  j["m_max"] = c.m_max;
  j["gamma0"] = c.gamma0;
  j["weak_views"] = c.weak_views;
  j["strong_views"] = c.strong_views;
  j["hidden"] = c.hidden;
  j["bottleneck"] = c.bottleneck;
  j["source_epochs"] = c.source_epochs;
  j["gmm_warm_start"] = c.gmm_warm_start;
  j["warmup_epochs"] = c.warmup_epochs;
  j["freeze_known_bias"] = c.freeze_known_bias;
  j["ablation_id"] = c.ablation_id;
  j["criterion"] = criterion_name(c.criterion);
  j["pseudolabel"] = scheme_name(c.scheme);
  j["triplet_source"] =
      c.triplet_source == TripletSource::kLogits ? "logits" : "bottleneck";
  j["augment"] = {{"weak_sigma_scale", c.augment.weak_sigma_scale},
                  {"strong_sigma_scale", c.augment.strong_sigma_scale},
                  {"strong_dropout", c.augment.strong_dropout},
                  {"strong_scale_jitter", c.augment.strong_scale_jitter}};
  j["toggles"] = {{"co_training", c.toggles.co_training},
                  {"curriculum", c.toggles.curriculum},
                  {"triplet", c.toggles.triplet},
                  {"consistency", c.toggles.consistency},
                  {"im", c.toggles.im}};
  j["data"] = {{"dim", c.source_spec.dim},
               {"classes", c.source_spec.class_count},
               {"n_source", c.source_spec.sample_count},
               {"radius", c.source_spec.radius},
               {"sigma", c.source_spec.sigma},
               {"shift",
                {{"rotation_deg", c.shift.rotation_deg},
                 {"translation", c.shift.translation},
                 {"scale", c.shift.scale},
                 {"noise_scale", c.shift.noise_scale},
                 {"unknown_clusters", c.shift.unknown_cluster_count},
                 {"unknown_fraction", c.shift.unknown_fraction},
                 {"n_target", c.shift.sample_count},
                 {"unknown_separation_sigmas", c.shift.unknown_separation_sigmas}}}};
  json paths;
  if (c.source_data_path) paths["source_data"] = *c.source_data_path;
  if (c.target_data_path) paths["target_data"] = *c.target_data_path;
  if (c.source_model_path) paths["source_model"] = *c.source_model_path;
  if (c.checkpoint_path) paths["checkpoint"] = *c.checkpoint_path;
  if (!paths.empty()) j["paths"] = paths;
  if (c.checkpoint_epoch) j["checkpoint_epoch"] = *c.checkpoint_epoch;
  return j.dump(2);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // Checkpoint-relevant identity: paths and checkpoint knobs are excluded
  // so a resume from a different location still matches.
  RunConfig c = cfg;
  c.source_data_path.reset();
  c.target_data_path.reset();
  c.source_model_path.reset();
  c.checkpoint_path.reset();
  c.checkpoint_epoch.reset();
  const std::string s = config_to_json(c);
  std::uint64_t h = 1469598103934665603ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace usd
