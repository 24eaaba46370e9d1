#include "usd/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "usd/errors.hpp"

namespace usd {

using nlohmann::json;

namespace {

json eval_to_json(const EvalResult& e) {
  json j;
  j["per_class_acc"] = e.per_class_acc;
  j["missing_classes"] = e.missing_classes;
  j["os_star"] = e.os_star;
  if (e.unk) j["unk"] = *e.unk;
  if (e.hos) j["hos"] = *e.hos;
  j["confusion"] = e.confusion;
  return j;
}

EvalResult eval_from_json(const json& j) {
  EvalResult e;
  e.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
  e.missing_classes = j.at("missing_classes").get<std::vector<int>>();
  e.os_star = j.at("os_star").get<double>();
  if (j.contains("unk")) e.unk = j["unk"].get<double>();
  if (j.contains("hos")) e.hos = j["hos"].get<double>();
  e.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
  return e;
}

json report_to_json(const EpochReport& r) {
  json j;
  j["epoch"] = r.epoch;
  j["known_count"] = r.known_count;
  j["unknown_count"] = r.unknown_count;
  j["gmm"] = {{"mu_low", r.fit.mu_low},       {"mu_high", r.fit.mu_high},
              {"var_low", r.fit.var_low},     {"var_high", r.fit.var_high},
              {"iterations", r.fit.iterations}, {"converged", r.fit.converged},
              {"degenerate", r.fit.degenerate}};
  j["degenerate"] = r.degenerate;
  j["loss"] = {{"ce_known", r.mean_loss.ce_known},
               {"ce_unknown", r.mean_loss.ce_unknown},
               {"im_ent", r.mean_loss.im_ent},
               {"im_div", r.mean_loss.im_div},
               {"triplet", r.mean_loss.triplet},
               {"consistency", r.mean_loss.consistency},
               {"gamma_used", r.mean_loss.gamma_used},
               {"zeta1", r.mean_loss.zeta1},
               {"zeta2", r.mean_loss.zeta2},
               {"total", r.mean_loss.total}};
  j["gamma"] = r.gamma;
  j["ema_m"] = r.ema_m;
  j["zeta2"] = r.zeta2;
  j["triplet_skipped_batches"] = r.triplet_skipped_batches;
  if (r.eval) j["eval"] = eval_to_json(*r.eval);
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

EpochReport report_from_json(const json& j) {
  EpochReport r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.known_count = j.at("known_count").get<std::size_t>();
  r.unknown_count = j.at("unknown_count").get<std::size_t>();
  const json& g = j.at("gmm");
  r.fit.mu_low = g.at("mu_low").get<double>();
  r.fit.mu_high = g.at("mu_high").get<double>();
  r.fit.var_low = g.at("var_low").get<double>();
  r.fit.var_high = g.at("var_high").get<double>();
  r.fit.iterations = g.at("iterations").get<int>();
  r.fit.converged = g.at("converged").get<bool>();
  r.fit.degenerate = g.at("degenerate").get<bool>();
  r.degenerate = j.at("degenerate").get<bool>();
  const json& l = j.at("loss");
  r.mean_loss.ce_known = l.at("ce_known").get<double>();
  r.mean_loss.ce_unknown = l.at("ce_unknown").get<double>();
  r.mean_loss.im_ent = l.at("im_ent").get<double>();
  r.mean_loss.im_div = l.at("im_div").get<double>();
  r.mean_loss.triplet = l.at("triplet").get<double>();
  r.mean_loss.consistency = l.at("consistency").get<double>();
  r.mean_loss.gamma_used = l.at("gamma_used").get<double>();
  r.mean_loss.zeta1 = l.at("zeta1").get<double>();
  r.mean_loss.zeta2 = l.at("zeta2").get<double>();
  r.mean_loss.total = l.at("total").get<double>();
  r.gamma = j.at("gamma").get<double>();
  r.ema_m = j.at("ema_m").get<double>();
  r.zeta2 = j.at("zeta2").get<double>();
  r.triplet_skipped_batches = j.at("triplet_skipped_batches").get<std::size_t>();
  if (j.contains("eval")) r.eval = eval_from_json(j["eval"]);
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

}  // namespace

RunSummary make_summary(const RunConfig& cfg, const AdaptResult& result,
                        double source_val_accuracy) {
  RunSummary s;
  s.cfg_hash = config_hash(cfg);
  s.seed = cfg.seed;
  s.ablation_id = cfg.ablation_id;
  s.config_json = config_to_json(cfg);
  s.reports = result.reports;
  if (!result.reports.empty() && result.reports.back().eval)
    s.final_eval = result.reports.back().eval;
  s.source_val_accuracy = source_val_accuracy;
  for (const EpochReport& r : result.reports) s.total_wall_seconds += r.wall_seconds;
  return s;
}

std::string summary_to_json(const RunSummary& s) {
  json j;
  j["artifact_version"] = s.artifact_version;
  j["config_hash"] = s.cfg_hash;
  j["seed"] = s.seed;
  j["ablation_id"] = s.ablation_id;
  j["config"] = json::parse(s.config_json);
  json reps = json::array();
  for (const EpochReport& r : s.reports) reps.push_back(report_to_json(r));
  j["epochs"] = reps;
  if (s.final_eval) j["final_eval"] = eval_to_json(*s.final_eval);
  j["source_val_accuracy"] = s.source_val_accuracy;
  j["total_wall_seconds"] = s.total_wall_seconds;
  return j.dump(2);
}

RunSummary summary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("summary: ") + e.what());
  }
  RunSummary s;
  try {
    s.artifact_version = j.at("artifact_version").get<std::string>();
    s.cfg_hash = j.at("config_hash").get<std::uint64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ablation_id = j.at("ablation_id").get<std::string>();
    s.config_json = j.at("config").dump(2);
    for (const json& r : j.at("epochs")) s.reports.push_back(report_from_json(r));
    if (j.contains("final_eval")) s.final_eval = eval_from_json(j["final_eval"]);
    s.source_val_accuracy = j.at("source_val_accuracy").get<double>();
    s.total_wall_seconds = j.at("total_wall_seconds").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("summary: ") + e.what());
  }
  return s;
}

void save_summary(const std::string& path, const RunSummary& s) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write summary: " + path);
  os << summary_to_json(s) << '\n';
}

RunSummary load_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open summary: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return summary_from_json(ss.str());
}

std::string summary_fingerprint(const RunSummary& s) {
  RunSummary copy = s;
  copy.total_wall_seconds = 0.0;
  for (EpochReport& r : copy.reports) r.wall_seconds = 0.0;
  return summary_to_json(copy);
}

void write_epoch_metrics(const std::string& path,
                         const std::vector<EpochReport>& reports) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write metrics file: " + path);
  os << "# usd epoch metrics v1\n";
  os << "epoch\tos_star\tunk\thos\tce_known\tce_unknown\tim_ent\tim_div\ttriplet"
        "\tconsistency\ttotal\tknown\tunknown\tgamma\tema_m\tzeta2\n";
  os.precision(17);
  for (const EpochReport& r : reports) {
    os << r.epoch << '\t';
    if (r.eval) {
      os << r.eval->os_star << '\t' << (r.eval->unk ? *r.eval->unk : std::nan(""))
         << '\t' << (r.eval->hos ? *r.eval->hos : std::nan("")) << '\t';
    } else {
      os << "nan\tnan\tnan\t";
    }
    os << r.mean_loss.ce_known << '\t' << r.mean_loss.ce_unknown << '\t'
       << r.mean_loss.im_ent << '\t' << r.mean_loss.im_div << '\t'
       << r.mean_loss.triplet << '\t' << r.mean_loss.consistency << '\t'
       << r.mean_loss.total << '\t' << r.known_count << '\t' << r.unknown_count
       << '\t' << r.gamma << '\t' << r.ema_m << '\t' << r.zeta2 << '\n';
  }
}

void write_criterion_histogram(const std::string& path,
                               const std::vector<double>& values, double lo,
                               double hi, int bins) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write histogram file: " + path);
  os << "# usd histogram v1\nbin_lo\tbin_hi\tcount\n";
  std::vector<long> counts(bins, 0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    counts[b]++;
  }
  os.precision(17);
  for (int b = 0; b < bins; ++b)
    os << lo + b * width << '\t' << lo + (b + 1) * width << '\t' << counts[b] << '\n';
}

std::string report_text(const RunSummary& s) {
  std::ostringstream os;
  os << "run " << s.ablation_id << "  seed " << s.seed << "  version "
     << s.artifact_version << '\n';
  if (s.source_val_accuracy >= 0.0)
    os << "source val accuracy "
       << std::round(s.source_val_accuracy * 1000.0) / 10.0 << "%\n";
  if (s.reports.empty()) {
    os << "no epochs recorded\n";
    return os.str();
  }
  const EpochReport& last = s.reports.back();
  os << "epochs " << s.reports.size() << "  |X_t^K| " << last.known_count
     << "  |X_t^U| " << last.unknown_count << "  gmm means " << last.fit.mu_low
     << "/" << last.fit.mu_high << (last.degenerate ? " (degenerate)" : "")
     << '\n';
  if (s.final_eval) {
    auto pct = [](double v) { return std::round(v * 1000.0) / 10.0; };
    os << "OS* " << pct(s.final_eval->os_star);
    if (s.final_eval->unk) os << "  UNK " << pct(*s.final_eval->unk);
    if (s.final_eval->hos) os << "  HOS " << pct(*s.final_eval->hos);
    os << '\n';
    // Per-epoch HOS trace.
    static const char* blocks[] = {" ", ".", ":", "-", "=", "+", "*", "#"};
    os << "hos trace [";
    for (const EpochReport& r : s.reports) {
      double h = (r.eval && r.eval->hos) ? *r.eval->hos : 0.0;
      int idx = std::clamp(static_cast<int>(h * 8.0), 0, 7);
      os << blocks[idx];
    }
    os << "]\n";
  } else {
    os << "no hidden labels; metrics unavailable\n";
  }
  return os.str();
}

}  // namespace usd
