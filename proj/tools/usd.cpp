// Command-line front end: generate / train-source / adapt / sweep / report.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "usd/config.hpp"
#include "usd/data.hpp"
#include "usd/engine.hpp"
#include "usd/errors.hpp"
#include "usd/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("USD_OUT_DIR"); env != nullptr && *env != '\0')
    return env;
  return ".";
}

usd::LabeledSet source_set(const usd::RunConfig& cfg) {
  if (cfg.source_data_path) return usd::load_labeled(*cfg.source_data_path);
  return usd::generate_source(cfg.source_spec,
                              usd::Rng(cfg.seed).stream("source_data"));
}

usd::UnlabeledSet target_set(const usd::RunConfig& cfg) {
  if (cfg.target_data_path) return usd::load_unlabeled(*cfg.target_data_path);
  return usd::generate_target(cfg.source_spec, cfg.shift,
                              usd::Rng(cfg.seed).stream("target_data"));
}

usd::ModelParams source_model(const usd::RunConfig& cfg, double* val_accuracy) {
  if (cfg.source_model_path) {
    if (val_accuracy != nullptr) *val_accuracy = -1.0;
    return usd::load_model_checkpoint(*cfg.source_model_path);
  }
  return usd::train_source(cfg, source_set(cfg), val_accuracy);
}

int cmd_generate(const std::string& config_path, const fs::path& out) {
  const usd::RunConfig cfg = usd::load_config(config_path);
  fs::create_directories(out);
  const usd::LabeledSet src = usd::generate_source(
      cfg.source_spec, usd::Rng(cfg.seed).stream("source_data"));
  const usd::UnlabeledSet tgt = usd::generate_target(
      cfg.source_spec, cfg.shift, usd::Rng(cfg.seed).stream("target_data"));
  const fs::path src_path = out / "source.csv";
  const fs::path tgt_path = out / "target.csv";
  usd::save_labeled(src_path.string(), src);
  usd::save_unlabeled(tgt_path.string(), tgt);

  json manifest;
  manifest["schema"] = "usd manifest v1";
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = usd::config_hash(cfg);
  manifest["source"] = {{"file", "source.csv"}, {"rows", src.features.rows}};
  manifest["target"] = {{"file", "target.csv"}, {"rows", tgt.features.rows}};
  std::ofstream ms(out / "manifest.json");
  if (!ms) throw usd::ConfigError("cannot write manifest in " + out.string());
  ms << manifest.dump(2) << '\n';

  std::cout << "wrote " << src_path.string() << " (" << src.features.rows
            << " rows), " << tgt_path.string() << " (" << tgt.features.rows
            << " rows)\n";
  return 0;
}

int cmd_train_source(const std::string& config_path, const fs::path& out) {
  const usd::RunConfig cfg = usd::load_config(config_path);
  fs::create_directories(out);
  double val_acc = -1.0;
  const usd::ModelParams model =
      usd::train_source(cfg, source_set(cfg), &val_acc);
  const fs::path model_path = out / "source_model.ckpt";
  usd::save_model_checkpoint(model_path.string(), cfg.seed, model);

  json summary;
  summary["schema"] = "usd source summary v1";
  summary["seed"] = cfg.seed;
  summary["config_hash"] = usd::config_hash(cfg);
  summary["val_accuracy"] = val_acc;
  summary["model"] = "source_model.ckpt";
  std::ofstream ss(out / "source_summary.json");
  if (!ss) throw usd::ConfigError("cannot write summary in " + out.string());
  ss << summary.dump(2) << '\n';

  std::cout << "source model -> " << model_path.string()
            << "  val accuracy " << std::round(val_acc * 1000.0) / 10.0 << "%\n";
  return 0;
}

usd::RunSummary run_adapt_once(const usd::RunConfig& cfg, const fs::path& out,
                               bool dump_artifacts) {
  double val_acc = -1.0;
  const usd::ModelParams src_model = source_model(cfg, &val_acc);
  const usd::UnlabeledSet target = target_set(cfg);

  fs::path hist_dir = out / "hist";
  if (dump_artifacts) fs::create_directories(hist_dir);
  usd::SeparationObserver observer;
  if (dump_artifacts) {
    observer = [&hist_dir](std::size_t epoch, const usd::SeparationResult& sep) {
      double hi = 1e-12;
      for (double v : sep.criterion) hi = std::max(hi, v);
      std::ostringstream name;
      name << "criterion_epoch_" << std::setw(3) << std::setfill('0') << epoch
           << ".tsv";
      usd::write_criterion_histogram((hist_dir / name.str()).string(),
                                     sep.criterion, 0.0, hi);
    };
  }

  const usd::AdaptResult result = usd::adapt(cfg, src_model, target, observer);
  usd::RunSummary summary = usd::make_summary(cfg, result, val_acc);

  if (dump_artifacts) {
    usd::write_epoch_metrics((out / "epoch_metrics.tsv").string(),
                             summary.reports);
    usd::save_model_checkpoint((out / "student.ckpt").string(), cfg.seed,
                               result.student);
    usd::save_model_checkpoint((out / "teacher.ckpt").string(), cfg.seed,
                               result.teacher);
    usd::save_summary((out / "summary.json").string(), summary);
  }
  return summary;
}

int cmd_adapt(const std::string& config_path, const fs::path& out) {
  const usd::RunConfig cfg = usd::load_config(config_path);
  fs::create_directories(out);
  const usd::RunSummary summary = run_adapt_once(cfg, out, true);
  std::cout << usd::report_text(summary);
  std::cout << "artifacts in " << out.string() << '\n';
  return 0;
}

struct SweepPoint {
  std::string label;
  usd::RunConfig cfg;
};

std::vector<SweepPoint> sweep_points(const std::string& config_path,
                                     const std::string& axis) {
  std::ifstream in(config_path);
  if (!in) throw usd::ConfigError("cannot open config file: " + config_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const usd::RunConfig base = usd::parse_config_json(text, config_path);

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw usd::ConfigError(config_path + ": " + e.what());
  }
  const json sweep = j.value("sweep", json::object());

  std::vector<SweepPoint> points;
  if (axis == "delta_t") {
    std::vector<double> values =
        sweep.value("delta_t", std::vector<double>{0.5, 0.6, 0.7, 0.8, 0.9});
    if (values.empty()) throw usd::ConfigError("sweep: empty delta_t axis");
    for (double v : values) {
      SweepPoint p{std::to_string(v), base};
      p.cfg.delta_t = v;
      p.cfg.ablation_id = "delta_t_" + std::to_string(v);
      points.push_back(std::move(p));
    }
  } else if (axis == "criterion") {
    std::vector<std::string> values = sweep.value(
        "criterion", std::vector<std::string>{"jsd", "entropy", "ce"});
    if (values.empty()) throw usd::ConfigError("sweep: empty criterion axis");
    for (const std::string& v : values) {
      SweepPoint p{v, base};
      if (v == "jsd")
        p.cfg.criterion = usd::SeparationCriterion::kJsd;
      else if (v == "entropy")
        p.cfg.criterion = usd::SeparationCriterion::kEntropy;
      else if (v == "ce")
        p.cfg.criterion = usd::SeparationCriterion::kCe;
      else
        throw usd::ConfigError("sweep: unknown criterion '" + v + "'");
      p.cfg.ablation_id = "criterion_" + v;
      points.push_back(std::move(p));
    }
  } else if (axis == "toggles") {
    std::vector<std::string> values = sweep.value(
        "toggles", std::vector<std::string>{"co_training", "curriculum",
                                            "triplet", "consistency", "im"});
    if (values.empty()) throw usd::ConfigError("sweep: empty toggles axis");
    points.push_back({"full", base});
    points.back().cfg.ablation_id = "full";
    for (const std::string& v : values) {
      SweepPoint p{"wo_" + v, base};
      if (v == "co_training")
        p.cfg.toggles.co_training = false;
      else if (v == "curriculum")
        p.cfg.toggles.curriculum = false;
      else if (v == "triplet")
        p.cfg.toggles.triplet = false;
      else if (v == "consistency")
        p.cfg.toggles.consistency = false;
      else if (v == "im")
        p.cfg.toggles.im = false;
      else
        throw usd::ConfigError("sweep: unknown toggle '" + v + "'");
      p.cfg.ablation_id = "wo_" + v;
      points.push_back(std::move(p));
    }
  } else {
    throw usd::ConfigError("sweep: axis must be delta_t, criterion, or toggles");
  }
  return points;
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const fs::path& out) {
  const std::vector<SweepPoint> points = sweep_points(config_path, axis);
  fs::create_directories(out);

  std::ostringstream table;
  table << "# usd sweep v1\naxis\tos_star\tunk\thos\tstatus\n";
  for (const SweepPoint& p : points) {
    std::ostringstream row;
    row << p.label << '\t';
    try {
      const usd::RunSummary s = run_adapt_once(p.cfg, out, false);
      if (s.final_eval) {
        row.precision(6);
        row << s.final_eval->os_star << '\t'
            << (s.final_eval->unk ? *s.final_eval->unk : std::nan("")) << '\t'
            << (s.final_eval->hos ? *s.final_eval->hos : std::nan(""))
            << "\tok";
      } else {
        row << "nan\tnan\tnan\tno-labels";
      }
      usd::save_summary((out / ("summary_" + p.cfg.ablation_id + ".json")).string(),
                        s);
    } catch (const std::exception& e) {
      row << "nan\tnan\tnan\tfailed: " << e.what();
    }
    table << row.str() << '\n';
    std::cerr << "sweep point " << p.label << " done\n";
  }

  const fs::path table_path = out / ("sweep_" + axis + ".tsv");
  std::ofstream ts(table_path);
  if (!ts) throw usd::ConfigError("cannot write " + table_path.string());
  ts << table.str();
  std::cout << table.str();
  return 0;
}

int cmd_report(const std::string& summary_path) {
  std::cout << usd::report_text(usd::load_summary(summary_path));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"source-free open-set adaptation runner"};
  app.require_subcommand(1);
  std::string config_path, summary_path, out_flag, axis = "delta_t";

  CLI::App* gen = app.add_subcommand("generate", "write synthetic dataset files");
  gen->add_option("config", config_path, "config file (JSON)")->required();
  gen->add_option("-o,--out", out_flag, "output directory (or $USD_OUT_DIR)");

  CLI::App* train = app.add_subcommand("train-source", "train the source model");
  train->add_option("config", config_path, "config file (JSON)")->required();
  train->add_option("-o,--out", out_flag, "output directory (or $USD_OUT_DIR)");

  CLI::App* ad = app.add_subcommand("adapt", "run the adaptation loop");
  ad->add_option("config", config_path, "config file (JSON)")->required();
  ad->add_option("-o,--out", out_flag, "output directory (or $USD_OUT_DIR)");

  CLI::App* sw = app.add_subcommand("sweep", "run one adaptation per axis value");
  sw->add_option("config", config_path, "config file (JSON)")->required();
  sw->add_option("-a,--axis", axis, "delta_t | criterion | toggles");
  sw->add_option("-o,--out", out_flag, "output directory (or $USD_OUT_DIR)");

  CLI::App* rep = app.add_subcommand("report", "print a summary as text");
  rep->add_option("summary", summary_path, "summary.json path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const fs::path out = resolve_out_dir(out_flag);
    if (gen->parsed()) return cmd_generate(config_path, out);
    if (train->parsed()) return cmd_train_source(config_path, out);
    if (ad->parsed()) return cmd_adapt(config_path, out);
    if (sw->parsed()) return cmd_sweep(config_path, axis, out);
    if (rep->parsed()) return cmd_report(summary_path);
  } catch (const usd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const usd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
