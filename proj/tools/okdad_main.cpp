// Command-line driver: dataset synthesis, the three training stages, teacher
// feature caching, evaluation protocols, and report merging.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "okdad/checkpoint.hpp"
#include "okdad/config.hpp"
#include "okdad/metrics.hpp"
#include "okdad/runio.hpp"
#include "okdad/runtime.hpp"
#include "okdad/synthvid.hpp"
#include "okdad/trainer.hpp"

namespace fs = std::filesystem;
using okdad::config::Config;
using json = nlohmann::ordered_json;

namespace {

std::string data_root_default() {
  const char* env = std::getenv("OKDAD_DATA_ROOT");
  return env ? env : "";
}

Config load_config(const std::string& path) {
  return path.empty() ? Config() : Config::from_file(path);
}

uint64_t resolve_seed(const Config& cfg, int64_t seed_flag) {
  return seed_flag >= 0 ? (uint64_t)seed_flag : (uint64_t)cfg.get_int("seed");
}

int cmd_synth(const std::string& config_path, const std::string& out,
              int64_t seed_flag) {
  Config cfg = load_config(config_path);
  const uint64_t seed = resolve_seed(cfg, seed_flag);
  auto m = okdad::runio::RunManifest::begin(out, "synth", cfg, seed);
  auto gen = okdad::runio::generator_config(cfg, seed);
  const std::string kind = cfg.get_str("kind");
  if (kind == "clips") {
    auto ds = okdad::synthvid::make_clip_dataset(
        gen, (int)cfg.get_int("num_train"), (int)cfg.get_int("num_test"));
    okdad::synthvid::write_dataset(ds, out);
  } else if (kind == "sequences") {
    auto ds = okdad::synthvid::make_sequence_dataset(
        gen, (int)cfg.get_int("num_train"), (int)cfg.get_int("num_test"),
        (int)cfg.get_int("actions_per_sequence"));
    okdad::synthvid::write_dataset(ds, out);
  } else {
    throw std::invalid_argument("config key 'kind' must be clips or sequences, got '" +
                                kind + "'");
  }
  m.add("dataset_hash", okdad::synthvid::dataset_hash(out));
  m.add("artifacts", json{{"dataset", out}});
  m.finish(out, "done");
  std::cout << "dataset written to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& stage_name, const std::string& config_path,
              const std::string& data, const std::string& out,
              const std::string& teacher_ckpt, const std::string& cache_path,
              int64_t seed_flag) {
  Config cfg = load_config(config_path);
  const uint64_t seed = resolve_seed(cfg, seed_flag);
  const auto stage = okdad::trainer::stage_from_string(stage_name);
  auto tcfg = okdad::runio::train_config(cfg, stage, seed);
  auto manifest = okdad::runio::RunManifest::begin(out, "train " + stage_name,
                                                   cfg, seed);
  manifest.add("data", data);
  manifest.add("dataset_hash", okdad::synthvid::dataset_hash(data));

  okdad::trainer::TrainOutcome outcome;
  if (stage == okdad::trainer::Stage::teacher) {
    auto ds = okdad::synthvid::load_clip_dataset(data);
    outcome = okdad::trainer::train_teacher(ds, tcfg, out);
  } else {
    if (teacher_ckpt.empty())
      throw std::invalid_argument("--teacher checkpoint is required for " +
                                  stage_name);
    if (cache_path.empty())
      throw std::invalid_argument("--cache file is required for " +
                                  stage_name);
    auto teacher = okdad::checkpoint::load_model(teacher_ckpt).model;
    auto cache = okdad::trainer::load_cache(cache_path);
    if (cache.dataset_hash != okdad::synthvid::dataset_hash(data))
      throw std::runtime_error(
          "cache/dataset mismatch: cache was built for a different dataset");
    manifest.add("teacher", teacher_ckpt);
    manifest.add("cache", cache_path);
    if (stage == okdad::trainer::Stage::student) {
      auto ds = okdad::synthvid::load_clip_dataset(data);
      outcome = okdad::trainer::train_student(ds, teacher, cache, tcfg, out);
    } else {
      auto ds = okdad::synthvid::load_sequence_dataset(data);
      outcome = okdad::trainer::train_okdad(ds, teacher, cache, tcfg, out);
    }
  }
  manifest.add("artifacts", json{{"best", outcome.best_checkpoint},
                                 {"last", out + "/checkpoints/last.okc"},
                                 {"log", out + "/log.csv"}});
  manifest.add("best_metric", outcome.best_metric);
  manifest.add("steps", outcome.steps);
  manifest.finish(out, "done");
  std::cout << "trained " << stage_name << ": best metric "
            << outcome.best_metric << " at epoch " << outcome.best_epoch
            << ", checkpoint " << outcome.best_checkpoint << "\n";
  return 0;
}

int cmd_cache(const std::string& teacher_ckpt, const std::string& data,
              const std::string& out) {
  auto teacher = okdad::checkpoint::load_model(teacher_ckpt).model;
  const uint64_t ds_hash = okdad::synthvid::dataset_hash(data);
  okdad::trainer::TeacherFeatureCache cache;
  if (okdad::synthvid::dataset_kind(data) == "clips") {
    auto ds = okdad::synthvid::load_clip_dataset(data);
    cache = okdad::trainer::build_teacher_cache(teacher, ds, ds_hash);
  } else {
    auto ds = okdad::synthvid::load_sequence_dataset(data);
    cache = okdad::trainer::build_teacher_cache(teacher, ds, ds_hash);
  }
  cache.checkpoint_hash = okdad::checkpoint::file_hash(teacher_ckpt);
  okdad::trainer::save_cache(cache, out);
  std::cout << "teacher feature cache written to " << out << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& protocol, const std::string& teacher_ckpt,
             double threshold, const std::string& out) {
  Config cfg;  // evaluation has no tunable config; manifest records arguments
  auto manifest = okdad::runio::RunManifest::begin(out, "eval", cfg, 0);
  manifest.add("checkpoint", ckpt);
  manifest.add("data", data);
  manifest.add("protocol", protocol);
  manifest.add("threshold", threshold);
  if (!teacher_ckpt.empty()) manifest.add("teacher", teacher_ckpt);
  manifest.add("dataset_hash", okdad::synthvid::dataset_hash(data));

  auto loaded = okdad::checkpoint::load_model(ckpt);
  okdad::metrics::EvalReport report;
  report.ratios = okdad::metrics::default_ratios();
  if (protocol == "ratios") {
    auto ds = okdad::synthvid::load_clip_dataset(data);
    report.accuracy = okdad::metrics::accuracy_at_ratios(
        loaded.model, ds, ds.splits.test, report.ratios);
    if (loaded.model.cfg.kind == okdad::nets::ModelKind::teacher)
      report.similarity = okdad::metrics::similarity_at_ratios(
          loaded.model, ds, ds.splits.test, report.ratios);
  } else if (protocol == "fidelity") {
    if (teacher_ckpt.empty())
      throw std::invalid_argument(
          "--teacher checkpoint is required for the fidelity protocol");
    auto teacher = okdad::checkpoint::load_model(teacher_ckpt).model;
    auto ds = okdad::synthvid::load_clip_dataset(data);
    report.fidelity = okdad::metrics::fidelity_at_ratios(
        teacher, loaded.model, ds, ds.splits.test, report.ratios);
  } else if (protocol == "detection") {
    auto ds = okdad::synthvid::load_sequence_dataset(data);
    report.thetas = okdad::metrics::default_thetas();
    report.map = okdad::metrics::detection_map(loaded.model, ds,
                                               ds.splits.test, report.thetas,
                                               threshold);
  } else {
    throw std::invalid_argument(
        "--protocol must be ratios, detection or fidelity; got '" + protocol +
        "'");
  }
  okdad::metrics::write_report(report, out);
  manifest.add("artifacts", json{{"report", out}});
  manifest.finish(out, "done");
  std::cout << "evaluation report written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& protocol, const std::string& teacher_ckpt,
             double threshold, const std::string& out,
             const std::string& from_manifest) {
  if (from_manifest.empty())
    return run_eval(ckpt, data, protocol, teacher_ckpt, threshold, out);
  // reproduce a previous evaluation from its manifest
  std::ifstream f(from_manifest);
  if (!f) throw std::runtime_error("missing manifest: " + from_manifest);
  json j;
  f >> j;
  return run_eval(j.at("checkpoint"), j.at("data"), j.at("protocol"),
                  j.value("teacher", ""), j.at("threshold"),
                  out.empty() ? j.at("artifacts").at("report") : out);
}

// Merge eval tables from several run directories into per-table CSVs with a
// leading run column.
int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  fs::create_directories(out);
  const std::vector<std::string> tables = {"ratios.csv", "similarity.csv",
                                           "fidelity.csv", "detection.csv"};
  int written = 0;
  for (const auto& table : tables) {
    std::ostringstream merged;
    std::string header;
    bool any = false;
    for (const auto& run : runs) {
      fs::path p = fs::path(run) / table;
      if (!fs::exists(p)) p = fs::path(run) / "report" / table;
      if (!fs::exists(p)) continue;
      std::ifstream in(p);
      std::string line;
      bool first = true;
      const std::string run_name = fs::path(run).filename().string().empty()
                                       ? run
                                       : fs::path(run).filename().string();
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
          if (header.empty()) {
            header = "run," + line;
            merged << header << "\n";
          } else if (header != "run," + line) {
            throw std::runtime_error("cannot merge " + table +
                                     ": mismatched columns across runs");
          }
          first = false;
          continue;
        }
        merged << run_name << "," << line << "\n";
      }
      any = true;
    }
    if (any) {
      std::ofstream f((fs::path(out) / table).string());
      f << merged.str();
      ++written;
    }
  }
  if (written == 0)
    throw std::runtime_error("no eval tables found in the given run dirs");
  std::cout << "merged " << written << " table(s) into " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-video knowledge-distillation pipeline: offline "
               "early-prediction teacher, online early-prediction student, "
               "and online action detector"};
  app.require_subcommand(1);

  std::string config_path, out, data = data_root_default();
  std::string teacher_ckpt, cache_path, checkpoint_path, protocol,
      from_manifest;
  int64_t seed_flag = -1;
  double threshold = 0.75;
  std::vector<std::string> run_dirs;
  std::string train_stage;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "config file");
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--seed", seed_flag, "override the config seed");

  auto* train = app.add_subcommand("train", "train one pipeline stage");
  train->add_option("stage", train_stage, "teacher|student|okdad")
      ->required()
      ->check(CLI::IsMember({"teacher", "student", "okdad"}));
  train->add_option("--config", config_path, "config file");
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--teacher", teacher_ckpt,
                    "teacher checkpoint (student/okdad)");
  train->add_option("--cache", cache_path,
                    "teacher feature cache (student/okdad)");
  train->add_option("--seed", seed_flag, "override the config seed");

  auto* cache = app.add_subcommand("cache", "build a teacher feature cache");
  cache->add_option("--teacher", teacher_ckpt, "teacher checkpoint")
      ->required();
  cache->add_option("--data", data, "dataset directory")->required();
  cache->add_option("--out", out, "output cache file")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");
  eval->add_option("--data", data, "dataset directory");
  eval->add_option("--protocol", protocol, "ratios|detection|fidelity");
  eval->add_option("--teacher", teacher_ckpt,
                   "teacher checkpoint (fidelity protocol)");
  eval->add_option("--threshold", threshold,
                   "actionness threshold for detection");
  eval->add_option("--out", out, "report directory");
  eval->add_option("--manifest", from_manifest,
                   "reproduce an earlier eval from its manifest.json");

  auto* report = app.add_subcommand("report", "merge eval tables across runs");
  report->add_option("runs", run_dirs, "run/report directories")->required();
  report->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(config_path, out, seed_flag);
    if (*train)
      return cmd_train(train_stage, config_path, data, out, teacher_ckpt,
                       cache_path, seed_flag);
    if (*cache) return cmd_cache(teacher_ckpt, data, out);
    if (*eval)
      return cmd_eval(checkpoint_path, data, protocol, teacher_ckpt,
                      threshold, out, from_manifest);
    if (*report) return cmd_report(run_dirs, out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
