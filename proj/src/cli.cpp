// SPDX-License-Identifier: Apache-2.0

#include "aqtc/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

#include "aqtc/checkpoint.hpp"
#include "aqtc/config.hpp"
#include "aqtc/data_io.hpp"
#include "aqtc/error.hpp"
#include "aqtc/gradcheck.hpp"
#include "aqtc/trainer.hpp"

namespace aqtc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Config layering shared by every subcommand: defaults, then --config,
/// then --set key=value in order, then the named flags.
struct ConfigSource {
  std::string file;
  std::vector<std::string> assignments;
  std::vector<std::pair<std::string, std::optional<std::string>>> flags;  // key, raw value

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON config file");
    cmd->add_option("--set", assignments, "Override one config key (key=value, repeatable)");
  }

  void flag(CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
    flags.emplace_back(key, std::nullopt);
    // Stable storage: the vector is sized before parsing starts.
    cmd->add_option(name, flags.back().second, help);
  }

  json resolve(json base, const std::string& context) const {
    if (!file.empty()) base = merge_config(std::move(base), read_json_file(file), context + " (" + file + ")");
    for (const auto& a : assignments) {
      auto [key, value] = parse_assignment(a);
      base = merge_config(std::move(base), json{{key, value}}, context + " (--set)");
    }
    for (const auto& [key, raw] : flags) {
      if (!raw) continue;
      auto [_, value] = parse_assignment(key + "=" + *raw);
      base = merge_config(std::move(base), json{{key, value}}, context);
    }
    return base;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError(DataError::Kind::kIo, "cannot create output directory '" + out.string() + "'");
}

fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

std::vector<FeatureBundle> pick(const std::vector<FeatureBundle>& all, const std::vector<std::size_t>& idx) {
  std::vector<FeatureBundle> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

json report_json(const BucketReport& r) {
  json rows = json::array();
  for (const auto& b : r.buckets) rows.push_back({{"bucket", b.label}, {"metrics", b.report}});
  return {{"overall", r.overall}, {"buckets", rows}, {"omitted", r.omitted}};
}

std::string report_text(const BucketReport& r) {
  return "overall  " + format_report(r.overall) + "\n\n" + format_bucket_grid(r);
}

// ---------------------------------------------------------------------------

int cmd_synth(const ConfigSource& src, const std::string& out, std::ostream& os) {
  const json resolved = src.resolve(json(SyntheticConfig{}), "synth config");
  const auto cfg = resolved.get<SyntheticConfig>();
  cfg.validate();

  const auto dataset = generate_synthetic(cfg);
  const auto records = nearest_candidate_oracle(dataset, cfg.buckets);
  const auto oracle = bucket_report(records, cfg.buckets);
  std::map<std::string, int> per_bucket;
  for (const auto& label : cfg.buckets.labels()) per_bucket[label] = 0;
  for (const auto& b : dataset.data.samples) ++per_bucket[cfg.buckets.label_for(b.button_count)];

  prepare_out(out);
  write_json(fs::path(out) / "resolved_config.json", {{"command", "synth"}, {"synth", resolved}});
  const auto manifest = save_dataset(out, dataset.data);
  write_json(fs::path(out) / "generation_report.json",
             {{"samples", dataset.data.samples.size()}, {"bucket_counts", per_bucket}, {"oracle", report_json(oracle)}});
  os << "wrote " << dataset.data.samples.size() << " samples to " << manifest.string() << "\n";
  os << "nearest-candidate oracle  " << format_report(oracle.overall) << "\n";
  return kExitOk;
}

struct TrainInputs {
  json resolved;
  TrainConfig config;
  Dataset data;
  std::vector<FeatureBundle> train, validation;
};

TrainInputs load_train_inputs(const ConfigSource& src, const std::string& data, const char* context) {
  TrainInputs in;
  in.resolved = src.resolve(json(TrainConfig{}), context);
  in.config = in.resolved.get<TrainConfig>();
  in.config.validate();
  if (data.empty()) throw ConfigError("--data is required");
  in.data = load_dataset(manifest_path(data));
  if (in.data.samples.empty()) throw ContractError("dataset has no samples");
  in.config.model_config(in.data.d_v, in.data.d_t).validate();
  const auto split =
      stratified_split(in.data.samples, in.config.val_fraction, in.config.seed, in.config.buckets);
  in.train = pick(in.data.samples, split.train);
  in.validation = pick(in.data.samples, split.validation);
  if (in.train.empty() || in.validation.empty())
    throw ContractError("split left an empty " + std::string(in.train.empty() ? "training" : "validation") +
                        " set; adjust val_fraction");
  return in;
}

template <typename Scalar>
struct TrainOutcome {
  TrainResult<Scalar> result;
  BucketReport validation;
};

template <typename Scalar>
TrainOutcome<Scalar> train_and_report(const TrainInputs& in, const TrainConfig& config, std::ostream& os,
                                      const std::string& tag) {
  auto result = train<Scalar>(config, in.data.d_v, in.data.d_t, in.train, in.validation, [&](const EpochRecord& e) {
    char line[256];
    std::snprintf(line, sizeof line, "%sepoch %3d  loss %.5f  val %s\n", tag.c_str(), e.epoch, e.train_loss,
                  format_report(e.validation).c_str());
    os << line << std::flush;
  });
  const auto eval = evaluate(*result.model, in.validation, config.buckets, config.workers);
  auto report = bucket_report(eval.records, config.buckets);
  return {std::move(result), std::move(report)};
}

template <typename Scalar>
void write_training_outputs(const fs::path& dir, const TrainInputs& in, const TrainConfig& config,
                            const TrainOutcome<Scalar>& outcome) {
  prepare_out(dir);
  save_checkpoint(*outcome.result.model, dir / "checkpoint", json(config), outcome.result.log.best_epoch,
                  config.seed);
  write_text(dir / "train_log.jsonl", train_log_jsonl(outcome.result.log));
  write_text(dir / "timing.jsonl", timing_jsonl(outcome.result.log));
  write_text(dir / "validation_report.txt", "best epoch " + std::to_string(outcome.result.log.best_epoch) + "\n" +
                                                report_text(outcome.validation));
  json split = {{"train", json::array()}, {"validation", json::array()}};
  for (const auto& b : in.train) split["train"].push_back(b.id);
  for (const auto& b : in.validation) split["validation"].push_back(b.id);
  write_json(dir / "validation_report.json", {{"best_epoch", outcome.result.log.best_epoch},
                                              {"report", report_json(outcome.validation)},
                                              {"split", split}});
}

template <typename Scalar>
int train_with(const TrainInputs& in, const fs::path& out, std::ostream& os) {
  const auto outcome = train_and_report<Scalar>(in, in.config, os, "");
  write_training_outputs(out, in, in.config, outcome);
  os << "best epoch " << outcome.result.log.best_epoch << "\n" << report_text(outcome.validation);
  return kExitOk;
}

int cmd_train(const ConfigSource& src, const std::string& data, const std::string& out, std::ostream& os) {
  const auto in = load_train_inputs(src, data, "train config");
  prepare_out(out);
  write_json(fs::path(out) / "resolved_config.json", {{"command", "train"}, {"data", data}, {"train", in.resolved}});
  return in.config.precision == Precision::kFloat64 ? train_with<double>(in, out, os) : train_with<float>(in, out, os);
}

template <typename Scalar>
std::pair<std::string, MetricsReport> ablation_arm(const TrainInputs& in, StepVariant variant, const fs::path& out,
                                                   std::ostream& os) {
  auto config = in.config;
  config.step_variant = variant;
  const auto name = to_string(variant);
  const auto outcome = train_and_report<Scalar>(in, config, os, "[" + name + "] ");
  write_training_outputs(out / name, in, config, outcome);
  return {name == "gru" ? "GRU" : "MLP", outcome.validation.overall};
}

int cmd_ablate(const ConfigSource& src, const std::string& data, const std::string& out, std::ostream& os) {
  const auto in = load_train_inputs(src, data, "ablate config");
  prepare_out(out);
  write_json(fs::path(out) / "resolved_config.json", {{"command", "ablate"}, {"data", data}, {"train", in.resolved}});
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (auto v : {StepVariant::kGru, StepVariant::kMlp}) {
    rows.push_back(in.config.precision == Precision::kFloat64 ? ablation_arm<double>(in, v, out, os)
                                                              : ablation_arm<float>(in, v, out, os));
  }
  const auto table = format_comparison(rows);
  write_text(fs::path(out) / "ablation.txt", table);
  json doc = json::object();
  for (const auto& [name, m] : rows) doc[name] = m;
  write_json(fs::path(out) / "ablation.json", doc);
  os << "\n" << table;
  return kExitOk;
}

template <typename Scalar>
BucketReport eval_with(const std::string& checkpoint, const Dataset& data, const BucketScheme& scheme, int workers) {
  const auto model = load_model<Scalar>(checkpoint);
  const auto eval = evaluate(*model, data.samples, scheme, workers);
  return bucket_report(eval.records, scheme);
}

int cmd_eval(const ConfigSource& src, const std::string& checkpoint, const std::string& data, const std::string& out,
             std::ostream& os) {
  json base = {{"bucket_bounds", BucketScheme{}.upper_bounds}, {"workers", 1}};
  const json resolved = src.resolve(base, "eval config");
  BucketScheme scheme;
  int workers = 1;
  try {
    scheme.upper_bounds = resolved.at("bucket_bounds").get<std::vector<int>>();
    workers = resolved.at("workers").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  scheme.validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (data.empty()) throw ConfigError("--data is required");
  const auto info = read_checkpoint_info(checkpoint);
  const auto dataset = load_dataset(manifest_path(data));
  if (dataset.samples.empty()) throw ContractError("evaluate: dataset has no samples");
  if (dataset.d_v != info.model.d_v || dataset.d_t != info.model.d_t)
    throw DataError(DataError::Kind::kDimMismatch,
                    "dataset widths (d_v=" + std::to_string(dataset.d_v) + ", d_t=" + std::to_string(dataset.d_t) +
                        ") do not match the checkpoint (d_v=" + std::to_string(info.model.d_v) +
                        ", d_t=" + std::to_string(info.model.d_t) + ")");

  const auto report = info.dtype == "f64" ? eval_with<double>(checkpoint, dataset, scheme, workers)
                                          : eval_with<float>(checkpoint, dataset, scheme, workers);
  prepare_out(out);
  write_json(fs::path(out) / "resolved_config.json",
             {{"command", "eval"}, {"checkpoint", checkpoint}, {"data", data}, {"eval", resolved}});
  write_text(fs::path(out) / "report.txt", report_text(report));
  write_json(fs::path(out) / "report.json", report_json(report));
  os << report_text(report);
  return kExitOk;
}

int cmd_gradcheck(const ConfigSource& src, const std::string& out, std::ostream& os) {
  const json resolved = src.resolve(json(GradCheckConfig{}), "gradcheck config");
  const auto cfg = resolved.get<GradCheckConfig>();
  if (!(cfg.tolerance > 0)) throw ConfigError("tolerance must be positive");
  const auto start = std::chrono::steady_clock::now();
  const auto report = model_grad_check(cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::string text;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %12s %12s\n", "group", "checked", "skipped", "max rel", "max abs");
  text += line;
  json groups = json::array();
  for (const auto& g : report.by_group()) {
    std::snprintf(line, sizeof line, "%-10s %8zu %8zu %12.3e %12.3e\n", g.name.c_str(), g.checked, g.skipped,
                  g.max_rel_error, g.max_abs_error);
    text += line;
    groups.push_back({{"group", g.name},
                      {"checked", g.checked},
                      {"skipped", g.skipped},
                      {"max_rel_error", g.max_rel_error},
                      {"max_abs_error", g.max_abs_error}});
  }
  const bool ok = report.passed(cfg.tolerance);
  std::snprintf(line, sizeof line, "max relative error %.3e (tolerance %.1e): %s\n", report.max_rel_error(),
                cfg.tolerance, ok ? "pass" : "FAIL");
  text += line;
  if (!report.failure.empty()) text += report.failure + "\n";

  prepare_out(out);
  write_json(fs::path(out) / "resolved_config.json", {{"command", "gradcheck"}, {"gradcheck", resolved}});
  write_json(fs::path(out) / "gradcheck_report.json", {{"groups", groups},
                                                       {"max_rel_error", report.max_rel_error()},
                                                       {"passed", ok},
                                                       {"failure", report.failure}});
  os << text;
  std::snprintf(line, sizeof line, "%.2f s\n", seconds);
  os << line;
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cascaded cross-attention model for multi-step button answering"};
  app.name("aqtc");
  app.require_subcommand(1);

  std::string out_dir, data, checkpoint;

  ConfigSource synth_src;
  auto* synth = app.add_subcommand("synth", "Generate a planted-signal synthetic dataset");
  synth_src.flags.reserve(16);
  synth_src.attach(synth);
  synth_src.flag(synth, "--seed", "seed", "Generator seed");
  synth_src.flag(synth, "--n-samples", "n_samples", "Number of samples");
  synth_src.flag(synth, "--frames", "frames", "Video frames per sample");
  synth_src.flag(synth, "--frame-multiplier", "frame_multiplier", "Repeat each frame this many times");
  synth_src.flag(synth, "--sentences", "sentences", "Script sentences per sample");
  synth_src.flag(synth, "--steps", "steps", "Answer steps per sample");
  synth_src.flag(synth, "--candidates", "candidates", "Candidates per step (0: one per button)");
  synth_src.flag(synth, "--d", "d", "Feature width");
  synth_src.flag(synth, "--noise-sigma", "noise_sigma", "Noise on the planted truth rows");
  synth_src.flag(synth, "--max-buttons", "max_buttons", "Largest button count");
  synth->add_option("--out", out_dir, "Output directory")->required();

  ConfigSource train_src;
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset and keep the best epoch");
  ConfigSource ablate_src;
  auto* ablate = app.add_subcommand("ablate", "Train the GRU and MLP step networks and compare them");
  for (auto [cmd, src] : {std::pair{train_cmd, &train_src}, std::pair{ablate, &ablate_src}}) {
    src->flags.reserve(16);
    src->attach(cmd);
    src->flag(cmd, "--epochs", "epochs", "Training epochs");
    src->flag(cmd, "--batch-size", "batch_size", "Samples per SGD step");
    src->flag(cmd, "--lr", "learning_rate", "SGD learning rate");
    src->flag(cmd, "--d-h", "d_h", "Hidden width");
    src->flag(cmd, "--heads", "heads", "Attention heads");
    src->flag(cmd, "--seed", "seed", "Initialisation and split seed");
    src->flag(cmd, "--shuffle-seed", "shuffle_seed", "Epoch shuffle seed (-1: derived from --seed)");
    src->flag(cmd, "--precision", "precision", "f32 or f64");
    src->flag(cmd, "--val-fraction", "val_fraction", "Validation share of each bucket");
    src->flag(cmd, "--workers", "workers", "Evaluation threads");
    if (cmd == train_cmd) src->flag(cmd, "--step-variant", "step_variant", "gru or mlp");
    cmd->add_option("--data", data, "Dataset manifest or directory")->required();
    cmd->add_option("--out", out_dir, "Output directory")->required();
  }

  ConfigSource eval_src;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with the button-count grid");
  eval_src.flags.reserve(4);
  eval_src.attach(eval);
  eval_src.flag(eval, "--workers", "workers", "Evaluation threads");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset manifest or directory")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();

  ConfigSource grad_src;
  auto* grad = app.add_subcommand("gradcheck", "Compare reverse-mode gradients with finite differences");
  grad_src.flags.reserve(8);
  grad_src.attach(grad);
  grad_src.flag(grad, "--seed", "seed", "Model and input seed");
  grad_src.flag(grad, "--d-h", "d_h", "Hidden width");
  grad_src.flag(grad, "--heads", "heads", "Attention heads");
  grad_src.flag(grad, "--step-variant", "step_variant", "gru or mlp");
  grad_src.flag(grad, "--tolerance", "tolerance", "Largest accepted relative error");
  grad->add_option("--out", out_dir, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(synth_src, out_dir, out);
    if (*train_cmd) return cmd_train(train_src, data, out_dir, out);
    if (*ablate) return cmd_ablate(ablate_src, data, out_dir, out);
    if (*eval) return cmd_eval(eval_src, checkpoint, data, out_dir, out);
    if (*grad) return cmd_gradcheck(grad_src, out_dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  }
  return kExitConfig;
}

}  // namespace aqtc
