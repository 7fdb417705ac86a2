// capulse command-line tool: gen, train, score, eval, inspect.
//
// Precedence for settings: built-in defaults, then --config, then each
// --set key=value in order, then the dedicated flags (--seed, --out, --data,
// --checkpoint). Failures print one JSON object on stderr and exit nonzero.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capulse/checkpoint.hpp"
#include "capulse/config.hpp"
#include "capulse/eval.hpp"
#include "capulse/pipeline.hpp"
#include "capulse/series.hpp"
#include "capulse/spectral.hpp"
#include "capulse/synth.hpp"

namespace fs = std::filesystem;
using namespace capulse;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kInput = 4, kDiverged = 5 };

struct CliError : Error {
  CliError(ExitCode c, std::string k, const std::string& m) : Error(m), code(c), kind(std::move(k)) {}
  ExitCode code;
  std::string kind;
};

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data, checkpoint;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--set", f.overrides, "override one config key (key=value), repeatable")->take_all();
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--data", f.data, "input CSV");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint JSON");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw CliError(kInput, "missing_file", "config file not found: " + f.config_path);
    load_config_file(c, f.config_path);
  }
  for (const auto& o : f.overrides) apply_override(c, o);
  if (f.seed) c.train.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.data) c.data = *f.data;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  return c;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw CliError(kUsage, "usage", what + " path is required");
  if (!fs::is_regular_file(path)) throw CliError(kInput, "missing_file", what + " not found: " + path);
}

std::string prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
  write_config(c, (fs::path(c.out) / "config.txt").string());
  return c.out;
}

int cmd_gen(const RunConfig& cfg) {
  auto sc = cfg.synth;
  sc.seed = cfg.train.seed;
  const auto result = synth::generate(sc);
  const auto dir = prepare_out(cfg);
  const auto path = (fs::path(dir) / "data.csv").string();
  save_csv(result.series, path);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << path << '\n';
  return kOk;
}

int cmd_train(const RunConfig& cfg) {
  require_file(cfg.data, "data");
  const auto series = load_csv(cfg.data, cfg.label_column);
  const auto dir = prepare_out(cfg);
  TrainedRun run;
  try {
    run = train_on_series(series, cfg.train, cfg.split, cfg.standardize, [](const EpochRecord& r, bool improved) {
      std::cerr << "epoch " << r.epoch << " l_nf=" << r.nf << " l_sim=" << r.sim << " l_ind=" << r.ind
                << " val_nll=" << r.val_nll << (improved ? " *" : "") << '\n';
    });
  } catch (const TrainingDiverged& e) {
    throw CliError(kDiverged, "diverged", e.what());
  }
  save_checkpoint(run.model, (fs::path(dir) / "checkpoint.json").string());
  write_history_csv(run.fit, (fs::path(dir) / "history.csv").string());
  std::cout << "global_period " << run.model.global_period << "\nmask_period " << run.model.mask.period()
            << "\nbest_epoch " << run.fit.best_epoch << "\nbest_val_nll " << std::setprecision(10)
            << run.fit.best_val_nll << '\n';
  return kOk;
}

int cmd_score(const RunConfig& cfg) {
  require_file(cfg.checkpoint, "checkpoint");
  require_file(cfg.data, "data");
  auto model = load_checkpoint(cfg.checkpoint);
  const auto series = load_csv(cfg.data, cfg.label_column);
  if (series.dims() != model.input_dim)
    throw CliError(kInput, "shape", "data has " + std::to_string(series.dims()) + " channels, checkpoint expects " +
                                        std::to_string(model.input_dim));
  if (series.length() < model.config.window)
    throw CliError(kInput, "shape", "series shorter than the window length " + std::to_string(model.config.window));
  const auto dir = prepare_out(cfg);
  const auto scored = score_points(model, model.standardization.apply(series.values), cfg.score_stride);

  eval::ReportInput in;
  in.timestamps = series.timestamps;
  in.scores = scored.points;
  in.labels = series.labels;
  in.diagnostics = scored.diagnostics;
  const auto b = split_bounds(series.length(), cfg.split);
  in.split.resize(series.length());
  for (std::size_t t = 0; t < series.length(); ++t) in.split[t] = t < b.train_end ? "train" : t < b.val_end ? "val" : "test";
  in.metadata = {{"checkpoint", cfg.checkpoint}, {"data", cfg.data}, {"score_stride", cfg.score_stride}};
  const auto summary = eval::emit_reports(dir, in);
  if (summary.contains("auroc")) std::cout << "auroc " << std::setprecision(6) << summary["auroc"].get<double>() << '\n';
  std::cout << (fs::path(dir) / "scores.csv").string() << '\n';
  return kOk;
}

// Reads a scores.csv produced by `score`; labels come from its own label
// column or, failing that, from the --data CSV.
int cmd_eval(const RunConfig& cfg, const std::string& scores_path) {
  require_file(scores_path, "scores");
  std::ifstream in(scores_path);
  std::string line;
  if (!std::getline(in, line)) throw CliError(kInput, "parse", "empty scores file: " + scores_path);
  const auto header = config_detail::split(line, ',');
  auto col = [&](const std::string& name) -> long {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  const long score_col = col("score"), label_col = col("label"), split_col = col("split");
  if (score_col < 0) throw CliError(kInput, "parse", "scores file has no 'score' column");
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::string> split;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (config_detail::trim(line).empty()) continue;
    const auto f = config_detail::split(line, ',');
    if (f.size() != header.size())
      throw CliError(kInput, "parse", scores_path + ":" + std::to_string(lineno) + ": wrong field count");
    try {
      scores.push_back(std::stod(f[static_cast<std::size_t>(score_col)]));
      if (label_col >= 0) labels.push_back(std::stoi(f[static_cast<std::size_t>(label_col)]));
    } catch (const std::exception&) {
      throw CliError(kInput, "parse", scores_path + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (split_col >= 0) split.push_back(f[static_cast<std::size_t>(split_col)]);
  }
  if (label_col < 0) {
    require_file(cfg.data, "labels (--data)");
    const auto series = load_csv(cfg.data, cfg.label_column);
    if (!series.labels) throw CliError(kInput, "missing_labels", "no label column in " + cfg.data);
    labels = *series.labels;
  }
  if (labels.size() != scores.size())
    throw CliError(kInput, "shape", "label count " + std::to_string(labels.size()) + " differs from score count " +
                                        std::to_string(scores.size()));
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0 || pos == labels.size()) throw CliError(kInput, "labels", "labels must contain both classes");

  nlohmann::json summary = {{"scores", scores_path}, {"points", scores.size()}, {"anomalies", pos},
                            {"auroc", eval::auroc(scores, labels)}};
  if (!split.empty()) summary["auroc_by_split"] = eval::auroc_by_split(scores, labels, split);
  const auto dir = prepare_out(cfg);
  std::ofstream(fs::path(dir) / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump() << '\n';
  return kOk;
}

int cmd_inspect(const RunConfig& cfg, bool write_report) {
  require_file(cfg.data, "data");
  const auto raw = load_csv(cfg.data, cfg.label_column);
  const auto prepared = prepare(raw, cfg.split, cfg.standardize);
  const auto& values = prepared.series.values;
  const std::size_t pg = prepared.global_period;
  nlohmann::json report = {{"global_period", pg}};

  const auto ps = spectral::top_k_periods(values, cfg.train.top_k);
  report["top_k_periods"] = ps.periods;
  report["top_k_weights"] = ps.weights;
  report["top_k_short_count"] = ps.short_count;
  nlohmann::json fs_per_channel = nlohmann::json::object();
  for (std::size_t d = 0; d < raw.dims(); ++d) {
    std::vector<double> ch(values.rows());
    for (std::size_t t = 0; t < values.rows(); ++t) ch[t] = values(t, d);
    fs_per_channel[raw.dim_names[d]] =
        (pg >= 2 && ch.size() >= 2 * pg) ? nlohmann::json(spectral::periodicity_strength(ch, pg)) : nlohmann::json(nullptr);
  }
  report["periodicity_strength"] = fs_per_channel;

  std::cout << "global_period " << pg << '\n';
  std::cout << "top_k_periods";
  for (std::size_t p : ps.periods) std::cout << ' ' << p;
  std::cout << '\n';
  for (auto& [name, v] : fs_per_channel.items())
    std::cout << "periodicity_strength " << name << ' ' << (v.is_null() ? std::string("null") : v.dump()) << '\n';
  if (write_report) {
    const auto dir = prepare_out(cfg);
    std::ofstream(fs::path(dir) / "inspect.json") << report.dump(2) << '\n';
  }
  return kOk;
}

void report_error(const std::string& kind, const std::string& message, const std::string& key = "") {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodicity-aware density-based anomaly detection for multivariate time series"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string scores_path;
  auto* gen = app.add_subcommand("gen", "generate a labelled synthetic dataset");
  auto* train = app.add_subcommand("train", "fit a model, write checkpoint and history");
  auto* score = app.add_subcommand("score", "score a series with a checkpoint");
  auto* evaluate = app.add_subcommand("eval", "compute AUROC from a scores file");
  auto* inspect = app.add_subcommand("inspect", "report the global period, top-k periods and periodicity strength");
  for (auto* c : {gen, train, score, evaluate, inspect}) add_common(c, flags);
  evaluate->add_option("--scores", scores_path, "scores.csv written by `score`")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return kUsage;
  }

  try {
    const auto cfg = resolve(flags);
    if (*gen) return cmd_gen(cfg);
    if (*train) return cmd_train(cfg);
    if (*score) return cmd_score(cfg);
    if (*evaluate) return cmd_eval(cfg, scores_path);
    if (*inspect) return cmd_inspect(cfg, flags.out.has_value());
  } catch (const CliError& e) {
    report_error(e.kind, e.what());
    return e.code;
  } catch (const ConfigError& e) {
    report_error("config", e.what(), e.key());
    return kConfig;
  } catch (const ParseError& e) {
    report_error("parse", e.what());
    return kInput;
  } catch (const std::exception& e) {
    report_error("failure", e.what());
    return kFailure;
  }
  return kUsage;
}
