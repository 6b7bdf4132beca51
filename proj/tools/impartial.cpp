// Command-line entry points: synth, train, predict, eval, ablate, active.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "impartial/error.hpp"
#include "impartial/experiments.hpp"
#include "impartial/log.hpp"
#include "impartial/manifest.hpp"

namespace fs = std::filesystem;
using namespace impartial;

namespace {

struct TrainFlags {
  TrainConfig config;
  std::vector<double> sigma{0.25};

  TrainFlags() { config.model = ModelConfig::desk(1); }

  void add(CLI::App* app) {
    auto& c = config;
    app->add_option("--epochs", c.epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--batch", c.batch_size, "Patches per step")->capture_default_str();
    app->add_option("--patience", c.patience, "Early-stopping patience")->capture_default_str();
    app->add_option("--lr", c.adam.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--lambda", c.mixture.lambda, "Weight of the mixture loss")->capture_default_str();
    app->add_option("--sigma", sigma, "Component standard deviation (one or per channel)")
        ->capture_default_str();
    app->add_option("--depth", c.model.depth, "U-Net depth")->capture_default_str();
    app->add_option("--features", c.model.base_features, "Features of the first level")
        ->capture_default_str();
    app->add_option("--dropout", c.model.dropout_rate, "Decoder dropout rate")->capture_default_str();
    app->add_option("--components", c.model.components, "Mixture components M")->capture_default_str();
    app->add_option("--background-components", c.model.class0_components,
                    "Components modelling background")
        ->capture_default_str();
    app->add_option("--patch", c.sampling.patch_size, "Patch size")->capture_default_str();
    app->add_option("--patches-per-image", c.sampling.patches_per_image, "Patches per image (B)")
        ->capture_default_str();
    app->add_option("--scribble-bias", c.sampling.scribble_bias,
                    "Probability a patch is anchored on a scribble")
        ->capture_default_str();
    app->add_option("--val-fraction", c.sampling.validation_fraction, "Validation fraction")
        ->capture_default_str();
    app->add_option("--impute-p", c.imputation_probability, "Blind-spot probability")
        ->capture_default_str();
    app->add_option("--impute-radius", c.window_radius, "Blind-spot window radius")
        ->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  }

  TrainConfig resolve(int channels) const {
    TrainConfig c = config;
    c.model.in_channels = channels;
    c.mixture.components = c.model.components;
    c.mixture.class0_components = c.model.class0_components;
    c.mixture.sigma = sigma;
    c.validate();
    return c;
  }
};

struct NormFlags {
  NormalizationConfig config;
  void add(CLI::App* app) {
    app->add_option("--p-low", config.low_percentile, "Lower normalization percentile")
        ->capture_default_str();
    app->add_option("--p-high", config.high_percentile, "Upper normalization percentile")
        ->capture_default_str();
  }
};

struct EvalFlags {
  EvalConfig config;
  std::string mean_score = "matched";
  void add(CLI::App* app) {
    app->add_option("--tile", config.tiles.tile, "Inference tile size")->capture_default_str();
    app->add_option("--margin", config.tiles.margin, "Inference tile margin")->capture_default_str();
    app->add_option("--threshold", config.extract.threshold, "Foreground threshold")
        ->capture_default_str();
    app->add_option("--min-size", config.extract.min_size, "Smallest kept instance")
        ->capture_default_str();
    app->add_option("--mean-score", mean_score, "mIOU convention: matched or true")
        ->check(CLI::IsMember({"matched", "true"}))
        ->capture_default_str();
  }
  EvalConfig resolve() const {
    EvalConfig c = config;
    c.convention = mean_score == "true" ? MeanScore::true_instances : MeanScore::matched;
    return c;
  }
};

/// Keeps `run.json` in the output directory up to date for one command.
class ManifestScope {
 public:
  ManifestScope(CLI::App* app, const fs::path& out_dir, std::vector<fs::path> inputs,
                std::uint64_t seed, std::vector<std::string> args)
      : path_(out_dir / "run.json") {
    fs::create_directories(out_dir);
    m_.command = app->get_name();
    m_.arguments = std::move(args);
    m_.config = app->config_to_str(true, false);
    m_.seed = seed;
    for (const auto& p : inputs) m_.inputs.push_back(p.string());
    m_.input_hash = inputs.empty() ? sha1_hex("") : input_hash(inputs);
    m_.started = utc_timestamp();
    m_.status = "running";
    write_run_manifest(m_, path_);
  }

  ManifestScope(const ManifestScope&) = delete;
  ManifestScope& operator=(const ManifestScope&) = delete;

  ~ManifestScope() {
    if (done_) return;
    try {
      finish("failed");
    } catch (const std::exception&) {
    }
  }

  void output(const fs::path& p) { m_.outputs.push_back(p.string()); }

  void finish(const std::string& status = "ok") {
    m_.finished = utc_timestamp();
    m_.status = status;
    write_run_manifest(m_, path_);
    done_ = true;
  }

 private:
  fs::path path_;
  RunManifest m_;
  bool done_ = false;
};

std::vector<TrainingImage> load_training(const Dataset& d, const NormalizationConfig& norm) {
  std::vector<TrainingImage> out;
  for (const auto& e : d.entries) {
    TrainingImage t;
    t.id = e.id;
    t.image = normalize(load_image(e.image), norm);
    if (!e.scribbles.empty()) {
      t.scribbles = load_scribbles(e.scribbles);
    } else {
      t.scribbles.width = t.image.width();
      t.scribbles.height = t.image.height();
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw DataError("dataset " + d.root.string() + " has no images");
  return out;
}

std::string metrics_row(const MetricsReport& m) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << m.miou << '\t' << m.mdice << '\t' << m.ap50 << '\t' << m.f1_50 << '\t'
     << m.map;
  return os.str();
}

nlohmann::json metrics_json(const MetricsReport& m) { return nlohmann::json::parse(to_json(m)); }

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Replaces `--config FILE` by the file's flat key=value settings, placed
// before the remaining arguments of the subcommand. Keys given on the command
// line win. Values may be quoted; lists may be bracketed and comma separated.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (file.empty()) return args;
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file);
  auto given = [&](const std::string& key) {
    return std::any_of(rest.begin(), rest.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (given(key)) continue;
    for (char q : {'"', '\''}) {
      if (value.size() >= 2 && value.front() == q && value.back() == q) {
        value = value.substr(1, value.size() - 2);
      }
    }
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
      value = value.substr(1, value.size() - 2);
    }
    if (value == "true") {
      injected.push_back("--" + key);
      continue;
    }
    if (value == "false") continue;
    injected.push_back("--" + key);
    std::string token;
    std::istringstream vs(value);
    while (std::getline(vs, token, ',')) {
      std::istringstream ws(token);
      std::string part;
      while (ws >> part) injected.push_back(part);
    }
  }
  // Insert after the subcommand name (the first argument not starting with '-'
  // and not consumed by a global option).
  std::size_t pos = 0;
  while (pos < rest.size() && rest[pos].rfind("-", 0) == 0) pos += rest[pos] == "--log-level" ? 2 : 1;
  if (pos >= rest.size()) return rest;
  rest.insert(rest.begin() + std::ptrdiff_t(pos) + 1, injected.begin(), injected.end());
  return rest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised cell segmentation from scribbles"};
  app.require_subcommand(1);
  app.footer("Every subcommand also accepts --config FILE with flat key=value lines;\n"
             "flags given on the command line take precedence.");
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->capture_default_str();
  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  }
  std::function<void()> run;

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with scribbles");
  SynthConfig sc;
  fs::path synth_out;
  double synth_budget = 0.1;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--images", sc.images, "Image count")->capture_default_str();
  synth->add_option("--width", sc.width, "Image width")->capture_default_str();
  synth->add_option("--height", sc.height, "Image height")->capture_default_str();
  synth->add_option("--channels", sc.channels, "Channels")->capture_default_str();
  synth->add_option("--cells-min", sc.cells_min, "Fewest cells per image")->capture_default_str();
  synth->add_option("--cells-max", sc.cells_max, "Most cells per image")->capture_default_str();
  synth->add_option("--radius-min", sc.radius_min, "Smallest semi-axis")->capture_default_str();
  synth->add_option("--radius-max", sc.radius_max, "Largest semi-axis")->capture_default_str();
  synth->add_option("--gap", sc.gap, "Spacing between cells")->capture_default_str();
  synth->add_option("--fg-mean", sc.foreground_mean, "Foreground mean per channel")
      ->capture_default_str();
  synth->add_option("--bg-mean", sc.background_mean, "Background mean per channel")
      ->capture_default_str();
  synth->add_option("--offset", sc.subpopulation_offset, "Sub-population offset")
      ->capture_default_str();
  synth->add_option("--jitter", sc.jitter, "Per-cell intensity jitter")->capture_default_str();
  synth->add_option("--noise", sc.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--period", sc.background_period, "Background pattern wavelength")
      ->capture_default_str();
  synth->add_option("--budget", synth_budget, "Fraction of instances given scribbles (0: none)")
      ->capture_default_str();
  synth->add_option("--seed", sc.seed, "Random seed")->capture_default_str();
  synth->callback([&] {
    run = [&] {
      ManifestScope scope(synth, synth_out, {}, sc.seed, args);
      const auto samples = generate(sc);
      std::vector<ScribbleSet> scribbles;
      if (synth_budget > 0.0) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
          scribbles.push_back(simulate_scribbles(samples[i].labels,
                                                 {synth_budget, SelectionPolicy::random},
                                                 derive_seed(sc.seed, 1000 + i))
                                  .scribbles);
        }
      }
      write_dataset(synth_out, samples, scribbles);
      scope.output(synth_out / "dataset.json");
      scope.finish();
      std::cout << "wrote " << samples.size() << " images to " << synth_out.string() << "\n";
    };
  });

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train a model on a scribbled dataset");
  TrainFlags train_flags;
  NormFlags train_norm;
  fs::path train_data, train_out, warm_path;
  int checkpoint_every = 10;
  train_cmd->add_option("--data", train_data, "Dataset directory")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--warm-start", warm_path, "Checkpoint to continue from");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "Periodic checkpoint interval")
      ->capture_default_str();
  train_flags.add(train_cmd);
  train_norm.add(train_cmd);
  train_cmd->callback([&] {
    run = [&] {
      std::vector<fs::path> inputs{train_data};
      if (!warm_path.empty()) inputs.push_back(warm_path);
      ManifestScope scope(train_cmd, train_out, inputs, train_flags.config.seed, args);
      const auto data = load_training(read_dataset(train_data), train_norm.config);
      const auto config = train_flags.resolve(data.front().image.channels());
      std::optional<Model> warm;
      if (!warm_path.empty()) warm = load_checkpoint(warm_path);
      TrainOptions opt;
      opt.output_dir = train_out;
      opt.checkpoint_every = checkpoint_every;
      opt.on_epoch = [](const EpochRecord& r) {
        log::info("epoch " + std::to_string(r.epoch) + " val " + std::to_string(r.val.joint));
      };
      auto result = train(data, config, warm ? &*warm : nullptr, opt);
      save_checkpoint(result.model, train_out / "model.ckpt",
                      {result.history.best_epoch, config.seed});
      nlohmann::json summary = {{"status", result.history.status},
                                {"best_epoch", result.history.best_epoch},
                                {"best_val_joint", result.history.best_val_joint()},
                                {"epochs", result.history.epochs.size()},
                                {"validation_fallback", result.history.validation_fallback}};
      write_file_atomic(train_out / "summary.json", summary.dump(2) + "\n");
      for (const char* f : {"model.ckpt", "history.jsonl", "summary.json"}) scope.output(train_out / f);
      std::cout << summary.dump() << "\n";
      if (result.history.status == "diverged") {
        scope.finish("diverged");
        throw NumericalError("training diverged; best checkpoint kept in " + train_out.string());
      }
      scope.finish();
    };
  });

  // predict ----------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "Probability, entropy and instance maps");
  fs::path model_path, predict_data, predict_out;
  int passes = 8;
  bool no_dropout = false;
  std::uint64_t predict_seed = 0;
  NormFlags predict_norm;
  EvalFlags predict_eval;
  predict->add_option("--model", model_path, "Checkpoint")->required();
  predict->add_option("--data", predict_data, "Dataset directory")->required();
  predict->add_option("--out", predict_out, "Output directory")->required();
  predict->add_option("--passes", passes, "MC-dropout passes")->capture_default_str();
  predict->add_flag("--no-dropout", no_dropout, "Deterministic ensemble passes");
  predict->add_option("--seed", predict_seed, "Ensemble seed")->capture_default_str();
  predict_norm.add(predict);
  predict_eval.add(predict);
  predict->callback([&] {
    run = [&] {
      ManifestScope scope(predict, predict_out, {model_path, predict_data}, predict_seed, args);
      const auto model = load_checkpoint(model_path);
      const auto dataset = read_dataset(predict_data);
      const auto ev = predict_eval.resolve();
      for (const char* sub : {"prob", "entropy", "labels", "display"}) {
        fs::create_directories(predict_out / sub);
      }
      for (const auto& e : dataset.entries) {
        const auto image = normalize(load_image(e.image), predict_norm.config);
        const auto pred = predict_full(model, image, ev.tiles);
        const auto ens = mc_ensemble(model, image, passes, derive_seed(predict_seed, 0), ev.tiles,
                                     !no_dropout);
        const auto labels = extract_instances(pred.foreground, ev.extract);
        const fs::path prob = predict_out / "prob" / (e.id + ".raw");
        const fs::path ent = predict_out / "entropy" / (e.id + ".raw");
        const fs::path lbl = predict_out / "labels" / (e.id + ".lbl");
        save_map(pred.foreground, prob);
        save_map(ens.entropy, ent);
        save_labels(labels, lbl);
        write_pgm(predict_out / "display" / (e.id + "_prob.pgm"), pred.foreground.values,
                  image.width(), image.height());
        write_pgm(predict_out / "display" / (e.id + "_entropy.pgm"), ens.entropy.values,
                  image.width(), image.height(), 0.0f, float(std::log(2.0)));
        for (const auto& p : {prob, ent, lbl}) scope.output(p);
      }
      scope.finish();
      std::cout << "predicted " << dataset.entries.size() << " images\n";
    };
  });

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Instance metrics of predicted label maps");
  fs::path pred_dir, gt_data, eval_out, pred_file, gt_file;
  std::string eval_score = "matched";
  eval->add_option("--pred", pred_dir, "Directory of <id>.lbl predictions");
  eval->add_option("--data", gt_data, "Dataset with ground-truth labels");
  eval->add_option("--pred-labels", pred_file, "Single predicted label map");
  eval->add_option("--gt-labels", gt_file, "Single ground-truth label map");
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--mean-score", eval_score, "mIOU convention: matched or true")
      ->check(CLI::IsMember({"matched", "true"}))
      ->capture_default_str();
  eval->callback([&] {
    run = [&] {
      const bool single = !pred_file.empty() || !gt_file.empty();
      if (single == (!pred_dir.empty() || !gt_data.empty())) {
        throw ConfigError("use either --pred/--data or --pred-labels/--gt-labels");
      }
      if (single && (pred_file.empty() || gt_file.empty())) {
        throw ConfigError("--pred-labels and --gt-labels go together");
      }
      if (!single && (pred_dir.empty() || gt_data.empty())) {
        throw ConfigError("--pred and --data go together");
      }
      const auto convention = eval_score == "true" ? MeanScore::true_instances : MeanScore::matched;
      std::vector<fs::path> inputs = single ? std::vector<fs::path>{pred_file, gt_file}
                                            : std::vector<fs::path>{pred_dir, gt_data};
      ManifestScope scope(eval, eval_out, inputs, 0, args);
      std::vector<std::pair<std::string, MetricsReport>> per;
      if (single) {
        per.push_back({pred_file.stem().string(),
                       compute_metrics(load_labels(pred_file), load_labels(gt_file), convention)});
      } else {
        for (const auto& e : read_dataset(gt_data).entries) {
          if (e.labels.empty()) throw DataError("image '" + e.id + "' has no ground truth");
          per.push_back({e.id, compute_metrics(load_labels(pred_dir / (e.id + ".lbl")),
                                               load_labels(e.labels), convention)});
        }
      }
      std::vector<MetricsReport> reports;
      std::string lines;
      for (const auto& [id, r] : per) {
        reports.push_back(r);
        auto j = metrics_json(r);
        j["image"] = id;
        lines += j.dump() + "\n";
      }
      auto mean = metrics_json(aggregate(reports));
      mean["image"] = "mean";
      lines += mean.dump() + "\n";
      write_file_atomic(eval_out / "metrics.jsonl", lines);
      write_file_atomic(eval_out / "metrics.json", mean.dump(2) + "\n");
      scope.output(eval_out / "metrics.jsonl");
      scope.output(eval_out / "metrics.json");
      scope.finish();
      std::cout << mean.dump() << "\n";
    };
  });

  // ablate -----------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "Reconstruction-only, scribble-only and joint losses");
  TrainFlags ablate_flags;
  NormFlags ablate_norm;
  EvalFlags ablate_eval;
  fs::path ablate_data, ablate_test, ablate_out;
  ablate->add_option("--data", ablate_data, "Training dataset with scribbles")->required();
  ablate->add_option("--test", ablate_test, "Test dataset with labels")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate_flags.add(ablate);
  ablate_norm.add(ablate);
  ablate_eval.add(ablate);
  ablate->callback([&] {
    run = [&] {
      ManifestScope scope(ablate, ablate_out, {ablate_data, ablate_test},
                          ablate_flags.config.seed, args);
      const auto data = load_training(read_dataset(ablate_data), ablate_norm.config);
      const auto test = load_labelled(read_dataset(ablate_test), ablate_norm.config);
      const auto config = ablate_flags.resolve(data.front().image.channels());
      const auto rows = run_ablation(data, test, config, ablate_eval.resolve());
      std::string tsv = "variant\tlambda\tmIOU\tmDice\tAP\tF1_50\tmAP\n";
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : rows) {
        tsv += r.name + "\t" + std::to_string(r.lambda) + "\t" + metrics_row(r.eval.mean) + "\n";
        j.push_back({{"variant", r.name},
                     {"lambda", r.lambda},
                     {"status", r.history.status},
                     {"best_epoch", r.history.best_epoch},
                     {"metrics", metrics_json(r.eval.mean)}});
      }
      write_file_atomic(ablate_out / "ablation.tsv", tsv);
      write_file_atomic(ablate_out / "ablation.json", j.dump(2) + "\n");
      scope.output(ablate_out / "ablation.tsv");
      scope.output(ablate_out / "ablation.json");
      scope.finish();
      std::cout << tsv;
    };
  });

  // active -----------------------------------------------------------------
  auto* active_cmd = app.add_subcommand("active", "Two annotation rounds against a one-shot budget");
  TrainFlags active_flags;
  NormFlags active_norm;
  EvalFlags active_eval;
  ActiveConfig ac;
  bool restart = false;
  fs::path active_data, active_test, active_out;
  active_cmd->add_option("--data", active_data, "Training dataset with labels")->required();
  active_cmd->add_option("--test", active_test, "Test dataset with labels")->required();
  active_cmd->add_option("--out", active_out, "Output directory")->required();
  active_cmd->add_option("--b1", ac.round1_budget, "Round-1 budget (random)")->capture_default_str();
  active_cmd->add_option("--b2", ac.round2_budget, "Round-2 budget (entropy-ranked)")
      ->capture_default_str();
  active_cmd->add_option("--oneshot", ac.oneshot_budget, "One-shot budget (negative: b1+b2)")
      ->capture_default_str();
  active_cmd->add_option("--passes", ac.passes, "MC-dropout passes")->capture_default_str();
  active_cmd->add_flag("--restart", restart, "Train round 2 from scratch");
  active_flags.add(active_cmd);
  active_norm.add(active_cmd);
  active_eval.add(active_cmd);
  active_cmd->callback([&] {
    run = [&] {
      ManifestScope scope(active_cmd, active_out, {active_data, active_test},
                          active_flags.config.seed, args);
      ac.warm_start = !restart;
      const auto data = load_labelled(read_dataset(active_data), active_norm.config);
      const auto test = load_labelled(read_dataset(active_test), active_norm.config);
      if (data.empty()) throw DataError("training dataset has no images");
      const auto config = active_flags.resolve(data.front().image.channels());
      const auto rows = run_active(data, test, config, ac, active_eval.resolve());
      std::string tsv = "row\tbudget\tannotated\tmIOU\tmDice\tAP\tF1_50\tmAP\n";
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : rows) {
        tsv += r.name + "\t" + std::to_string(r.budget) + "\t" + std::to_string(r.annotated) +
               "\t" + metrics_row(r.eval.mean) + "\n";
        j.push_back({{"row", r.name},
                     {"budget", r.budget},
                     {"annotated", r.annotated},
                     {"status", r.history.status},
                     {"metrics", metrics_json(r.eval.mean)}});
      }
      write_file_atomic(active_out / "active.tsv", tsv);
      write_file_atomic(active_out / "active.json", j.dump(2) + "\n");
      scope.output(active_out / "active.tsv");
      scope.output(active_out / "active.json");
      scope.finish();
      std::cout << tsv;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  log::logger()->set_level(spdlog::level::from_str(log_level));
  try {
    run();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
