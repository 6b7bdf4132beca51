#include "impartial/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace fs = std::filesystem;

namespace impartial {

template <class T>
void adam_update(std::span<T> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& config) {
  if (params.size() != grads.size()) throw ConfigError("parameter/gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step));
  const double c2 = 1.0 - std::pow(b2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = T(double(params[i]) - config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon));
  }
}

template void adam_update<float>(std::span<float>, std::span<const double>, AdamState&,
                                 const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, AdamState&,
                                  const AdamConfig&);

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 1) throw ConfigError("epoch count must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(imputation_probability >= 0.0 && imputation_probability <= 1.0)) {
    throw ConfigError("imputation probability must lie in [0,1]");
  }
  if (window_radius < 1) throw ConfigError("window radius must be >= 1");
  model.validate();
  mixture.validate(model.in_channels);
  if (mixture.components != model.components ||
      mixture.class0_components != model.class0_components) {
    throw ConfigError("mixture partition does not match the model heads");
  }
  sampling.validate();
  if (sampling.patch_size % model.size_multiple() != 0) {
    throw ConfigError("patch size must be a multiple of 2^depth");
  }
}

double TrainHistory::best_val_joint() const {
  for (const auto& e : epochs) {
    if (e.epoch == best_epoch) return e.val.joint;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

namespace {

bool same_report(const LossReport& a, const LossReport& b) {
  return a.mix == b.mix && a.seg[0] == b.seg[0] && a.seg[1] == b.seg[1] && a.joint == b.joint &&
         a.imputed == b.imputed && a.scribbled[0] == b.scribbled[0] &&
         a.scribbled[1] == b.scribbled[1];
}

void accumulate(LossReport& acc, const LossReport& r) {
  acc.mix += r.mix;
  acc.seg[0] += r.seg[0];
  acc.seg[1] += r.seg[1];
  acc.joint += r.joint;
  acc.imputed += r.imputed;
  acc.scribbled[0] += r.scribbled[0];
  acc.scribbled[1] += r.scribbled[1];
  acc.clamped += r.clamped;
}

LossReport mean_of(LossReport acc, int steps) {
  if (steps == 0) return acc;
  acc.mix /= steps;
  acc.seg[0] /= steps;
  acc.seg[1] /= steps;
  acc.joint /= steps;
  return acc;
}

nlohmann::json report_json(const LossReport& r) {
  return {{"mix", r.mix},         {"seg0", r.seg[0]},          {"seg1", r.seg[1]},
          {"joint", r.joint},     {"imputed", r.imputed},      {"scribbled0", r.scribbled[0]},
          {"scribbled1", r.scribbled[1]}, {"clamped", r.clamped}};
}

}  // namespace

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  if (best_epoch != other.best_epoch || status != other.status ||
      epochs.size() != other.epochs.size()) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (epochs[i].epoch != other.epochs[i].epoch ||
        !same_report(epochs[i].train, other.epochs[i].train) ||
        !same_report(epochs[i].val, other.epochs[i].val)) {
      return false;
    }
  }
  return true;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"train", report_json(r.train)},
                      {"val", report_json(r.val)},
                      {"seconds", r.seconds}};
  return j.dump();
}

LossReport evaluate_patches(const Model& model, std::span<const PatchPair> patches,
                            std::span<const BlindSpotResult<float>> blind,
                            const MixtureConfig& mixture) {
  PatchLossSums totals;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto heads = model.forward(blind[i].imputed);
    totals += patch_loss(heads, patches[i].image, blind[i].mask, patches[i].scribbles, mixture);
  }
  return finalize(totals, mixture.lambda);
}

TrainResult train(std::span<const TrainingImage> dataset, const TrainConfig& config,
                  const Model* warm_start, const TrainOptions& options) {
  config.validate();
  for (const auto& img : dataset) {
    if (!img.image.normalized()) throw DataError("training image '" + img.id + "' is not normalized");
    if (img.image.channels() != config.model.in_channels) {
      throw DataError("training image '" + img.id + "' has " +
                      std::to_string(img.image.channels()) + " channels, model expects " +
                      std::to_string(config.model.in_channels));
    }
  }
  Model model = warm_start ? *warm_start : Model::build(config.model, config.seed);
  if (warm_start && !(warm_start->config() == config.model)) {
    throw ConfigError("warm-start model configuration differs from the training configuration");
  }

  const PatchSplit split = sample_patches(dataset, config.sampling, derive_seed(config.seed, 1));
  if (split.train.empty()) throw DataError("no training patches");

  TrainHistory history;
  std::vector<BlindSpotResult<float>> val_blind;
  {
    Rng vr = make_rng(config.seed, 2);
    for (const auto& p : split.val) {
      val_blind.push_back(
          blindspot(p.image, config.imputation_probability, config.window_radius, vr));
    }
  }
  if (split.val.empty()) {
    log::warn("empty validation set; early stopping uses the training loss");
    history.validation_fallback = true;
  }

  std::ofstream history_log;
  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    history_log.open(options.output_dir / "history.jsonl", std::ios::trunc);
  }

  const double lambda = config.mixture.lambda;
  AdamState adam;
  Rng order_rng = make_rng(config.seed, 3);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::vector<float> best_params(model.parameters().begin(), model.parameters().end());
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> grad(model.parameter_count());
  long global_step = 0;
  history.status = "completed";

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (options.cancel && options.cancel->load()) {
      history.status = "cancelled";
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), order_rng);
    LossReport epoch_acc;
    int steps = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(config.batch_size));
      Rng step_rng = make_rng(config.seed, 1000 + std::uint64_t(global_step++));
      std::vector<BlindSpotResult<float>> blind;
      PatchLossSums totals;
      for (std::size_t b = start; b < end; ++b) {
        const auto& p = split.train[order[b]];
        blind.push_back(
            blindspot(p.image, config.imputation_probability, config.window_radius, step_rng));
        totals += count_terms(blind.back().mask, p.scribbles);
      }
      const LossWeights w = loss_weights(totals, lambda);
      std::fill(grad.begin(), grad.end(), 0.0);
      PatchLossSums sums;
      HeadOutputs<float> head_grad;
      ForwardCache<float> cache;
      for (std::size_t b = start; b < end; ++b) {
        const auto& p = split.train[order[b]];
        const auto& bs = blind[b - start];
        const auto heads = model.forward(bs.imputed, &step_rng, &cache);
        head_grad = HeadOutputs<float>::zeros_like(heads);
        sums += patch_loss(heads, p.image, bs.mask, p.scribbles, config.mixture, &w, &head_grad);
        model.backward(cache, head_grad, grad);
      }
      const LossReport report = finalize(sums, lambda);
      try {
        if (!std::isfinite(report.joint)) throw NumericalError("non-finite joint loss");
        check_finite_gradients(model, std::span<const double>(grad));
      } catch (const NumericalError& e) {
        log::warn(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " +
                  e.what());
        diverged = true;
        break;
      }
      adam_update(model.parameters(), std::span<const double>(grad), adam, config.adam);
      accumulate(epoch_acc, report);
      ++steps;
    }
    if (diverged) {
      history.status = "diverged";
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = mean_of(epoch_acc, steps);
    rec.val = history.validation_fallback
                  ? rec.train
                  : evaluate_patches(model, split.val, val_blind, config.mixture);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.val.joint)) {
      history.status = "diverged";
      break;
    }
    history.epochs.push_back(rec);
    if (history_log) history_log << to_json_line(rec) << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(rec);

    if (rec.val.joint < best_val) {
      best_val = rec.val.joint;
      history.best_epoch = epoch;
      best_params.assign(model.parameters().begin(), model.parameters().end());
      if (!options.output_dir.empty()) {
        save_checkpoint(model, options.output_dir / "best.ckpt", {epoch, config.seed});
      }
    }
    if (!options.output_dir.empty() && options.checkpoint_every > 0 &&
        epoch % options.checkpoint_every == 0) {
      save_checkpoint(model, options.output_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"),
                      {epoch, config.seed});
    }
    if (epoch - history.best_epoch >= config.patience) {
      history.status = "early_stopped";
      break;
    }
  }

  std::copy(best_params.begin(), best_params.end(), model.parameters().begin());
  return {std::move(model), std::move(history)};
}

}  // namespace impartial
