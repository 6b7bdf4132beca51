#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "impartial/losses.hpp"
#include "impartial/model.hpp"
#include "impartial/sampling.hpp"

namespace impartial {

struct AdamConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// One Adam step with bias correction. Moments are kept in double.
template <class T>
void adam_update(std::span<T> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& config);

struct TrainConfig {
  int batch_size = 16;
  int epochs = 200;
  int patience = 20;
  std::uint64_t seed = 0;
  double imputation_probability = 0.2;
  int window_radius = 5;
  AdamConfig adam;
  MixtureConfig mixture;
  ModelConfig model;
  SamplingConfig sampling;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossReport train;  // mean over the epoch's steps
  LossReport val;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::string status;  // "completed", "early_stopped" or "diverged"
  bool validation_fallback = false;  // no validation patches; train loss used

  double best_val_joint() const;
  /// Equality of every loss value and the best epoch; wall time is ignored.
  bool same_trajectory(const TrainHistory& other) const;
};

struct TrainOptions {
  /// Receives history.jsonl, best.ckpt and periodic checkpoints when set.
  std::filesystem::path output_dir;
  int checkpoint_every = 10;
  std::function<void(const EpochRecord&)> on_epoch;
  const std::atomic<bool>* cancel = nullptr;
};

struct TrainResult {
  Model model;  // best validation epoch
  TrainHistory history;
};

/// Minimizes the joint objective with Adam; deterministic for a given seed.
/// `warm_start` continues from existing weights instead of a fresh build.
TrainResult train(std::span<const TrainingImage> dataset, const TrainConfig& config,
                  const Model* warm_start = nullptr, const TrainOptions& options = {});

/// Joint objective of a fixed set of (blind-spot) patches without dropout.
LossReport evaluate_patches(const Model& model, std::span<const PatchPair> patches,
                            std::span<const BlindSpotResult<float>> blind,
                            const MixtureConfig& mixture);

std::string to_json_line(const EpochRecord& record);

}  // namespace impartial
