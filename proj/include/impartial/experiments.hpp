#pragma once

// Evaluation, loss ablation and two-round active annotation on labelled data.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "impartial/instances.hpp"
#include "impartial/simdata.hpp"
#include "impartial/trainer.hpp"

namespace impartial {

/// A normalized image with its ground truth.
struct LabelledImage {
  std::string id;
  MultiChannelImage image;
  LabelMap labels;
};

std::vector<LabelledImage> prepare_images(std::span<const SynthSample> samples,
                                          const NormalizationConfig& norm = {});
std::vector<LabelledImage> load_labelled(const Dataset& dataset,
                                         const NormalizationConfig& norm = {});

std::vector<TrainingImage> with_scribbles(std::span<const LabelledImage> images,
                                          std::span<const ScribbleSet> scribbles);

/// One scribble set per image, seeded per image from `seed`.
std::vector<ScribbleSet> simulate_dataset_scribbles(std::span<const LabelledImage> images,
                                                    double fraction, std::uint64_t seed);

struct EvalConfig {
  TileConfig tiles;
  ExtractConfig extract;
  MeanScore convention = MeanScore::matched;
};

struct Evaluation {
  std::vector<MetricsReport> per_image;
  MetricsReport mean;
};

Evaluation evaluate_model(const Model& model, std::span<const LabelledImage> images,
                          const EvalConfig& config = {});

struct AblationRow {
  std::string name;  // "reconstruction", "scribble", "joint"
  double lambda = 0.0;
  Evaluation eval;
  TrainHistory history;
};

/// Trains λ=1, λ=0 and the configured λ on the same data and seed.
std::vector<AblationRow> run_ablation(std::span<const TrainingImage> train_set,
                                      std::span<const LabelledImage> test_set,
                                      const TrainConfig& config, const EvalConfig& eval = {});

struct ActiveConfig {
  double round1_budget = 0.005;
  double round2_budget = 0.04;
  double oneshot_budget = -1.0;  // negative: round1 + round2
  int passes = 8;                // MC-dropout passes for the entropy map
  bool warm_start = true;        // round 2 continues from the round-1 model
};

struct ActiveRow {
  std::string name;  // "iter1", "iter2", "oneshot"
  double budget = 0.0;
  std::size_t annotated = 0;  // instances carrying scribbles
  Evaluation eval;
  TrainHistory history;
};

/// Round 1 at a random budget, entropy-ranked round 2 on the remaining
/// instances, and a one-shot random baseline at the combined budget.
std::vector<ActiveRow> run_active(std::span<const LabelledImage> train_set,
                                  std::span<const LabelledImage> test_set,
                                  const TrainConfig& config, const ActiveConfig& active,
                                  const EvalConfig& eval = {});

}  // namespace impartial
