#include "impartial/experiments.hpp"

#include <algorithm>

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace impartial {

std::vector<LabelledImage> prepare_images(std::span<const SynthSample> samples,
                                          const NormalizationConfig& norm) {
  std::vector<LabelledImage> out;
  for (const auto& s : samples) out.push_back({s.id, normalize(s.image, norm), s.labels});
  return out;
}

std::vector<LabelledImage> load_labelled(const Dataset& dataset, const NormalizationConfig& norm) {
  std::vector<LabelledImage> out;
  for (const auto& e : dataset.entries) {
    if (e.labels.empty()) throw DataError("image '" + e.id + "' has no ground-truth labels");
    out.push_back({e.id, normalize(load_image(e.image), norm), load_labels(e.labels)});
  }
  return out;
}

std::vector<TrainingImage> with_scribbles(std::span<const LabelledImage> images,
                                          std::span<const ScribbleSet> scribbles) {
  if (images.size() != scribbles.size()) throw ConfigError("need one scribble set per image");
  std::vector<TrainingImage> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back({images[i].id, images[i].image, scribbles[i]});
  }
  return out;
}

std::vector<ScribbleSet> simulate_dataset_scribbles(std::span<const LabelledImage> images,
                                                    double fraction, std::uint64_t seed) {
  std::vector<ScribbleSet> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(simulate_scribbles(images[i].labels, {fraction, SelectionPolicy::random},
                                     derive_seed(seed, i))
                      .scribbles);
  }
  return out;
}

Evaluation evaluate_model(const Model& model, std::span<const LabelledImage> images,
                          const EvalConfig& config) {
  Evaluation e;
  for (const auto& img : images) {
    const auto pred = predict_full(model, img.image, config.tiles);
    const auto labels = extract_instances(pred.foreground, config.extract);
    e.per_image.push_back(compute_metrics(labels, img.labels, config.convention));
  }
  e.mean = aggregate(e.per_image);
  return e;
}

std::vector<AblationRow> run_ablation(std::span<const TrainingImage> train_set,
                                      std::span<const LabelledImage> test_set,
                                      const TrainConfig& config, const EvalConfig& eval) {
  const std::pair<const char*, double> variants[] = {
      {"reconstruction", 1.0}, {"scribble", 0.0}, {"joint", config.mixture.lambda}};
  std::vector<AblationRow> rows;
  for (const auto& [name, lambda] : variants) {
    TrainConfig c = config;
    c.mixture.lambda = lambda;
    auto result = train(train_set, c);
    log::info(std::string("ablation ") + name + " finished: " + result.history.status);
    rows.push_back({name, lambda, evaluate_model(result.model, test_set, eval),
                    std::move(result.history)});
  }
  return rows;
}

std::vector<ActiveRow> run_active(std::span<const LabelledImage> train_set,
                                  std::span<const LabelledImage> test_set,
                                  const TrainConfig& config, const ActiveConfig& active,
                                  const EvalConfig& eval) {
  const double oneshot = active.oneshot_budget < 0.0
                             ? active.round1_budget + active.round2_budget
                             : active.oneshot_budget;
  const std::uint64_t seed = config.seed;
  std::vector<ActiveRow> rows;

  std::vector<SimulatedScribbles> round1;
  std::vector<ScribbleSet> sets;
  std::size_t annotated = 0;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    round1.push_back(simulate_scribbles(train_set[i].labels,
                                        {active.round1_budget, SelectionPolicy::random},
                                        derive_seed(seed, 100 + i)));
    sets.push_back(round1.back().scribbles);
    annotated += round1.back().instances.size();
  }
  auto r1 = train(with_scribbles(train_set, sets), config);
  rows.push_back({"iter1", active.round1_budget, annotated, evaluate_model(r1.model, test_set, eval),
                  r1.history});

  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto ens = mc_ensemble(r1.model, train_set[i].image, active.passes,
                                 derive_seed(seed, 200 + i), eval.tiles);
    // Round 2 tops up to the combined budget.
    const std::size_t total = budget_count(active.round1_budget + active.round2_budget,
                                           train_set[i].labels.instance_count());
    const long extra_count = long(total) - long(round1[i].instances.size());
    const auto extra = simulate_scribbles(
        train_set[i].labels,
        {active.round2_budget, SelectionPolicy::entropy, std::max(0L, extra_count)},
        derive_seed(seed, 300 + i), &ens.entropy, round1[i].instances);
    sets[i] = extra.scribbles.strokes.empty() ? sets[i] : sets[i].merged(extra.scribbles);
    annotated += extra.instances.size();
  }
  auto r2 = train(with_scribbles(train_set, sets), config,
                  active.warm_start ? &r1.model : nullptr);
  rows.push_back({"iter2", active.round1_budget + active.round2_budget, annotated,
                  evaluate_model(r2.model, test_set, eval), r2.history});

  std::vector<ScribbleSet> base;
  std::size_t base_annotated = 0;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    auto s = simulate_scribbles(train_set[i].labels, {oneshot, SelectionPolicy::random},
                                derive_seed(seed, 400 + i));
    base_annotated += s.instances.size();
    base.push_back(std::move(s.scribbles));
  }
  auto r3 = train(with_scribbles(train_set, base), config);
  rows.push_back({"oneshot", oneshot, base_annotated, evaluate_model(r3.model, test_set, eval),
                  r3.history});
  return rows;
}

}  // namespace impartial
