#pragma once

// Instance extraction from probability maps and matching-based metrics
// (AP = TP/(TP+FP+FN), F1, mAP over IoU 0.50:0.05:0.95, mIOU, mDice).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "impartial/data.hpp"
#include "impartial/inference.hpp"

namespace impartial {

struct ExtractConfig {
  float threshold = 0.5f;  // foreground where p > threshold
  int min_size = 10;       // components with fewer pixels are dropped
};

/// Binarize, 4-connected components, drop small components, fill holes,
/// relabel 1..K in scan order.
LabelMap extract_instances(const ProbabilityMap& prob, const ExtractConfig& config = {});

/// 4-connected components of the non-zero pixels of `mask`, labelled 1..K in
/// scan order.
LabelMap connected_components(const std::vector<std::uint8_t>& mask, int width, int height);

/// Holes (zero regions not 4-connected to the border) take the most frequent
/// label among their neighbours; ties go to the smaller label.
void fill_holes(LabelMap& labels);

struct MatchPair {
  std::uint32_t pred = 0;
  std::uint32_t gt = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
};

/// Sparse IoU table between every overlapping (pred, gt) pair.
struct OverlapTable {
  std::vector<std::uint32_t> pred_ids;  // ascending
  std::vector<std::uint32_t> gt_ids;    // ascending
  std::vector<double> iou;              // pred_ids.size() × gt_ids.size(), row-major

  double at(std::size_t p, std::size_t g) const { return iou[p * gt_ids.size() + g]; }
};

OverlapTable overlap_table(const LabelMap& pred, const LabelMap& gt);

/// One-to-one assignment maximizing total IoU over pairs with IoU ≥ t.
MatchResult match_instances(const LabelMap& pred, const LabelMap& gt, double t);
MatchResult match_instances(const OverlapTable& table, double t);

/// Maximum-weight assignment (Hungarian method) on a rows×cols weight matrix.
/// Returns, per row, the assigned column or −1.
std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows,
                                       std::size_t cols);

enum class MeanScore {
  matched,  // mean IoU over matched pairs
  true_instances,  // sum of matched IoU over the number of ground-truth instances
};

inline constexpr std::array<double, 10> kIouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                          0.75, 0.80, 0.85, 0.90, 0.95};

struct MetricsReport {
  double miou = 0.0;
  double mdice = 0.0;
  double ap50 = 0.0;
  double map = 0.0;
  double f1_50 = 0.0;
  std::array<double, 10> ap{};
  std::array<double, 10> f1{};
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
};

double average_precision(const MatchResult& m);
double f1_score(const MatchResult& m);

MetricsReport compute_metrics(const LabelMap& pred, const LabelMap& gt,
                              MeanScore convention = MeanScore::matched);

/// Field-wise mean over images.
MetricsReport aggregate(std::span<const MetricsReport> reports);

std::string to_json(const MetricsReport& report);

/// Closed boundary of the first 4-connected component of `id` (Moore
/// neighbour tracing, clockwise, starting at its first pixel in scan order).
std::vector<Pixel> trace_outline(const LabelMap& labels, std::uint32_t id);

}  // namespace impartial
