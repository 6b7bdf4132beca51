#include "impartial/instances.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>

#include "json.hpp"

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace impartial {

namespace {

constexpr int kDx4[4] = {1, -1, 0, 0};
constexpr int kDy4[4] = {0, 0, 1, -1};

// Flood fill of pixels equal to `value` in `src`, writing `label` into `dst`.
template <class Pred>
std::vector<std::size_t> flood(int W, int H, std::size_t seed, Pred&& member,
                               std::vector<std::uint32_t>& dst, std::uint32_t label) {
  std::vector<std::size_t> pixels{seed};
  dst[seed] = label;
  for (std::size_t head = 0; head < pixels.size(); ++head) {
    const int x = int(pixels[head] % std::size_t(W));
    const int y = int(pixels[head] / std::size_t(W));
    for (int k = 0; k < 4; ++k) {
      const int nx = x + kDx4[k], ny = y + kDy4[k];
      if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
      const std::size_t j = std::size_t(ny) * W + nx;
      if (dst[j] == 0 && member(j)) {
        dst[j] = label;
        pixels.push_back(j);
      }
    }
  }
  return pixels;
}

}  // namespace

LabelMap connected_components(const std::vector<std::uint8_t>& mask, int width, int height) {
  if (mask.size() != std::size_t(width) * height) throw DataError("mask size mismatch");
  LabelMap out(width, height);
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] && out.labels[i] == 0) {
      flood(width, height, i, [&](std::size_t j) { return mask[j] != 0; }, out.labels, ++next);
    }
  }
  return out;
}

void fill_holes(LabelMap& labels) {
  const int W = labels.width, H = labels.height;
  std::vector<std::uint32_t> region(labels.labels.size(), 0);
  auto is_bg = [&](std::size_t j) { return labels.labels[j] == 0; };
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!is_bg(i) || region[i] != 0) continue;
    const auto pixels = flood(W, H, i, is_bg, region, ++next);
    bool touches_border = false;
    std::map<std::uint32_t, std::size_t> votes;
    for (std::size_t p : pixels) {
      const int x = int(p % std::size_t(W)), y = int(p / std::size_t(W));
      if (x == 0 || y == 0 || x == W - 1 || y == H - 1) touches_border = true;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + kDx4[k], ny = y + kDy4[k];
        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
        const auto l = labels.labels[std::size_t(ny) * W + nx];
        if (l != 0) ++votes[l];
      }
    }
    if (touches_border || votes.empty()) continue;
    std::uint32_t best = votes.begin()->first;
    for (const auto& [l, n] : votes) {
      if (n > votes[best]) best = l;
    }
    for (std::size_t p : pixels) labels.labels[p] = best;
  }
}

LabelMap extract_instances(const ProbabilityMap& prob, const ExtractConfig& config) {
  std::vector<std::uint8_t> mask(prob.values.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = prob.values[i] > config.threshold;
  LabelMap cc = connected_components(mask, prob.width, prob.height);
  std::vector<std::size_t> area(cc.max_label() + 1, 0);
  for (auto l : cc.labels) ++area[l];
  for (auto& l : cc.labels) {
    if (l != 0 && area[l] < std::size_t(config.min_size)) l = 0;
  }
  fill_holes(cc);
  return cc.canonical();
}

OverlapTable overlap_table(const LabelMap& pred, const LabelMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw DataError("label maps differ in size");
  }
  std::map<std::uint32_t, std::size_t> pa, ga;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> inter;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const auto p = pred.labels[i], g = gt.labels[i];
    if (p) ++pa[p];
    if (g) ++ga[g];
    if (p && g) ++inter[{p, g}];
  }
  OverlapTable t;
  for (const auto& kv : pa) t.pred_ids.push_back(kv.first);
  for (const auto& kv : ga) t.gt_ids.push_back(kv.first);
  t.iou.assign(t.pred_ids.size() * t.gt_ids.size(), 0.0);
  for (const auto& [key, n] : inter) {
    const auto pi = std::size_t(std::lower_bound(t.pred_ids.begin(), t.pred_ids.end(), key.first) -
                                t.pred_ids.begin());
    const auto gi = std::size_t(std::lower_bound(t.gt_ids.begin(), t.gt_ids.end(), key.second) -
                                t.gt_ids.begin());
    const double uni = double(pa[key.first] + ga[key.second] - n);
    t.iou[pi * t.gt_ids.size() + gi] = double(n) / uni;
  }
  return t;
}

std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows,
                                       std::size_t cols) {
  if (weights.size() != rows * cols) throw ConfigError("weight matrix size mismatch");
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto cost = [&](std::size_t i, std::size_t j) {
    return transposed ? -weights[j * cols + i] : -weights[i * cols + j];
  };
  // Shortest augmenting path formulation with potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      result[j - 1] = int(p[j] - 1);
    } else {
      result[p[j] - 1] = int(j - 1);
    }
  }
  return result;
}

MatchResult match_instances(const OverlapTable& table, double t) {
  const std::size_t P = table.pred_ids.size(), G = table.gt_ids.size();
  std::vector<double> w(P * G, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (table.iou[i] > 0.0 && table.iou[i] >= t) w[i] = table.iou[i];
  }
  const auto assign = max_weight_assignment(w, P, G);
  MatchResult r;
  r.n_pred = P;
  r.n_gt = G;
  for (std::size_t p = 0; p < P; ++p) {
    if (assign[p] < 0) continue;
    const double iou = table.at(p, std::size_t(assign[p]));
    if (iou > 0.0 && iou >= t) {
      r.pairs.push_back({table.pred_ids[p], table.gt_ids[std::size_t(assign[p])], iou});
    }
  }
  r.tp = r.pairs.size();
  r.fp = P - r.tp;
  r.fn = G - r.tp;
  return r;
}

MatchResult match_instances(const LabelMap& pred, const LabelMap& gt, double t) {
  return match_instances(overlap_table(pred, gt), t);
}

double average_precision(const MatchResult& m) {
  const auto denom = m.tp + m.fp + m.fn;
  return denom == 0 ? 1.0 : double(m.tp) / double(denom);
}

double f1_score(const MatchResult& m) {
  const auto denom = 2 * m.tp + m.fp + m.fn;
  return denom == 0 ? 1.0 : 2.0 * double(m.tp) / double(denom);
}

MetricsReport compute_metrics(const LabelMap& pred, const LabelMap& gt, MeanScore convention) {
  const auto table = overlap_table(pred, gt);
  MetricsReport r;
  r.n_pred = table.pred_ids.size();
  r.n_gt = table.gt_ids.size();
  if (r.n_pred == 0 && r.n_gt == 0) {
    log::warn("both label maps are empty; metrics defined as 1");
    r.miou = r.mdice = r.ap50 = r.map = r.f1_50 = 1.0;
    r.ap.fill(1.0);
    r.f1.fill(1.0);
    return r;
  }
  double map_sum = 0.0;
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    const auto m = match_instances(table, kIouThresholds[k]);
    r.ap[k] = average_precision(m);
    r.f1[k] = f1_score(m);
    map_sum += r.ap[k];
    if (k == 0) {
      double iou_sum = 0.0, dice_sum = 0.0;
      for (const auto& p : m.pairs) {
        iou_sum += p.iou;
        dice_sum += 2.0 * p.iou / (1.0 + p.iou);
      }
      const std::size_t denom = convention == MeanScore::matched ? m.tp : m.n_gt;
      r.miou = denom ? iou_sum / double(denom) : 0.0;
      r.mdice = denom ? dice_sum / double(denom) : 0.0;
    }
  }
  r.ap50 = r.ap[0];
  r.f1_50 = r.f1[0];
  r.map = map_sum / double(kIouThresholds.size());
  return r;
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  MetricsReport r;
  if (reports.empty()) return r;
  const double n = double(reports.size());
  for (const auto& x : reports) {
    r.miou += x.miou / n;
    r.mdice += x.mdice / n;
    r.ap50 += x.ap50 / n;
    r.map += x.map / n;
    r.f1_50 += x.f1_50 / n;
    for (std::size_t k = 0; k < r.ap.size(); ++k) {
      r.ap[k] += x.ap[k] / n;
      r.f1[k] += x.f1[k] / n;
    }
    r.n_pred += x.n_pred;
    r.n_gt += x.n_gt;
  }
  return r;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j = {{"mIOU", r.miou}, {"mDice", r.mdice},   {"AP50", r.ap50},
                      {"mAP", r.map},   {"F1_50", r.f1_50},   {"AP", r.ap},
                      {"F1", r.f1},     {"n_pred", r.n_pred}, {"n_gt", r.n_gt}};
  return j.dump();
}

std::vector<Pixel> trace_outline(const LabelMap& labels, std::uint32_t id) {
  const int W = labels.width, H = labels.height;
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < W && y < H && labels.at(y, x) == id;
  };
  std::size_t start = labels.labels.size();
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == id) {
      start = i;
      break;
    }
  }
  if (start == labels.labels.size() || id == 0) return {};
  // Clockwise neighbourhood (y grows downwards), starting west.
  static constexpr int dx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static constexpr int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
  auto dir_of = [](int ox, int oy) {
    for (int d = 0; d < 8; ++d) {
      if (dx[d] == ox && dy[d] == oy) return d;
    }
    return 0;
  };
  const Pixel s{int(start % std::size_t(W)), int(start / std::size_t(W))};
  std::vector<Pixel> out{s};
  Pixel p = s;
  int back = 0;  // the west neighbour of the first pixel is outside
  int first = -1;
  const std::size_t cap = 4 * labels.labels.size() + 8;
  for (std::size_t iter = 0; iter < cap; ++iter) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (inside(p.x + dx[d], p.y + dy[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    if (p == s) {
      if (first < 0) {
        first = found;
      } else if (found == first) {
        break;
      }
    }
    const Pixel q{p.x + dx[found], p.y + dy[found]};
    const int prev = (found + 7) % 8;
    back = dir_of(p.x + dx[prev] - q.x, p.y + dy[prev] - q.y);
    p = q;
    if (!(p == s)) out.push_back(p);
  }
  return out;
}

}  // namespace impartial
