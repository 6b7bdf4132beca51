#include "impartial/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "json.hpp"

#include "impartial/error.hpp"
#include "impartial/rng.hpp"

namespace fs = std::filesystem;

namespace impartial {

double SynthConfig::fg_mean(int c) const {
  return foreground_mean.size() == 1 ? foreground_mean[0] : foreground_mean[std::size_t(c)];
}

double SynthConfig::bg_mean(int c) const {
  return background_mean.size() == 1 ? background_mean[0] : background_mean[std::size_t(c)];
}

void SynthConfig::validate() const {
  if (width < 1 || height < 1 || channels < 1 || images < 0) {
    throw ConfigError("synthetic image size, channel and image counts must be positive");
  }
  if (cells_min < 0 || cells_max < cells_min) throw ConfigError("invalid cells-per-image range");
  if (radius_min < 2.0 || radius_max < radius_min) {
    throw ConfigError("cell radii must satisfy 2 <= radius_min <= radius_max");
  }
  if (gap < 0.0) throw ConfigError("cell gap must be non-negative");
  for (const auto* v : {&foreground_mean, &background_mean}) {
    if (v->size() != 1 && v->size() != std::size_t(channels)) {
      throw ConfigError("intensity means need one entry or one per channel");
    }
    for (double m : *v) {
      if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("intensity means must lie in [0,1]");
    }
  }
  if (subpopulation_offset < 0.0 || jitter < 0.0 || noise < 0.0) {
    throw ConfigError("offsets, jitter and noise must be non-negative");
  }
  if (!(background_period > 0.0)) throw ConfigError("background period must be positive");
}

namespace {

struct Cell {
  double cx, cy, a, b, theta, bound;
};

double population_sign(int population, int channel) {
  return (population == 0 ? 1.0 : -1.0) * (channel % 2 == 0 ? 1.0 : -1.0);
}

}  // namespace

std::vector<SynthSample> generate(const SynthConfig& config) {
  config.validate();
  const int W = config.width, H = config.height, C = config.channels;
  std::vector<SynthSample> out;
  for (int n = 0; n < config.images; ++n) {
    Rng rng = make_rng(config.seed, std::uint64_t(n));
    std::uniform_int_distribution<int> count(config.cells_min, config.cells_max);
    const int K = count(rng);
    std::uniform_real_distribution<double> radius(config.radius_min, config.radius_max);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Cell> cells;
    constexpr int kAttempts = 1000;
    for (int k = 0; k < K; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
        Cell c{};
        c.a = radius(rng);
        c.b = radius(rng);
        c.theta = angle(rng);
        c.bound = std::max(c.a, c.b);
        const double span_x = W - 1 - 2 * c.bound, span_y = H - 1 - 2 * c.bound;
        if (span_x < 0 || span_y < 0) continue;
        c.cx = c.bound + unit(rng) * span_x;
        c.cy = c.bound + unit(rng) * span_y;
        placed = std::all_of(cells.begin(), cells.end(), [&](const Cell& o) {
          return std::hypot(c.cx - o.cx, c.cy - o.cy) >= c.bound + o.bound + config.gap;
        });
        if (placed) cells.push_back(c);
      }
      if (!placed) {
        throw ConfigError("infeasible packing: requested " + std::to_string(K) + " cells in a " +
                          std::to_string(W) + "x" + std::to_string(H) +
                          " image but at most " + std::to_string(cells.size()) +
                          " could be placed with these radii and gap");
      }
    }

    SynthSample s;
    s.id = "img" + std::to_string(n);
    s.labels = LabelMap(W, H);
    std::vector<double> values(std::size_t(C) * W * H);

    // Background: two sub-populations from the sign of a low-frequency pattern.
    const double phx = unit(rng) * 2 * std::numbers::pi;
    const double phy = unit(rng) * 2 * std::numbers::pi;
    const double k = 2 * std::numbers::pi / config.background_period;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int pop = std::sin(k * x + phx) * std::sin(k * y + phy) >= 0.0 ? 0 : 1;
        for (int c = 0; c < C; ++c) {
          values[(std::size_t(c) * H + y) * W + x] =
              config.bg_mean(c) + population_sign(pop, c) * config.subpopulation_offset;
        }
      }
    }

    std::uniform_real_distribution<double> jitter(-config.jitter, config.jitter);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t id = 1; id <= cells.size(); ++id) {
      const Cell& cell = cells[id - 1];
      const int pop = coin(rng) ? 1 : 0;
      s.cell_population.push_back(pop);
      std::vector<double> level(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c) {
        level[std::size_t(c)] =
            config.fg_mean(c) + population_sign(pop, c) * config.subpopulation_offset + jitter(rng);
      }
      const double ct = std::cos(cell.theta), st = std::sin(cell.theta);
      const int x0 = std::max(0, int(std::floor(cell.cx - cell.bound)));
      const int x1 = std::min(W - 1, int(std::ceil(cell.cx + cell.bound)));
      const int y0 = std::max(0, int(std::floor(cell.cy - cell.bound)));
      const int y1 = std::min(H - 1, int(std::ceil(cell.cy + cell.bound)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x - cell.cx, dy = y - cell.cy;
          const double u = (dx * ct + dy * st) / cell.a;
          const double v = (-dx * st + dy * ct) / cell.b;
          if (u * u + v * v > 1.0) continue;
          s.labels.at(y, x) = std::uint32_t(id);
          for (int c = 0; c < C; ++c) {
            values[(std::size_t(c) * H + y) * W + x] = level[std::size_t(c)];
          }
        }
      }
    }

    if (config.noise > 0.0) {
      std::normal_distribution<double> noise(0.0, config.noise);
      for (auto& v : values) v += noise(rng);
    }
    s.image = MultiChannelImage(W, H, C, std::vector<float>(values.begin(), values.end()));
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t budget_count(double fraction, std::size_t count) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("budget must lie in [0,1]");
  const double exact = fraction * double(count);
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) < 1e-9) return std::size_t(rounded);
  return std::size_t(std::ceil(exact));
}

std::vector<std::uint8_t> skeletonize(std::vector<std::uint8_t> m, int W, int H) {
  auto px = [&](int x, int y) -> int {
    return (x >= 0 && y >= 0 && x < W && y < H && m[std::size_t(y) * W + x]) ? 1 : 0;
  };
  bool changed = true;
  std::vector<std::size_t> remove;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (!px(x, y)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(x, y - 1),     px(x + 1, y - 1), px(x + 1, y), px(x + 1, y + 1),
                            px(x, y + 1),     px(x - 1, y + 1), px(x - 1, y), px(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool c1 = pass == 0 ? !(p[0] && p[2] && p[4]) : !(p[0] && p[2] && p[6]);
          const bool c2 = pass == 0 ? !(p[2] && p[4] && p[6]) : !(p[0] && p[4] && p[6]);
          if (c1 && c2) remove.push_back(std::size_t(y) * W + x);
        }
      }
      for (auto i : remove) m[i] = 0;
      changed = changed || !remove.empty();
    }
  }
  return m;
}

std::vector<std::uint32_t> entropy_rank(const LabelMap& labels, const EntropyMap& entropy) {
  if (labels.width != entropy.width || labels.height != entropy.height) {
    throw DataError("entropy map and label map differ in size");
  }
  std::map<std::uint32_t, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (const auto l = labels.labels[i]) {
      acc[l].first += entropy.values[i];
      ++acc[l].second;
    }
  }
  std::vector<std::pair<double, std::uint32_t>> order;
  for (const auto& [id, s] : acc) order.push_back({s.first / double(s.second), id});
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<std::uint32_t> ids;
  for (const auto& o : order) ids.push_back(o.second);
  return ids;
}

SimulatedScribbles simulate_scribbles(const LabelMap& labels, const ScribbleBudget& budget,
                                      std::uint64_t seed, const EntropyMap* entropy,
                                      std::span<const std::uint32_t> exclude) {
  const int W = labels.width, H = labels.height;
  SimulatedScribbles out;
  out.scribbles.width = W;
  out.scribbles.height = H;

  std::map<std::uint32_t, std::vector<std::size_t>> pixels;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i]) pixels[labels.labels[i]].push_back(i);
  }
  const std::size_t n_total = budget.count >= 0 ? std::size_t(budget.count)
                                                : budget_count(budget.fraction, pixels.size());
  if (n_total == 0) return out;
  if (pixels.empty()) throw DataError("label map has no instances to annotate");

  const std::set<std::uint32_t> excluded(exclude.begin(), exclude.end());
  std::vector<std::uint32_t> order;
  if (budget.policy == SelectionPolicy::entropy) {
    if (!entropy) throw ConfigError("entropy-ranked selection needs an entropy map");
    order = entropy_rank(labels, *entropy);
  } else {
    for (const auto& kv : pixels) order.push_back(kv.first);
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::erase_if(order, [&](std::uint32_t id) { return excluded.count(id) > 0; });
  order.resize(std::min(order.size(), n_total));

  for (const auto id : order) {
    const auto& pix = pixels[id];
    int x0 = W, y0 = H, x1 = -1, y1 = -1;
    for (auto i : pix) {
      const int x = int(i % std::size_t(W)), y = int(i / std::size_t(W));
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    // Local frame with a 2-pixel border around the bounding box.
    const int ox = x0 - 2, oy = y0 - 2, lw = x1 - x0 + 5, lh = y1 - y0 + 5;
    auto member = [&](int x, int y) {
      return x >= 0 && y >= 0 && x < W && y < H && labels.at(y, x) == id;
    };

    std::vector<std::uint8_t> eroded(std::size_t(lw) * lh, 0);
    for (int y = 0; y < lh; ++y) {
      for (int x = 0; x < lw; ++x) {
        const int gx = x + ox, gy = y + oy;
        eroded[std::size_t(y) * lw + x] = member(gx, gy) && member(gx + 1, gy) &&
                                          member(gx - 1, gy) && member(gx, gy + 1) &&
                                          member(gx, gy - 1);
      }
    }
    const auto skel = skeletonize(std::move(eroded), lw, lh);
    Stroke fg{1, {}};
    for (int y = 0; y < lh; ++y) {
      for (int x = 0; x < lw; ++x) {
        if (skel[std::size_t(y) * lw + x]) fg.pixels.push_back({x + ox, y + oy});
      }
    }
    if (fg.pixels.empty()) {
      double cx = 0.0, cy = 0.0;
      for (auto i : pix) {
        cx += double(i % std::size_t(W));
        cy += double(i / std::size_t(W));
      }
      cx /= double(pix.size());
      cy /= double(pix.size());
      std::size_t best = pix.front();
      double best_d = std::numeric_limits<double>::infinity();
      for (auto i : pix) {
        const double d = std::hypot(double(i % std::size_t(W)) - cx, double(i / std::size_t(W)) - cy);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      fg.pixels.push_back({int(best % std::size_t(W)), int(best / std::size_t(W))});
    }

    Stroke bg{0, {}};
    for (int y = 0; y < lh; ++y) {
      for (int x = 0; x < lw; ++x) {
        const int gx = x + ox, gy = y + oy;
        if (gx < 0 || gy < 0 || gx >= W || gy >= H || labels.at(gy, gx) != 0) continue;
        int dist = 3;
        for (int dy = -2; dy <= 2; ++dy) {
          for (int dx = -2; dx <= 2; ++dx) {
            if (member(gx + dx, gy + dy)) dist = std::min(dist, std::max(std::abs(dx), std::abs(dy)));
          }
        }
        if (dist == 2) bg.pixels.push_back({gx, gy});
      }
    }
    out.scribbles.strokes.push_back(std::move(fg));
    if (!bg.pixels.empty()) out.scribbles.strokes.push_back(std::move(bg));
    out.instances.push_back(id);
  }
  out.scribbles.validate();
  return out;
}

namespace {

void write_manifest(const Dataset& d) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& e : d.entries) {
    nlohmann::json j = {{"id", e.id}, {"image", fs::relative(e.image, d.root).generic_string()}};
    if (!e.labels.empty()) j["labels"] = fs::relative(e.labels, d.root).generic_string();
    if (!e.scribbles.empty()) j["scribbles"] = fs::relative(e.scribbles, d.root).generic_string();
    images.push_back(j);
  }
  write_file_atomic(d.root / "dataset.json",
                    nlohmann::json{{"version", 1}, {"images", images}}.dump(2) + "\n");
}

}  // namespace

Dataset write_dataset(const fs::path& root, std::span<const SynthSample> samples,
                      std::span<const ScribbleSet> scribbles) {
  if (!scribbles.empty() && scribbles.size() != samples.size()) {
    throw ConfigError("need one scribble set per sample");
  }
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  Dataset d;
  d.root = root;
  for (const auto& s : samples) {
    DatasetEntry e;
    e.id = s.id;
    e.image = root / "images" / (s.id + ".raw");
    e.labels = root / "labels" / (s.id + ".lbl");
    save_image(s.image, e.image);
    save_labels(s.labels, e.labels);
    d.entries.push_back(std::move(e));
  }
  if (!scribbles.empty()) {
    attach_scribbles(d, scribbles);
  } else {
    write_manifest(d);
  }
  return d;
}

void attach_scribbles(Dataset& d, std::span<const ScribbleSet> scribbles) {
  if (scribbles.size() != d.entries.size()) throw ConfigError("need one scribble set per image");
  fs::create_directories(d.root / "scribbles");
  for (std::size_t i = 0; i < scribbles.size(); ++i) {
    auto& e = d.entries[i];
    e.scribbles = d.root / "scribbles" / (e.id + ".txt");
    save_scribbles(scribbles[i], e.scribbles);
  }
  write_manifest(d);
}

Dataset read_dataset(const fs::path& root) {
  const fs::path manifest = root / "dataset.json";
  if (!fs::exists(manifest)) throw DataError("missing dataset manifest: " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset manifest " + manifest.string() + ": " + e.what());
  }
  Dataset d;
  d.root = root;
  for (const auto& item : j.at("images")) {
    DatasetEntry e;
    e.id = item.at("id").get<std::string>();
    e.image = root / item.at("image").get<std::string>();
    if (item.contains("labels")) e.labels = root / item["labels"].get<std::string>();
    if (item.contains("scribbles")) e.scribbles = root / item["scribbles"].get<std::string>();
    d.entries.push_back(std::move(e));
  }
  return d;
}

}  // namespace impartial
