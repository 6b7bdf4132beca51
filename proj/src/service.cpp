#include "impartial/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <png.h>

#include "httplib.h"
#include "json.hpp"

#include "impartial/error.hpp"
#include "impartial/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace impartial {

struct Service::Project {
  std::string id;
  fs::path dir;
  std::mutex mutex;  // guards everything below and serializes mutations
  std::condition_variable idle;
  json meta;  // project.json
  std::shared_ptr<const Model> model;
  std::string state = "idle";  // idle, training, failed
  std::string reason;
  std::string job;
  int epoch = 0;
  int epochs = 0;
  std::thread worker;
  std::atomic<bool> cancel{false};

  fs::path image_path(const std::string& img) const { return dir / "images" / (img + ".raw"); }
  fs::path log_path() const { return dir / "scribbles.jsonl"; }
  bool has_image(const std::string& img) const {
    for (const auto& i : meta["images"]) {
      if (i.get<std::string>() == img) return true;
    }
    return false;
  }
  void save_meta() const { write_file_atomic(dir / "project.json", meta.dump(2) + "\n"); }
};

namespace {

const std::regex kSafeId("[A-Za-z0-9_-]{1,64}");

constexpr std::uint8_t kPalette[7][3] = {{255, 0, 0},   {0, 255, 0},   {0, 0, 255},    {255, 255, 0},
                                         {255, 0, 255}, {0, 255, 255}, {255, 255, 255}};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

void append_durably(const fs::path& path, const std::string& text) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw DataError("cannot open " + path.string());
  std::size_t done = 0;
  while (done < text.size()) {
    const auto n = ::write(fd, text.data() + done, text.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw DataError("cannot append to " + path.string());
    }
    done += std::size_t(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw DataError("cannot sync " + path.string());
}

struct LoggedStroke {
  std::string image;
  int round = 0;
  Stroke stroke;
};

std::vector<LoggedStroke> read_log(const fs::path& path) {
  std::vector<LoggedStroke> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    LoggedStroke s;
    s.image = j.at("image");
    s.round = j.at("round");
    s.stroke.cls = j.at("class");
    for (const auto& p : j.at("pixels")) s.stroke.pixels.push_back({p.at(0), p.at(1)});
    out.push_back(std::move(s));
  }
  return out;
}

json stroke_json(const Stroke& s) {
  json pixels = json::array();
  for (const auto& p : s.pixels) pixels.push_back({p.x, p.y});
  return {{"class", s.cls}, {"pixels", pixels}};
}

ScribbleSet scribbles_for(const std::vector<LoggedStroke>& log, const std::string& image,
                          int width, int height) {
  ScribbleSet set;
  set.width = width;
  set.height = height;
  for (const auto& s : log) {
    if (s.image == image) set.strokes.push_back(s.stroke);
  }
  return set;
}

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

}  // namespace

std::string encode_png(const std::vector<std::uint8_t>& pixels, int width, int height,
                       int channels) {
  if (channels != 3 && channels != 4) throw ConfigError("PNG encoding supports RGB or RGBA");
  if (pixels.size() != std::size_t(width) * height * channels) {
    throw DataError("PNG pixel buffer has the wrong size");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("cannot initialise PNG encoder");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
               channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + std::size_t(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  const fs::path projects = config_.root / "projects";
  fs::create_directories(projects);
  for (const auto& entry : fs::directory_iterator(projects)) {
    const fs::path meta = entry.path() / "project.json";
    if (!fs::exists(meta)) continue;
    auto p = std::make_unique<Project>();
    p->dir = entry.path();
    p->meta = json::parse(read_file(meta));
    p->id = p->meta.at("id");
    if (p->meta.contains("checkpoint")) {
      p->model = std::make_shared<const Model>(load_checkpoint(p->dir / p->meta["checkpoint"].get<std::string>()));
    }
    projects_[p->id] = std::move(p);
  }
}

Service::~Service() {
  for (auto& [id, p] : projects_) {
    p->cancel = true;
    if (p->worker.joinable()) p->worker.join();
  }
}

Service::Project* Service::find(const std::string& id) {
  std::lock_guard lock(projects_mutex_);
  const auto it = projects_.find(id);
  return it == projects_.end() ? nullptr : it->second.get();
}

Service::Project& Service::create_project(const std::string& name) {
  std::lock_guard lock(projects_mutex_);
  int next = 1;
  for (const auto& [id, p] : projects_) {
    if (id.size() > 1 && id[0] == 'p') {
      try {
        next = std::max(next, std::stoi(id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
  auto p = std::make_unique<Project>();
  p->id = "p" + std::to_string(next);
  p->dir = config_.root / "projects" / p->id;
  fs::create_directories(p->dir / "images");
  fs::create_directories(p->dir / "models");
  p->meta = {{"id", p->id}, {"name", name}, {"images", json::array()}, {"round", 0}};
  p->save_meta();
  auto& ref = *p;
  projects_[ref.id] = std::move(p);
  return ref;
}

void Service::wait_idle(const std::string& id) {
  Project* p = find(id);
  if (!p) return;
  std::unique_lock lock(p->mutex);
  p->idle.wait(lock, [&] { return p->state != "training"; });
}

void Service::start_training(Project& p, int epochs) {
  // Called with p.mutex held.
  if (p.worker.joinable()) p.worker.join();
  const int round = p.meta["round"].get<int>() + 1;
  p.state = "training";
  p.reason.clear();
  p.job = p.id + "-round" + std::to_string(round);
  p.epoch = 0;
  p.epochs = epochs;
  auto images = p.meta["images"].get<std::vector<std::string>>();
  auto warm = p.model;
  p.worker = std::thread([this, &p, round, epochs, images, warm] {
    try {
      const auto log = read_log(p.log_path());
      std::vector<TrainingImage> data;
      int smallest = std::numeric_limits<int>::max();
      for (const auto& id : images) {
        TrainingImage t;
        t.id = id;
        t.image = normalize(load_image(p.image_path(id)), config_.normalization);
        t.scribbles = scribbles_for(log, id, t.image.width(), t.image.height());
        smallest = std::min({smallest, t.image.width(), t.image.height()});
        data.push_back(std::move(t));
      }
      TrainConfig cfg = config_.train;
      cfg.epochs = epochs;
      cfg.seed = derive_seed(config_.seed, std::uint64_t(round));
      cfg.model.in_channels = data.front().image.channels();
      const int mult = cfg.model.size_multiple();
      cfg.sampling.patch_size = std::min(cfg.sampling.patch_size, smallest / mult * mult);
      const Model* start = warm && warm->config() == cfg.model ? warm.get() : nullptr;
      TrainOptions opt;
      opt.output_dir = p.dir / "models" / ("round_" + std::to_string(round));
      opt.cancel = &p.cancel;
      opt.on_epoch = [&p](const EpochRecord& r) {
        std::lock_guard lock(p.mutex);
        p.epoch = r.epoch;
      };
      auto result = train(data, cfg, start, opt);
      if (result.history.status == "cancelled") throw Error("training cancelled");
      if (result.history.status == "diverged") throw NumericalError("training diverged");
      const std::string ckpt = "models/round_" + std::to_string(round) + ".ckpt";
      save_checkpoint(result.model, p.dir / ckpt, {result.history.best_epoch, cfg.seed});
      auto model = std::make_shared<const Model>(std::move(result.model));
      std::lock_guard lock(p.mutex);
      p.meta["round"] = round;
      p.meta["checkpoint"] = ckpt;
      p.save_meta();
      p.model = std::move(model);
      p.state = "idle";
    } catch (const std::exception& e) {
      std::lock_guard lock(p.mutex);
      p.state = "failed";
      p.reason = e.what();
      log::warn("training round of project " + p.id + " failed: " + e.what());
    }
    p.idle.notify_all();
  });
}

void Service::register_routes(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const DataError& e) {
      send_error(res, 422, e.what());
    } catch (const ConfigError& e) {
      send_error(res, 422, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  // Resolves the project (and image) of a matched route or sends 404.
  auto project_of = [this](const httplib::Request& req, httplib::Response& res) -> Project* {
    Project* p = find(req.matches[1]);
    if (!p) send_error(res, 404, "unknown project '" + std::string(req.matches[1]) + "'");
    return p;
  };
  auto image_of = [project_of](const httplib::Request& req, httplib::Response& res,
                               std::string& img) -> Project* {
    Project* p = project_of(req, res);
    if (!p) return nullptr;
    img = req.matches[2];
    std::lock_guard lock(p->mutex);
    if (!p->has_image(img)) {
      send_error(res, 404, "unknown image '" + img + "'");
      return nullptr;
    }
    return p;
  };

  server.Post("/v1/projects", [this](const httplib::Request& req, httplib::Response& res) {
    std::string name;
    if (!req.body.empty()) name = json::parse(req.body).value("name", "");
    auto& p = create_project(name);
    send_json(res, 201, {{"id", p.id}, {"name", name}});
  });

  server.Get("/v1/projects", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard lock(projects_mutex_);
    for (const auto& [id, p] : projects_) list.push_back(id);
    send_json(res, 200, {{"projects", list}});
  });

  server.Get(R"(/v1/projects/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    Project* p = project_of(req, res);
    if (!p) return;
    std::lock_guard lock(p->mutex);
    send_json(res, 200, p->meta);
  });

  server.Post(R"(/v1/projects/([^/]+)/images)",
              [=, this](const httplib::Request& req, httplib::Response& res) {
    Project* p = project_of(req, res);
    if (!p) return;
    if (!req.has_file("header") || !req.has_file("payload")) {
      send_error(res, 422, "multipart fields 'header' and 'payload' are required");
      return;
    }
    std::lock_guard lock(p->mutex);
    std::string img = req.has_file("id") ? req.get_file_value("id").content
                                         : "img" + std::to_string(p->meta["images"].size());
    if (!std::regex_match(img, kSafeId)) {
      send_error(res, 422, "image id must match [A-Za-z0-9_-]{1,64}");
      return;
    }
    if (p->has_image(img)) {
      send_error(res, 409, "image '" + img + "' already exists");
      return;
    }
    const fs::path path = p->image_path(img);
    write_file_atomic(header_path(path), req.get_file_value("header").content);
    write_file_atomic(path, req.get_file_value("payload").content);
    MultiChannelImage image;
    try {
      image = load_image(path);
      if (p->meta.contains("channels") && p->meta["channels"].get<int>() != image.channels()) {
        throw DataError("project images have " + std::to_string(p->meta["channels"].get<int>()) +
                        " channels, upload has " + std::to_string(image.channels()));
      }
    } catch (const Error& e) {
      fs::remove(path);
      fs::remove(header_path(path));
      send_error(res, 422, e.what());
      return;
    }
    p->meta["channels"] = image.channels();
    p->meta["images"].push_back(img);
    p->save_meta();
    send_json(res, 201, {{"image", img},
                         {"width", image.width()},
                         {"height", image.height()},
                         {"channels", image.channels()}});
  });

  server.Get(R"(/v1/projects/([^/]+)/images)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    Project* p = project_of(req, res);
    if (!p) return;
    std::lock_guard lock(p->mutex);
    send_json(res, 200, {{"images", p->meta["images"]}});
  });

  server.Get(R"(/v1/projects/([^/]+)/images/([^/]+)/composite)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string img;
    Project* p = image_of(req, res, img);
    if (!p) return;
    const auto image = load_image(p->image_path(img));
    std::vector<int> channels;
    if (req.has_param("channels")) {
      std::istringstream in(req.get_param_value("channels"));
      std::string tok;
      while (std::getline(in, tok, ',')) {
        int c = -1;
        try {
          c = std::stoi(tok);
        } catch (const std::exception&) {
        }
        if (c < 0 || c >= image.channels()) {
          send_error(res, 422, "invalid channel '" + tok + "'");
          return;
        }
        channels.push_back(c);
      }
    } else {
      for (int c = 0; c < image.channels(); ++c) channels.push_back(c);
    }
    const auto stretched = normalize(image, config_.normalization);
    std::vector<float> rgb(std::size_t(image.width()) * image.height() * 3, 0.0f);
    for (int c : channels) {
      const auto plane = stretched.channel(c);
      const auto& color = kPalette[c % 7];
      for (std::size_t i = 0; i < plane.size(); ++i) {
        for (int k = 0; k < 3; ++k) rgb[i * 3 + k] += plane[i] * float(color[k]);
      }
    }
    std::vector<std::uint8_t> out(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
      out[i] = std::uint8_t(std::lround(std::clamp(rgb[i], 0.0f, 255.0f)));
    }
    res.set_content(encode_png(out, image.width(), image.height(), 3), "image/png");
  });

  auto snapshot = [](Project* p) {
    std::lock_guard lock(p->mutex);
    return p->model;
  };

  server.Get(R"(/v1/projects/([^/]+)/images/([^/]+)/entropy)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string img;
    Project* p = image_of(req, res, img);
    if (!p) return;
    const auto model = snapshot(p);
    if (!model) {
      send_error(res, 409, "no model yet");
      return;
    }
    const auto image = normalize(load_image(p->image_path(img)), config_.normalization);
    const auto ens = mc_ensemble(*model, image, config_.passes, config_.seed, config_.tiles);
    res.set_header("X-Width", std::to_string(image.width()));
    res.set_header("X-Height", std::to_string(image.height()));
    if (req.get_param_value("format") == "raw") {
      std::string bytes(ens.entropy.values.size() * sizeof(float), '\0');
      std::memcpy(bytes.data(), ens.entropy.values.data(), bytes.size());
      res.set_content(bytes, "application/octet-stream");
      return;
    }
    // Heat colour ramp black → red → yellow → white; alpha follows H / ln 2.
    std::vector<std::uint8_t> rgba(ens.entropy.values.size() * 4);
    for (std::size_t i = 0; i < ens.entropy.values.size(); ++i) {
      const float v = std::clamp(ens.entropy.values[i] / float(std::log(2.0)), 0.0f, 1.0f);
      const float ramp[3] = {std::clamp(3 * v, 0.0f, 1.0f), std::clamp(3 * v - 1, 0.0f, 1.0f),
                             std::clamp(3 * v - 2, 0.0f, 1.0f)};
      for (int k = 0; k < 3; ++k) rgba[i * 4 + k] = std::uint8_t(std::lround(255 * ramp[k]));
      rgba[i * 4 + 3] = std::uint8_t(std::lround(255 * v));
    }
    res.set_content(encode_png(rgba, image.width(), image.height(), 4), "image/png");
  });

  server.Get(R"(/v1/projects/([^/]+)/images/([^/]+)/scribbles)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string img;
    Project* p = image_of(req, res, img);
    if (!p) return;
    std::lock_guard lock(p->mutex);
    json strokes = json::array();
    for (const auto& s : read_log(p->log_path())) {
      if (s.image != img) continue;
      auto j = stroke_json(s.stroke);
      j["round"] = s.round;
      strokes.push_back(j);
    }
    send_json(res, 200, {{"strokes", strokes}});
  });

  server.Post(R"(/v1/projects/([^/]+)/images/([^/]+)/scribbles)",
              [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string img;
    Project* p = image_of(req, res, img);
    if (!p) return;
    std::vector<Stroke> incoming;
    try {
      const auto body = json::parse(req.body);
      for (const auto& s : body.at("strokes")) {
        Stroke st;
        st.cls = s.at("class");
        for (const auto& px : s.at("pixels")) st.pixels.push_back({px.at(0), px.at(1)});
        incoming.push_back(std::move(st));
      }
    } catch (const json::exception& e) {
      send_error(res, 422, std::string("malformed scribbles: ") + e.what());
      return;
    }
    if (incoming.empty()) {
      send_error(res, 422, "no strokes submitted");
      return;
    }
    std::lock_guard lock(p->mutex);
    const auto header = read_header(p->image_path(img));
    const auto log = read_log(p->log_path());
    ScribbleSet set = scribbles_for(log, img, header.width, header.height);
    for (const auto& s : incoming) set.strokes.push_back(s);
    try {
      set.validate();
    } catch (const DataError& e) {
      send_json(res, 422, {{"error", e.what()}});
      return;
    }
    const int round = p->meta["round"].get<int>();
    std::string lines;
    for (const auto& s : incoming) {
      auto j = stroke_json(s);
      j["image"] = img;
      j["round"] = round;
      lines += j.dump() + "\n";
    }
    append_durably(p->log_path(), lines);
    send_json(res, 201, {{"appended", incoming.size()}, {"round", round}});
  });

  server.Post(R"(/v1/projects/([^/]+)/train)",
              [=, this](const httplib::Request& req, httplib::Response& res) {
    Project* p = project_of(req, res);
    if (!p) return;
    int epochs = config_.round_epochs;
    if (!req.body.empty()) epochs = json::parse(req.body).value("epochs", epochs);
    if (epochs < 1) {
      send_error(res, 422, "epochs must be >= 1");
      return;
    }
    std::lock_guard lock(p->mutex);
    if (p->state == "training") {
      send_error(res, 409, "a training round is already running");
      return;
    }
    if (p->meta["images"].empty()) {
      send_error(res, 422, "project has no images");
      return;
    }
    if (read_log(p->log_path()).empty()) {
      send_error(res, 422, "no scribbles yet");
      return;
    }
    start_training(*p, epochs);
    send_json(res, 202, {{"job", p->job}, {"round", p->meta["round"].get<int>() + 1}});
  });

  server.Get(R"(/v1/projects/([^/]+)/status)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    Project* p = project_of(req, res);
    if (!p) return;
    std::lock_guard lock(p->mutex);
    send_json(res, 200, {{"state", p->state},
                         {"round", p->meta["round"]},
                         {"job", p->job},
                         {"epoch", p->epoch},
                         {"epochs", p->epochs},
                         {"reason", p->reason},
                         {"has_model", p->model != nullptr}});
  });

  server.Get(R"(/v1/projects/([^/]+)/images/([^/]+)/instances)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string img;
    Project* p = image_of(req, res, img);
    if (!p) return;
    const auto model = snapshot(p);
    if (!model) {
      send_error(res, 409, "no model yet");
      return;
    }
    const auto image = normalize(load_image(p->image_path(img)), config_.normalization);
    const auto pred = predict_full(*model, image, config_.tiles);
    const auto labels = extract_instances(pred.foreground, config_.extract);
    json instances = json::array();
    for (std::uint32_t id = 1; id <= labels.max_label(); ++id) {
      json outline = json::array();
      for (const auto& px : trace_outline(labels, id)) outline.push_back({px.x, px.y});
      instances.push_back({{"id", id}, {"outline", outline}});
    }
    send_json(res, 200, {{"width", labels.width},
                         {"height", labels.height},
                         {"labels", labels.labels},
                         {"instances", instances}});
  });
}

}  // namespace impartial
