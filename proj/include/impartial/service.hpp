#pragma once

// HTTP service for the annotate → train → inspect loop. All routes live under
// /v1:
//
//   POST /v1/projects                                   create  → 201 {"id"}
//   GET  /v1/projects                                   list
//   GET  /v1/projects/{id}                              metadata
//   POST /v1/projects/{id}/images                       multipart "header", "payload", optional "id"
//   GET  /v1/projects/{id}/images                       list
//   GET  /v1/projects/{id}/images/{img}/composite       PNG; ?channels=0,2
//   GET  /v1/projects/{id}/images/{img}/entropy         PNG overlay; ?format=raw for float32
//   GET  /v1/projects/{id}/images/{img}/scribbles       strokes in submission order
//   POST /v1/projects/{id}/images/{img}/scribbles       {"strokes":[{"class":1,"pixels":[[x,y],...]}]}
//   POST /v1/projects/{id}/train                        → 202 {"job"}; optional {"epochs"}
//   GET  /v1/projects/{id}/status
//   GET  /v1/projects/{id}/images/{img}/instances       labels + outlines
//
// A project is a directory under <root>/projects/<id>: project.json, images/,
// scribbles.jsonl (append-only, one stroke per line, fsync'd before the
// response) and models/round_<n>.ckpt.
//
// Composite palette, by channel index modulo 7: red, green, blue, yellow,
// magenta, cyan, white. Each channel is stretched between its 1st and 99th
// percentiles before mixing.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "impartial/experiments.hpp"

namespace httplib {
class Server;
}

namespace impartial {

struct ServiceConfig {
  std::filesystem::path root;
  TrainConfig train;  // in_channels is taken from the project's images
  int round_epochs = 50;
  TileConfig tiles;
  ExtractConfig extract;
  NormalizationConfig normalization;
  int passes = 8;
  std::uint64_t seed = 0;
};

/// 8-bit RGB (or RGBA) PNG encoding.
std::string encode_png(const std::vector<std::uint8_t>& pixels, int width, int height,
                       int channels);

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void register_routes(httplib::Server& server);

  /// Blocks until the project has no running training job.
  void wait_idle(const std::string& project);

  struct Project;

 private:
  Project* find(const std::string& id);
  Project& create_project(const std::string& name);
  void start_training(Project& p, int epochs);

  ServiceConfig config_;
  std::mutex projects_mutex_;
  std::map<std::string, std::unique_ptr<Project>> projects_;
};

}  // namespace impartial
