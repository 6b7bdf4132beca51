// HTTP service for interactive annotation rounds.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"

#include "impartial/log.hpp"
#include "impartial/service.hpp"

namespace {
httplib::Server* g_server = nullptr;
void stop(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annotation service"};
  impartial::ServiceConfig config;
  config.train.model = impartial::ModelConfig::desk(1);
  config.train.sampling.patch_size = 64;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_level = "info";
  app.add_option("--root", config.root, "Project storage directory")->required();
  app.add_option("--host", host, "Listen address")->capture_default_str();
  app.add_option("--port", port, "Listen port")->capture_default_str();
  app.add_option("--round-epochs", config.round_epochs, "Epochs per training round")
      ->capture_default_str();
  app.add_option("--patch", config.train.sampling.patch_size, "Training patch size")
      ->capture_default_str();
  app.add_option("--passes", config.passes, "MC-dropout passes for entropy")->capture_default_str();
  app.add_option("--seed", config.seed, "Seed")->capture_default_str();
  app.add_option("--log-level", log_level, "Log level")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  impartial::log::logger()->set_level(spdlog::level::from_str(log_level));

  try {
    impartial::Service service(config);
    httplib::Server server;
    service.register_routes(server);
    g_server = &server;
    std::signal(SIGINT, stop);
    std::signal(SIGTERM, stop);
    impartial::log::info("listening on " + host + ":" + std::to_string(port));
    if (!server.listen(host, port)) {
      std::cerr << "cannot listen on " << host << ":" << port << "\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
