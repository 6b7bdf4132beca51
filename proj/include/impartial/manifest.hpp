#pragma once

// Run manifests written by the command-line tools before any other output.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace impartial {

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config;  // resolved flat key=value configuration
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string input_hash;
  std::string started;
  std::string finished;  // empty while running
  std::string status;    // "running", "ok" or an error message
};

std::string sha1_hex(std::string_view bytes);

/// Hash git assigns to a blob with this content: sha1("blob <n>\0" + content).
std::string git_blob_hash(std::string_view content);

/// Combined hash of files and directory trees. Each regular file contributes
/// "<blob hash> <path>\n" (paths relative to the named input, sorted); the
/// lines of all inputs are hashed together in argument order. Run manifests
/// (run.json) inside directories are skipped.
std::string input_hash(std::span<const std::filesystem::path> inputs);

std::string utc_timestamp();

std::string to_json(const RunManifest& manifest);
RunManifest parse_run_manifest(const std::string& text);

/// Atomic write of `run.json`-style manifests.
void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);

}  // namespace impartial
