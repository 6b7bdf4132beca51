#include "impartial/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>

#include "json.hpp"

#include "impartial/data.hpp"
#include "impartial/error.hpp"

namespace fs = std::filesystem;

namespace impartial {

std::string sha1_hex(std::string_view bytes) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream os;
  for (unsigned char b : digest) os << std::hex << std::setw(2) << std::setfill('0') << int(b);
  return os.str();
}

std::string git_blob_hash(std::string_view content) {
  std::string buf = "blob " + std::to_string(content.size());
  buf.push_back('\0');
  buf.append(content);
  return sha1_hex(buf);
}

std::string input_hash(std::span<const fs::path> inputs) {
  std::string listing;
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw DataError("input does not exist: " + in.string());
    std::vector<std::pair<std::string, fs::path>> files;
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() != "run.json") {
          files.push_back({fs::relative(e.path(), in).generic_string(), e.path()});
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back({in.filename().generic_string(), in});
    }
    for (const auto& [name, path] : files) {
      listing += git_blob_hash(read_file(path)) + " " + name + "\n";
    }
  }
  return sha1_hex(listing);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string to_json(const RunManifest& m) {
  nlohmann::json j = {{"command", m.command},       {"arguments", m.arguments},
                      {"config", m.config},         {"seed", m.seed},
                      {"inputs", m.inputs},         {"outputs", m.outputs},
                      {"input_hash", m.input_hash}, {"started", m.started},
                      {"finished", m.finished},     {"status", m.status}};
  return j.dump(2) + "\n";
}

RunManifest parse_run_manifest(const std::string& text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command");
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seed = j.at("seed");
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.input_hash = j.at("input_hash");
    m.started = j.at("started");
    m.finished = j.at("finished");
    m.status = j.at("status");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void write_run_manifest(const RunManifest& manifest, const fs::path& path) {
  write_file_atomic(path, to_json(manifest));
}

RunManifest read_run_manifest(const fs::path& path) { return parse_run_manifest(read_file(path)); }

}  // namespace impartial
