#include <fstream>

#include "doctest.h"
#include "support.hpp"

#include "impartial/manifest.hpp"

using namespace impartial;
using testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("hashes agree with known git and SHA-1 values") {
  CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("input hash covers contents and relative paths, not run manifests") {
  TempDir a("manifest"), b("manifest");
  for (const auto* d : {&a, &b}) {
    write(*d / "data/x.txt", "one");
    write(*d / "data/sub/y.txt", "two");
  }
  const std::vector<std::filesystem::path> ia{a / "data"}, ib{b / "data"};
  const auto h = input_hash(ia);
  CHECK(h == input_hash(ib));
  write(a / "data/run.json", "{}");
  CHECK(input_hash(ia) == h);
  write(a / "data/sub/y.txt", "two!");
  CHECK(input_hash(ia) != h);
  write(a / "data/sub/y.txt", "two");
  std::filesystem::rename(a / "data/x.txt", a / "data/z.txt");
  CHECK(input_hash(ia) != h);
  const std::vector<std::filesystem::path> single{b / "data/x.txt"};
  CHECK(input_hash(single).size() == 40);
}

TEST_CASE("run manifests round-trip through JSON") {
  TempDir dir("manifest");
  RunManifest m;
  m.command = "train";
  m.arguments = {"train", "--data", "d", "--seed", "3"};
  m.config = "seed=3\nepochs=2\n";
  m.seed = 3;
  m.inputs = {"d"};
  m.outputs = {"out/model.ckpt"};
  m.input_hash = sha1_hex("x");
  m.started = utc_timestamp();
  m.status = "running";
  write_run_manifest(m, dir / "run.json");
  const auto back = read_run_manifest(dir / "run.json");
  CHECK(back.command == m.command);
  CHECK(back.arguments == m.arguments);
  CHECK(back.config == m.config);
  CHECK(back.seed == 3);
  CHECK(back.outputs == m.outputs);
  CHECK(back.input_hash == m.input_hash);
  CHECK(back.started == m.started);
  CHECK(back.status == "running");
  CHECK(m.started.size() == 20);
  CHECK(m.started.back() == 'Z');
}
