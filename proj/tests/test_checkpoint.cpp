#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "atb/checkpoint.hpp"
#include "atb/csv.hpp"
#include "atb/error.hpp"
#include "atb/model.hpp"
#include "atb/rng.hpp"

using namespace atb;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("atb_test_" + std::to_string(Rng(::getpid()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("save/load round-trips float32 values bitwise") {
    TempDir tmp;
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 2}, 16, 8, 11);
    CheckpointMeta meta;
    meta.kind = "model";
    meta.config_json = "{\"arch\":" + arch_to_kv(m.arch) + "}";
    const std::string path = tmp.file("m.atbt");
    save_checkpoint(path, meta, m.params);
    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.meta.kind == "model");
    REQUIRE(ck.tensors.size() == m.params.size());
    // Values come back as the float32 rounding of what was saved.
    for (const auto& [name, t] : m.params) {
      const Tensor& r = ck.tensors.at(name);
      REQUIRE(r.shape() == t.shape());
      for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(r[i] == static_cast<double>(static_cast<float>(t[i])));
      }
    }
    // A second save of the loaded tensors is byte-identical.
    const std::string path2 = tmp.file("m2.atbt");
    save_checkpoint(path2, meta, ck.tensors);
    LoadedCheckpoint ck2 = load_checkpoint(path2);
    CHECK(bitwise_equal(ck.tensors, ck2.tensors));
    CHECK(ck.payload_hash == ck2.payload_hash);
  }

  TEST_CASE("identical saves produce byte-identical files") {
    TempDir tmp;
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 2}, 16, 8, 12);
    CheckpointMeta meta;
    meta.kind = "model";
    meta.config_json = "{}";
    save_checkpoint(tmp.file("a.atbt"), meta, m.params);
    save_checkpoint(tmp.file("b.atbt"), meta, m.params);
    CHECK(file_content_hash(tmp.file("a.atbt")) == file_content_hash(tmp.file("b.atbt")));
  }

  TEST_CASE("payload corruption is detected on load") {
    TempDir tmp;
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 2}, 16, 8, 13);
    CheckpointMeta meta;
    meta.kind = "model";
    meta.config_json = "{}";
    const std::string path = tmp.file("c.atbt");
    save_checkpoint(path, meta, m.params);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(-4, std::ios::end);
      const char junk[4] = {'X', 'X', 'X', 'X'};
      f.write(junk, 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  TEST_CASE("missing file and bad magic raise IoError") {
    TempDir tmp;
    CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.atbt")), IoError);
    const std::string bad = tmp.file("bad.atbt");
    std::ofstream(bad, std::ios::binary) << "NOPE this is not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  }

  TEST_CASE("run-config snapshot travels with the checkpoint") {
    TempDir tmp;
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 2}, 16, 8, 14);
    CheckpointMeta meta;
    meta.kind = "supernet";
    meta.config_json = "{\"vocab\":16}";
    meta.run_config_json = "{\"schema_version\":1}";
    const std::string path = tmp.file("s.atbt");
    save_checkpoint(path, meta, m.params);
    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.meta.run_config_json.find("schema_version") != std::string::npos);
  }
}

TEST_SUITE("csv") {
  TEST_CASE("writer emits LF rows that read back") {
    TempDir tmp;
    const std::string path = tmp.file("t.csv");
    CsvWriter w(path, {"a", "b"});
    w.row({"1", fmt_double(0.5)});
    w.row({fmt_double(1e-9), "x"});
    w.close();
    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text == "a,b\n1,0.5\n1e-09,x\n");
    const auto rows = read_csv(path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][1] == "0.5");
  }

  TEST_CASE("doubles round-trip through their printed form") {
    Rng rng(15);
    for (int i = 0; i < 200; ++i) {
      const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_int(8)) - 4.0);
      double back = 0.0;
      std::sscanf(fmt_double(v).c_str(), "%lf", &back);
      CHECK(back == v);
    }
  }

  TEST_CASE("row width is enforced") {
    TempDir tmp;
    CsvWriter w(tmp.file("w.csv"), {"a", "b", "c"});
    CHECK_THROWS_AS(w.row({"1", "2"}), ContractError);
  }
}
