#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "restoregrad/checkpoint.hpp"
#include "restoregrad/error.hpp"
#include "test_util.hpp"

using namespace restoregrad;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_text = "T = 5\neta = 0.1\n";
  c.step = 1234;
  c.rng_seed = 99;
  c.rng_counter = 1ull << 40;
  auto f32 = rgtest::randn(12, 1);
  for (double& v : f32) v = static_cast<float>(v);
  c.arrays.push_back({"theta/in.w", DType::kF32, {3, 4}, f32});
  c.arrays.push_back({"adam/theta/in.w/m", DType::kF64, {12}, rgtest::randn(12, 2)});
  c.arrays.push_back({"scalar", DType::kF64, {1}, {-0.0}});
  return c;
}

std::string reseal(std::string bytes) {
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size() - 4)));
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
  return bytes;
}

}  // namespace

TEST_CASE("checkpoint round trip is lossless and byte stable") {
  const Checkpoint c = sample_checkpoint();
  const std::string a = serialize_checkpoint(c);
  const Checkpoint back = parse_checkpoint(a);
  CHECK(back.config_text == c.config_text);
  CHECK(back.step == c.step);
  CHECK(back.rng_seed == c.rng_seed);
  CHECK(back.rng_counter == c.rng_counter);
  REQUIRE(back.arrays.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.arrays[k].name == c.arrays[k].name);
    CHECK(back.arrays[k].dtype == c.arrays[k].dtype);
    CHECK(back.arrays[k].shape == c.arrays[k].shape);
    CHECK(std::memcmp(back.arrays[k].values.data(), c.arrays[k].values.data(), 8 * c.arrays[k].values.size()) == 0);
  }
  CHECK(serialize_checkpoint(back) == a);
  CHECK(back.find("scalar") != nullptr);
  CHECK(back.find("missing") == nullptr);
  CHECK(a.compare(0, 8, std::string("RGCKPT\0\1", 8)) == 0);
}

TEST_CASE("checkpoint files: save, load, save") {
  const auto dir = std::filesystem::temp_directory_path() / "restoregrad_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.bin").string(), p2 = (dir / "b.bin").string();
  save_checkpoint(p1, sample_checkpoint());
  save_checkpoint(p2, load_checkpoint(p1));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(p1) == slurp(p2));
  for (const auto& e : std::filesystem::directory_iterator(dir))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_checkpoint((dir / "none.bin").string()), CheckpointError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string good = serialize_checkpoint(sample_checkpoint());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(parse_checkpoint(good.substr(0, cut)), CheckpointError);
  for (std::size_t pos : {std::size_t{12}, good.size() / 2, good.size() - 10}) {
    std::string bad = good;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("checksum"), CheckpointError);
  }
  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(magic), CheckpointError);
  std::string version = good;
  version[8] = 2;
  CHECK_THROWS_WITH_AS(parse_checkpoint(reseal(version)), doctest::Contains("version"), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(good + "x"), CheckpointError);
}

TEST_CASE("unrepresentable arrays are refused") {
  Checkpoint c = sample_checkpoint();
  c.arrays[0].values[0] = 0.1;  // not a float
  CHECK_THROWS_AS(serialize_checkpoint(c), CheckpointError);
  c = sample_checkpoint();
  c.arrays[1].shape = {5};
  CHECK_THROWS_AS(serialize_checkpoint(c), CheckpointError);
}
