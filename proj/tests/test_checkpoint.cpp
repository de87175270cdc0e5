#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "framelog/checkpoint.hpp"
#include "framelog/error.hpp"

using namespace framelog;
using nn::Tensor;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.metadata = R"({"kind":"test"})";
  c.add("a.weight", Tensor({2, 1, 1, 3}, std::vector<float>{1, -2, 3.5f, 0, 1e-30f, -0.0f}));
  c.add("b", Tensor({1, 1, 1, 1}, 42.0f));
  return c;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("serialize round-trips bit for bit") {
  const Checkpoint c = sample();
  const std::string bytes = c.serialize();
  const Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back == c);
  CHECK(back.serialize() == bytes);
  CHECK(back.names() == std::vector<std::string>{"a.weight", "b"});
  CHECK(std::signbit(back.get("a.weight")[5]));
}

TEST_CASE("header layout") {
  const std::string bytes = sample().serialize();
  CHECK(bytes.substr(0, 8) == "FLOGCKPT");
  std::uint32_t version = 0, count = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&count, bytes.data() + 12, 4);
  CHECK(version == 1);
  CHECK(count == 2);
  // data section ends the file: 7 floats
  float last = 0;
  std::memcpy(&last, bytes.data() + bytes.size() - 4, 4);
  CHECK(last == 42.0f);
}

TEST_CASE("corrupt input is a format error") {
  std::string bytes = sample().serialize();
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(bad), FormatError);
  bad = bytes;
  bad[8] = 9;
  CHECK_THROWS_AS(Checkpoint::deserialize(bad), FormatError);
  CHECK_THROWS_AS(Checkpoint::deserialize(""), FormatError);
}

TEST_CASE("names are unique and lookups are checked") {
  Checkpoint c = sample();
  CHECK_THROWS_AS(c.add("b", Tensor({1, 1, 1, 1})), ValueError);
  CHECK_THROWS_AS(c.get("zzz"), ValueError);
  CHECK(c.has("a.weight"));
}

TEST_CASE("save and load through a file") {
  const auto dir = std::filesystem::temp_directory_path() / "framelog_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "x.flog";
  sample().save(path);
  CHECK(Checkpoint::load(path) == sample());
  CHECK_THROWS_AS(Checkpoint::load(dir / "missing.flog"), IoError);
  std::filesystem::remove_all(dir);
}
