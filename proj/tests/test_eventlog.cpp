#include <doctest.h>

#include <filesystem>
#include <random>

#include "framelog/error.hpp"
#include "framelog/eventlog.hpp"
#include "framelog/image.hpp"

using namespace framelog;
using namespace framelog::eventlog;

namespace {

const std::vector<std::string> kClasses{"A", "B", "C"};

nn::Tensor probs(const std::vector<std::vector<float>>& rows) {
  nn::Tensor t({static_cast<int>(rows.size()), static_cast<int>(rows[0].size()), 1, 1});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) t.at(int(i), int(k), 0, 0) = rows[i][k];
  return t;
}

nn::Tensor random_probs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < n; ++i) {
    std::vector<float> r(3);
    float s = 0;
    for (float& v : r) s += v = u(rng);
    for (float& v : r) v /= s;
    rows.push_back(r);
  }
  return probs(rows);
}

train::Classifier tiny_classifier() {
  arch::ArchSpec s = arch::preset("mini");
  s.input_height = s.input_width = 8;
  s.num_classes = 3;
  return {model::ResNet::build(s, 1), data::Normalizer::identity(3), kClasses};
}

}  // namespace

TEST_CASE("timestamps are index over fps") {
  const auto r = records_from_probs(random_probs(3, 1), kClasses, 30, 0.0);
  REQUIRE(r.size() == 3);
  CHECK(r[0].timestamp_s == 0.0);
  CHECK(r[1].timestamp_s == doctest::Approx(1.0 / 30));
  CHECK(r[2].timestamp_s == doctest::Approx(2.0 / 30));
  CHECK(r[2].frame_index == 2);
}

TEST_CASE("threshold extremes") {
  const auto p = random_probs(50, 2);
  for (const auto& r : records_from_probs(p, kClasses, 30, 0.0)) CHECK(r.event.has_value());
  for (const auto& r : records_from_probs(p, kClasses, 30, 1.01)) CHECK_FALSE(r.event.has_value());
  CHECK_THROWS_AS(records_from_probs(p, kClasses, 0, 0.5), ValueError);
  CHECK_THROWS_AS(records_from_probs(p, kClasses, 30, -0.1), ValueError);
}

TEST_CASE("null count never falls as the threshold rises") {
  const auto p = random_probs(200, 3);
  int last = -1;
  for (double tau = 0.0; tau <= 1.05; tau += 0.05) {
    int nulls = 0;
    for (const auto& r : records_from_probs(p, kClasses, 30, tau)) nulls += !r.event;
    CHECK(nulls >= last);
    last = nulls;
  }
  CHECK(last == 200);
}

TEST_CASE("A A B collapses into two spans") {
  const auto r = records_from_probs(probs({{0.9f, 0.05f, 0.05f}, {0.8f, 0.1f, 0.1f}, {0.1f, 0.8f, 0.1f}}),
                                    kClasses, 30, 0.5);
  const auto spans = collapse(r, 30);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == EventSpan{"A", 0.0, 2.0 / 30, 2});
  CHECK(spans[1].event == "B");
  CHECK(spans[1].start_s == doctest::Approx(2.0 / 30));
  CHECK(spans[1].end_s == doctest::Approx(3.0 / 30));
}

TEST_CASE("nulls and gaps break runs") {
  std::vector<EventRecord> r{{0, 0, "A", 0.9}, {1, 1.0 / 30, std::nullopt, 0.4}, {2, 2.0 / 30, "A", 0.9},
                             {4, 4.0 / 30, "A", 0.9}};
  const auto spans = collapse(r, 30);
  CHECK(spans.size() == 3);
  std::vector<EventRecord> nulls{{0, 0, std::nullopt, 0.1}};
  CHECK(collapse(nulls, 30).empty());
}

TEST_CASE("expand inverts collapse") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = records_from_probs(random_probs(300, seed), kClasses, 30, 0.5);
    const auto spans = collapse(r, 30);
    CHECK(expand(spans, 30) == non_null(r));
    const auto re = expand(spans, 30);
    std::vector<EventRecord> rebuilt;
    for (const auto& fe : re) rebuilt.push_back({fe.frame_index, fe.frame_index / 30.0, fe.event, 1.0});
    CHECK(collapse(rebuilt, 30) == spans);
  }
}

TEST_CASE("jsonl round trips") {
  const auto r = records_from_probs(random_probs(20, 4), kClasses, 25, 0.5);
  const std::string text = to_jsonl(r);
  CHECK(text.find("\"event\":null") != std::string::npos);
  CHECK(parse_records(text) == r);
  const auto spans = collapse(r, 25);
  CHECK(parse_spans(to_jsonl(spans)) == spans);
  CHECK_THROWS_AS(parse_records("{\"frame_index\":\n"), FormatError);
}

TEST_CASE("extract_log on tensors and files") {
  const train::Classifier clf = tiny_classifier();
  nn::Tensor frames({5, 3, 8, 8});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u;
  for (float& v : frames.values()) v = std::round(u(rng) * 255.0f) / 255.0f;
  const auto a = extract_log(clf, frames, 30, 0.0);
  CHECK(a.size() == 5);

  const auto dir = std::filesystem::temp_directory_path() / "framelog_elog";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (int i = 0; i < 5; ++i) {
    data::Image img{8, 8, std::vector<std::uint8_t>(192)};
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(frames.at(i, c, y, x) * 255.0f));
    paths.push_back(dir / ("f" + std::to_string(i) + ".ppm"));
    data::write_ppm(paths.back(), img);
  }
  const auto b = extract_log(clf, std::span<const std::filesystem::path>(paths), 30, 0.0);
  REQUIRE(b.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(b[i].event == a[i].event);
    CHECK(b[i].confidence == doctest::Approx(a[i].confidence).epsilon(1e-5));
  }
  paths.insert(paths.begin() + 2, dir / "missing.ppm");
  try {
    extract_log(clf, std::span<const std::filesystem::path>(paths), 30, 0.0);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
