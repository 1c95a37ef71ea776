#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "spikekit/data.hpp"

using namespace spikekit;
using spikekit::testing::max_abs_diff;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("spikekit_test_" + std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

void write_raw(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

TEST_CASE("IDX fixtures round-trip through the internal writer") {
  TempDir dir;
  Tensor images({2, 4});
  images(0, 0) = 0.0;
  images(0, 1) = 128.0 / 255.0;
  images(0, 2) = 1.0;
  images(0, 3) = 17.0 / 255.0;
  images(1, 2) = 200.0 / 255.0;
  const std::vector<int> labels{3, 7};
  write_idx(dir.file("imgs"), dir.file("labs"), images, 2, 2, labels);

  const Dataset d = load_idx(dir.file("imgs"), dir.file("labs"));
  CHECK(d.size() == 2);
  CHECK(d.inputs.shape() == std::vector<int>{2, 4});
  CHECK(max_abs_diff(d.inputs, images) == 0.0);  // byte-exact values
  CHECK(d.labels == labels);
  CHECK(d.class_count == 8);
}

TEST_CASE("IDX header errors") {
  TempDir dir;

  SUBCASE("wrong magic reports the found value") {
    std::vector<unsigned char> img;
    append(img, be32(2052));
    append(img, be32(1));
    append(img, be32(1));
    append(img, be32(1));
    img.push_back(0);
    write_raw(dir.file("bad_imgs"), img);
    std::vector<unsigned char> lab;
    append(lab, be32(2049));
    append(lab, be32(1));
    lab.push_back(0);
    write_raw(dir.file("labs"), lab);
    try {
      (void)load_idx(dir.file("bad_imgs"), dir.file("labs"));
      FAIL("expected a magic error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("2052") != std::string::npos);
    }
  }
  SUBCASE("mismatched image and label counts") {
    Tensor images({2, 1});
    write_idx(dir.file("imgs"), dir.file("labs2"), images, 1, 1, {0, 1});
    std::vector<unsigned char> lab;
    append(lab, be32(2049));
    append(lab, be32(3));
    lab.push_back(0);
    lab.push_back(1);
    lab.push_back(2);
    write_raw(dir.file("labs3"), lab);
    CHECK_THROWS_AS((void)load_idx(dir.file("imgs"), dir.file("labs3")),
                    std::runtime_error);
  }
  SUBCASE("truncated pixel data") {
    std::vector<unsigned char> img;
    append(img, be32(2051));
    append(img, be32(2));
    append(img, be32(2));
    append(img, be32(2));
    img.push_back(0);  // needs 8 pixel bytes, provides 1
    write_raw(dir.file("trunc"), img);
    std::vector<unsigned char> lab;
    append(lab, be32(2049));
    append(lab, be32(2));
    lab.push_back(0);
    lab.push_back(1);
    write_raw(dir.file("labs4"), lab);
    try {
      (void)load_idx(dir.file("trunc"), dir.file("labs4"));
      FAIL("expected a truncation error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
}

TEST_CASE("image to sequence conversions") {
  Dataset flat;
  flat.inputs = Tensor({2, 4});
  flat.labels = {0, 1};
  flat.class_count = 2;

  SUBCASE("all-black images never spike") {
    Dataset seq = image_to_sequence(flat, SequenceMode::threshold_crossing, 8);
    CHECK(max_abs(seq.inputs) == 0.0);
  }
  SUBCASE("all-white images spike at t=0") {
    Dataset white = flat;
    white.inputs = Tensor::full({2, 4}, 1.0);
    Dataset seq = image_to_sequence(white, SequenceMode::threshold_crossing, 8);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) {
        CHECK(seq.inputs(i, 0, j) == 1.0);
        for (int t = 1; t < 8; ++t) CHECK(seq.inputs(i, t, j) == 0.0);
      }
  }
  SUBCASE("brighter pixels spike earlier") {
    Dataset img = flat;
    img.inputs = Tensor({1, 4}, {1.0, 0.75, 0.25, 0.0});
    img.labels = {0};
    Dataset seq = image_to_sequence(img, SequenceMode::threshold_crossing, 9);
    CHECK(seq.inputs(0, 0, 0) == 1.0);
    CHECK(seq.inputs(0, 2, 1) == 1.0);
    CHECK(seq.inputs(0, 6, 2) == 1.0);
    double col3 = 0.0;
    for (int t = 0; t < 9; ++t) col3 += seq.inputs(0, t, 3);
    CHECK(col3 == 0.0);
  }
  SUBCASE("row scan keeps one row per timestep") {
    Dataset digits = synthetic_digits(3, 1);
    Dataset seq = image_to_sequence(digits, SequenceMode::row_scan, 0);
    CHECK(seq.inputs.shape() == std::vector<int>{3, 28, 28});
    for (int r = 0; r < 28; ++r)
      for (int col = 0; col < 28; ++col)
        CHECK(seq.inputs(0, r, col) == digits.inputs(0, r * 28 + col));
  }
  SUBCASE("non-square images are rejected") {
    Dataset bad;
    bad.inputs = Tensor({1, 6});
    bad.labels = {0};
    bad.class_count = 1;
    CHECK_THROWS_AS(
        (void)image_to_sequence(bad, SequenceMode::row_scan, 0),
        std::invalid_argument);
  }
}

TEST_CASE("synthetic tasks") {
  SyntheticConfig cfg;
  cfg.n = 40;

  SUBCASE("a fixed seed reproduces the dataset exactly") {
    const Dataset a = synthetic_task("two_sines", 5, cfg);
    const Dataset b = synthetic_task("two_sines", 5, cfg);
    CHECK(a.inputs.values() == b.inputs.values());
    CHECK(a.labels == b.labels);
  }
  SUBCASE("classes are balanced by construction") {
    for (const char* name : {"two_sines", "pattern_detect"}) {
      const Dataset d = synthetic_task(name, 6, cfg);
      int ones = 0;
      for (int y : d.labels) ones += y;
      CHECK(ones == cfg.n / 2);
    }
  }
  SUBCASE("unknown names list the valid options") {
    try {
      (void)synthetic_task("nope", 1, cfg);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("two_sines") != std::string::npos);
      CHECK(msg.find("pattern_detect") != std::string::npos);
      CHECK(msg.find("gaussian_blobs") != std::string::npos);
    }
  }
  SUBCASE("synthetic digits stay in range with balanced classes") {
    const Dataset d = synthetic_digits(30, 9);
    CHECK(d.class_count == 10);
    for (double v : d.inputs.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (int i = 0; i < 30; ++i) CHECK(d.labels[static_cast<size_t>(i)] == i % 10);
  }
}

TEST_CASE("delimited sequence files") {
  TempDir dir;

  SUBCASE("write-then-read round trip") {
    SyntheticConfig cfg;
    cfg.n = 6;
    cfg.steps = 5;
    const Dataset d = synthetic_task("two_sines", 8, cfg);
    write_delimited_sequences(dir.file("seq.csv"), d);
    const Dataset back = load_delimited_sequences(dir.file("seq.csv"), 5, 1);
    CHECK(back.labels == d.labels);
    CHECK(max_abs_diff(back.inputs, d.inputs) < 1e-9);
  }
  SUBCASE("single-row file") {
    std::ofstream out(dir.file("one.csv"));
    out << "1,0.5,0.25\n";
    out.close();
    const Dataset d = load_delimited_sequences(dir.file("one.csv"), 2, 1);
    CHECK(d.size() == 1);
    CHECK(d.labels[0] == 1);
    CHECK(d.inputs(0, 1, 0) == 0.25);
  }
  SUBCASE("a ragged row names its line number") {
    std::ofstream out(dir.file("ragged.csv"));
    out << "0,1,2\n0,3,4\n0,5\n";
    out.close();
    try {
      (void)load_delimited_sequences(dir.file("ragged.csv"), 2, 1);
      FAIL("expected a ragged-row error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
}

TEST_CASE("shuffling is a permutation and batching covers every sample once") {
  std::mt19937_64 rng(10);
  const std::vector<int> order = shuffled_indices(17, rng);
  std::set<int> seen(order.begin(), order.end());
  CHECK(seen.size() == 17);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 16);

  SyntheticConfig cfg;
  cfg.n = 17;
  const Dataset d = synthetic_task("two_sines", 11, cfg);
  std::multiset<double> original, covered;
  for (int i = 0; i < d.size(); ++i) original.insert(d.inputs(i, 0, 0));
  for (int from = 0; from < 17; from += 5) {
    const int to = std::min(17, from + 5);
    const Batch b = take_batch(d, order, from, to);
    for (int i = 0; i < b.size(); ++i) covered.insert(b.inputs(i, 0, 0));
  }
  CHECK(original == covered);
}
