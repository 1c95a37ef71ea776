#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikekit/experiment.hpp"

namespace fs = std::filesystem;
using namespace spikekit;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("spikekit_exp_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::string write_config(const TempDir& dir, const char* name,
                         const std::string& body) {
  const std::string path = dir.file(name);
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const char* kTinyTrain = R"({
  "mode": "train",
  "seed": 3,
  "model": {"kind": "lif", "n_rec": 10},
  "dataset": {"kind": "two_sines", "n_train": 24, "n_test": 12, "steps": 12},
  "rule": {"kind": "bptt"},
  "optimizer": {"kind": "adam", "lr": 0.003},
  "training": {"epochs": 2, "batch_size": 8}
})";

}  // namespace

TEST_CASE("validate accepts a minimal config") {
  TempDir dir;
  const std::string path = write_config(dir, "ok.json", kTinyTrain);
  const ValidationReport report = validate_config_file(path);
  CHECK(report.ok());
}

TEST_CASE("validate reports unknown rules with the valid options") {
  TempDir dir;
  const std::string path = write_config(dir, "bad.json", R"({
    "mode": "train", "seed": 1,
    "model": {"kind": "lif"},
    "dataset": {"kind": "two_sines"},
    "rule": {"kind": "quantum"}
  })");
  const ValidationReport report = validate_config_file(path);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const std::string& p : report.problems)
    if (p.find("quantum") != std::string::npos &&
        p.find("bptt") != std::string::npos &&
        p.find("eprop") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("validate flags e-prop on an MLP as a cross-field problem") {
  TempDir dir;
  const std::string path = write_config(dir, "cross.json", R"({
    "mode": "train", "seed": 1,
    "model": {"kind": "mlp"},
    "dataset": {"kind": "gaussian_blobs"},
    "rule": {"kind": "eprop"}
  })");
  const ValidationReport report = validate_config_file(path);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const std::string& p : report.problems)
    if (p.find("e-prop") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("validate requires a seed") {
  TempDir dir;
  const std::string path = write_config(dir, "noseed.json", R"({
    "mode": "train",
    "model": {"kind": "lif"},
    "dataset": {"kind": "two_sines"},
    "rule": {"kind": "bptt"}
  })");
  CHECK_FALSE(validate_config_file(path).ok());
}

TEST_CASE("train mode writes history and summary") {
  TempDir dir;
  const std::string cfg = write_config(dir, "train.json", kTinyTrain);
  const std::string out = dir.file("out");
  CHECK(run_experiment(cfg, out) == 0);
  const auto rows = parse_csv(fs::path(out) / "history.csv");
  REQUIRE(rows.size() == 3);  // header + 2 epochs
  CHECK(rows[0] == std::vector<std::string>{"epoch", "loss", "accuracy",
                                            "firing_rate"});
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].size() == 4);
  CHECK(fs::exists(fs::path(out) / "summary.json"));
}

TEST_CASE("train mode with lr=0 produces a flat loss column") {
  TempDir dir;
  const std::string cfg = write_config(dir, "flat.json", R"({
    "mode": "train", "seed": 5,
    "model": {"kind": "lif", "n_rec": 8},
    "dataset": {"kind": "two_sines", "n_train": 16, "n_test": 8, "steps": 10},
    "rule": {"kind": "bptt"},
    "optimizer": {"kind": "sgd", "lr": 0.0},
    "training": {"epochs": 3, "batch_size": 8}
  })");
  const std::string out = dir.file("out");
  REQUIRE(run_experiment(cfg, out) == 0);
  const auto rows = parse_csv(fs::path(out) / "history.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][1] == rows[2][1]);
  CHECK(rows[2][1] == rows[3][1]);
}

TEST_CASE("compare mode with duplicate rules records zero deviations") {
  TempDir dir;
  const std::string cfg = write_config(dir, "cmp.json", R"({
    "mode": "compare", "seed": 7,
    "model": {"kind": "alif", "n_rec": 8},
    "dataset": {"kind": "two_sines", "n_train": 32, "n_test": 8, "steps": 10},
    "rules": [{"kind": "eprop", "mode": "symmetric"},
              {"kind": "eprop", "mode": "symmetric"}],
    "optimizer": {"kind": "naive"},
    "training": {"steps": 3, "batch_size": 16}
  })");
  const std::string out = dir.file("out");
  REQUIRE(run_experiment(cfg, out) == 0);
  const auto rows = parse_csv(fs::path(out) / "comparison.csv");
  REQUIRE(rows.size() > 1);
  CHECK(rows[0] == std::vector<std::string>{"step", "rule", "param", "cosine",
                                            "rel_l2", "bias"});
  bool saw_duplicate = false;
  for (size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 6);
    if (rows[i][1] == "eprop_symmetric#2") {
      saw_duplicate = true;
      CHECK(std::stod(rows[i][3]) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(std::stod(rows[i][4]) == doctest::Approx(0.0));
      CHECK(std::stod(rows[i][5]) == doctest::Approx(0.0));
    }
  }
  CHECK(saw_duplicate);
}

TEST_CASE("same config and seed give byte-identical outputs") {
  TempDir dir;
  const std::string cfg = write_config(dir, "det.json", kTinyTrain);
  const std::string out1 = dir.file("out1"), out2 = dir.file("out2");
  REQUIRE(run_experiment(cfg, out1) == 0);
  REQUIRE(run_experiment(cfg, out2) == 0);
  CHECK(slurp(fs::path(out1) / "history.csv") ==
        slurp(fs::path(out2) / "history.csv"));
  CHECK(slurp(fs::path(out1) / "summary.json") ==
        slurp(fs::path(out2) / "summary.json"));
}

TEST_CASE("encode mode emits the spike table and sparsity summary") {
  TempDir dir;
  const std::string cfg = write_config(dir, "enc.json", R"({
    "mode": "encode", "seed": 9,
    "dataset": {"kind": "two_sines", "n_train": 8, "n_test": 4, "steps": 20},
    "encoder": {"kind": "sf", "threshold": 0.4}
  })");
  const std::string out = dir.file("out");
  REQUIRE(run_experiment(cfg, out) == 0);
  const auto rows = parse_csv(fs::path(out) / "encoded.csv");
  REQUIRE(rows.size() == 1 + 8 * 20);
  for (size_t i = 1; i < rows.size(); ++i) {
    const double v = std::stod(rows[i][3]);
    CHECK((v == 0.0 || v == 1.0 || v == -1.0));
  }
  const std::string summary = slurp(fs::path(out) / "summary.json");
  CHECK(summary.find("sparsity") != std::string::npos);
  CHECK(summary.find("naive_delta_density") != std::string::npos);
}

TEST_CASE("sample mode emits chain and uncertainty files") {
  TempDir dir;
  const std::string cfg = write_config(dir, "mala.json", R"({
    "mode": "sample", "seed": 11,
    "model": {"kind": "mlp", "hidden": [6]},
    "dataset": {"kind": "gaussian_blobs", "n_train": 48, "n_test": 24,
                 "blob_std": 0.55, "classes": 3},
    "optimizer": {"kind": "naive"},
    "sampling": {"steps": 300, "burn_in": 150, "thin": 3, "sigma0": 0.05}
  })");
  const std::string out = dir.file("out");
  REQUIRE(run_experiment(cfg, out) == 0);
  const auto chain = parse_csv(fs::path(out) / "samples.csv");
  REQUIRE(chain.size() == 1 + 450);
  CHECK(chain[0] == std::vector<std::string>{"step", "log_post", "accepted"});
  const auto unc = parse_csv(fs::path(out) / "uncertainty.csv");
  REQUIRE(unc.size() == 1 + 24);
  CHECK(unc[0] == std::vector<std::string>{"example_id", "correct", "entropy",
                                           "std"});
  for (size_t i = 1; i < unc.size(); ++i) {
    REQUIRE(unc[i].size() == 4);
    CHECK(std::stod(unc[i][2]) >= 0.0);
  }
}

TEST_CASE("exit codes distinguish config from runtime failures") {
  TempDir dir;
  SUBCASE("missing file is a config error") {
    CHECK(run_experiment(dir.file("absent.json")) == 1);
  }
  SUBCASE("invalid config is a config error") {
    const std::string cfg = write_config(dir, "bad.json", R"({
      "mode": "train", "seed": 1,
      "model": {"kind": "lif"},
      "dataset": {"kind": "two_sines"},
      "rule": {"kind": "nope"}
    })");
    CHECK(run_experiment(cfg) == 1);
  }
  SUBCASE("missing dataset files are a runtime failure") {
    const std::string cfg = write_config(dir, "mnist.json", R"({
      "mode": "train", "seed": 1,
      "model": {"kind": "mlp"},
      "dataset": {"kind": "mnist", "dir": "/nonexistent_dir_xyz"},
      "rule": {"kind": "bptt"}
    })");
    CHECK(run_experiment(cfg, dir.file("out")) == 2);
  }
}

TEST_CASE("environment variable overrides the output directory") {
  TempDir dir;
  const std::string cfg = write_config(dir, "env.json", kTinyTrain);
  const std::string out = dir.file("env_out");
  setenv(kOutputDirEnvVar, out.c_str(), 1);
  REQUIRE(run_experiment(cfg) == 0);
  unsetenv(kOutputDirEnvVar);
  CHECK(fs::exists(fs::path(out) / "history.csv"));
}
