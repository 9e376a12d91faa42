#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "metagnn/binary_io.hpp"
#include "metagnn/edf.hpp"
#include "metagnn/errors.hpp"
#include "run_config.hpp"

namespace metagnn::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("metagnn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json small_spec() {
  return {{"patients", 6},    {"seed", 3},         {"background_s", 150},
          {"min_seizures", 2}, {"max_seizures", 4}};
}

nlohmann::json small_config(const fs::path& data, const fs::path& out) {
  return {{"schema_version", 1},
          {"arch", {{"hidden", {8, 8}}}},
          {"meta",
           {{"meta_iterations", 4}, {"tasks_per_meta_batch", 2},
            {"finetune_iterations", 3}, {"finetune_lr", 0.002}, {"seed", 5}}},
          {"global", {{"iterations", 5}, {"batch_size", 16}}},
          {"split", {{"train_min_seizures", 2}, {"test_patients", {"p004", "p005"}}}},
          {"ppat_iterations", 3},
          {"data_dir", data.string()},
          {"out_dir", out.string()}};
}

RunConfig finalized(const nlohmann::json& j) {
  auto c = j.get<RunConfig>();
  c.finalize();
  return c;
}

// One synthetic cohort shared by every test in the file.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch("suite"));
    write_text(*root_ / "spec.json", small_spec().dump());
    ASSERT_EQ(run_cli({"synth", "--spec", (*root_ / "spec.json").string(), "--out",
                       (*root_ / "data").string()}),
              kOk);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static fs::path data() { return *root_ / "data"; }
  static fs::path write_config(const std::string& name, const nlohmann::json& j) {
    const auto path = *root_ / (name + ".json");
    write_text(path, j.dump(2));
    return path;
  }
  static fs::path* root_;
};

fs::path* Cli::root_ = nullptr;

TEST(RunConfig, RejectsUnknownKeysAndVersions) {
  const auto dir = scratch("config");
  write_text(dir / "unknown.json", R"({"schema_version":1,"metaa":{}})");
  write_text(dir / "nested.json", R"({"schema_version":1,"meta":{"gama":0.5}})");
  write_text(dir / "version.json", R"({"schema_version":2})");
  write_text(dir / "missing.json", R"({"out_dir":"x"})");
  write_text(dir / "syntax.json", R"({"schema_version":1,)");
  for (const char* name : {"unknown", "nested", "version", "missing", "syntax"}) {
    const auto path = (dir / (std::string(name) + ".json")).string();
    EXPECT_EQ(run_cli({"preprocess", "-c", path, "--data", dir.string()}), kUserError)
        << name;
  }
  EXPECT_THROW(load_run_config(dir / "nested.json"), ConfigError);
  EXPECT_THROW(finalized(nlohmann::json::parse(R"({"schema_version":2})")), ConfigError);
  fs::remove_all(dir);
}

TEST(RunConfig, RoundTripsAndDerivesClassCount) {
  nlohmann::json j = small_config("d", "o");
  j["task"] = "classification";
  const auto c = finalized(j);
  EXPECT_EQ(c.arch.classes, 3u);
  EXPECT_EQ(c.arch.hidden, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(c.split.test_patients.size(), 2u);
  const nlohmann::json again = c;
  EXPECT_EQ(again.get<RunConfig>().meta.finetune_iterations, 3u);
}

TEST(Synth, ZeroPatientsIsAUserError) {
  const auto dir = scratch("synth0");
  EXPECT_EQ(run_cli({"synth", "--patients", "0", "--out", (dir / "d").string()}), kUserError);
  fs::remove_all(dir);
}

TEST(Synth, UnknownPresetIsAUserError) {
  EXPECT_EQ(run_cli({"synth", "--preset", "huge", "--out", "/tmp/x"}), kUserError);
}

TEST_F(Cli, SynthIsByteDeterministic) {
  const auto other = *root_ / "data_again";
  ASSERT_EQ(run_cli({"synth", "--spec", (*root_ / "spec.json").string(), "--out",
                     other.string()}),
            kOk);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(data())) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(other / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 6u + 2u);
  fs::remove_all(other);
}

TEST_F(Cli, PreprocessCachesAndMatchesDurations) {
  const auto out = *root_ / "pre";
  auto config = finalized(small_config(data(), out));
  std::ostringstream log;
  const auto first = cmd_preprocess(config, log);
  EXPECT_EQ(first.files, 6u);
  EXPECT_EQ(first.failed_files, 0u);
  EXPECT_EQ(first.patients_built, 6u);
  EXPECT_EQ(first.patients_cached, 0u);

  const auto montage = config.load_montage();
  for (const auto& p : first.patients) {
    const auto rec = parse_edf(
        binary::read_file((data() / (p.patient_id + "_r00.edf")).string()), montage,
        p.patient_id + "_r00");
    const auto expected = static_cast<std::size_t>(std::floor(rec.duration_s() / 10.0));
    const auto manifest =
        nlohmann::json::parse(slurp(config.resolved_cache_dir() / (p.patient_id + ".json")));
    EXPECT_EQ(manifest["clips"].get<std::size_t>() +
                  manifest["excluded_clips"].get<std::size_t>(),
              expected)
        << p.patient_id;
    EXPECT_EQ(p.clips.size(), manifest["clips"].get<std::size_t>());
  }

  const auto second = cmd_preprocess(config, log);
  EXPECT_EQ(second.patients_built, 0u);
  EXPECT_EQ(second.patients_cached, 6u);
  ASSERT_EQ(second.patients.size(), first.patients.size());
  for (std::size_t i = 0; i < first.patients.size(); ++i) {
    const auto& a = first.patients[i].clips;
    const auto& b = second.patients[i].clips;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_TRUE(a[k].same_clip(b[k]));
      EXPECT_EQ(a[k].features.data()[7], b[k].features.data()[7]);
    }
  }

  config.pipeline.cutoff_hz = 30;
  const auto altered = cmd_preprocess(config, log);
  EXPECT_EQ(altered.patients_built, 6u);
  EXPECT_EQ(altered.patients.front().clips.front().features.shape()[1], 300u);
  fs::remove_all(out);
}

TEST_F(Cli, PreprocessSkipsBadFiles) {
  const auto dir = *root_ / "mixed";
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(data())) {
    fs::copy_file(e.path(), dir / e.path().filename());
  }
  write_text(dir / "garbage.edf", "not an edf header");
  const auto full = slurp(data() / "p000_r00.edf");
  write_text(dir / "p009_r00.edf", full.substr(0, full.size() / 2));

  auto config = finalized(small_config(dir, *root_ / "mixed_out"));
  std::ostringstream log;
  const auto s = cmd_preprocess(config, log);
  EXPECT_EQ(s.files, 8u);
  EXPECT_EQ(s.failed_files, 2u);
  EXPECT_EQ(s.patients.size(), 6u);
  EXPECT_NE(log.str().find("skip garbage.edf"), std::string::npos) << log.str();
  EXPECT_NE(log.str().find("skip p009_r00.edf"), std::string::npos) << log.str();

  const auto empty = *root_ / "empty";
  fs::create_directories(empty);
  write_text(empty / "garbage.edf", "x");
  config.data_dir = empty.string();
  EXPECT_THROW(cmd_preprocess(config, log), FormatError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_F(Cli, MissingDataDirectoryIsAUserError) {
  auto j = small_config(*root_ / "nowhere", *root_ / "o");
  EXPECT_EQ(run_cli({"preprocess", "-c", write_config("nodata", j).string()}), kUserError);
}

TEST(Gradcheck, ExitCodes) {
  EXPECT_EQ(run_cli({"gradcheck", "--seeds", "2", "--filter", "gcn"}), kOk);
  EXPECT_EQ(run_cli({"gradcheck", "--seeds", "2", "--filter", "no-such-check"}),
            kNumericalError);
}

std::vector<std::string> csv_rows(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

TEST_F(Cli, EndToEndWorkflow) {
  const auto start = std::chrono::steady_clock::now();
  const auto out = *root_ / "run";
  const auto cfg = write_config("run", small_config(data(), out)).string();

  ASSERT_EQ(run_cli({"preprocess", "-c", cfg}), kOk);
  ASSERT_EQ(run_cli({"train", "-c", cfg}), kOk);
  EXPECT_TRUE(fs::exists(out / "model.ckpt"));
  EXPECT_EQ(csv_rows(out / "curves.csv").size(), 5u);
  ASSERT_EQ(run_cli({"finetune", "-c", cfg}), kOk);
  for (const char* p : {"p004", "p005"}) {
    EXPECT_TRUE(fs::exists(out / "finetuned" / (std::string(p) + ".ckpt")));
    EXPECT_EQ(csv_rows(out / "traces" / (std::string(p) + ".csv")).size(), 5u);
  }
  ASSERT_EQ(run_cli({"eval", "-c", cfg}), kOk);
  const auto eval_rows = csv_rows(out / "report.csv");
  ASSERT_EQ(eval_rows.size(), 2u);
  EXPECT_EQ(eval_rows[1].rfind("GCN-ML,detection,3,", 0), 0u) << eval_rows[1];
  EXPECT_TRUE(fs::exists(out / "eval.config.json"));

  ASSERT_EQ(run_cli({"baselines", "-c", cfg}), kOk);
  const auto rows = csv_rows(out / "baselines" / "report.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].rfind("Glob-GCN,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("GCN-PPAT,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("GCN-ML,", 0), 0u);

  // A fixed checkpoint scored through eval reproduces the baseline row.
  const auto glob_out = *root_ / "glob_eval";
  ASSERT_EQ(run_cli({"eval", "-c", cfg, "--out", glob_out.string(), "--checkpoint",
                     (out / "baselines" / "glob.ckpt").string()}),
            kOk);
  const auto glob_rows = csv_rows(glob_out / "report.csv");
  ASSERT_EQ(glob_rows.size(), 2u);
  EXPECT_EQ(glob_rows[1].substr(glob_rows[1].find(',')), rows[1].substr(rows[1].find(',')));

  // Same config and seed: identical report bytes, also with a different
  // worker count.
  const auto again = *root_ / "run_again";
  ASSERT_EQ(run_cli({"--threads", "3", "baselines", "-c", cfg, "--out", again.string()}), kOk);
  EXPECT_EQ(slurp(out / "baselines" / "report.csv"), slurp(again / "baselines" / "report.csv"));
  EXPECT_EQ(slurp(out / "baselines" / "report.json"), slurp(again / "baselines" / "report.json"));

  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(elapsed.count(), 300.0);
}

TEST_F(Cli, FinetuneWithoutCheckpointIsAUserError) {
  const auto out = *root_ / "fresh";
  const auto cfg = write_config("fresh", small_config(data(), out)).string();
  EXPECT_EQ(run_cli({"finetune", "-c", cfg}), kUserError);
}

}  // namespace
}  // namespace metagnn::cli
