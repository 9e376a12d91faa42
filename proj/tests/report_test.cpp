#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metagnn/baselines.hpp"
#include "metagnn/metrics.hpp"
#include "metagnn/montage.hpp"
#include "metagnn/report.hpp"

namespace metagnn {
namespace {

ConfusionMatrix cm_of(std::vector<int> truth, std::vector<int> pred, std::size_t classes) {
  return ConfusionMatrix::from_labels(truth, pred, classes);
}

TEST(Metrics, WorkedExample) {
  const auto cm = cm_of({1, 1, 0, 0}, {1, 0, 0, 0}, 2);
  EXPECT_DOUBLE_EQ(accuracy(cm), 0.75);
  // class 0: P 2/3 R 1 -> 0.8; class 1: P 1 R 1/2 -> 2/3
  EXPECT_NEAR(class_f1(cm, 0), 0.8, 1e-15);
  EXPECT_NEAR(class_f1(cm, 1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(macro_f1(cm), (0.8 + 2.0 / 3.0) / 2, 1e-15);
}

TEST(Metrics, PerfectAndAllWrong) {
  const auto perfect = metrics_of(cm_of({0, 1, 2, 1}, {0, 1, 2, 1}, 3));
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.macro_f1, 1.0);
  const auto wrong = metrics_of(cm_of({0, 1, 0, 1}, {1, 0, 1, 0}, 2));
  EXPECT_EQ(wrong.accuracy, 0.0);
  EXPECT_EQ(wrong.macro_f1, 0.0);
}

TEST(Metrics, AbsentClassCountsAsZero) {
  const auto cm = cm_of({0, 0, 1}, {0, 0, 1}, 3);
  EXPECT_EQ(class_f1(cm, 2), 0.0);
  EXPECT_NEAR(macro_f1(cm), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(accuracy(ConfusionMatrix(2)), std::invalid_argument);
  EXPECT_THROW(macro_f1(ConfusionMatrix(2)), std::invalid_argument);
}

TEST(Metrics, MatchesBruteForceCounting) {
  std::vector<int> t, p;
  for (int i = 0; i < 60; ++i) {
    t.push_back((i * 7) % 3);
    p.push_back((i * 5 + i / 4) % 3);
  }
  const auto cm = cm_of(t, p, 3);
  double f1sum = 0;
  for (int k = 0; k < 3; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp += t[i] == k && p[i] == k;
      fp += t[i] != k && p[i] == k;
      fn += t[i] == k && p[i] != k;
    }
    f1sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  EXPECT_NEAR(macro_f1(cm), f1sum / 3, 1e-15);
}

ModelEvaluation row(std::string name, double acc, double f1, std::size_t iterations) {
  ModelEvaluation e;
  e.model = std::move(name);
  e.iterations = iterations;
  PatientReport a{"te000", {acc, f1}, {}};
  PatientReport b{"te001", {acc, f1}, {}};
  for (std::size_t i = 0; i <= iterations; ++i) {
    a.trace.push_back({i, 1.0 / double(i + 1), {acc, f1}});
    b.trace.push_back({i, 1.0 / double(i + 2), {acc, f1}});
  }
  e.patients = {a, b};
  e.mean = patient_average(e.patients);
  return e;
}

TEST(Report, CsvLayout) {
  const std::vector<ModelEvaluation> rows{row("Glob-GCN", 0.5, 0.25, 0), row("GCN-ML", 0.875, 0.8, 2)};
  std::ostringstream out;
  write_report_csv(out, rows);
  EXPECT_EQ(out.str(),
            "model,task,iterations,accuracy,macro_f1\n"
            "Glob-GCN,detection,0,0.500000,0.250000\n"
            "GCN-ML,detection,2,0.875000,0.800000\n");
  const auto j = report_json(rows);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["patients"].size(), 2u);
}

TEST(Report, TraceCsvAndDirectory) {
  std::ostringstream out;
  write_trace_csv(out, row("x", 1, 1, 1).patients[0].trace);
  EXPECT_EQ(out.str(), "iteration,support_loss,accuracy,macro_f1\n"
            "0,1.000000,1.000000,1.000000\n1,0.500000,1.000000,1.000000\n");
  const auto dir = std::filesystem::temp_directory_path() / "metagnn_report_test";
  std::filesystem::remove_all(dir);
  const std::vector<ModelEvaluation> rows{row("Glob-GCN", 0.5, 0.25, 0), row("GCN-ML", 0.875, 0.8, 2)};
  write_report_dir(dir, rows);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "curves" / "GCN-ML-detection" / "te001.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "curves" / "Glob-GCN-detection"));
  std::filesystem::remove_all(dir);
}

TEST(Baselines, PatientAverageIsUnweighted) {
  std::vector<PatientReport> r{{"a", {1.0, 0.5}, {}}, {"b", {0.0, 0.25}, {}}, {"c", {0.5, 0.0}, {}}};
  const auto m = patient_average(r);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.macro_f1, 0.25);
}

TEST(Baselines, NoTrainingPatientsReturnsInit) {
  ArchConfig arch;
  arch.hidden = {4};
  const auto init = ModelParams::init(arch, 1);
  const auto graph = build_distance_graph(Montage::standard_1020(), {});
  const auto out = train_global(init, {}, TaskMode::kDetection, graph, {}, 3);
  for (std::size_t i = 0; i < init.values.size(); ++i) {
    for (std::size_t k = 0; k < init.values[i].numel(); ++k) {
      EXPECT_EQ(out.values[i].at(k), init.values[i].at(k));
    }
  }
}

TEST(Baselines, ModelLabels) {
  EXPECT_EQ(model_label(Arch::kGAT, "ML"), "GAT-ML");
  EXPECT_EQ(model_label(Arch::kGCN, "Glob"), "Glob-GCN");
}

}  // namespace
}  // namespace metagnn
