#pragma once

// Comparison harness: global model, per-patient model from scratch (PPAT),
// and meta-trained model fine-tuned per patient (ML), all scored on the same
// held-out query clips and averaged over test patients.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metagnn/dataset.hpp"
#include "metagnn/gnn.hpp"
#include "metagnn/meta.hpp"
#include "metagnn/metrics.hpp"

namespace metagnn {

struct GlobalConfig {
  std::size_t iterations = 300;
  double lr = 0.05;
  std::size_t batch_size = 32;
};

void to_json(nlohmann::json& j, const GlobalConfig& config);
void from_json(const nlohmann::json& j, GlobalConfig& config);

/// Mini-batch gradient descent on the pooled, oversampled clips of every
/// training patient. With no training patients `init` is returned as is.
ModelParams train_global(const ModelParams& init,
                         std::span<const PatientData> patients, TaskMode mode,
                         const ElectrodeGraph& graph,
                         const GlobalConfig& config, std::uint64_t seed);

/// Fine-tuning split of every test patient.
std::vector<PatientTask> test_tasks(std::span<const PatientData> patients,
                                    TaskMode mode, std::uint64_t seed,
                                    const FinetuneProtocol& protocol = {});

struct PatientReport {
  std::string patient_id;
  Metrics metrics;
  /// Per-iteration query metrics; a single point for models that are not
  /// adapted per patient.
  std::vector<TracePoint> trace;
};

struct ModelEvaluation {
  std::string model;
  TaskMode task = TaskMode::kDetection;
  std::size_t iterations = 0;
  /// Unweighted mean over patients.
  Metrics mean;
  std::vector<PatientReport> patients;
};

Metrics patient_average(std::span<const PatientReport> reports);

/// Scores a fixed model on each task's query set.
ModelEvaluation evaluate_fixed(const std::string& name, const ModelParams& model,
                               std::span<const PatientTask> tasks, TaskMode mode,
                               const ElectrodeGraph& graph);

/// Fine-tunes `start` on each task's support set, scoring the query set after
/// every step.
ModelEvaluation evaluate_finetuned(const std::string& name,
                                   const ModelParams& start,
                                   std::span<const PatientTask> tasks,
                                   TaskMode mode, const ElectrodeGraph& graph,
                                   std::size_t iterations, double lr);

/// A freshly initialised model per patient trained on its support set.
ModelEvaluation evaluate_ppat(const std::string& name, const ArchConfig& arch,
                              std::span<const PatientTask> tasks, TaskMode mode,
                              const ElectrodeGraph& graph,
                              std::size_t iterations, double lr,
                              std::uint64_t seed);

/// Model label as used in reports, e.g. "GAT-ML", "Glob-GCN".
std::string model_label(Arch arch, std::string_view kind);

}  // namespace metagnn
