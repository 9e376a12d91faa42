#include "metagnn/baselines.hpp"

#include <nlohmann/json.hpp>

#include "metagnn/errors.hpp"
#include "metagnn/json_util.hpp"
#include "metagnn/random.hpp"

namespace metagnn {

void to_json(nlohmann::json& j, const GlobalConfig& c) {
  j = nlohmann::json{{"iterations", c.iterations},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size}};
}

void from_json(const nlohmann::json& j, GlobalConfig& c) {
  reject_unknown_keys(j, {"iterations", "lr", "batch_size"}, "global");
  read_if(j, "iterations", c.iterations);
  read_if(j, "lr", c.lr);
  read_if(j, "batch_size", c.batch_size);
}

ModelParams train_global(const ModelParams& init,
                         std::span<const PatientData> patients, TaskMode mode,
                         const ElectrodeGraph& graph,
                         const GlobalConfig& config, std::uint64_t seed) {
  ModelParams model = init.clone(true);
  if (patients.empty() || config.iterations == 0) return model;
  if (config.batch_size == 0) throw ConfigError("global: batch_size must be >= 1");
  std::vector<LabeledClip> pooled;
  for (const auto& p : patients) {
    auto clips = relabel(p.clips, mode);
    pooled.insert(pooled.end(), clips.begin(), clips.end());
  }
  pooled = oversample(pooled, class_count(mode));

  GradModeGuard enable(true);
  Rng rng(derive_seed(seed, 0x61));
  std::vector<std::size_t> order(pooled.size());
  std::size_t cursor = order.size();
  MetaOptimizer sgd(OuterOptimizer::kGradientDescent, config.lr);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<Tensor> x;
    std::vector<int> y;
    while (x.size() < config.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& c = pooled[order[cursor++]];
      x.push_back(c.features);
      y.push_back(c.label);
    }
    const Tensor loss =
        cross_entropy(classify_batch(x, graph, model.arch, model.values), y);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("global model: loss is not finite at iteration " +
                           std::to_string(it));
    }
    model.values = sgd.step(model.values, grad(loss, model.values));
  }
  return model;
}

std::vector<PatientTask> test_tasks(std::span<const PatientData> patients,
                                    TaskMode mode, std::uint64_t seed,
                                    const FinetuneProtocol& protocol) {
  if (patients.empty()) throw ConfigError("no test patients");
  std::vector<PatientTask> out;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    out.push_back(finetune_task(patients[i], mode, derive_seed(seed, 0x7f, i),
                                protocol));
  }
  return out;
}

Metrics patient_average(std::span<const PatientReport> reports) {
  if (reports.empty()) throw ConfigError("no patient reports to average");
  Metrics m;
  for (const auto& r : reports) {
    m.accuracy += r.metrics.accuracy;
    m.macro_f1 += r.metrics.macro_f1;
  }
  m.accuracy /= static_cast<double>(reports.size());
  m.macro_f1 /= static_cast<double>(reports.size());
  return m;
}

namespace {

ModelEvaluation finish(std::string name, TaskMode mode, std::size_t iterations,
                       std::vector<PatientReport> reports) {
  ModelEvaluation e;
  e.model = std::move(name);
  e.task = mode;
  e.iterations = iterations;
  e.mean = patient_average(reports);
  e.patients = std::move(reports);
  return e;
}

}  // namespace

ModelEvaluation evaluate_fixed(const std::string& name, const ModelParams& model,
                               std::span<const PatientTask> tasks, TaskMode mode,
                               const ElectrodeGraph& graph) {
  std::vector<PatientReport> reports;
  for (const auto& t : tasks) {
    PatientReport r;
    r.patient_id = t.patient_id;
    r.metrics = metrics_of(evaluate_clips(model, t.query, graph, class_count(mode)));
    r.trace.push_back({0, 0.0, r.metrics});
    reports.push_back(std::move(r));
  }
  return finish(name, mode, 0, std::move(reports));
}

ModelEvaluation evaluate_finetuned(const std::string& name,
                                   const ModelParams& start,
                                   std::span<const PatientTask> tasks,
                                   TaskMode mode, const ElectrodeGraph& graph,
                                   std::size_t iterations, double lr) {
  std::vector<PatientReport> reports;
  for (const auto& t : tasks) {
    auto result = fine_tune(start, t, graph, iterations, lr, class_count(mode));
    PatientReport r;
    r.patient_id = t.patient_id;
    r.metrics = result.trace.back().query;
    r.trace = std::move(result.trace);
    reports.push_back(std::move(r));
  }
  return finish(name, mode, iterations, std::move(reports));
}

ModelEvaluation evaluate_ppat(const std::string& name, const ArchConfig& arch,
                              std::span<const PatientTask> tasks, TaskMode mode,
                              const ElectrodeGraph& graph,
                              std::size_t iterations, double lr,
                              std::uint64_t seed) {
  std::vector<PatientReport> reports;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto init = ModelParams::init(arch, derive_seed(seed, 0x99, i));
    auto result = fine_tune(init, tasks[i], graph, iterations, lr,
                            class_count(mode));
    PatientReport r;
    r.patient_id = tasks[i].patient_id;
    r.metrics = result.trace.back().query;
    r.trace = std::move(result.trace);
    reports.push_back(std::move(r));
  }
  return finish(name, mode, iterations, std::move(reports));
}

std::string model_label(Arch arch, std::string_view kind) {
  const std::string a = arch == Arch::kGAT ? "GAT" : "GCN";
  if (kind == "Glob") return "Glob-" + a;
  return a + "-" + std::string(kind);
}

}  // namespace metagnn
