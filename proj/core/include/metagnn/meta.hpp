#pragma once

// MAML with an optional support-loss term in the outer objective:
//
//   inner:  theta'_i = theta - alpha * grad L(theta, S_i)      (K steps)
//   outer:  theta   <- theta - beta * grad sum_i [L(theta'_i, Q_i)
//                                                 + gamma * L(theta'_i, S_i)]
//
// gamma = 0 gives plain MAML. Task losses are means over their clips and
// are summed (not averaged) over the meta-batch.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metagnn/dataset.hpp"
#include "metagnn/gnn.hpp"
#include "metagnn/metrics.hpp"

namespace metagnn {

enum class MetaOrder { kSecondOrder, kFirstOrder };
enum class OuterOptimizer { kGradientDescent, kAdam };

MetaOrder parse_meta_order(std::string_view text);
std::string_view to_string(MetaOrder order);
OuterOptimizer parse_optimizer(std::string_view text);
std::string_view to_string(OuterOptimizer optimizer);

struct MetaConfig {
  double inner_lr = 0.01;
  double meta_lr = 0.001;
  double gamma = 0.5;
  std::size_t inner_steps = 1;
  std::size_t tasks_per_meta_batch = 8;
  MetaOrder order = MetaOrder::kSecondOrder;
  std::size_t meta_iterations = 100;
  /// Episode sizes used during meta-training.
  std::size_t support_size = 12;
  std::size_t query_size = 12;
  std::size_t finetune_iterations = 20;
  double finetune_lr = 0.01;
  OuterOptimizer optimizer = OuterOptimizer::kGradientDescent;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const MetaConfig& config);
void from_json(const nlohmann::json& j, MetaConfig& config);

struct Evaluation {
  Tensor loss;
  /// NaN when the task has no notion of accuracy.
  double accuracy = 0.0;
};

/// One episode's data together with the model it is scored by.
class MetaTask {
 public:
  virtual ~MetaTask() = default;
  virtual std::string id() const = 0;
  virtual Evaluation support(std::span<const Tensor> params) const = 0;
  virtual Evaluation query(std::span<const Tensor> params) const = 0;
};

/// Cross-entropy of a GNN classifier on a PatientTask.
class ClipTask final : public MetaTask {
 public:
  ClipTask(PatientTask task, const ElectrodeGraph& graph,
           const ArchConfig& arch);

  std::string id() const override { return task_.patient_id; }
  Evaluation support(std::span<const Tensor> params) const override;
  Evaluation query(std::span<const Tensor> params) const override;

 private:
  Evaluation score(std::span<const LabeledClip> clips,
                   std::span<const Tensor> params) const;

  PatientTask task_;
  const ElectrodeGraph* graph_;
  ArchConfig arch_;
};

/// Mean squared error of y ~ X w + b with params {w: {d, 1}, b: {1, 1}}.
/// A small convex family for probing meta-gradients.
class RegressionTask final : public MetaTask {
 public:
  RegressionTask(std::string id, Tensor x_support, Tensor y_support,
                 Tensor x_query, Tensor y_query);

  /// Random task y = X w* + b* + noise with its own w*, b*.
  static RegressionTask random(std::string id, std::size_t dims,
                               std::size_t n_support, std::size_t n_query,
                               std::uint64_t seed);

  std::string id() const override { return id_; }
  Evaluation support(std::span<const Tensor> params) const override;
  Evaluation query(std::span<const Tensor> params) const override;

 private:
  std::string id_;
  Tensor xs_, ys_, xq_, yq_;
};

/// Gradient steps on the support loss. In second-order mode the result stays
/// differentiable with respect to `theta`; in first-order mode the inner
/// gradients are treated as constants. Throws NumericalError on a
/// non-finite loss.
ParamList inner_adapt(std::span<const Tensor> theta, const MetaTask& task,
                      double inner_lr, std::size_t steps, MetaOrder order);

struct EpisodeResult {
  ParamList adapted;
  double support_loss_before = 0.0;
  double support_loss = 0.0;
  double query_loss = 0.0;
  double support_accuracy = 0.0;
  double query_accuracy = 0.0;
};

struct MetaGradient {
  ParamList grads;
  std::vector<EpisodeResult> episodes;
  /// Sum over tasks of query loss + gamma * support loss at theta'.
  double objective = 0.0;
};

/// Gradient of the outer objective, accumulated in task order.
MetaGradient meta_gradient(std::span<const Tensor> theta,
                           std::span<const MetaTask* const> tasks,
                           const MetaConfig& config);

/// Outer objective value alone (adaptation re-run, no outer gradient).
double meta_objective(std::span<const Tensor> theta,
                      std::span<const MetaTask* const> tasks,
                      const MetaConfig& config);

/// Gradient of sum_i L(theta'_i, Q_i) only: the unmodified MAML update.
ParamList maml_gradient(std::span<const Tensor> theta,
                        std::span<const MetaTask* const> tasks,
                        const MetaConfig& config);

/// Outer-loop parameter update rule.
class MetaOptimizer {
 public:
  MetaOptimizer(OuterOptimizer kind, double lr);
  ParamList step(std::span<const Tensor> theta, std::span<const Tensor> grads);

 private:
  OuterOptimizer kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// theta - beta * meta_gradient, as fresh leaves.
ParamList meta_step(std::span<const Tensor> theta,
                    std::span<const MetaTask* const> tasks,
                    const MetaConfig& config);

/// theta - beta * maml_gradient, as fresh leaves.
ParamList maml_step(std::span<const Tensor> theta,
                    std::span<const MetaTask* const> tasks,
                    const MetaConfig& config);

struct CurveRow {
  std::size_t iteration = 0;
  double support_acc = 0.0;
  double query_acc = 0.0;
  double support_loss = 0.0;
  double query_loss = 0.0;
};

void write_curves_csv(std::ostream& out, std::span<const CurveRow> rows);

struct MetaTrainResult {
  ModelParams model;
  std::vector<CurveRow> curves;
};

/// Meta-train from `init` on patient clips (labels set for `mode`). Each
/// iteration samples a meta-batch of patients and a fresh class-balanced
/// episode per patient.
MetaTrainResult train_meta(const ModelParams& init,
                           std::span<const PatientData> patients,
                           TaskMode mode, const ElectrodeGraph& graph,
                           const MetaConfig& config,
                           const std::function<void(const CurveRow&)>& progress = {});

struct TracePoint {
  std::size_t iteration = 0;
  double support_loss = 0.0;
  Metrics query;
};

struct FineTuneResult {
  ModelParams model;
  /// Query metrics before any step and after each step.
  std::vector<TracePoint> trace;
};

/// Plain gradient descent on the support loss, scoring the query set after
/// every step.
FineTuneResult fine_tune(const ModelParams& start, const PatientTask& task,
                         const ElectrodeGraph& graph, std::size_t iterations,
                         double lr, std::size_t classes);

/// Argmax predictions of `model` over clips, scored against their labels.
ConfusionMatrix evaluate_clips(const ModelParams& model,
                               std::span<const LabeledClip> clips,
                               const ElectrodeGraph& graph,
                               std::size_t classes);

/// Worker cap for episode-level parallelism; 0 means hardware concurrency.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

}  // namespace metagnn
