#include "metagnn/meta.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "metagnn/errors.hpp"
#include "metagnn/json_util.hpp"
#include "metagnn/random.hpp"
#include "parallel.hpp"

namespace metagnn {

namespace {

std::atomic<std::size_t> g_threads{0};

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](double v) { return std::isfinite(v); });
}

double batch_accuracy(const Tensor& logits, std::span<const int> labels) {
  const auto predicted = predict_labels(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

void set_thread_count(std::size_t threads) { g_threads = threads; }

std::size_t thread_count() {
  const std::size_t t = g_threads;
  return t > 0 ? t : std::max(1u, std::thread::hardware_concurrency());
}

MetaOrder parse_meta_order(std::string_view text) {
  if (text == "second_order") return MetaOrder::kSecondOrder;
  if (text == "first_order") return MetaOrder::kFirstOrder;
  throw ConfigError("unknown order '" + std::string(text) +
                    "' (expected second_order or first_order)");
}

std::string_view to_string(MetaOrder order) {
  return order == MetaOrder::kSecondOrder ? "second_order" : "first_order";
}

OuterOptimizer parse_optimizer(std::string_view text) {
  if (text == "gd") return OuterOptimizer::kGradientDescent;
  if (text == "adam") return OuterOptimizer::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(text) +
                    "' (expected gd or adam)");
}

std::string_view to_string(OuterOptimizer optimizer) {
  return optimizer == OuterOptimizer::kGradientDescent ? "gd" : "adam";
}

void MetaConfig::validate() const {
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) {
    throw ConfigError("inner_lr must be a finite non-negative number");
  }
  if (!(meta_lr >= 0.0) || !std::isfinite(meta_lr)) {
    throw ConfigError("meta_lr must be a finite non-negative number");
  }
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (inner_steps == 0) throw ConfigError("inner_steps must be >= 1");
  if (tasks_per_meta_batch == 0) {
    throw ConfigError("tasks_per_meta_batch must be >= 1");
  }
  if (support_size == 0 || query_size == 0) {
    throw ConfigError("support_size and query_size must be >= 1");
  }
  if (!(finetune_lr >= 0.0)) throw ConfigError("finetune_lr must be >= 0");
}

void to_json(nlohmann::json& j, const MetaConfig& c) {
  j = nlohmann::json{{"inner_lr", c.inner_lr},
                     {"meta_lr", c.meta_lr},
                     {"gamma", c.gamma},
                     {"inner_steps", c.inner_steps},
                     {"tasks_per_meta_batch", c.tasks_per_meta_batch},
                     {"order", std::string(to_string(c.order))},
                     {"meta_iterations", c.meta_iterations},
                     {"support_size", c.support_size},
                     {"query_size", c.query_size},
                     {"finetune_iterations", c.finetune_iterations},
                     {"finetune_lr", c.finetune_lr},
                     {"optimizer", std::string(to_string(c.optimizer))},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, MetaConfig& c) {
  reject_unknown_keys(
      j,
      {"inner_lr", "meta_lr", "gamma", "inner_steps", "tasks_per_meta_batch",
       "order", "meta_iterations", "support_size", "query_size",
       "finetune_iterations", "finetune_lr", "optimizer", "seed"},
      "meta");
  read_if(j, "inner_lr", c.inner_lr);
  read_if(j, "meta_lr", c.meta_lr);
  read_if(j, "gamma", c.gamma);
  read_if(j, "inner_steps", c.inner_steps);
  read_if(j, "tasks_per_meta_batch", c.tasks_per_meta_batch);
  if (j.contains("order")) c.order = parse_meta_order(j.at("order").get<std::string>());
  read_if(j, "meta_iterations", c.meta_iterations);
  read_if(j, "support_size", c.support_size);
  read_if(j, "query_size", c.query_size);
  read_if(j, "finetune_iterations", c.finetune_iterations);
  read_if(j, "finetune_lr", c.finetune_lr);
  if (j.contains("optimizer")) {
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  }
  read_if(j, "seed", c.seed);
}

// ---------------------------------------------------------------------------

ClipTask::ClipTask(PatientTask task, const ElectrodeGraph& graph,
                   const ArchConfig& arch)
    : task_(std::move(task)), graph_(&graph), arch_(arch) {
  if (task_.support.empty()) {
    throw ConfigError("task " + task_.patient_id + ": empty support set");
  }
}

Evaluation ClipTask::score(std::span<const LabeledClip> clips,
                           std::span<const Tensor> params) const {
  const auto x = features_of(clips);
  const auto y = labels_of(clips);
  const Tensor logits = classify_batch(x, *graph_, arch_, params);
  return {cross_entropy(logits, y), batch_accuracy(logits, y)};
}

Evaluation ClipTask::support(std::span<const Tensor> params) const {
  return score(task_.support, params);
}

Evaluation ClipTask::query(std::span<const Tensor> params) const {
  if (task_.query.empty()) {
    throw ConfigError("task " + task_.patient_id + ": empty query set");
  }
  return score(task_.query, params);
}

RegressionTask::RegressionTask(std::string id, Tensor x_support,
                               Tensor y_support, Tensor x_query, Tensor y_query)
    : id_(std::move(id)),
      xs_(std::move(x_support)),
      ys_(std::move(y_support)),
      xq_(std::move(x_query)),
      yq_(std::move(y_query)) {}

RegressionTask RegressionTask::random(std::string id, std::size_t dims,
                                      std::size_t n_support,
                                      std::size_t n_query,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(dims);
  for (auto& v : w) v = rng.normal();
  const double b = rng.normal();
  auto make = [&](std::size_t n, Tensor& x, Tensor& y) {
    std::vector<double> xv(n * dims), yv(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = b + 0.1 * rng.normal();
      for (std::size_t k = 0; k < dims; ++k) {
        xv[i * dims + k] = rng.normal();
        acc += w[k] * xv[i * dims + k];
      }
      yv[i] = acc;
    }
    x = Tensor::matrix(n, dims, std::move(xv));
    y = Tensor::matrix(n, 1, std::move(yv));
  };
  Tensor xs, ys, xq, yq;
  make(n_support, xs, ys);
  make(n_query, xq, yq);
  return RegressionTask(std::move(id), xs, ys, xq, yq);
}

namespace {

Evaluation squared_error(const Tensor& x, const Tensor& y,
                         std::span<const Tensor> params) {
  if (params.size() != 2) throw ShapeError("regression: expects {w, b}");
  const Tensor r = matmul(x, params[0]) + params[1] - y;
  return {mean(r * r), std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace

Evaluation RegressionTask::support(std::span<const Tensor> params) const {
  return squared_error(xs_, ys_, params);
}

Evaluation RegressionTask::query(std::span<const Tensor> params) const {
  return squared_error(xq_, yq_, params);
}

ParamList inner_adapt(std::span<const Tensor> theta, const MetaTask& task,
                      double inner_lr, std::size_t steps, MetaOrder order) {
  ParamList current(theta.begin(), theta.end());
  if (inner_lr == 0.0) return current;
  GradOptions options;
  options.create_graph = order == MetaOrder::kSecondOrder;
  for (std::size_t k = 0; k < steps; ++k) {
    const Evaluation ev = task.support(current);
    const double loss = ev.loss.item();
    if (!std::isfinite(loss)) {
      throw NumericalError("task " + task.id() + ": support loss " +
                           std::to_string(loss) + " at inner step " +
                           std::to_string(k));
    }
    const auto g = grad(ev.loss, current, options);
    for (std::size_t i = 0; i < current.size(); ++i) {
      current[i] = current[i] - scale(g[i], inner_lr);
    }
  }
  return current;
}

namespace {

struct TaskGradient {
  ParamList grads;
  EpisodeResult episode;
  double objective = 0.0;
};

// L(theta', Q) + support_weight * L(theta', S), differentiated
// with respect to theta.
TaskGradient task_gradient(std::span<const Tensor> theta, const MetaTask& task,
                           const MetaConfig& config, double support_weight,
                           bool need_grad) {
  TaskGradient out;
  auto& ep = out.episode;
  {
    NoGradGuard no_grad;
    ep.support_loss_before = task.support(theta).loss.item();
  }
  ParamList adapted = inner_adapt(theta, task, config.inner_lr,
                                  config.inner_steps, config.order);
  const Evaluation q = task.query(adapted);
  const Evaluation s = task.support(adapted);
  ep.query_loss = q.loss.item();
  ep.support_loss = s.loss.item();
  ep.query_accuracy = q.accuracy;
  ep.support_accuracy = s.accuracy;
  const Tensor objective = q.loss + scale(s.loss, support_weight);
  out.objective = objective.item();
  if (!std::isfinite(out.objective)) {
    throw NumericalError("task " + task.id() + ": non-finite meta-objective");
  }
  if (need_grad) {
    out.grads = grad(objective, theta);
    for (const auto& g : out.grads) {
      if (!all_finite(g)) {
        throw NumericalError("task " + task.id() +
                             ": non-finite meta-gradient");
      }
    }
  }
  ep.adapted = std::move(adapted);
  return out;
}

ParamList accumulate(std::span<const Tensor> theta,
                     std::vector<TaskGradient>& per_task) {
  ParamList total;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> sum(theta[i].numel(), 0.0);
    for (const auto& t : per_task) {
      const auto g = t.grads[i].data();
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += g[k];
    }
    total.emplace_back(theta[i].shape(), std::move(sum));
  }
  return total;
}

std::vector<TaskGradient> run_tasks(std::span<const Tensor> theta,
                                    std::span<const MetaTask* const> tasks,
                                    const MetaConfig& config,
                                    double support_weight, bool need_grad) {
  config.validate();
  if (tasks.empty()) throw ConfigError("meta-batch has no tasks");
  ParamList leaves;
  for (const auto& t : theta) {
    leaves.push_back(t.requires_grad() ? t : t.detach(true));
  }
  std::vector<TaskGradient> per_task(tasks.size());
  detail::parallel_for(tasks.size(), thread_count(), [&](std::size_t i) {
    GradModeGuard enable(true);
    per_task[i] = task_gradient(leaves, *tasks[i], config, support_weight,
                                need_grad);
  });
  return per_task;
}

}  // namespace

MetaGradient meta_gradient(std::span<const Tensor> theta,
                           std::span<const MetaTask* const> tasks,
                           const MetaConfig& config) {
  auto per_task = run_tasks(theta, tasks, config, config.gamma, true);
  MetaGradient out;
  out.grads = accumulate(theta, per_task);
  for (auto& t : per_task) {
    out.objective += t.objective;
    out.episodes.push_back(std::move(t.episode));
  }
  return out;
}

double meta_objective(std::span<const Tensor> theta,
                      std::span<const MetaTask* const> tasks,
                      const MetaConfig& config) {
  auto per_task = run_tasks(theta, tasks, config, config.gamma, false);
  double total = 0.0;
  for (const auto& t : per_task) total += t.objective;
  return total;
}

ParamList maml_gradient(std::span<const Tensor> theta,
                        std::span<const MetaTask* const> tasks,
                        const MetaConfig& config) {
  config.validate();
  if (tasks.empty()) throw ConfigError("meta-batch has no tasks");
  ParamList leaves;
  for (const auto& t : theta) {
    leaves.push_back(t.requires_grad() ? t : t.detach(true));
  }
  std::vector<ParamList> per_task(tasks.size());
  detail::parallel_for(tasks.size(), thread_count(), [&](std::size_t i) {
    GradModeGuard enable(true);
    const auto adapted = inner_adapt(leaves, *tasks[i], config.inner_lr,
                                     config.inner_steps, config.order);
    per_task[i] = grad(tasks[i]->query(adapted).loss, leaves);
  });
  ParamList total;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    std::vector<double> sum(leaves[p].numel(), 0.0);
    for (const auto& g : per_task) {
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += g[p].at(k);
    }
    total.emplace_back(leaves[p].shape(), std::move(sum));
  }
  return total;
}

MetaOptimizer::MetaOptimizer(OuterOptimizer kind, double lr)
    : kind_(kind), lr_(lr) {}

ParamList MetaOptimizer::step(std::span<const Tensor> theta,
                              std::span<const Tensor> grads) {
  if (theta.size() != grads.size()) {
    throw ShapeError("optimizer: parameter/gradient count mismatch");
  }
  ParamList out;
  out.reserve(theta.size());
  if (kind_ == OuterOptimizer::kGradientDescent) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<double> v(theta[i].data().begin(), theta[i].data().end());
      const auto g = grads[i].data();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr_ * g[k];
      out.emplace_back(theta[i].shape(), std::move(v), true);
    }
    return out;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (m_.empty()) {
    for (const auto& t : theta) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> v(theta[i].data().begin(), theta[i].data().end());
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      m_[i][k] = b1 * m_[i][k] + (1.0 - b1) * g[k];
      v_[i][k] = b2 * v_[i][k] + (1.0 - b2) * g[k] * g[k];
      v[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps);
    }
    out.emplace_back(theta[i].shape(), std::move(v), true);
  }
  return out;
}

ParamList meta_step(std::span<const Tensor> theta,
                    std::span<const MetaTask* const> tasks,
                    const MetaConfig& config) {
  const auto mg = meta_gradient(theta, tasks, config);
  return MetaOptimizer(OuterOptimizer::kGradientDescent, config.meta_lr)
      .step(theta, mg.grads);
}

ParamList maml_step(std::span<const Tensor> theta,
                    std::span<const MetaTask* const> tasks,
                    const MetaConfig& config) {
  const auto g = maml_gradient(theta, tasks, config);
  return MetaOptimizer(OuterOptimizer::kGradientDescent, config.meta_lr)
      .step(theta, g);
}

void write_curves_csv(std::ostream& out, std::span<const CurveRow> rows) {
  out << "iteration,support_acc,query_acc,support_loss,query_loss\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.support_acc << ',' << r.query_acc << ','
        << r.support_loss << ',' << r.query_loss << '\n';
  }
  out.precision(old);
}

MetaTrainResult train_meta(const ModelParams& init,
                           std::span<const PatientData> patients,
                           TaskMode mode, const ElectrodeGraph& graph,
                           const MetaConfig& config,
                           const std::function<void(const CurveRow&)>& progress) {
  config.validate();
  if (patients.empty()) throw ConfigError("train_meta: no training patients");
  const std::size_t classes = class_count(mode);
  if (init.arch.classes != classes) {
    throw ConfigError("train_meta: model has " +
                      std::to_string(init.arch.classes) + " classes, task " +
                      std::to_string(classes));
  }
  std::vector<std::vector<LabeledClip>> pools;
  for (const auto& p : patients) pools.push_back(relabel(p.clips, mode));

  MetaTrainResult result;
  result.model = init.clone(true);
  MetaOptimizer optimizer(config.optimizer, config.meta_lr);
  const std::size_t batch = std::min(config.tasks_per_meta_batch, patients.size());
  for (std::size_t it = 0; it < config.meta_iterations; ++it) {
    Rng rng(derive_seed(config.seed, 0xa1, it));
    std::vector<std::size_t> order(patients.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(batch);
    std::sort(order.begin(), order.end());

    std::vector<ClipTask> tasks;
    tasks.reserve(batch);
    for (std::size_t slot = 0; slot < batch; ++slot) {
      const std::size_t p = order[slot];
      tasks.emplace_back(
          sample_episode(patients[p].patient_id, pools[p], classes,
                         config.support_size, config.query_size,
                         derive_seed(config.seed, 0xe9 + it, p)),
          graph, init.arch);
    }
    std::vector<const MetaTask*> views;
    for (const auto& t : tasks) views.push_back(&t);

    const auto mg = meta_gradient(result.model.values, views, config);
    result.model.values = optimizer.step(result.model.values, mg.grads);

    CurveRow row;
    row.iteration = it;
    for (const auto& ep : mg.episodes) {
      row.support_acc += ep.support_accuracy;
      row.query_acc += ep.query_accuracy;
      row.support_loss += ep.support_loss;
      row.query_loss += ep.query_loss;
    }
    const auto n = static_cast<double>(mg.episodes.size());
    row.support_acc /= n;
    row.query_acc /= n;
    row.support_loss /= n;
    row.query_loss /= n;
    result.curves.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

ConfusionMatrix evaluate_clips(const ModelParams& model,
                               std::span<const LabeledClip> clips,
                               const ElectrodeGraph& graph,
                               std::size_t classes) {
  NoGradGuard no_grad;
  ConfusionMatrix cm(classes);
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < clips.size(); begin += kChunk) {
    const auto part = clips.subspan(begin, std::min(kChunk, clips.size() - begin));
    const auto logits =
        classify_batch(features_of(part), graph, model.arch, model.values);
    const auto predicted = predict_labels(logits);
    for (std::size_t i = 0; i < part.size(); ++i) {
      cm.add(part[i].label, predicted[i]);
    }
  }
  return cm;
}

FineTuneResult fine_tune(const ModelParams& start, const PatientTask& task,
                         const ElectrodeGraph& graph, std::size_t iterations,
                         double lr, std::size_t classes) {
  if (task.support.empty()) {
    throw ConfigError("fine_tune: patient " + task.patient_id +
                      " has no support clips");
  }
  if (task.query.empty()) {
    throw ConfigError("fine_tune: patient " + task.patient_id +
                      " has no query clips");
  }
  GradModeGuard enable(true);
  FineTuneResult result;
  result.model = start.clone(true);
  const auto x = features_of(task.support);
  const auto y = labels_of(task.support);
  for (std::size_t it = 0; it <= iterations; ++it) {
    const Tensor logits =
        classify_batch(x, graph, result.model.arch, result.model.values);
    const Tensor loss = cross_entropy(logits, y);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("fine_tune: patient " + task.patient_id +
                           ": support loss is not finite at iteration " +
                           std::to_string(it));
    }
    TracePoint point;
    point.iteration = it;
    point.support_loss = loss.item();
    point.query = metrics_of(evaluate_clips(result.model, task.query, graph, classes));
    result.trace.push_back(point);
    if (it == iterations) break;
    const auto g = grad(loss, result.model.values);
    result.model.values =
        MetaOptimizer(OuterOptimizer::kGradientDescent, lr)
            .step(result.model.values, g);
  }
  return result;
}

}  // namespace metagnn
