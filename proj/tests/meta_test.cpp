#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metagnn/dataset.hpp"
#include "metagnn/errors.hpp"
#include "metagnn/gradcheck.hpp"
#include "metagnn/gradcheck_suite.hpp"
#include "metagnn/meta.hpp"
#include "metagnn/montage.hpp"
#include "metagnn/random.hpp"
#include "metagnn/synth.hpp"

namespace metagnn {
namespace {

// Support loss theta^2, query loss (theta - 1)^2 on a scalar.
class ScalarTask final : public MetaTask {
 public:
  std::string id() const override { return "scalar"; }
  Evaluation support(std::span<const Tensor> p) const override {
    return {sum(p[0] * p[0]), NAN};
  }
  Evaluation query(std::span<const Tensor> p) const override {
    const auto d = p[0] - Tensor::scalar(1.0);
    return {sum(d * d), NAN};
  }
};

// Support 1/2 t'At - b't, query 1/2 |t - c|^2, t in R^2.
class QuadraticTask final : public MetaTask {
 public:
  QuadraticTask(Tensor a, Tensor b, Tensor c)
      : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {}
  std::string id() const override { return "quadratic"; }
  Evaluation support(std::span<const Tensor> p) const override {
    const auto& t = p[0];
    auto quad = scale(sum(t * matmul(a_, t)), 0.5);
    return {quad - sum(b_ * t), NAN};
  }
  Evaluation query(std::span<const Tensor> p) const override {
    const auto d = p[0] - c_;
    return {scale(sum(d * d), 0.5), NAN};
  }

 private:
  Tensor a_, b_, c_;
};

class NanTask final : public MetaTask {
 public:
  std::string id() const override { return "nan"; }
  Evaluation support(std::span<const Tensor> p) const override {
    return {sum(p[0]) * Tensor::scalar(NAN), NAN};
  }
  Evaluation query(std::span<const Tensor> p) const override { return support(p); }
};

ParamList leaf(std::vector<double> v) {
  const std::size_t n = v.size();
  return {Tensor({n, 1}, std::move(v), true)};
}

TEST(InnerAdapt, ZeroStepIsIdentity) {
  const auto task = RegressionTask::random("r", 3, 8, 8, 1);
  Rng rng(1);
  ParamList theta{Tensor({3, 1}, {0.1, -0.2, 0.3}, true), Tensor({1, 1}, {0.5}, true)};
  const auto out = inner_adapt(theta, task, 0.0, 3, MetaOrder::kSecondOrder);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    for (std::size_t k = 0; k < theta[i].numel(); ++k) EXPECT_EQ(out[i].at(k), theta[i].at(k));
  }
}

TEST(InnerAdapt, ScalarSquare) {
  ScalarTask task;
  ParamList theta{Tensor::scalar(3.0, true)};
  for (auto order : {MetaOrder::kFirstOrder, MetaOrder::kSecondOrder}) {
    const auto out = inner_adapt(theta, task, 0.1, 1, order);
    EXPECT_NEAR(out[0].item(), 2.4, 1e-15);
  }
  const auto two = inner_adapt(theta, task, 0.1, 2, MetaOrder::kSecondOrder);
  EXPECT_NEAR(two[0].item(), 3.0 * 0.8 * 0.8, 1e-15);
}

TEST(InnerAdapt, SmallStepReducesSupportLoss) {
  std::size_t improved = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto task = RegressionTask::random("r", 4, 10, 10, seed);
    Rng rng(derive_seed(seed, 5));
    ParamList theta;
    for (Shape s : {Shape{4, 1}, Shape{1, 1}}) {
      std::vector<double> v(shape_numel(s));
      for (auto& x : v) x = rng.uniform(-1, 1);
      theta.emplace_back(s, std::move(v), true);
    }
    const double before = task.support(theta).loss.item();
    const auto adapted = inner_adapt(theta, task, 0.01, 1, MetaOrder::kSecondOrder);
    improved += task.support(adapted).loss.item() <= before;
    ++total;
  }
  EXPECT_GE(static_cast<double>(improved), 0.95 * static_cast<double>(total));
}

TEST(InnerAdapt, NonFiniteLossRaises) {
  NanTask task;
  ParamList theta{Tensor::scalar(1.0, true)};
  EXPECT_THROW(inner_adapt(theta, task, 0.1, 1, MetaOrder::kSecondOrder), NumericalError);
}

TEST(MetaGradient, QuadraticClosedForm) {
  const auto a = Tensor::matrix(2, 2, {2.0, 0.5, 0.5, 1.0});
  const auto b = Tensor::matrix(2, 1, {1.0, -1.0});
  const auto c = Tensor::matrix(2, 1, {0.3, 0.7});
  QuadraticTask task(a, b, c);
  const MetaTask* tasks[] = {&task};
  const double alpha = 0.1, gamma = 0.5;
  const double t[2] = {0.4, -0.6};
  // t' = t - alpha (A t - b); J = I - alpha A
  double g[2], tp[2];
  for (int i = 0; i < 2; ++i) g[i] = a.at(i, 0) * t[0] + a.at(i, 1) * t[1] - b.at(i);
  for (int i = 0; i < 2; ++i) tp[i] = t[i] - alpha * g[i];
  double outer[2];
  for (int i = 0; i < 2; ++i) {
    const double gs = a.at(i, 0) * tp[0] + a.at(i, 1) * tp[1] - b.at(i);
    outer[i] = (tp[i] - c.at(i)) + gamma * gs;
  }
  double second[2];
  for (int i = 0; i < 2; ++i) {
    second[i] = 0;
    for (int k = 0; k < 2; ++k) {
      second[i] += ((i == k ? 1.0 : 0.0) - alpha * a.at(k, i)) * outer[k];
    }
  }

  MetaConfig cfg;
  cfg.inner_lr = alpha;
  cfg.gamma = gamma;
  cfg.inner_steps = 1;
  cfg.order = MetaOrder::kSecondOrder;
  const auto so = meta_gradient(leaf({t[0], t[1]}), tasks, cfg);
  cfg.order = MetaOrder::kFirstOrder;
  const auto fo = meta_gradient(leaf({t[0], t[1]}), tasks, cfg);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(so.grads[0].at(i), second[i], 1e-14);
    EXPECT_NEAR(fo.grads[0].at(i), outer[i], 1e-14);
  }
  EXPECT_GT(std::abs(so.grads[0].at(0) - fo.grads[0].at(0)), 1e-3);
}

TEST(MetaGradient, MatchesFiniteDifferencesOfObjective) {
  EXPECT_LE(meta_gradient_probe(20, 1e-5, 0.5), 1e-3);
  EXPECT_LE(meta_gradient_probe(5, 1e-5, 0.0), 1e-3);
}

TEST(MetaGradient, TwoInnerStepsMatchFiniteDifferences) {
  std::vector<RegressionTask> tasks;
  for (std::size_t t = 0; t < 2; ++t) tasks.push_back(RegressionTask::random("r", 2, 5, 5, 40 + t));
  std::vector<const MetaTask*> views{&tasks[0], &tasks[1]};
  MetaConfig cfg;
  cfg.inner_lr = 0.05;
  cfg.inner_steps = 2;
  cfg.gamma = 0.3;
  ParamList theta{Tensor({2, 1}, {0.2, -0.1}, true), Tensor({1, 1}, {0.05}, true)};
  const auto analytic = meta_gradient(theta, views, cfg).grads;
  const auto numeric = numerical_gradient(
      [&](const ParamList& p) { return Tensor::scalar(meta_objective(p, views, cfg)); },
      theta, 1e-5);
  EXPECT_LE(max_relative_error(analytic, numeric), 1e-6);
}

TEST(MetaGradient, GammaZeroEqualsVanillaMaml) {
  std::vector<RegressionTask> tasks;
  for (std::size_t t = 0; t < 4; ++t) tasks.push_back(RegressionTask::random("r", 3, 6, 6, 70 + t));
  std::vector<const MetaTask*> views;
  for (const auto& t : tasks) views.push_back(&t);
  MetaConfig cfg;
  cfg.gamma = 0.0;
  cfg.inner_lr = 0.1;
  cfg.meta_lr = 0.05;
  ParamList a{Tensor({3, 1}, {0.1, 0.2, -0.3}, true), Tensor({1, 1}, {0.0}, true)};
  ParamList b = a;
  for (int step = 0; step < 5; ++step) {
    a = meta_step(a, views, cfg);
    b = maml_step(b, views, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t k = 0; k < a[i].numel(); ++k) EXPECT_NEAR(a[i].at(k), b[i].at(k), 1e-12);
    }
  }
}

TEST(MetaGradient, GammaChangesTheUpdate) {
  const auto task = RegressionTask::random("r", 3, 6, 6, 9);
  const MetaTask* views[] = {&task};
  MetaConfig cfg;
  cfg.inner_lr = 0.1;
  ParamList theta{Tensor({3, 1}, {0.1, 0.2, -0.3}, true), Tensor({1, 1}, {0.0}, true)};
  const auto modified = meta_gradient(theta, views, cfg).grads;
  const auto vanilla = maml_gradient(theta, views, cfg);
  EXPECT_GT(std::abs(modified[0].at(0) - vanilla[0].at(0)), 1e-6);
}

TEST(MetaGradient, IndependentOfThreadCount) {
  std::vector<RegressionTask> tasks;
  for (std::size_t t = 0; t < 6; ++t) tasks.push_back(RegressionTask::random("r", 3, 6, 6, 90 + t));
  std::vector<const MetaTask*> views;
  for (const auto& t : tasks) views.push_back(&t);
  MetaConfig cfg;
  ParamList theta{Tensor({3, 1}, {0.1, 0.2, -0.3}, true), Tensor({1, 1}, {0.4}, true)};
  set_thread_count(1);
  const auto one = meta_gradient(theta, views, cfg);
  set_thread_count(4);
  const auto four = meta_gradient(theta, views, cfg);
  set_thread_count(0);
  EXPECT_EQ(one.objective, four.objective);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    for (std::size_t k = 0; k < theta[i].numel(); ++k) {
      EXPECT_EQ(one.grads[i].at(k), four.grads[i].at(k));
    }
  }
}

TEST(MetaOptimizer, AdamFirstStepIsSignedLearningRate) {
  MetaOptimizer opt(OuterOptimizer::kAdam, 0.01);
  ParamList theta{Tensor({3}, {1.0, 1.0, 1.0}, true)};
  ParamList grads{Tensor({3}, {0.5, -2.0, 1e-3})};
  const auto next = opt.step(theta, grads);
  EXPECT_NEAR(next[0].at(0), 0.99, 1e-6);
  EXPECT_NEAR(next[0].at(1), 1.01, 1e-6);
  EXPECT_NEAR(next[0].at(2), 0.99, 1e-4);
  EXPECT_TRUE(next[0].requires_grad());
}

TEST(MetaConfig, JsonRoundTripAndValidation) {
  MetaConfig cfg;
  cfg.gamma = 0.25;
  cfg.order = MetaOrder::kFirstOrder;
  cfg.optimizer = OuterOptimizer::kAdam;
  const nlohmann::json j = cfg;
  const auto back = j.get<MetaConfig>();
  EXPECT_EQ(back.gamma, 0.25);
  EXPECT_EQ(back.order, MetaOrder::kFirstOrder);
  EXPECT_EQ(back.optimizer, OuterOptimizer::kAdam);
  auto bad = j;
  bad["gamme"] = 1;
  EXPECT_THROW(bad.get<MetaConfig>(), ConfigError);
  cfg.inner_lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// A few small synthetic patients shared by the training-loop tests.
class MetaTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthConfig cfg = train_cohort(3, 5);
    cfg.background_s = 150;
    const auto montage = Montage::standard_1020();
    const auto recordings = synth_generate(cfg, montage);
    patients_ = new std::vector<PatientData>(build_patients(recordings, {}));
    graph_ = new ElectrodeGraph(build_distance_graph(montage, {}));
  }
  static void TearDownTestSuite() {
    delete patients_;
    delete graph_;
  }
  static ArchConfig arch() {
    ArchConfig a;
    a.hidden = {6, 6};
    return a;
  }
  static std::vector<PatientData>* patients_;
  static ElectrodeGraph* graph_;
};

std::vector<PatientData>* MetaTraining::patients_ = nullptr;
ElectrodeGraph* MetaTraining::graph_ = nullptr;

TEST_F(MetaTraining, ZeroMetaLearningRateKeepsTheta) {
  MetaConfig cfg;
  cfg.meta_lr = 0.0;
  cfg.meta_iterations = 1;
  cfg.tasks_per_meta_batch = 1;
  const auto init = ModelParams::init(arch(), 3);
  const auto result = train_meta(init, std::span(patients_->data(), 1),
                                 TaskMode::kDetection, *graph_, cfg);
  for (std::size_t i = 0; i < init.values.size(); ++i) {
    for (std::size_t k = 0; k < init.values[i].numel(); ++k) {
      EXPECT_EQ(result.model.values[i].at(k), init.values[i].at(k));
    }
  }
}

TEST_F(MetaTraining, CurvesHaveOneRowPerIteration) {
  MetaConfig cfg;
  cfg.meta_iterations = 4;
  cfg.tasks_per_meta_batch = 2;
  const auto result = train_meta(ModelParams::init(arch(), 3), *patients_,
                                 TaskMode::kDetection, *graph_, cfg);
  ASSERT_EQ(result.curves.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(result.curves[i].iteration, i);
  std::ostringstream out;
  write_curves_csv(out, result.curves);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST_F(MetaTraining, DeterministicGivenSeed) {
  MetaConfig cfg;
  cfg.meta_iterations = 3;
  cfg.tasks_per_meta_batch = 2;
  cfg.seed = 11;
  const auto init = ModelParams::init(arch(), 3);
  set_thread_count(1);
  const auto a = train_meta(init, *patients_, TaskMode::kDetection, *graph_, cfg);
  set_thread_count(3);
  const auto b = train_meta(init, *patients_, TaskMode::kDetection, *graph_, cfg);
  set_thread_count(0);
  for (std::size_t i = 0; i < init.values.size(); ++i) {
    for (std::size_t k = 0; k < init.values[i].numel(); ++k) {
      EXPECT_EQ(a.model.values[i].at(k), b.model.values[i].at(k));
    }
  }
}

TEST_F(MetaTraining, FineTuneTrace) {
  const auto task = finetune_task(patients_->front(), TaskMode::kDetection, 1);
  const auto start = ModelParams::init(arch(), 4);
  const auto none = fine_tune(start, task, *graph_, 0, 0.01, 2);
  ASSERT_EQ(none.trace.size(), 1u);
  for (std::size_t i = 0; i < start.values.size(); ++i) {
    EXPECT_EQ(none.model.values[i].at(0), start.values[i].at(0));
  }
  const auto fixed = metrics_of(evaluate_clips(start, task.query, *graph_, 2));
  EXPECT_EQ(none.trace[0].query.accuracy, fixed.accuracy);
  const auto five = fine_tune(start, task, *graph_, 5, 0.01, 2);
  ASSERT_EQ(five.trace.size(), 6u);
  EXPECT_EQ(five.trace[0].query.accuracy, fixed.accuracy);
  EXPECT_LT(five.trace[5].support_loss, five.trace[0].support_loss);
}

TEST_F(MetaTraining, DuplicateClipsPredictIdentically) {
  const auto& p = patients_->front();
  std::vector<LabeledClip> clips{p.clips[0], p.clips[0], p.clips[1], p.clips[1]};
  const auto model = ModelParams::init(arch(), 8);
  std::vector<Tensor> features;
  for (const auto& c : clips) features.push_back(c.features);
  const auto logits = classify_batch(features, *graph_, model.arch, model.values);
  EXPECT_EQ(logits.at(0, 0), logits.at(1, 0));
  EXPECT_EQ(logits.at(2, 1), logits.at(3, 1));
}

}  // namespace
}  // namespace metagnn
