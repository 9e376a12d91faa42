#include "metagnn/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "metagnn/gnn.hpp"
#include "metagnn/gradcheck.hpp"
#include "metagnn/graph.hpp"
#include "metagnn/meta.hpp"
#include "metagnn/montage.hpp"
#include "metagnn/random.hpp"

namespace metagnn {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

// Weighted sum so linear ops still see a non-uniform upstream gradient.
Tensor probe(const Tensor& out, const Tensor& weights) {
  return sum(out * weights);
}

struct Case {
  ParamList point;
  ParamScalarFn f;
};

using CaseFactory = std::function<Case(Rng&)>;

struct Spec {
  std::string name;
  std::string group;
  CaseFactory make;
};

Case unary(Rng& rng, Shape shape, std::function<Tensor(const Tensor&)> op,
           double lo = -1.0, double hi = 1.0) {
  Tensor x = random_tensor(rng, shape, lo, hi);
  Tensor probe_x = op(x.detach());
  Tensor w = random_tensor(rng, probe_x.shape()).detach();
  return {{x}, [op, w](const ParamList& p) { return probe(op(p[0]), w); }};
}

Case binary(Rng& rng, Shape a, Shape b,
            std::function<Tensor(const Tensor&, const Tensor&)> op,
            double lo_b = -1.0, double hi_b = 1.0) {
  Tensor x = random_tensor(rng, a);
  Tensor y = random_tensor(rng, b, lo_b, hi_b);
  Tensor w = random_tensor(rng, op(x.detach(), y.detach()).shape()).detach();
  return {{x, y},
          [op, w](const ParamList& p) { return probe(op(p[0], p[1]), w); }};
}

const ElectrodeGraph& montage_graph() {
  static const ElectrodeGraph graph =
      build_distance_graph(Montage::standard_1020(), GraphConfig{});
  return graph;
}

std::vector<Spec> specs() {
  std::vector<Spec> s;
  auto prim = [&](std::string name, CaseFactory f) {
    s.push_back({std::move(name), "primitive", std::move(f)});
  };
  prim("add", [](Rng& r) { return binary(r, {3, 4}, {3, 4}, add); });
  prim("add_row_broadcast", [](Rng& r) { return binary(r, {3, 4}, {1, 4}, add); });
  prim("add_scalar_broadcast", [](Rng& r) { return binary(r, {3, 4}, {}, add); });
  prim("sub", [](Rng& r) { return binary(r, {3, 4}, {4}, sub); });
  prim("mul", [](Rng& r) { return binary(r, {3, 4}, {3, 4}, mul); });
  prim("mul_scalar_broadcast", [](Rng& r) { return binary(r, {3, 4}, {1}, mul); });
  prim("div", [](Rng& r) { return binary(r, {3, 4}, {3, 4}, div, 0.5, 2.0); });
  prim("neg", [](Rng& r) { return unary(r, {3, 4}, neg); });
  prim("scale", [](Rng& r) {
    return unary(r, {3, 4}, [](const Tensor& x) { return scale(x, -1.7); });
  });
  prim("matmul", [](Rng& r) { return binary(r, {3, 5}, {5, 2}, matmul); });
  prim("transpose", [](Rng& r) { return unary(r, {3, 5}, transpose); });
  prim("reshape", [](Rng& r) {
    return unary(r, {3, 4}, [](const Tensor& x) { return reshape(x, {2, 6}); });
  });
  prim("concat_rows", [](Rng& r) {
    return binary(r, {2, 3}, {4, 3}, [](const Tensor& a, const Tensor& b) {
      const Tensor parts[] = {a, b};
      return concat(parts, 0);
    });
  });
  prim("concat_cols", [](Rng& r) {
    return binary(r, {3, 2}, {3, 4}, [](const Tensor& a, const Tensor& b) {
      const Tensor parts[] = {a, b};
      return concat(parts, 1);
    });
  });
  prim("slice_rows", [](Rng& r) {
    return unary(r, {5, 3}, [](const Tensor& x) { return slice(x, 0, 1, 4); });
  });
  prim("slice_cols", [](Rng& r) {
    return unary(r, {3, 5}, [](const Tensor& x) { return slice(x, 1, 2, 5); });
  });
  prim("exp", [](Rng& r) { return unary(r, {3, 4}, metagnn::exp); });
  prim("log", [](Rng& r) { return unary(r, {3, 4}, metagnn::log, 0.5, 2.0); });
  prim("leaky_relu", [](Rng& r) {
    return unary(r, {4, 5}, [](const Tensor& x) { return leaky_relu(x, 0.2); });
  });
  prim("row_softmax", [](Rng& r) { return unary(r, {3, 5}, row_softmax); });
  prim("sum", [](Rng& r) { return unary(r, {3, 4}, sum); });
  prim("mean", [](Rng& r) { return unary(r, {3, 4}, mean); });
  prim("sum_rows", [](Rng& r) { return unary(r, {3, 4}, sum_rows); });
  prim("mean_rows", [](Rng& r) { return unary(r, {3, 4}, mean_rows); });
  prim("masked_fill_softmax", [](Rng& r) {
    std::vector<bool> mask(16, false);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) mask[i * 4 + j] = i != j && r.uniform() < 0.5;
    }
    return unary(r, {4, 4}, [mask](const Tensor& x) {
      return row_softmax(masked_fill(x, mask, -INFINITY));
    });
  });
  prim("gather_rows", [](Rng& r) {
    return unary(r, {4, 3}, [](const Tensor& x) {
      const std::size_t rows[] = {2, 0, 2, 3};
      return gather_rows(x, rows);
    });
  });
  prim("scatter_rows", [](Rng& r) {
    return unary(r, {3, 2}, [](const Tensor& x) {
      const std::size_t rows[] = {4, 1, 4};
      return scatter_rows(x, rows, 5);
    });
  });
  prim("cross_entropy", [](Rng& r) {
    Tensor x = random_tensor(r, {4, 3}, -2.0, 2.0);
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(r.index(3));
    return Case{{x}, [labels](const ParamList& p) {
                  return cross_entropy(p[0], labels);
                }};
  });

  auto layer = [&](std::string name, CaseFactory f) {
    s.push_back({std::move(name), "layer", std::move(f)});
  };
  layer("gcn_layer", [](Rng& r) {
    const auto& g = montage_graph();
    Tensor x = random_tensor(r, {g.size(), 5});
    Tensor theta = random_tensor(r, {5, 4});
    Tensor w = random_tensor(r, {g.size(), 4}).detach();
    return Case{{x, theta}, [w](const ParamList& p) {
                  const auto& g = montage_graph();
                  return probe(gcn_forward(p[0], g.propagation, p[1], 0.2), w);
                }};
  });
  for (bool average : {false, true}) {
    layer(average ? "gat_layer_mean_heads" : "gat_layer_concat_heads",
          [average](Rng& r) {
            const auto& g = montage_graph();
            Tensor x = random_tensor(r, {g.size(), 5});
            ParamList point{x};
            for (int h = 0; h < 2; ++h) {
              point.push_back(random_tensor(r, {5, 3}));
              point.push_back(random_tensor(r, {6, 1}));
            }
            Tensor w = random_tensor(r, {g.size(), average ? 3u : 6u}).detach();
            return Case{point, [w, average](const ParamList& p) {
                          const auto& g = montage_graph();
                          const GatHeadParams heads[] = {{p[1], p[2]}, {p[3], p[4]}};
                          return probe(gat_forward(p[0], g.non_neighbors, heads,
                                                   0.2, average),
                                       w);
                        }};
          });
  }

  for (Arch arch : {Arch::kGCN, Arch::kGAT}) {
    const std::string name =
        std::string("classifier_") + std::string(arch == Arch::kGCN ? "gcn" : "gat");
    s.push_back({name, "model", [arch](Rng& r) {
                   ArchConfig a;
                   a.arch = arch;
                   a.in_features = 6;
                   a.hidden = {4, 3};
                   a.classes = 3;
                   a.heads = 2;
                   auto model = ModelParams::init(a, r.index(1u << 30));
                   // Move zero-initialised biases off zero.
                   ParamList point;
                   for (const auto& v : model.values) {
                     point.push_back(v + random_tensor(r, v.shape(), -0.1, 0.1).detach());
                     point.back() = point.back().detach(true);
                   }
                   std::vector<Tensor> clips;
                   std::vector<int> labels;
                   for (int c = 0; c < 3; ++c) {
                     clips.push_back(random_tensor(r, {kNumChannels, 6}).detach());
                     labels.push_back(static_cast<int>(r.index(3)));
                   }
                   return Case{point, [a, clips, labels](const ParamList& p) {
                                 return cross_entropy(
                                     classify_batch(clips, montage_graph(), a, p),
                                     labels);
                               }};
                 }});
  }
  return s;
}

}  // namespace

double meta_gradient_probe(std::size_t seeds, double step, double gamma) {
  double worst = 0.0;
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    std::vector<RegressionTask> tasks;
    for (std::size_t t = 0; t < 3; ++t) {
      tasks.push_back(RegressionTask::random("r" + std::to_string(t), 1, 6, 6,
                                             derive_seed(seed, 0x3e7a, t)));
    }
    std::vector<const MetaTask*> views;
    for (const auto& t : tasks) views.push_back(&t);
    MetaConfig config;
    config.inner_lr = 0.1;
    config.inner_steps = 1;
    config.gamma = gamma;
    config.order = MetaOrder::kSecondOrder;
    Rng rng(derive_seed(seed, 0x3e7b));
    ParamList theta{random_tensor(rng, {1, 1}), random_tensor(rng, {1, 1})};
    const auto analytic = meta_gradient(theta, views, config).grads;
    const auto numeric = numerical_gradient(
        [&](const ParamList& p) {
          return Tensor::scalar(meta_objective(p, views, config));
        },
        theta, step);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return worst;
}

std::vector<CheckResult> run_gradcheck_suite(const GradcheckOptions& options) {
  std::vector<CheckResult> results;
  const auto all = specs();
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& spec = all[k];
    if (!options.filter.empty() &&
        spec.name.find(options.filter) == std::string::npos) {
      continue;
    }
    CheckResult r{spec.name, spec.group, options.seeds, 0.0, options.tolerance};
    for (std::size_t seed = 0; seed < options.seeds; ++seed) {
      Rng rng(derive_seed(seed, 0x9c, k));
      auto c = spec.make(rng);
      const double err = finite_diff_check(c.f, c.point, options.step);
      if (std::isnan(err)) {
        r.max_rel_error = err;
        break;
      }
      r.max_rel_error = std::max(r.max_rel_error, err);
    }
    results.push_back(r);
  }
  const std::string meta_name = "meta_gradient_second_order";
  if (options.filter.empty() || meta_name.find(options.filter) != std::string::npos) {
    results.push_back({meta_name, "meta", options.seeds,
                       meta_gradient_probe(options.seeds, options.step, 0.5),
                       options.meta_tolerance});
  }
  return results;
}

}  // namespace metagnn
