#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "metagnn/errors.hpp"
#include "metagnn/graph.hpp"
#include "metagnn/montage.hpp"
#include "metagnn/random.hpp"

namespace metagnn {
namespace {

Montage toy_montage() {
  Montage m;
  m.channels = {"A", "B", "C"};
  m.coords = {{{0, 0, 0}}, {{0, 0, 0.5}}, {{0, 0, 2}}};
  return m;
}

// S_hat evaluated entry by entry: (W_ij + [i==j]) / sqrt(d_i d_j).
std::vector<double> dense_normalized(const std::vector<double>& w, std::size_t n) {
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += w[i * n + j] + (i == j ? 1.0 : 0.0);
  }
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s[i * n + j] = (w[i * n + j] + (i == j ? 1.0 : 0.0)) / std::sqrt(deg[i] * deg[j]);
    }
  }
  return s;
}

TEST(Montage, BuiltinMatchesDataFile) {
  const auto builtin = Montage::standard_1020();
  const auto file = load_montage(std::string(METAGNN_DATA_DIR) + "/montage_1020.txt");
  ASSERT_EQ(builtin.size(), kNumChannels);
  ASSERT_EQ(file.size(), builtin.size());
  for (std::size_t i = 0; i < builtin.size(); ++i) {
    EXPECT_EQ(file.channels[i], builtin.channels[i]);
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(file.coords[i][k], builtin.coords[i][k]);
  }
}

TEST(Montage, RejectsDuplicatesAndBadRows) {
  std::istringstream dup("FP1 0 0 1\nFP1 0 1 0\n");
  EXPECT_THROW(parse_montage(dup), ConfigError);
  std::istringstream short_row("FP1 0 0\n");
  EXPECT_THROW(parse_montage(short_row), FormatError);
}

TEST(DistanceGraph, ToyMontageMatchesPrecomputedMatrix) {
  const auto g = build_distance_graph(toy_montage(), {.kappa = 0.9});
  EXPECT_NEAR(g.sigma, 0.6236095644623235, 1e-14);
  const double expected_w[9] = {0, 0.52578802, 0, 0.52578802, 0, 0, 0, 0, 0};
  const double expected_s[9] = {0.65539904, 0.34460096, 0, 0.34460096, 0.65539904,
                                0, 0, 0, 1};
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(g.weights.at(i), expected_w[i], 1e-8);
    EXPECT_NEAR(g.propagation.at(i), expected_s[i], 1e-8);
  }
  EXPECT_EQ(g.edge_count(), 1u);
}

TEST(DistanceGraph, CoincidentNodesGetUnitWeight) {
  auto m = toy_montage();
  m.coords[1] = m.coords[0];
  const auto g = build_distance_graph(m, {.kappa = 0.9});
  EXPECT_DOUBLE_EQ(g.weights.at(0, 1), 1.0);
}

TEST(DistanceGraph, DegenerateMontageRejected) {
  Montage m;
  m.channels = {"A", "B"};
  m.coords = {{{0, 0, 1}}, {{0, 0, 1}}};
  EXPECT_THROW(build_distance_graph(m, {}), ConfigError);
}

TEST(DistanceGraph, StandardMontageInvariants) {
  const auto montage = Montage::standard_1020();
  for (auto mode : {ThresholdMode::kDistance, ThresholdMode::kWeight}) {
    GraphConfig cfg{.kappa = mode == ThresholdMode::kDistance ? 0.9 : 0.3,
                    .threshold_mode = mode};
    const auto g = build_distance_graph(montage, cfg);
    const std::size_t n = g.size();
    ASSERT_EQ(n, kNumChannels);
    EXPECT_NEAR(g.sigma, pairwise_distance_std(montage), 0.0);
    std::vector<double> w(g.weights.data().begin(), g.weights.data().end());
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(g.weights.at(i, i), 0.0);
      EXPECT_FALSE(g.non_neighbors[i * n + i]);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(g.weights.at(i, j), g.weights.at(j, i));
        if (i == j) continue;
        const double d = electrode_distance(montage, i, j);
        const double kernel = std::exp(-d * d / (g.sigma * g.sigma));
        const bool kept = mode == ThresholdMode::kDistance ? d <= cfg.kappa
                                                           : kernel >= cfg.kappa;
        EXPECT_DOUBLE_EQ(g.weights.at(i, j), kept ? kernel : 0.0);
        EXPECT_EQ(g.non_neighbors[i * n + j], !kept);
      }
    }
    const auto oracle = dense_normalized(w, n);
    for (std::size_t k = 0; k < n * n; ++k) {
      EXPECT_NEAR(g.propagation.at(k), oracle[k], 1e-15);
    }
  }
}

TEST(DistanceGraph, StandardMontageIsConnectedEnough) {
  const auto g = build_distance_graph(Montage::standard_1020(), {});
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::size_t degree = 0;
    for (std::size_t j = 0; j < g.size(); ++j) degree += g.weights.at(i, j) > 0;
    EXPECT_GE(degree, 2u) << Montage::standard_1020().channels[i];
  }
}

TEST(NormalizeAdjacency, NoEdgesGivesIdentity) {
  const auto s = normalize_adjacency(Tensor::zeros({4, 4}));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s.at(i, j), i == j ? 1.0 : 0.0);
  }
}

TEST(NormalizeAdjacency, TwoNodeClique) {
  const auto s = normalize_adjacency(Tensor::matrix(2, 2, {0, 1, 1, 0}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(s.at(k), 0.5);
}

TEST(NormalizeAdjacency, RandomSymmetricMatchesDenseOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = i + 1; j < 5; ++j) {
        w[i * 5 + j] = w[j * 5 + i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
      }
    }
    const auto s = normalize_adjacency(Tensor({5, 5}, w));
    const auto oracle = dense_normalized(w, 5);
    for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(s.at(k), oracle[k], 1e-15);
  }
}

TEST(GraphFromWeights, RejectsAsymmetricOrNegative) {
  EXPECT_THROW(graph_from_weights(Tensor::matrix(2, 2, {0, 1, 0.5, 0})), ConfigError);
  EXPECT_THROW(graph_from_weights(Tensor::matrix(2, 2, {0, -1, -1, 0})), ConfigError);
  EXPECT_THROW(graph_from_weights(Tensor::zeros({2, 3})), ShapeError);
}

}  // namespace
}  // namespace metagnn
