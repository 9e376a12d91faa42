#pragma once

#include <iosfwd>
#include <string_view>
#include <vector>

#include "metagnn/montage.hpp"
#include "metagnn/tensor.hpp"

namespace metagnn {

enum class ThresholdMode {
  /// Keep an edge when the electrode distance is at most kappa.
  kDistance,
  /// Keep an edge when the kernel weight is at least kappa.
  kWeight,
};

ThresholdMode parse_threshold_mode(std::string_view text);
std::string_view to_string(ThresholdMode mode);

struct GraphConfig {
  double kappa = 0.9;
  ThresholdMode threshold_mode = ThresholdMode::kDistance;
};

/// Fixed distance graph over the electrodes. Immutable once built.
struct ElectrodeGraph {
  /// Symmetric kernel weights, zero diagonal.
  Tensor weights;
  /// D^-1/2 (W + I) D^-1/2.
  Tensor propagation;
  /// Kernel bandwidth: population std of the distinct pairwise distances.
  double sigma = 0.0;
  /// Row-major n*n; true where j is neither a neighbour of i nor i itself.
  std::vector<bool> non_neighbors;

  std::size_t size() const { return weights.rows(); }
  std::size_t edge_count() const;
};

/// W_ij = exp(-d_ij^2 / sigma^2) when the configured threshold admits the
/// pair, else 0. Throws ConfigError("degenerate montage") when sigma == 0.
ElectrodeGraph build_distance_graph(const Montage& montage,
                                    const GraphConfig& config);

/// Wrap an arbitrary symmetric nonnegative weight matrix as a graph.
ElectrodeGraph graph_from_weights(const Tensor& weights);

Tensor normalize_adjacency(const Tensor& weights);

/// Population standard deviation of all pairwise distances i < j.
double pairwise_distance_std(const Montage& montage);

void write_matrix_csv(std::ostream& out, const Tensor& matrix);

}  // namespace metagnn
