#include "metagnn/graph.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "metagnn/errors.hpp"

namespace metagnn {

ThresholdMode parse_threshold_mode(std::string_view text) {
  if (text == "distance") return ThresholdMode::kDistance;
  if (text == "weight") return ThresholdMode::kWeight;
  throw ConfigError("unknown threshold_mode '" + std::string(text) +
                    "' (expected distance or weight)");
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::kDistance ? "distance" : "weight";
}

std::size_t ElectrodeGraph::edge_count() const {
  std::size_t edges = 0;
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (weights.at(i, j) != 0.0) ++edges;
    }
  }
  return edges;
}

double pairwise_distance_std(const Montage& montage) {
  const std::size_t n = montage.size();
  std::vector<double> distances;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      distances.push_back(electrode_distance(montage, i, j));
    }
  }
  if (distances.empty()) return 0.0;
  double mu = 0.0;
  for (double d : distances) mu += d;
  mu /= static_cast<double>(distances.size());
  double var = 0.0;
  for (double d : distances) var += (d - mu) * (d - mu);
  return std::sqrt(var / static_cast<double>(distances.size()));
}

Tensor normalize_adjacency(const Tensor& weights) {
  const std::size_t n = weights.rows();
  if (weights.cols() != n) {
    throw ShapeError("normalize_adjacency: weight matrix must be square, got " +
                     shape_to_string(weights.shape()));
  }
  std::vector<double> degree_inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 1.0;
    for (std::size_t j = 0; j < n; ++j) degree += weights.at(i, j);
    degree_inv_sqrt[i] = 1.0 / std::sqrt(degree);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a_hat = weights.at(i, j) + (i == j ? 1.0 : 0.0);
      out[i * n + j] = degree_inv_sqrt[i] * a_hat * degree_inv_sqrt[j];
    }
  }
  return Tensor::matrix(n, n, std::move(out));
}

ElectrodeGraph graph_from_weights(const Tensor& weights) {
  if (weights.rank() != 2 || weights.rows() != weights.cols()) {
    throw ShapeError("graph: weight matrix must be square, got " +
                     shape_to_string(weights.shape()));
  }
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    for (std::size_t j = 0; j < weights.cols(); ++j) {
      if (weights.at(i, j) != weights.at(j, i) || weights.at(i, j) < 0.0) {
        throw ConfigError("graph: weights must be symmetric and nonnegative");
      }
    }
  }
  ElectrodeGraph g;
  g.weights = weights.detach();
  g.propagation = normalize_adjacency(g.weights);
  const std::size_t n = g.weights.rows();
  g.non_neighbors.assign(n * n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g.non_neighbors[i * n + j] = i != j && g.weights.at(i, j) == 0.0;
    }
  }
  return g;
}

ElectrodeGraph build_distance_graph(const Montage& montage,
                                    const GraphConfig& config) {
  montage.validate(/*require_standard_size=*/false);
  if (!(config.kappa > 0.0)) throw ConfigError("kappa must be positive");
  const double sigma = pairwise_distance_std(montage);
  if (!(sigma > 0.0)) throw ConfigError("degenerate montage: sigma is zero");

  const std::size_t n = montage.size();
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = electrode_distance(montage, i, j);
      const double kernel = std::exp(-(d * d) / (sigma * sigma));
      const bool keep = config.threshold_mode == ThresholdMode::kDistance
                            ? d <= config.kappa
                            : kernel >= config.kappa;
      if (keep) w[i * n + j] = w[j * n + i] = kernel;
    }
  }
  ElectrodeGraph g = graph_from_weights(Tensor::matrix(n, n, std::move(w)));
  g.sigma = sigma;
  return g;
}

void write_matrix_csv(std::ostream& out, const Tensor& matrix) {
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (j) out << ',';
      out << matrix.at(i, j);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace metagnn
