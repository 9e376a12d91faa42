#pragma once

// GCN / GAT seizure classifier f(X, G) -> class logits.
//
// A model is an ArchConfig plus a flat, ordered list of named parameter
// tensors. Forward functions take the parameters as a span so the same code
// evaluates a global model and any adapted copy of it.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metagnn/graph.hpp"
#include "metagnn/tensor.hpp"

namespace metagnn {

enum class Arch { kGCN, kGAT };

Arch parse_arch(std::string_view text);
std::string_view to_string(Arch arch);

struct ArchConfig {
  Arch arch = Arch::kGCN;
  std::size_t in_features = 400;
  /// Output width of each graph layer (per head for GAT).
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t classes = 2;
  std::size_t heads = 2;
  double leaky_slope = 0.2;
  /// Applied to hidden node features only when ForwardOptions::training.
  double dropout = 0.0;

  void validate() const;
  /// Width of the pooled feature vector feeding the linear head.
  std::size_t readout_width() const;
};

void to_json(nlohmann::json& j, const ArchConfig& config);
void from_json(const nlohmann::json& j, ArchConfig& config);

struct ModelParams {
  ArchConfig arch;
  std::vector<std::string> names;
  ParamList values;

  /// Glorot-uniform weights, zero bias; deterministic in `seed`.
  static ModelParams init(const ArchConfig& arch, std::uint64_t seed);

  /// Detached copies of every tensor as fresh leaves.
  ModelParams clone(bool requires_grad = true) const;
  ModelParams with_values(ParamList values) const;

  const Tensor& get(std::string_view name) const;
  std::size_t parameter_count() const;
};

/// Parameter names and shapes implied by an architecture, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(
    const ArchConfig& arch);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// LeakyReLU(S_hat X Theta).
Tensor gcn_forward(const Tensor& x, const Tensor& propagation,
                   const Tensor& theta, double leaky_slope);

/// Attention coefficients for already-projected node features h = X Theta.
/// Row i is a softmax over {j : !non_neighbors[i*n+j]}; zero elsewhere.
Tensor gat_attention_projected(const Tensor& h,
                               const std::vector<bool>& non_neighbors,
                               const Tensor& attn, double leaky_slope);

Tensor gat_attention(const Tensor& x, const std::vector<bool>& non_neighbors,
                     const Tensor& theta, const Tensor& attn,
                     double leaky_slope);

struct GatHeadParams {
  Tensor theta;
  Tensor attn;
};

/// One GAT layer: per head alpha (X Theta); heads concatenated, or averaged
/// when `average_heads`; LeakyReLU on the result.
Tensor gat_forward(const Tensor& x, const std::vector<bool>& non_neighbors,
                   std::span<const GatHeadParams> heads, double leaky_slope,
                   bool average_heads);

/// Logits {batch, classes} for a batch of {nodes, in_features} clips.
Tensor classify_batch(std::span<const Tensor> clips,
                      const ElectrodeGraph& graph, const ArchConfig& arch,
                      std::span<const Tensor> params,
                      const ForwardOptions& options = {});

/// Logits of one clip, shape {classes}.
Tensor classify(const Tensor& clip, const ElectrodeGraph& graph,
                const ModelParams& model);

/// Argmax per row; ties resolve to the lower class index.
std::vector<int> predict_labels(const Tensor& logits);

}  // namespace metagnn
