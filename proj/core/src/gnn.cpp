#include "metagnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "metagnn/errors.hpp"
#include "metagnn/random.hpp"

namespace metagnn {

Arch parse_arch(std::string_view text) {
  if (text == "gcn" || text == "GCN") return Arch::kGCN;
  if (text == "gat" || text == "GAT") return Arch::kGAT;
  throw ConfigError("unknown architecture '" + std::string(text) + "'");
}

std::string_view to_string(Arch arch) {
  return arch == Arch::kGCN ? "gcn" : "gat";
}

void ArchConfig::validate() const {
  if (in_features == 0) throw ConfigError("in_features must be positive");
  if (hidden.empty()) throw ConfigError("at least one graph layer required");
  for (auto w : hidden) {
    if (w == 0) throw ConfigError("layer widths must be positive");
  }
  if (classes != 2 && classes != 3) {
    throw ConfigError("classes must be 2 (detection) or 3 (classification)");
  }
  if (heads == 0) throw ConfigError("heads must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
}

std::size_t ArchConfig::readout_width() const { return hidden.back(); }

void to_json(nlohmann::json& j, const ArchConfig& c) {
  j = nlohmann::json{{"arch", std::string(to_string(c.arch))},
                     {"in_features", c.in_features},
                     {"hidden", c.hidden},
                     {"classes", c.classes},
                     {"heads", c.heads},
                     {"leaky_slope", c.leaky_slope},
                     {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ArchConfig& c) {
  static const char* kKeys[] = {"arch",  "in_features", "hidden",  "classes",
                                "heads", "leaky_slope", "dropout"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown architecture key '" + key + "'");
    }
  }
  if (j.contains("arch")) c.arch = parse_arch(j.at("arch").get<std::string>());
  if (j.contains("in_features")) j.at("in_features").get_to(c.in_features);
  if (j.contains("hidden")) j.at("hidden").get_to(c.hidden);
  if (j.contains("classes")) j.at("classes").get_to(c.classes);
  if (j.contains("heads")) j.at("heads").get_to(c.heads);
  if (j.contains("leaky_slope")) j.at("leaky_slope").get_to(c.leaky_slope);
  if (j.contains("dropout")) j.at("dropout").get_to(c.dropout);
}

std::vector<std::pair<std::string, Shape>> parameter_layout(
    const ArchConfig& arch) {
  arch.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t width = arch.in_features;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const std::size_t out = arch.hidden[l];
    const std::string prefix = std::string(to_string(arch.arch)) +
                               std::to_string(l);
    if (arch.arch == Arch::kGCN) {
      layout.emplace_back(prefix + ".theta", Shape{width, out});
      width = out;
    } else {
      for (std::size_t h = 0; h < arch.heads; ++h) {
        const std::string head = prefix + ".head" + std::to_string(h);
        layout.emplace_back(head + ".theta", Shape{width, out});
        layout.emplace_back(head + ".attn", Shape{2 * out, 1});
      }
      const bool last = l + 1 == arch.hidden.size();
      width = last ? out : out * arch.heads;
    }
  }
  layout.emplace_back("head.weight", Shape{width, arch.classes});
  layout.emplace_back("head.bias", Shape{1, arch.classes});
  return layout;
}

ModelParams ModelParams::init(const ArchConfig& arch, std::uint64_t seed) {
  ModelParams model;
  model.arch = arch;
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  for (auto& [name, shape] : parameter_layout(arch)) {
    std::vector<double> values(shape_numel(shape), 0.0);
    if (name != "head.bias") {
      const double limit =
          std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& v : values) v = rng.uniform(-limit, limit);
    }
    model.names.push_back(name);
    model.values.emplace_back(shape, std::move(values), true);
  }
  return model;
}

ModelParams ModelParams::clone(bool requires_grad) const {
  ModelParams copy;
  copy.arch = arch;
  copy.names = names;
  for (const auto& v : values) copy.values.push_back(v.detach(requires_grad));
  return copy;
}

ModelParams ModelParams::with_values(ParamList new_values) const {
  if (new_values.size() != values.size()) {
    throw std::invalid_argument("with_values: parameter count mismatch");
  }
  ModelParams copy;
  copy.arch = arch;
  copy.names = names;
  copy.values = std::move(new_values);
  return copy;
}

const Tensor& ModelParams::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.numel();
  return n;
}

// ---------------------------------------------------------------------------

Tensor gcn_forward(const Tensor& x, const Tensor& propagation,
                   const Tensor& theta, double leaky_slope) {
  return leaky_relu(matmul(propagation, matmul(x, theta)), leaky_slope);
}

Tensor gat_attention_projected(const Tensor& h,
                               const std::vector<bool>& non_neighbors,
                               const Tensor& attn, double leaky_slope) {
  const std::size_t n = h.rows(), width = h.cols();
  if (attn.numel() != 2 * width) {
    throw ShapeError("gat_attention: attention vector has " +
                     std::to_string(attn.numel()) + " entries, expected " +
                     std::to_string(2 * width));
  }
  const Tensor a = reshape(attn, {2 * width, 1});
  // e_ij = a_src . h_i + a_dst . h_j
  const Tensor source = matmul(h, slice(a, 0, 0, width));
  const Tensor target = matmul(h, slice(a, 0, width, 2 * width));
  const Tensor logits = add(matmul(source, Tensor::ones({1, n})),
                            matmul(Tensor::ones({n, 1}), transpose(target)));
  const Tensor masked =
      masked_fill(leaky_relu(logits, leaky_slope), non_neighbors,
                  -std::numeric_limits<double>::infinity());
  return row_softmax(masked);
}

Tensor gat_attention(const Tensor& x, const std::vector<bool>& non_neighbors,
                     const Tensor& theta, const Tensor& attn,
                     double leaky_slope) {
  return gat_attention_projected(matmul(x, theta), non_neighbors, attn,
                                 leaky_slope);
}

Tensor gat_forward(const Tensor& x, const std::vector<bool>& non_neighbors,
                   std::span<const GatHeadParams> heads, double leaky_slope,
                   bool average_heads) {
  std::vector<Tensor> outputs;
  for (const auto& head : heads) {
    const Tensor h = matmul(x, head.theta);
    const Tensor alpha =
        gat_attention_projected(h, non_neighbors, head.attn, leaky_slope);
    outputs.push_back(matmul(alpha, h));
  }
  Tensor combined;
  if (average_heads) {
    combined = outputs[0];
    for (std::size_t i = 1; i < outputs.size(); ++i) {
      combined = add(combined, outputs[i]);
    }
    combined = scale(combined, 1.0 / static_cast<double>(outputs.size()));
  } else {
    combined = outputs.size() == 1 ? outputs[0] : concat(outputs, 1);
  }
  return leaky_relu(combined, leaky_slope);
}

namespace {

void check_finite(std::span<const Tensor> clips) {
  for (const auto& clip : clips) {
    for (double v : clip.data()) {
      if (!std::isfinite(v)) {
        throw NumericalError("classify: non-finite node feature");
      }
    }
  }
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  std::vector<double> keep(x.numel());
  for (auto& k : keep) k = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  return mul(x, Tensor(x.shape(), std::move(keep)));
}

// Project every clip with one matmul on the row-stacked batch, then split.
std::vector<Tensor> project_batch(const std::vector<Tensor>& nodes,
                                  const Tensor& theta) {
  if (nodes.size() == 1) return {matmul(nodes[0], theta)};
  const std::size_t n = nodes[0].rows();
  const Tensor projected = matmul(concat(nodes, 0), theta);
  std::vector<Tensor> parts;
  parts.reserve(nodes.size());
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    parts.push_back(slice(projected, 0, b * n, (b + 1) * n));
  }
  return parts;
}

}  // namespace

Tensor classify_batch(std::span<const Tensor> clips,
                      const ElectrodeGraph& graph, const ArchConfig& arch,
                      std::span<const Tensor> params,
                      const ForwardOptions& options) {
  if (clips.empty()) throw std::invalid_argument("classify: empty batch");
  const auto layout = parameter_layout(arch);
  if (params.size() != layout.size()) {
    throw ShapeError("classify: expected " + std::to_string(layout.size()) +
                     " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  const std::size_t n = graph.size();
  for (const auto& clip : clips) {
    if (clip.rank() != 2 || clip.rows() != n ||
        clip.cols() != arch.in_features) {
      throw ShapeError("classify: clip shape " + shape_to_string(clip.shape()) +
                       " does not match [" + std::to_string(n) + ", " +
                       std::to_string(arch.in_features) + "]");
    }
  }
  check_finite(clips);

  Rng rng(options.dropout_seed);
  const bool use_dropout = options.training && arch.dropout > 0.0;
  std::vector<Tensor> nodes(clips.begin(), clips.end());
  std::size_t p = 0;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const bool last = l + 1 == arch.hidden.size();
    if (arch.arch == Arch::kGCN) {
      auto projected = project_batch(nodes, params[p++]);
      for (std::size_t b = 0; b < nodes.size(); ++b) {
        nodes[b] = leaky_relu(matmul(graph.propagation, projected[b]),
                              arch.leaky_slope);
      }
    } else {
      std::vector<std::vector<Tensor>> per_head(nodes.size());
      for (std::size_t h = 0; h < arch.heads; ++h) {
        const Tensor& theta = params[p++];
        const Tensor& attn = params[p++];
        auto projected = project_batch(nodes, theta);
        for (std::size_t b = 0; b < nodes.size(); ++b) {
          const Tensor alpha = gat_attention_projected(
              projected[b], graph.non_neighbors, attn, arch.leaky_slope);
          per_head[b].push_back(matmul(alpha, projected[b]));
        }
      }
      for (std::size_t b = 0; b < nodes.size(); ++b) {
        Tensor combined;
        if (last) {
          combined = per_head[b][0];
          for (std::size_t h = 1; h < arch.heads; ++h) {
            combined = add(combined, per_head[b][h]);
          }
          if (arch.heads > 1) {
            combined = scale(combined, 1.0 / static_cast<double>(arch.heads));
          }
        } else {
          combined = arch.heads == 1 ? per_head[b][0] : concat(per_head[b], 1);
        }
        nodes[b] = leaky_relu(combined, arch.leaky_slope);
      }
    }
    if (use_dropout && !last) {
      for (auto& node : nodes) node = dropout(node, arch.dropout, rng);
    }
  }

  std::vector<Tensor> pooled;
  pooled.reserve(nodes.size());
  for (const auto& node : nodes) pooled.push_back(mean_rows(node));
  const Tensor features =
      pooled.size() == 1 ? pooled[0] : concat(pooled, 0);
  return add(matmul(features, params[p]), params[p + 1]);
}

Tensor classify(const Tensor& clip, const ElectrodeGraph& graph,
                const ModelParams& model) {
  const Tensor logits = classify_batch(std::span<const Tensor>(&clip, 1), graph,
                                       model.arch, model.values);
  return reshape(logits, {model.arch.classes});
}

std::vector<int> predict_labels(const Tensor& logits) {
  const std::size_t batch = logits.rows(), classes = logits.cols();
  std::vector<int> labels(batch, 0);
  for (std::size_t r = 0; r < batch; ++r) {
    double best = logits.at(r, 0);
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits.at(r, c) > best) {
        best = logits.at(r, c);
        labels[r] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

}  // namespace metagnn
