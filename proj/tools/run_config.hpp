#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "metagnn/baselines.hpp"
#include "metagnn/dataset.hpp"
#include "metagnn/gnn.hpp"
#include "metagnn/graph.hpp"
#include "metagnn/meta.hpp"
#include "metagnn/montage.hpp"

namespace metagnn {

void to_json(nlohmann::json& j, const GraphConfig& config);
void from_json(const nlohmann::json& j, GraphConfig& config);
void to_json(nlohmann::json& j, const PipelineConfig& config);
void from_json(const nlohmann::json& j, PipelineConfig& config);
void to_json(nlohmann::json& j, const SplitConfig& config);
void from_json(const nlohmann::json& j, SplitConfig& config);

}  // namespace metagnn

namespace metagnn::cli {

inline constexpr int kSchemaVersion = 1;

/// Everything a train / finetune / eval / baselines run depends on.
struct RunConfig {
  int schema_version = kSchemaVersion;
  /// "builtin" or a montage file path.
  std::string montage = "builtin";
  GraphConfig graph;
  ArchConfig arch;
  MetaConfig meta;
  GlobalConfig global;
  PipelineConfig pipeline;
  TaskMode task = TaskMode::kDetection;
  SplitConfig split;
  std::size_t ppat_iterations = 20;
  std::string data_dir;
  /// Empty: $METAGNN_CACHE, else <out_dir>/cache.
  std::string cache_dir;
  std::string out_dir = "out";

  /// Resolves derived fields (class count from the task) and checks ranges.
  void finalize();
  Montage load_montage() const;
  std::filesystem::path resolved_cache_dir() const;
};

void to_json(nlohmann::json& j, const RunConfig& config);
/// Missing keys keep defaults; unknown keys and a schema_version other than
/// kSchemaVersion raise ConfigError.
void from_json(const nlohmann::json& j, RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace metagnn::cli
