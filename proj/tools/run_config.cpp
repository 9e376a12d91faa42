#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "metagnn/errors.hpp"
#include "metagnn/json_util.hpp"

namespace metagnn {

void to_json(nlohmann::json& j, const GraphConfig& c) {
  j = {{"kappa", c.kappa},
       {"threshold_mode", std::string(to_string(c.threshold_mode))}};
}

void from_json(const nlohmann::json& j, GraphConfig& c) {
  reject_unknown_keys(j, {"kappa", "threshold_mode"}, "graph");
  read_if(j, "kappa", c.kappa);
  if (j.contains("threshold_mode")) {
    c.threshold_mode =
        parse_threshold_mode(j.at("threshold_mode").get<std::string>());
  }
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"window_s", c.window_s},
       {"cutoff_hz", c.cutoff_hz},
       {"norm", std::string(to_string(c.norm))},
       {"seizure_overlap", c.seizure_overlap}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  reject_unknown_keys(j, {"window_s", "cutoff_hz", "norm", "seizure_overlap"},
                      "pipeline");
  read_if(j, "window_s", c.window_s);
  read_if(j, "cutoff_hz", c.cutoff_hz);
  if (j.contains("norm")) c.norm = parse_norm_mode(j.at("norm").get<std::string>());
  read_if(j, "seizure_overlap", c.seizure_overlap);
}

void to_json(nlohmann::json& j, const SplitConfig& c) {
  j = {{"train_min_seizures", c.train_min_seizures},
       {"test_min_seizures", c.test_min_seizures},
       {"test_patients", c.test_patients}};
}

void from_json(const nlohmann::json& j, SplitConfig& c) {
  reject_unknown_keys(j, {"train_min_seizures", "test_min_seizures", "test_patients"},
                      "split");
  read_if(j, "train_min_seizures", c.train_min_seizures);
  read_if(j, "test_min_seizures", c.test_min_seizures);
  read_if(j, "test_patients", c.test_patients);
}

namespace cli {

void RunConfig::finalize() {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " +
                      std::to_string(schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  arch.classes = class_count(task);
  arch.validate();
  meta.validate();
  if (!(pipeline.window_s > 0.0)) throw ConfigError("pipeline.window_s must be > 0");
  if (!(pipeline.seizure_overlap > 0.0 && pipeline.seizure_overlap <= 1.0)) {
    throw ConfigError("pipeline.seizure_overlap must lie in (0, 1]");
  }
  if (!(graph.kappa > 0.0)) throw ConfigError("graph.kappa must be > 0");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

Montage RunConfig::load_montage() const {
  if (montage.empty() || montage == "builtin") return Montage::standard_1020();
  return metagnn::load_montage(montage);
}

std::filesystem::path RunConfig::resolved_cache_dir() const {
  if (!cache_dir.empty()) return cache_dir;
  if (const char* env = std::getenv("METAGNN_CACHE"); env && *env) return env;
  return std::filesystem::path(out_dir) / "cache";
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"schema_version", c.schema_version},
       {"montage", c.montage},
       {"graph", c.graph},
       {"arch", c.arch},
       {"meta", c.meta},
       {"global", c.global},
       {"pipeline", c.pipeline},
       {"task", std::string(to_string(c.task))},
       {"split", c.split},
       {"ppat_iterations", c.ppat_iterations},
       {"data_dir", c.data_dir},
       {"cache_dir", c.cache_dir},
       {"out_dir", c.out_dir}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown_keys(j,
                      {"schema_version", "montage", "graph", "arch", "meta",
                       "global", "pipeline", "task", "split", "ppat_iterations",
                       "data_dir", "cache_dir", "out_dir"},
                      "config");
  if (!j.contains("schema_version")) {
    throw ConfigError("config is missing schema_version");
  }
  j.at("schema_version").get_to(c.schema_version);
  read_if(j, "montage", c.montage);
  read_if(j, "graph", c.graph);
  read_if(j, "arch", c.arch);
  read_if(j, "meta", c.meta);
  read_if(j, "global", c.global);
  read_if(j, "pipeline", c.pipeline);
  if (j.contains("task")) c.task = parse_task_mode(j.at("task").get<std::string>());
  read_if(j, "split", c.split);
  read_if(j, "ppat_iterations", c.ppat_iterations);
  read_if(j, "data_dir", c.data_dir);
  read_if(j, "cache_dir", c.cache_dir);
  read_if(j, "out_dir", c.out_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace cli
}  // namespace metagnn
