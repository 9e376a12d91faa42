#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include <nlohmann/json_fwd.hpp>

#include "metagnn/baselines.hpp"

namespace metagnn {

/// Header "model,task,iterations,accuracy,macro_f1", one row per evaluation.
void write_report_csv(std::ostream& out, std::span<const ModelEvaluation> rows);

/// Rows plus per-patient metrics.
nlohmann::json report_json(std::span<const ModelEvaluation> rows);

/// Header "iteration,support_loss,accuracy,macro_f1".
void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace);

/// report.csv, report.json and curves/<model>/<patient>.csv under `dir`.
void write_report_dir(const std::filesystem::path& dir,
                      std::span<const ModelEvaluation> rows);

}  // namespace metagnn
