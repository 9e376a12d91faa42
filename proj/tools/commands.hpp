#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metagnn/dataset.hpp"
#include "metagnn/synth.hpp"
#include "run_config.hpp"

namespace metagnn::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kNumericalError = 2 };

struct SynthSummary {
  std::size_t patients = 0;
  std::size_t recordings = 0;
  std::size_t seizures = 0;
  double hours = 0.0;
};

/// Writes <recording>.edf per recording plus annotations.csv into `out_dir`.
SynthSummary cmd_synth(const SynthConfig& spec, const std::filesystem::path& out_dir,
                       std::ostream& log);

struct PreprocessSummary {
  std::size_t files = 0;
  std::size_t failed_files = 0;
  std::size_t patients_built = 0;
  std::size_t patients_cached = 0;
  std::vector<PatientData> patients;
};

/// Reads every .edf under config.data_dir (plus annotations.csv), groups by
/// patient and serves each patient from the clip cache when its key (pipeline
/// config, montage and input bytes) matches. Unreadable files are skipped with
/// a logged reason; FormatError when none is usable.
PreprocessSummary cmd_preprocess(const RunConfig& config, std::ostream& log);

void cmd_train(const RunConfig& config, std::ostream& log);
void cmd_finetune(const RunConfig& config,
                  const std::optional<std::filesystem::path>& checkpoint,
                  std::ostream& log);
/// With `checkpoint`, scores that fixed model on every test patient's query
/// set; otherwise scores the per-patient models under <out_dir>/finetuned.
void cmd_eval(const RunConfig& config,
              const std::optional<std::filesystem::path>& checkpoint,
              std::ostream& log);
/// Glob, PPAT and ML rows for the configured architecture.
void cmd_baselines(const RunConfig& config, std::ostream& log);

/// Per-check table on `out`; false when any check exceeds its tolerance.
bool cmd_gradcheck(std::size_t seeds, const std::string& filter, std::ostream& out);

/// Process entry point; returns the exit code instead of exiting.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace metagnn::cli
