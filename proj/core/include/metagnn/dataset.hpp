#pragma once

// Labelled clips, per-patient grouping, split/filter rules, oversampling and
// support/query task construction.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metagnn/signal.hpp"
#include "metagnn/tensor.hpp"

namespace metagnn {

struct PipelineConfig {
  double window_s = 10.0;
  double cutoff_hz = 40.0;
  NormMode norm = NormMode::kClip;
  double seizure_overlap = 0.5;
};

struct LabeledClip {
  /// Normalised {channels, bins} feature matrix.
  Tensor features;
  ClipKind kind = ClipKind::kBackground;
  /// Class id under the current task mode; equals int(kind) until relabelled.
  int label = 0;
  std::string patient_id;
  std::string recording_id;
  double t0 = 0.0;
  /// Seizure index within the recording, -1 for background.
  int event = -1;

  bool same_clip(const LabeledClip& other) const {
    return recording_id == other.recording_id && t0 == other.t0;
  }
};

struct PatientData {
  std::string patient_id;
  /// Canonical order: recording id, then t0.
  std::vector<LabeledClip> clips;
  std::size_t seizure_count = 0;
  std::size_t excluded_clips = 0;
};

/// segment -> fft_features -> normalize_clip. Degenerate clips are dropped
/// and counted in `excluded` when given.
std::vector<LabeledClip> process_recording(const Recording& recording,
                                           const PipelineConfig& config,
                                           std::size_t* excluded = nullptr);

/// Group recordings by patient and process them. Output is ordered by
/// patient id regardless of input order.
std::vector<PatientData> build_patients(std::span<const Recording> recordings,
                                        const PipelineConfig& config);

/// Patients with at least `min_seizures` annotated seizures.
std::vector<PatientData> filter_patients(std::span<const PatientData> patients,
                                         std::size_t min_seizures);

struct SplitConfig {
  /// "More than four seizures".
  std::size_t train_min_seizures = 5;
  std::size_t test_min_seizures = 2;
  /// When non-empty these patients form the test split and are never used
  /// for training. Otherwise patients below the training threshold that
  /// still meet the test threshold are held out.
  std::vector<std::string> test_patients;
};

struct PatientSplit {
  std::vector<PatientData> train;
  std::vector<PatientData> test;
};

PatientSplit split_patients(std::span<const PatientData> patients,
                            const SplitConfig& config);

enum class TaskMode { kDetection, kClassification };

TaskMode parse_task_mode(std::string_view text);
std::string_view to_string(TaskMode mode);
std::size_t class_count(TaskMode mode);
/// detection: background 0, any seizure 1.
/// classification: background 0, focal 1, generalized 2.
int class_of(ClipKind kind, TaskMode mode);
std::string_view class_name(int label, TaskMode mode);

std::vector<LabeledClip> relabel(std::span<const LabeledClip> clips,
                                 TaskMode mode);

/// Round-half-up of background / class count, at least 1.
std::size_t repeat_factor(std::size_t background, std::size_t seizure);

/// Repeat every clip of each seizure class repeat_factor(background, class)
/// times in place. Throws ConfigError naming any absent class.
std::vector<LabeledClip> oversample(std::span<const LabeledClip> clips,
                                    std::size_t classes);

struct PatientTask {
  std::string patient_id;
  std::vector<LabeledClip> support;
  std::vector<LabeledClip> query;
};

struct FinetuneProtocol {
  std::size_t seizure_clips = 6;
  std::size_t background_clips = 6;
};

/// Few-shot personalisation split: for each seizure class, the first
/// `seizure_clips` clips of the earliest seizure of that class with enough
/// clips, plus `background_clips` background clips drawn with `seed`.
/// Everything else is the query set. Throws ConfigError with counts when a
/// class cannot be served.
PatientTask finetune_task(const PatientData& patient, TaskMode mode,
                          std::uint64_t seed,
                          const FinetuneProtocol& protocol = {});

/// Class-balanced support and query sets drawn without replacement from a
/// patient's labelled clips; disjoint by clip identity. Per-class counts are
/// n / classes, remainder going to the lower class ids.
PatientTask sample_episode(const std::string& patient_id,
                           std::span<const LabeledClip> clips,
                           std::size_t classes, std::size_t n_support,
                           std::size_t n_query, std::uint64_t seed);

/// Feature tensors and labels of a clip list, for classify_batch.
std::vector<Tensor> features_of(std::span<const LabeledClip> clips);
std::vector<int> labels_of(std::span<const LabeledClip> clips);

}  // namespace metagnn
