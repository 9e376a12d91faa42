#pragma once

// Synthetic EEG-like cohort generator.
//
// Each patient gets its own background rhythms and seizure signature drawn
// from shared ranges, so patients are related but not identical: a focal
// seizure is a rhythmic burst around one electrode, a generalized seizure is
// a broadband rhythmic burst on every channel. Patient i depends only on
// (seed, i), so cohorts can be streamed one patient at a time.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "metagnn/montage.hpp"
#include "metagnn/signal.hpp"

namespace metagnn {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

void to_json(nlohmann::json& j, const Range& range);
void from_json(const nlohmann::json& j, Range& range);

struct SynthConfig {
  std::size_t patients = 6;
  std::uint64_t seed = 1;
  std::string id_prefix = "p";
  /// Integer-valued, at least 80 Hz.
  double sample_rate = 128.0;
  /// Seconds of seizure-free signal per patient (whole seconds).
  double background_s = 400.0;
  std::size_t min_seizures = 2;
  std::size_t max_seizures = 6;
  /// Whole seconds; each seizure draws an integer duration in range.
  Range seizure_s{60.0, 75.0};
  std::size_t recordings_per_patient = 1;
  double focal_fraction = 0.5;
  /// With two or more seizures, include at least one of each type.
  bool both_types = true;

  /// Standard deviation of the coloured noise floor, microvolts.
  double noise_uv = 10.0;
  Range alpha_hz{8.0, 12.0};
  Range alpha_gain{0.8, 2.0};
  Range beta_hz{14.0, 25.0};
  Range beta_gain{0.2, 0.8};
  Range seizure_hz{3.0, 12.0};
  /// Seizure rhythm amplitude relative to noise_uv.
  Range seizure_gain{1.5, 3.5};
  /// Relative amplitude of the 2nd and 3rd harmonic of the seizure rhythm.
  Range harmonic_gain{0.2, 0.6};
  /// Fractional downward drift of the seizure frequency over an event.
  double chirp = 0.2;
  /// Per-seizure relative deviation of the rhythm from the patient's mean.
  double seizure_jitter = 0.15;
  /// Non-seizure rhythmic bursts (artifacts) in background stretches.
  double artifacts_per_min = 1.5;
  Range artifact_s{2.0, 8.0};
  Range artifact_hz{2.0, 20.0};
  Range artifact_gain{1.0, 3.0};
  /// Radius of a focal seizure's electrode neighbourhood (unit sphere).
  double focal_radius = 0.6;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& config);
/// Missing keys keep defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, SynthConfig& config);

/// Per-patient draw, exposed for inspection and tests.
struct SynthProfile {
  std::string patient_id;
  double alpha_hz = 0.0;
  double alpha_gain = 0.0;
  double beta_hz = 0.0;
  double beta_gain = 0.0;
  double seizure_hz = 0.0;
  double seizure_gain = 0.0;
  double harmonic_gain = 0.0;
  std::size_t focus = 0;
  std::vector<SeizureType> seizures;
  std::vector<double> seizure_durations;
};

SynthProfile synth_profile(const SynthConfig& config, std::size_t index);

/// Recordings of patient `index`, montage channel order.
std::vector<Recording> synth_patient(const SynthConfig& config,
                                     const Montage& montage,
                                     std::size_t index);

std::vector<Recording> synth_generate(const SynthConfig& config,
                                      const Montage& montage);

/// The benchmark cohort: `train` patients with 5-6 seizures (prefix "tr")
/// and `test` patients with 2-3 seizures (prefix "te"), same ranges otherwise.
SynthConfig train_cohort(std::size_t patients, std::uint64_t seed);
SynthConfig test_cohort(std::size_t patients, std::uint64_t seed);

}  // namespace metagnn
