#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metagnn/tensor.hpp"

namespace metagnn {

enum class SeizureType { kFocal, kGeneralized };

SeizureType parse_seizure_type(std::string_view text);
std::string_view to_string(SeizureType type);

struct SeizureInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  SeizureType type = SeizureType::kFocal;
};

/// A multi-channel recording in physical units (microvolts), one row per
/// montage channel in montage order.
struct Recording {
  std::string patient_id;
  std::string recording_id;
  double sample_rate = 0.0;
  std::vector<std::vector<double>> signals;
  std::vector<SeizureInterval> annotations;

  std::size_t channel_count() const { return signals.size(); }
  std::size_t sample_count() const;
  double duration_s() const;

  /// Equal-length channels, positive rate, annotations sorted, inside the
  /// recording and non-overlapping. Throws ConfigError.
  void validate() const;
};

enum class ClipKind { kBackground = 0, kFocal = 1, kGeneralized = 2 };

std::string_view to_string(ClipKind kind);

struct RawClip {
  double t0 = 0.0;
  ClipKind kind = ClipKind::kBackground;
  /// Index into Recording::annotations of the labelling seizure, or -1.
  int event = -1;
  std::vector<std::vector<double>> signals;
};

struct SegmentOptions {
  double window_s = 10.0;
  /// A window is labelled with a seizure when at least this fraction of it
  /// lies inside that seizure interval.
  double seizure_overlap = 0.5;
};

/// Consecutive non-overlapping windows; a trailing partial window is dropped.
/// Throws ConfigError when rate * window_s is not an integer.
std::vector<RawClip> segment(const Recording& recording,
                             const SegmentOptions& options = {});

/// Number of retained bins below `cutoff_hz` for a window of `samples`.
std::size_t retained_bins(std::size_t samples, double sample_rate,
                          double cutoff_hz);

/// Per channel |DFT| at bins with frequency < cutoff_hz (DC included).
/// Requires sample_rate >= 2 * cutoff_hz.
Tensor fft_features(const std::vector<std::vector<double>>& signals,
                    double sample_rate, double cutoff_hz = 40.0);

enum class NormMode {
  /// One mean and one standard deviation over the whole clip matrix.
  kClip,
  /// Separate statistics per channel row.
  kPerChannel,
};

NormMode parse_norm_mode(std::string_view text);
std::string_view to_string(NormMode mode);

/// Z-score a feature matrix. Returns nullopt when a standard deviation is
/// zero (degenerate clip, to be excluded).
std::optional<Tensor> normalize_clip(const Tensor& features,
                                     NormMode mode = NormMode::kClip);

}  // namespace metagnn
