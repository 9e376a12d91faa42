#include "metagnn/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "metagnn/errors.hpp"

namespace metagnn {

SeizureType parse_seizure_type(std::string_view text) {
  if (text == "focal") return SeizureType::kFocal;
  if (text == "generalized") return SeizureType::kGeneralized;
  throw FormatError("unknown seizure label '" + std::string(text) +
                    "' (expected focal or generalized)");
}

std::string_view to_string(SeizureType type) {
  return type == SeizureType::kFocal ? "focal" : "generalized";
}

std::string_view to_string(ClipKind kind) {
  switch (kind) {
    case ClipKind::kBackground:
      return "background";
    case ClipKind::kFocal:
      return "focal";
    case ClipKind::kGeneralized:
      return "generalized";
  }
  return "?";
}

std::size_t Recording::sample_count() const {
  return signals.empty() ? 0 : signals.front().size();
}

double Recording::duration_s() const {
  return sample_rate > 0.0 ? static_cast<double>(sample_count()) / sample_rate
                           : 0.0;
}

void Recording::validate() const {
  if (!(sample_rate > 0.0)) {
    throw ConfigError(recording_id + ": sample rate must be positive");
  }
  for (const auto& ch : signals) {
    if (ch.size() != sample_count()) {
      throw ConfigError(recording_id + ": channels differ in length");
    }
  }
  const double duration = duration_s();
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if (!(a.start_s >= 0.0 && a.end_s > a.start_s && a.end_s <= duration)) {
      throw ConfigError(recording_id + ": seizure interval [" +
                        std::to_string(a.start_s) + ", " +
                        std::to_string(a.end_s) + "] outside recording of " +
                        std::to_string(duration) + " s");
    }
    if (i > 0 && annotations[i - 1].end_s > a.start_s) {
      throw ConfigError(recording_id +
                        ": seizure intervals overlap or are unsorted");
    }
  }
}

std::vector<RawClip> segment(const Recording& recording,
                             const SegmentOptions& options) {
  const double exact = recording.sample_rate * options.window_s;
  const auto window = static_cast<std::size_t>(std::llround(exact));
  if (window == 0 || std::abs(exact - static_cast<double>(window)) > 1e-9) {
    throw ConfigError("segment: sample_rate * window_s must be a positive "
                      "integer");
  }
  std::vector<RawClip> clips;
  const std::size_t total = recording.sample_count();
  for (std::size_t start = 0; start + window <= total; start += window) {
    RawClip clip;
    clip.t0 = static_cast<double>(start) / recording.sample_rate;
    const double t1 = clip.t0 + options.window_s;
    for (std::size_t e = 0; e < recording.annotations.size(); ++e) {
      const auto& a = recording.annotations[e];
      const double overlap =
          std::max(0.0, std::min(t1, a.end_s) - std::max(clip.t0, a.start_s));
      if (overlap >= options.seizure_overlap * options.window_s) {
        clip.kind = a.type == SeizureType::kFocal ? ClipKind::kFocal
                                                  : ClipKind::kGeneralized;
        clip.event = static_cast<int>(e);
        break;
      }
    }
    clip.signals.reserve(recording.channel_count());
    for (const auto& ch : recording.signals) {
      clip.signals.emplace_back(ch.begin() + static_cast<long>(start),
                                ch.begin() + static_cast<long>(start + window));
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::size_t retained_bins(std::size_t samples, double sample_rate,
                          double cutoff_hz) {
  // bin k has frequency k * rate / samples; keep k with frequency < cutoff.
  const double limit = cutoff_hz * static_cast<double>(samples) / sample_rate;
  auto bins = static_cast<std::size_t>(std::ceil(limit - 1e-9));
  return std::min(bins, samples / 2 + 1);
}

namespace {

struct PlanCache {
  std::mutex mutex;
  std::map<std::size_t, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [_, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n) {
    std::lock_guard lock(mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out,
                                          FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(n, plan);
    return plan;
  }
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

Tensor fft_features(const std::vector<std::vector<double>>& signals,
                    double sample_rate, double cutoff_hz) {
  if (sample_rate < 2.0 * cutoff_hz) {
    throw ConfigError("fft_features: sample rate " +
                      std::to_string(sample_rate) +
                      " Hz is below twice the cutoff");
  }
  if (signals.empty() || signals.front().empty()) {
    throw ConfigError("fft_features: empty clip");
  }
  const std::size_t n = signals.front().size();
  const std::size_t bins = retained_bins(n, sample_rate, cutoff_hz);
  fftw_plan plan = plan_cache().get(n);

  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
  std::vector<double> features(signals.size() * bins);
  for (std::size_t c = 0; c < signals.size(); ++c) {
    if (signals[c].size() != n) {
      throw ConfigError("fft_features: channels differ in length");
    }
    std::copy(signals[c].begin(), signals[c].end(), in.get());
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t k = 0; k < bins; ++k) {
      features[c * bins + k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    }
  }
  return Tensor::matrix(signals.size(), bins, std::move(features));
}

NormMode parse_norm_mode(std::string_view text) {
  if (text == "clip") return NormMode::kClip;
  if (text == "per_channel") return NormMode::kPerChannel;
  throw ConfigError("unknown normalization '" + std::string(text) +
                    "' (expected clip or per_channel)");
}

std::string_view to_string(NormMode mode) {
  return mode == NormMode::kClip ? "clip" : "per_channel";
}

namespace {

// Z-score values[begin, end) in place; false when the spread is zero.
bool zscore(std::vector<double>& values, std::size_t begin, std::size_t end) {
  const double count = static_cast<double>(end - begin);
  double mu = 0.0;
  for (std::size_t i = begin; i < end; ++i) mu += values[i];
  mu /= count;
  double var = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    var += (values[i] - mu) * (values[i] - mu);
  }
  const double sd = std::sqrt(var / count);
  if (!(sd > 0.0) || !std::isfinite(sd)) return false;
  for (std::size_t i = begin; i < end; ++i) values[i] = (values[i] - mu) / sd;
  return true;
}

}  // namespace

std::optional<Tensor> normalize_clip(const Tensor& features, NormMode mode) {
  std::vector<double> values(features.data().begin(), features.data().end());
  if (values.empty()) return std::nullopt;
  if (mode == NormMode::kClip) {
    if (!zscore(values, 0, values.size())) return std::nullopt;
  } else {
    const std::size_t rows = features.rows(), cols = features.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      if (!zscore(values, r * cols, (r + 1) * cols)) return std::nullopt;
    }
  }
  return Tensor(features.shape(), std::move(values));
}

}  // namespace metagnn
