#include "metagnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "metagnn/errors.hpp"
#include "metagnn/json_util.hpp"
#include "metagnn/random.hpp"

namespace metagnn {

void to_json(nlohmann::json& j, const Range& r) { j = {r.lo, r.hi}; }

void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError("range must be a [lo, hi] pair");
  }
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_range(const Range& r, const char* name, double floor_value) {
  if (!(r.lo <= r.hi) || r.lo < floor_value) {
    throw ConfigError(std::string("synth: invalid range for ") + name + " [" +
                      std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
  }
}

bool whole(double x) { return x == std::floor(x); }

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

std::string padded(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, v);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (patients == 0) throw ConfigError("synth: patients must be at least 1");
  if (!(sample_rate >= 80.0) || !whole(sample_rate)) {
    throw ConfigError("synth: sample_rate must be an integer >= 80 Hz");
  }
  if (!(background_s >= 0.0) || !whole(background_s)) {
    throw ConfigError("synth: background_s must be whole seconds");
  }
  if (min_seizures > max_seizures) {
    throw ConfigError("synth: min_seizures exceeds max_seizures");
  }
  if (recordings_per_patient == 0) {
    throw ConfigError("synth: recordings_per_patient must be at least 1");
  }
  check_range(seizure_s, "seizure_s", 1.0);
  if (!whole(seizure_s.lo) || !whole(seizure_s.hi)) {
    throw ConfigError("synth: seizure_s bounds must be whole seconds");
  }
  if (!(focal_fraction >= 0.0 && focal_fraction <= 1.0)) {
    throw ConfigError("synth: focal_fraction must lie in [0, 1]");
  }
  if (!(noise_uv > 0.0)) throw ConfigError("synth: noise_uv must be positive");
  check_range(alpha_hz, "alpha_hz", 0.0);
  check_range(alpha_gain, "alpha_gain", 0.0);
  check_range(beta_hz, "beta_hz", 0.0);
  check_range(beta_gain, "beta_gain", 0.0);
  check_range(seizure_hz, "seizure_hz", 0.1);
  check_range(seizure_gain, "seizure_gain", 0.0);
  check_range(harmonic_gain, "harmonic_gain", 0.0);
  const double nyquist = sample_rate / 2.0;
  if (alpha_hz.hi >= nyquist || beta_hz.hi >= nyquist ||
      5.0 * seizure_hz.hi >= nyquist) {
    throw ConfigError("synth: rhythm frequencies exceed the Nyquist limit");
  }
  if (!(chirp >= 0.0 && chirp < 1.0)) {
    throw ConfigError("synth: chirp must lie in [0, 1)");
  }
  if (!(seizure_jitter >= 0.0 && seizure_jitter < 0.5)) {
    throw ConfigError("synth: seizure_jitter must lie in [0, 0.5)");
  }
  if (!(artifacts_per_min >= 0.0)) {
    throw ConfigError("synth: artifacts_per_min must be >= 0");
  }
  check_range(artifact_s, "artifact_s", 0.1);
  check_range(artifact_hz, "artifact_hz", 0.1);
  check_range(artifact_gain, "artifact_gain", 0.0);
  if (artifact_hz.hi >= nyquist) {
    throw ConfigError("synth: artifact_hz exceeds the Nyquist limit");
  }
  if (!(focal_radius > 0.0)) {
    throw ConfigError("synth: focal_radius must be positive");
  }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"patients", c.patients},
                     {"seed", c.seed},
                     {"id_prefix", c.id_prefix},
                     {"sample_rate", c.sample_rate},
                     {"background_s", c.background_s},
                     {"min_seizures", c.min_seizures},
                     {"max_seizures", c.max_seizures},
                     {"seizure_s", c.seizure_s},
                     {"recordings_per_patient", c.recordings_per_patient},
                     {"focal_fraction", c.focal_fraction},
                     {"both_types", c.both_types},
                     {"noise_uv", c.noise_uv},
                     {"alpha_hz", c.alpha_hz},
                     {"alpha_gain", c.alpha_gain},
                     {"beta_hz", c.beta_hz},
                     {"beta_gain", c.beta_gain},
                     {"seizure_hz", c.seizure_hz},
                     {"seizure_gain", c.seizure_gain},
                     {"harmonic_gain", c.harmonic_gain},
                     {"chirp", c.chirp},
                     {"seizure_jitter", c.seizure_jitter},
                     {"artifacts_per_min", c.artifacts_per_min},
                     {"artifact_s", c.artifact_s},
                     {"artifact_hz", c.artifact_hz},
                     {"artifact_gain", c.artifact_gain},
                     {"focal_radius", c.focal_radius}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  reject_unknown_keys(
      j,
      {"patients", "seed", "id_prefix", "sample_rate", "background_s",
       "min_seizures", "max_seizures", "seizure_s", "recordings_per_patient",
       "focal_fraction", "both_types", "noise_uv", "alpha_hz", "alpha_gain",
       "beta_hz", "beta_gain", "seizure_hz", "seizure_gain", "harmonic_gain",
       "chirp", "seizure_jitter", "artifacts_per_min", "artifact_s",
       "artifact_hz", "artifact_gain", "focal_radius"},
      "synth");
  read_if(j, "patients", c.patients);
  read_if(j, "seed", c.seed);
  read_if(j, "id_prefix", c.id_prefix);
  read_if(j, "sample_rate", c.sample_rate);
  read_if(j, "background_s", c.background_s);
  read_if(j, "min_seizures", c.min_seizures);
  read_if(j, "max_seizures", c.max_seizures);
  read_if(j, "seizure_s", c.seizure_s);
  read_if(j, "recordings_per_patient", c.recordings_per_patient);
  read_if(j, "focal_fraction", c.focal_fraction);
  read_if(j, "both_types", c.both_types);
  read_if(j, "noise_uv", c.noise_uv);
  read_if(j, "alpha_hz", c.alpha_hz);
  read_if(j, "alpha_gain", c.alpha_gain);
  read_if(j, "beta_hz", c.beta_hz);
  read_if(j, "beta_gain", c.beta_gain);
  read_if(j, "seizure_hz", c.seizure_hz);
  read_if(j, "seizure_gain", c.seizure_gain);
  read_if(j, "harmonic_gain", c.harmonic_gain);
  read_if(j, "chirp", c.chirp);
  read_if(j, "seizure_jitter", c.seizure_jitter);
  read_if(j, "artifacts_per_min", c.artifacts_per_min);
  read_if(j, "artifact_s", c.artifact_s);
  read_if(j, "artifact_hz", c.artifact_hz);
  read_if(j, "artifact_gain", c.artifact_gain);
  read_if(j, "focal_radius", c.focal_radius);
}

SynthProfile synth_profile(const SynthConfig& config, std::size_t index) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x5e, index));
  SynthProfile p;
  p.patient_id = config.id_prefix + padded(index, 3);
  p.alpha_hz = draw(rng, config.alpha_hz);
  p.alpha_gain = draw(rng, config.alpha_gain);
  p.beta_hz = draw(rng, config.beta_hz);
  p.beta_gain = draw(rng, config.beta_gain);
  p.seizure_hz = draw(rng, config.seizure_hz);
  p.seizure_gain = draw(rng, config.seizure_gain);
  p.harmonic_gain = draw(rng, config.harmonic_gain);
  p.focus = rng.index(kNumChannels);
  const std::size_t count =
      config.min_seizures + rng.index(config.max_seizures - config.min_seizures + 1);
  for (std::size_t k = 0; k < count; ++k) {
    p.seizures.push_back(rng.uniform() < config.focal_fraction
                             ? SeizureType::kFocal
                             : SeizureType::kGeneralized);
    const auto span = static_cast<std::size_t>(config.seizure_s.hi -
                                               config.seizure_s.lo);
    p.seizure_durations.push_back(config.seizure_s.lo +
                                  static_cast<double>(rng.index(span + 1)));
  }
  if (config.both_types && count >= 2) {
    const bool first_focal = rng.uniform() < 0.5;
    p.seizures[0] = first_focal ? SeizureType::kFocal : SeizureType::kGeneralized;
    p.seizures[1] = first_focal ? SeizureType::kGeneralized : SeizureType::kFocal;
  }
  return p;
}

std::vector<Recording> synth_patient(const SynthConfig& config,
                                     const Montage& montage,
                                     std::size_t index) {
  montage.validate();
  const SynthProfile profile = synth_profile(config, index);
  const double rate = config.sample_rate;
  const std::size_t channels = montage.size();
  const std::size_t n_rec = config.recordings_per_patient;

  // Spatial weights of the background rhythms: alpha posterior, beta anterior.
  std::vector<double> w_alpha(channels), w_beta(channels), w_focal(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double y = montage.coords[c][1];
    w_alpha[c] = 0.4 + 0.6 * (1.0 - y) / 2.0;
    w_beta[c] = 0.4 + 0.6 * (1.0 + y) / 2.0;
    const double d = electrode_distance(montage, c, profile.focus);
    w_focal[c] = std::exp(-d * d / (config.focal_radius * config.focal_radius));
  }

  std::vector<Recording> out;
  Rng rng(derive_seed(config.seed, 0x7a, index));
  const auto bg_total = static_cast<std::size_t>(config.background_s);
  for (std::size_t r = 0; r < n_rec; ++r) {
    Recording rec;
    rec.patient_id = profile.patient_id;
    rec.recording_id = profile.patient_id + "_r" + padded(r, 2);
    rec.sample_rate = rate;

    std::vector<std::size_t> events;
    for (std::size_t k = r; k < profile.seizures.size(); k += n_rec) {
      events.push_back(k);
    }
    const std::size_t bg_seconds =
        bg_total / n_rec + (r + 1 == n_rec ? bg_total % n_rec : 0);

    // Split the background into len(events)+1 integer gaps.
    std::vector<double> cut(events.size() + 1);
    double cut_sum = 0.0;
    for (auto& x : cut) cut_sum += (x = 0.2 + rng.uniform());
    std::vector<std::size_t> gaps(cut.size());
    std::size_t used = 0;
    for (std::size_t g = 0; g < gaps.size(); ++g) {
      gaps[g] = static_cast<std::size_t>(std::floor(
          static_cast<double>(bg_seconds) * cut[g] / cut_sum));
      used += gaps[g];
    }
    gaps.back() += bg_seconds - used;

    std::size_t cursor = 0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      cursor += gaps[e];
      const double dur = profile.seizure_durations[events[e]];
      rec.annotations.push_back({static_cast<double>(cursor),
                                 static_cast<double>(cursor) + dur,
                                 profile.seizures[events[e]]});
      cursor += static_cast<std::size_t>(dur);
    }
    cursor += gaps.back();
    const std::size_t samples = cursor * static_cast<std::size_t>(rate);

    // Shared sources, then per-channel mixing with independent noise.
    std::vector<double> alpha(samples), beta(samples);
    const double phase_a = kTwoPi * rng.uniform();
    const double phase_b = kTwoPi * rng.uniform();
    for (std::size_t t = 0; t < samples; ++t) {
      const double s = static_cast<double>(t) / rate;
      alpha[t] = (1.0 + 0.3 * std::sin(kTwoPi * 0.1 * s)) *
                 std::sin(kTwoPi * profile.alpha_hz * s + phase_a);
      beta[t] = std::sin(kTwoPi * profile.beta_hz * s + phase_b);
    }
    std::vector<double> envelope(samples, 0.0);
    std::vector<double> focal(samples, 0.0), general(samples, 0.0);
    for (const auto& a : rec.annotations) {
      const auto t0 = static_cast<std::size_t>(a.start_s * rate);
      const auto t1 = static_cast<std::size_t>(a.end_s * rate);
      const bool is_focal = a.type == SeizureType::kFocal;
      const double ramp = 3.0;
      double phase = kTwoPi * rng.uniform();
      const double f0 = profile.seizure_hz *
                        (1.0 + config.seizure_jitter * (2.0 * rng.uniform() - 1.0));
      // Generalized bursts are spike-wave like: richer harmonic content.
      const int harmonics = is_focal ? 3 : 5;
      const double h_gain = is_focal ? profile.harmonic_gain
                                     : std::min(1.0, 1.5 * profile.harmonic_gain);
      for (std::size_t t = t0; t < t1; ++t) {
        const double u = (static_cast<double>(t - t0) / rate);
        const double frac = u / (a.end_s - a.start_s);
        const double env = std::min({1.0, u / ramp, (a.end_s - a.start_s - u) / ramp});
        const double f = f0 * (1.0 - config.chirp * frac);
        phase += kTwoPi * f / rate;
        double v = std::sin(phase);
        double g = h_gain;
        for (int h = 2; h <= harmonics; ++h, g *= h_gain) {
          v += g * std::sin(h * phase);
        }
        envelope[t] = std::max(0.0, env);
        (is_focal ? focal : general)[t] = envelope[t] * v;
      }
    }
    std::vector<double> gen_w(channels);
    for (auto& w : gen_w) w = 0.85 + 0.3 * rng.uniform();

    struct Artifact {
      std::size_t t0, t1;
      double hz, phase, gain;
      std::vector<double> weight;
    };
    std::vector<Artifact> artifacts;
    const auto n_artifacts = static_cast<std::size_t>(std::llround(
        config.artifacts_per_min * static_cast<double>(cursor) / 60.0));
    for (std::size_t k = 0; k < n_artifacts; ++k) {
      Artifact a;
      const double len = draw(rng, config.artifact_s);
      const double start = rng.uniform(0.0, static_cast<double>(cursor) - len);
      a.hz = draw(rng, config.artifact_hz);
      a.phase = kTwoPi * rng.uniform();
      a.gain = draw(rng, config.artifact_gain);
      const std::size_t center = rng.index(channels);
      a.weight.resize(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = electrode_distance(montage, c, center);
        a.weight[c] = std::exp(-d * d / (config.focal_radius * config.focal_radius));
      }
      const bool clash = std::any_of(
          rec.annotations.begin(), rec.annotations.end(), [&](const auto& s) {
            return start < s.end_s && start + len > s.start_s;
          });
      if (clash || start < 0.0) continue;
      a.t0 = static_cast<std::size_t>(start * rate);
      a.t1 = std::min(samples, static_cast<std::size_t>((start + len) * rate));
      artifacts.push_back(std::move(a));
    }

    const double phi = 0.95;
    const double innovation = std::sqrt(1.0 - phi * phi);
    const double amp = config.noise_uv;
    rec.signals.assign(channels, std::vector<double>(samples));
    for (std::size_t c = 0; c < channels; ++c) {
      double ar = rng.normal();
      auto& x = rec.signals[c];
      for (std::size_t t = 0; t < samples; ++t) {
        ar = phi * ar + innovation * rng.normal();
        const double suppress = 1.0 - 0.7 * envelope[t];
        x[t] = amp * (ar + suppress * (profile.alpha_gain * w_alpha[c] * alpha[t] +
                                       profile.beta_gain * w_beta[c] * beta[t]) +
                      profile.seizure_gain *
                          (w_focal[c] * focal[t] + gen_w[c] * general[t]));
      }
    }
    for (const auto& a : artifacts) {
      const double len = static_cast<double>(a.t1 - a.t0) / rate;
      for (std::size_t t = a.t0; t < a.t1; ++t) {
        const double u = static_cast<double>(t - a.t0) / rate;
        const double env = std::sin(std::numbers::pi * u / len);
        const double v = amp * a.gain * env *
                         std::sin(kTwoPi * a.hz * u + a.phase);
        for (std::size_t c = 0; c < channels; ++c) {
          rec.signals[c][t] += a.weight[c] * v;
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Recording> synth_generate(const SynthConfig& config,
                                      const Montage& montage) {
  config.validate();
  std::vector<Recording> out;
  for (std::size_t i = 0; i < config.patients; ++i) {
    auto recs = synth_patient(config, montage, i);
    out.insert(out.end(), std::make_move_iterator(recs.begin()),
               std::make_move_iterator(recs.end()));
  }
  return out;
}

SynthConfig train_cohort(std::size_t patients, std::uint64_t seed) {
  SynthConfig c;
  c.patients = patients;
  c.seed = derive_seed(seed, 0x71);
  c.id_prefix = "tr";
  c.min_seizures = 5;
  c.max_seizures = 6;
  return c;
}

SynthConfig test_cohort(std::size_t patients, std::uint64_t seed) {
  SynthConfig c;
  c.patients = patients;
  c.seed = derive_seed(seed, 0x7e);
  c.id_prefix = "te";
  c.min_seizures = 2;
  c.max_seizures = 3;
  return c;
}

}  // namespace metagnn
