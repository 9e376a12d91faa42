#include "metagnn/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "metagnn/errors.hpp"
#include "metagnn/random.hpp"

namespace metagnn {

std::vector<LabeledClip> process_recording(const Recording& recording,
                                           const PipelineConfig& config,
                                           std::size_t* excluded) {
  recording.validate();
  SegmentOptions seg;
  seg.window_s = config.window_s;
  seg.seizure_overlap = config.seizure_overlap;
  std::vector<LabeledClip> out;
  std::size_t dropped = 0;
  for (auto& raw : segment(recording, seg)) {
    Tensor spectrum =
        fft_features(raw.signals, recording.sample_rate, config.cutoff_hz);
    auto normalized = normalize_clip(spectrum, config.norm);
    if (!normalized) {
      ++dropped;
      continue;
    }
    LabeledClip clip;
    clip.features = std::move(*normalized);
    clip.kind = raw.kind;
    clip.label = static_cast<int>(raw.kind);
    clip.patient_id = recording.patient_id;
    clip.recording_id = recording.recording_id;
    clip.t0 = raw.t0;
    clip.event = raw.event;
    out.push_back(std::move(clip));
  }
  if (excluded) *excluded += dropped;
  return out;
}

std::vector<PatientData> build_patients(std::span<const Recording> recordings,
                                        const PipelineConfig& config) {
  std::map<std::string, std::vector<const Recording*>> by_patient;
  for (const auto& r : recordings) by_patient[r.patient_id].push_back(&r);
  std::vector<PatientData> out;
  for (auto& [id, list] : by_patient) {
    std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
      return a->recording_id < b->recording_id;
    });
    PatientData p;
    p.patient_id = id;
    for (const auto* r : list) {
      p.seizure_count += r->annotations.size();
      auto clips = process_recording(*r, config, &p.excluded_clips);
      p.clips.insert(p.clips.end(), std::make_move_iterator(clips.begin()),
                     std::make_move_iterator(clips.end()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PatientData> filter_patients(std::span<const PatientData> patients,
                                         std::size_t min_seizures) {
  std::vector<PatientData> out;
  for (const auto& p : patients) {
    if (p.seizure_count >= min_seizures) out.push_back(p);
  }
  return out;
}

PatientSplit split_patients(std::span<const PatientData> patients,
                            const SplitConfig& config) {
  PatientSplit split;
  const std::set<std::string> held(config.test_patients.begin(),
                                   config.test_patients.end());
  for (const auto& id : held) {
    const bool known = std::any_of(patients.begin(), patients.end(),
                                   [&](const auto& p) { return p.patient_id == id; });
    if (!known) throw ConfigError("test patient '" + id + "' not in dataset");
  }
  for (const auto& p : patients) {
    const bool is_test = held.empty()
                             ? p.seizure_count < config.train_min_seizures
                             : held.count(p.patient_id) > 0;
    if (is_test) {
      if (p.seizure_count >= config.test_min_seizures) split.test.push_back(p);
    } else if (p.seizure_count >= config.train_min_seizures) {
      split.train.push_back(p);
    }
  }
  return split;
}

TaskMode parse_task_mode(std::string_view text) {
  if (text == "detection") return TaskMode::kDetection;
  if (text == "classification") return TaskMode::kClassification;
  throw ConfigError("unknown task '" + std::string(text) +
                    "' (expected detection or classification)");
}

std::string_view to_string(TaskMode mode) {
  return mode == TaskMode::kDetection ? "detection" : "classification";
}

std::size_t class_count(TaskMode mode) {
  return mode == TaskMode::kDetection ? 2 : 3;
}

int class_of(ClipKind kind, TaskMode mode) {
  if (mode == TaskMode::kClassification) return static_cast<int>(kind);
  return kind == ClipKind::kBackground ? 0 : 1;
}

std::string_view class_name(int label, TaskMode mode) {
  if (mode == TaskMode::kDetection) return label == 0 ? "background" : "seizure";
  return to_string(static_cast<ClipKind>(label));
}

std::vector<LabeledClip> relabel(std::span<const LabeledClip> clips,
                                 TaskMode mode) {
  std::vector<LabeledClip> out(clips.begin(), clips.end());
  for (auto& c : out) c.label = class_of(c.kind, mode);
  return out;
}

std::size_t repeat_factor(std::size_t background, std::size_t seizure) {
  // floor(b/s + 1/2) in integers.
  const std::size_t n = (2 * background + seizure) / (2 * seizure);
  return std::max<std::size_t>(n, 1);
}

std::vector<LabeledClip> oversample(std::span<const LabeledClip> clips,
                                    std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& c : clips) {
    if (c.label < 0 || static_cast<std::size_t>(c.label) >= classes) {
      throw ConfigError("oversample: label " + std::to_string(c.label) +
                        " outside " + std::to_string(classes) + " classes");
    }
    ++counts[static_cast<std::size_t>(c.label)];
  }
  std::string missing;
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] == 0) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(k);
    }
  }
  if (!missing.empty()) {
    throw ConfigError("oversample: no clips of class " + missing);
  }
  std::vector<std::size_t> repeat(classes, 1);
  for (std::size_t k = 1; k < classes; ++k) {
    repeat[k] = repeat_factor(counts[0], counts[k]);
  }
  std::vector<LabeledClip> out;
  for (const auto& c : clips) {
    for (std::size_t r = 0; r < repeat[static_cast<std::size_t>(c.label)]; ++r) {
      out.push_back(c);
    }
  }
  return out;
}

PatientTask finetune_task(const PatientData& patient, TaskMode mode,
                          std::uint64_t seed,
                          const FinetuneProtocol& protocol) {
  const auto clips = relabel(patient.clips, mode);
  const std::size_t classes = class_count(mode);
  std::vector<bool> in_support(clips.size(), false);

  for (std::size_t k = 1; k < classes; ++k) {
    // Clips of one seizure are contiguous in canonical order.
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> events;
    std::vector<std::pair<std::string, int>> event_order;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (clips[i].label != static_cast<int>(k)) continue;
      auto key = std::make_pair(clips[i].recording_id, clips[i].event);
      if (!events.count(key)) event_order.push_back(key);
      events[key].push_back(i);
    }
    bool served = false;
    std::size_t largest = 0;
    for (const auto& key : event_order) {
      const auto& idx = events[key];
      largest = std::max(largest, idx.size());
      if (idx.size() < protocol.seizure_clips) continue;
      for (std::size_t j = 0; j < protocol.seizure_clips; ++j) {
        in_support[idx[j]] = true;
      }
      served = true;
      break;
    }
    if (!served) {
      throw ConfigError(
          "patient " + patient.patient_id + ": no " +
          std::string(class_name(static_cast<int>(k), mode)) +
          " seizure with " + std::to_string(protocol.seizure_clips) +
          " clips (" + std::to_string(event_order.size()) +
          " seizures, largest has " + std::to_string(largest) + ")");
    }
  }

  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].label == 0) background.push_back(i);
  }
  if (background.size() < protocol.background_clips) {
    throw ConfigError("patient " + patient.patient_id + ": " +
                      std::to_string(background.size()) +
                      " background clips, need " +
                      std::to_string(protocol.background_clips));
  }
  Rng rng(derive_seed(seed, 0xb6));
  rng.shuffle(background);
  background.resize(protocol.background_clips);
  for (auto i : background) in_support[i] = true;

  PatientTask task;
  task.patient_id = patient.patient_id;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    (in_support[i] ? task.support : task.query).push_back(clips[i]);
  }
  return task;
}

PatientTask sample_episode(const std::string& patient_id,
                           std::span<const LabeledClip> clips,
                           std::size_t classes, std::size_t n_support,
                           std::size_t n_query, std::uint64_t seed) {
  if (n_support == 0) throw ConfigError("episode: support size must be > 0");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto label = static_cast<std::size_t>(clips[i].label);
    if (label >= classes) {
      throw ConfigError("episode: label outside class range");
    }
    by_class[label].push_back(i);
  }
  auto share = [&](std::size_t n, std::size_t k) {
    return n / classes + (k < n % classes ? 1 : 0);
  };
  Rng rng(seed);
  PatientTask task;
  task.patient_id = patient_id;
  for (std::size_t k = 0; k < classes; ++k) {
    const std::size_t ns = share(n_support, k), nq = share(n_query, k);
    auto& pool = by_class[k];
    if (pool.size() < ns + nq) {
      throw ConfigError("patient " + patient_id + ": class " +
                        std::to_string(k) + " has " +
                        std::to_string(pool.size()) + " clips, episode needs " +
                        std::to_string(ns + nq));
    }
    rng.shuffle(pool);
    for (std::size_t j = 0; j < ns; ++j) task.support.push_back(clips[pool[j]]);
    for (std::size_t j = ns; j < ns + nq; ++j) {
      task.query.push_back(clips[pool[j]]);
    }
  }
  return task;
}

std::vector<Tensor> features_of(std::span<const LabeledClip> clips) {
  std::vector<Tensor> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.features);
  return out;
}

std::vector<int> labels_of(std::span<const LabeledClip> clips) {
  std::vector<int> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.label);
  return out;
}

}  // namespace metagnn
