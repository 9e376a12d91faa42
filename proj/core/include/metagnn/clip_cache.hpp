#pragma once

// Per-patient cache of processed clips.
//
// <dir>/<patient>.clips    "MGNNCLIP" | u32 version | u32 patient seizures
//                          | u64 clip count | u32 rows | u32 cols
//                          | per clip: u32 id length | recording id | f64 t0
//                          | u32 kind | i32 event | f64 values[rows*cols]
// <dir>/<patient>.json     manifest with the key the cache was built under.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>

#include "metagnn/dataset.hpp"

namespace metagnn {

/// 64-bit FNV-1a, chainable through `basis`.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

std::vector<std::uint8_t> encode_clips(const PatientData& patient);
PatientData decode_clips(std::span<const std::uint8_t> bytes,
                         const std::string& patient_id);

void save_patient_cache(const std::filesystem::path& dir,
                        const PatientData& patient, std::uint64_t key);

/// The cached patient when the manifest exists and carries `key`.
std::optional<PatientData> load_patient_cache(const std::filesystem::path& dir,
                                              const std::string& patient_id,
                                              std::uint64_t key);

}  // namespace metagnn
