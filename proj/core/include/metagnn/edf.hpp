#pragma once

// Minimal EDF reader/writer: 256-byte main header, 256 bytes per signal,
// continuous data records of 16-bit little-endian two's-complement samples.
// Only the fields needed for calibration and channel matching are honoured.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metagnn/montage.hpp"
#include "metagnn/signal.hpp"

namespace metagnn {

struct EdfSignalHeader {
  std::string label;
  double physical_min = 0.0;
  double physical_max = 0.0;
  int digital_min = 0;
  int digital_max = 0;
  std::size_t samples_per_record = 0;
};

struct EdfFile {
  std::string patient;
  std::string recording;
  std::size_t record_count = 0;
  double record_duration_s = 0.0;
  std::vector<EdfSignalHeader> headers;
  /// Physical values per signal, records concatenated.
  std::vector<std::vector<double>> samples;
};

/// Parse and calibrate. Throws FormatError naming the byte offset of the
/// first inconsistent field.
EdfFile read_edf(std::span<const std::uint8_t> bytes);

/// Match EDF labels to montage channels and assemble a recording. A label
/// matches channel "FP1" when, after upper-casing and dropping a leading
/// "EEG ", it equals "FP1" or starts with "FP1-" / "FP1 ". Unmatched
/// montage channels raise FormatError listing them all.
Recording edf_to_recording(const EdfFile& edf, const Montage& montage,
                           const std::string& recording_id);

/// Patient identifier (first token of the patient field) from the header
/// alone.
std::string edf_patient_id(std::span<const std::uint8_t> bytes);

Recording parse_edf(std::span<const std::uint8_t> bytes,
                    const Montage& montage, const std::string& recording_id);

/// Encode with one-second records and per-channel physical ranges spanning
/// the data. Requires an integer sample rate and a whole number of seconds.
std::vector<std::uint8_t> write_edf(const Recording& recording,
                                    const Montage& montage);

/// Largest calibration step (physical units per digital count) over the
/// channels of an encoded file.
double quantization_step(const EdfFile& edf);

// Sidecar annotations: header "recording_id,start_s,end_s,label".

std::map<std::string, std::vector<SeizureInterval>> read_annotations_csv(
    std::istream& in);
void write_annotations_csv(std::ostream& out,
                           std::span<const Recording> recordings);

}  // namespace metagnn
