#include "metagnn/clip_cache.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "metagnn/binary_io.hpp"
#include "metagnn/errors.hpp"

namespace metagnn {

namespace {

constexpr char kMagic[] = "MGNNCLIP";
constexpr std::uint32_t kVersion = 1;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                         text.size()),
               basis);
}

std::vector<std::uint8_t> encode_clips(const PatientData& patient) {
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, std::string_view(kMagic, 8));
  binary::put_u32(out, kVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(patient.seizure_count));
  binary::put_u64(out, patient.clips.size());
  const std::size_t rows = patient.clips.empty() ? 0 : patient.clips[0].features.rows();
  const std::size_t cols = patient.clips.empty() ? 0 : patient.clips[0].features.cols();
  binary::put_u32(out, static_cast<std::uint32_t>(rows));
  binary::put_u32(out, static_cast<std::uint32_t>(cols));
  for (const auto& c : patient.clips) {
    if (c.features.rows() != rows || c.features.cols() != cols) {
      throw ShapeError("clip cache: clips differ in shape");
    }
    binary::put_u32(out, static_cast<std::uint32_t>(c.recording_id.size()));
    binary::put_bytes(out, c.recording_id);
    binary::put_f64(out, c.t0);
    binary::put_u32(out, static_cast<std::uint32_t>(c.kind));
    binary::put_u32(out, static_cast<std::uint32_t>(c.event));
    for (double v : c.features.data()) binary::put_f64(out, v);
  }
  return out;
}

PatientData decode_clips(std::span<const std::uint8_t> bytes,
                         const std::string& patient_id) {
  binary::Reader in(bytes, "clip cache " + patient_id);
  auto magic = in.take(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    in.fail("bad magic");
  }
  if (in.u32() != kVersion) in.fail("unsupported version");
  PatientData p;
  p.patient_id = patient_id;
  p.seizure_count = in.u32();
  const std::uint64_t count = in.u64();
  const std::size_t rows = in.u32(), cols = in.u32();
  for (std::uint64_t i = 0; i < count; ++i) {
    LabeledClip c;
    c.patient_id = patient_id;
    c.recording_id = in.str(in.u32());
    c.t0 = in.f64();
    const std::uint32_t kind = in.u32();
    if (kind > 2) in.fail("bad clip kind");
    c.kind = static_cast<ClipKind>(kind);
    c.label = static_cast<int>(kind);
    c.event = static_cast<int>(static_cast<std::int32_t>(in.u32()));
    std::vector<double> values(rows * cols);
    for (auto& v : values) v = in.f64();
    c.features = Tensor::matrix(rows, cols, std::move(values));
    p.clips.push_back(std::move(c));
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return p;
}

void save_patient_cache(const std::filesystem::path& dir,
                        const PatientData& patient, std::uint64_t key) {
  std::filesystem::create_directories(dir);
  binary::write_file(dir / (patient.patient_id + ".clips"),
                     encode_clips(patient));
  std::size_t seizure_clips = 0;
  for (const auto& c : patient.clips) seizure_clips += c.kind != ClipKind::kBackground;
  const nlohmann::json manifest{
      {"patient_id", patient.patient_id},
      {"key", hex(key)},
      {"clips", patient.clips.size()},
      {"seizure_clips", seizure_clips},
      {"seizures", patient.seizure_count},
      {"excluded_clips", patient.excluded_clips}};
  std::ofstream out(dir / (patient.patient_id + ".json"));
  out << manifest.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error("cannot write cache manifest in " + dir.string());
  }
}

std::optional<PatientData> load_patient_cache(const std::filesystem::path& dir,
                                              const std::string& patient_id,
                                              std::uint64_t key) {
  std::ifstream in(dir / (patient_id + ".json"));
  if (!in) return std::nullopt;
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (manifest.value("key", std::string()) != hex(key)) return std::nullopt;
  const auto path = dir / (patient_id + ".clips");
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto p = decode_clips(binary::read_file(path), patient_id);
  p.excluded_clips = manifest.value("excluded_clips", std::size_t{0});
  return p;
}

}  // namespace metagnn
