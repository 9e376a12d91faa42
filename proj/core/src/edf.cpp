#include "metagnn/edf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "metagnn/binary_io.hpp"
#include "metagnn/errors.hpp"

namespace metagnn {

namespace {

constexpr std::size_t kMainHeaderBytes = 256;
constexpr std::size_t kSignalHeaderBytes = 256;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  std::string field(std::size_t width) {
    if (bytes_.size() - pos_ < width) {
      throw FormatError("EDF header truncated at byte offset " +
                        std::to_string(pos_));
    }
    std::string s(bytes_.begin() + static_cast<long>(pos_),
                  bytes_.begin() + static_cast<long>(pos_ + width));
    pos_ += width;
    return trim(s);
  }

  double number(std::size_t width, const char* name) {
    const std::size_t at = pos_;
    const std::string text = field(width);
    double value = 0.0;
    auto [end, ec] =
        std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
      throw FormatError("EDF field '" + std::string(name) + "' = '" + text +
                        "' is not a number at byte offset " +
                        std::to_string(at));
    }
    return value;
  }

  long integer(std::size_t width, const char* name) {
    const std::size_t at = pos_;
    const double v = number(width, name);
    if (v != std::floor(v)) {
      throw FormatError("EDF field '" + std::string(name) +
                        "' must be an integer at byte offset " +
                        std::to_string(at));
    }
    return static_cast<long>(v);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string pad(std::string s, std::size_t width) {
  if (s.size() > width) s.resize(width);
  s.append(width - s.size(), ' ');
  return s;
}

std::string format_number(double v, std::size_t width) {
  char buf[64];
  for (int precision = 12; precision >= 1; --precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strlen(buf) <= width) return pad(buf, width);
  }
  throw ConfigError("EDF: value " + std::to_string(v) + " does not fit");
}

}  // namespace

EdfFile read_edf(std::span<const std::uint8_t> bytes) {
  HeaderReader h(bytes);
  EdfFile edf;
  h.field(8);  // version
  edf.patient = h.field(80);
  edf.recording = h.field(80);
  h.field(8);  // start date
  h.field(8);  // start time
  const std::size_t header_offset = h.offset();
  const long header_bytes = h.integer(8, "header bytes");
  h.field(44);
  const std::size_t records_offset = h.offset();
  const long records = h.integer(8, "number of data records");
  edf.record_duration_s = h.number(8, "record duration");
  const std::size_t ns_offset = h.offset();
  const long ns = h.integer(4, "number of signals");
  if (ns <= 0) {
    throw FormatError("EDF: number of signals must be positive at byte offset " +
                      std::to_string(ns_offset));
  }
  if (header_bytes !=
      static_cast<long>(kMainHeaderBytes + kSignalHeaderBytes * ns)) {
    throw FormatError("EDF: header size " + std::to_string(header_bytes) +
                      " inconsistent with " + std::to_string(ns) +
                      " signals at byte offset " +
                      std::to_string(header_offset));
  }
  if (records <= 0) {
    throw FormatError("EDF: zero-length recording (" + std::to_string(records) +
                      " data records) at byte offset " +
                      std::to_string(records_offset));
  }
  if (!(edf.record_duration_s > 0.0)) {
    throw FormatError("EDF: record duration must be positive");
  }
  edf.record_count = static_cast<std::size_t>(records);
  const auto count = static_cast<std::size_t>(ns);
  edf.headers.resize(count);
  for (auto& s : edf.headers) s.label = h.field(16);
  for (std::size_t i = 0; i < count; ++i) h.field(80);  // transducer
  for (std::size_t i = 0; i < count; ++i) h.field(8);   // physical dimension
  for (auto& s : edf.headers) s.physical_min = h.number(8, "physical minimum");
  for (auto& s : edf.headers) s.physical_max = h.number(8, "physical maximum");
  for (auto& s : edf.headers) {
    s.digital_min = static_cast<int>(h.integer(8, "digital minimum"));
  }
  for (auto& s : edf.headers) {
    s.digital_max = static_cast<int>(h.integer(8, "digital maximum"));
  }
  for (std::size_t i = 0; i < count; ++i) h.field(80);  // prefiltering
  for (auto& s : edf.headers) {
    const std::size_t at = h.offset();
    const long n = h.integer(8, "samples per record");
    if (n <= 0) {
      throw FormatError("EDF: samples per record must be positive at byte "
                        "offset " + std::to_string(at));
    }
    s.samples_per_record = static_cast<std::size_t>(n);
  }
  for (std::size_t i = 0; i < count; ++i) h.field(32);  // reserved
  for (const auto& s : edf.headers) {
    if (s.digital_max <= s.digital_min || s.physical_max == s.physical_min) {
      throw FormatError("EDF: signal '" + s.label +
                        "' has a degenerate calibration range");
    }
  }

  binary::Reader data(bytes, "EDF data");
  data.take(static_cast<std::size_t>(header_bytes));
  edf.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    edf.samples[i].reserve(edf.record_count * edf.headers[i].samples_per_record);
  }
  for (std::size_t r = 0; r < edf.record_count; ++r) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto& s = edf.headers[i];
      const double gain = (s.physical_max - s.physical_min) /
                          static_cast<double>(s.digital_max - s.digital_min);
      auto raw = data.take(2 * s.samples_per_record);
      for (std::size_t k = 0; k < s.samples_per_record; ++k) {
        const auto digital = static_cast<std::int16_t>(
            static_cast<std::uint16_t>(raw[2 * k]) |
            static_cast<std::uint16_t>(raw[2 * k + 1] << 8));
        edf.samples[i].push_back(
            (static_cast<double>(digital) - s.digital_min) * gain +
            s.physical_min);
      }
    }
  }
  return edf;
}

Recording edf_to_recording(const EdfFile& edf, const Montage& montage,
                           const std::string& recording_id) {
  Recording rec;
  rec.recording_id = recording_id;
  {
    std::istringstream patient(edf.patient);
    patient >> rec.patient_id;
  }
  if (rec.patient_id.empty()) rec.patient_id = recording_id;

  std::vector<std::string> unmatched;
  double rate = 0.0;
  for (const auto& name : montage.channels) {
    const std::string want = upper(name);
    std::size_t found = edf.headers.size();
    for (std::size_t i = 0; i < edf.headers.size(); ++i) {
      std::string label = upper(edf.headers[i].label);
      if (label.rfind("EEG ", 0) == 0) label = trim(label.substr(4));
      if (label == want || label.rfind(want + "-", 0) == 0 ||
          label.rfind(want + " ", 0) == 0) {
        found = i;
        break;
      }
    }
    if (found == edf.headers.size()) {
      unmatched.push_back(name);
      continue;
    }
    const double channel_rate =
        static_cast<double>(edf.headers[found].samples_per_record) /
        edf.record_duration_s;
    if (rate == 0.0) {
      rate = channel_rate;
    } else if (channel_rate != rate) {
      throw FormatError("EDF: channel " + name + " sampled at " +
                        std::to_string(channel_rate) + " Hz, expected " +
                        std::to_string(rate));
    }
    rec.signals.push_back(edf.samples[found]);
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& n : unmatched) list += (list.empty() ? "" : ", ") + n;
    throw FormatError("EDF: montage channels not found: " + list);
  }
  rec.sample_rate = rate;
  return rec;
}

std::string edf_patient_id(std::span<const std::uint8_t> bytes) {
  HeaderReader h(bytes);
  h.field(8);
  std::istringstream patient(h.field(80));
  std::string id;
  patient >> id;
  return id;
}

Recording parse_edf(std::span<const std::uint8_t> bytes,
                    const Montage& montage, const std::string& recording_id) {
  return edf_to_recording(read_edf(bytes), montage, recording_id);
}

std::vector<std::uint8_t> write_edf(const Recording& recording,
                                    const Montage& montage) {
  recording.validate();
  if (recording.channel_count() != montage.size()) {
    throw ConfigError("write_edf: recording has " +
                      std::to_string(recording.channel_count()) +
                      " channels, montage " + std::to_string(montage.size()));
  }
  const double rate = recording.sample_rate;
  if (rate != std::floor(rate)) {
    throw ConfigError("write_edf: sample rate must be an integer");
  }
  const auto per_record = static_cast<std::size_t>(rate);
  const std::size_t total = recording.sample_count();
  if (total == 0 || total % per_record != 0) {
    throw ConfigError("write_edf: recording must span a whole number of "
                      "seconds");
  }
  const std::size_t records = total / per_record;
  const std::size_t ns = recording.channel_count();
  constexpr int kDigitalMin = -32768;
  constexpr int kDigitalMax = 32767;

  std::vector<double> pmin(ns), pmax(ns);
  for (std::size_t c = 0; c < ns; ++c) {
    const auto [lo, hi] = std::minmax_element(recording.signals[c].begin(),
                                              recording.signals[c].end());
    pmin[c] = std::floor(*lo) - 1.0;
    pmax[c] = std::ceil(*hi) + 1.0;
  }

  std::string header;
  header += pad("0", 8);
  header += pad(recording.patient_id, 80);
  header += pad("Startdate X X X " + recording.recording_id, 80);
  header += pad("01.01.00", 8);
  header += pad("00.00.00", 8);
  header += pad(std::to_string(kMainHeaderBytes + kSignalHeaderBytes * ns), 8);
  header += pad("", 44);
  header += pad(std::to_string(records), 8);
  header += pad("1", 8);
  header += pad(std::to_string(ns), 4);
  for (const auto& name : montage.channels) header += pad("EEG " + name + "-REF", 16);
  for (std::size_t c = 0; c < ns; ++c) header += pad("AgAgCl electrode", 80);
  for (std::size_t c = 0; c < ns; ++c) header += pad("uV", 8);
  for (std::size_t c = 0; c < ns; ++c) header += format_number(pmin[c], 8);
  for (std::size_t c = 0; c < ns; ++c) header += format_number(pmax[c], 8);
  for (std::size_t c = 0; c < ns; ++c) header += pad(std::to_string(kDigitalMin), 8);
  for (std::size_t c = 0; c < ns; ++c) header += pad(std::to_string(kDigitalMax), 8);
  for (std::size_t c = 0; c < ns; ++c) header += pad("", 80);
  for (std::size_t c = 0; c < ns; ++c) header += pad(std::to_string(per_record), 8);
  for (std::size_t c = 0; c < ns; ++c) header += pad("", 32);

  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * total * ns);
  const double span = static_cast<double>(kDigitalMax - kDigitalMin);
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t c = 0; c < ns; ++c) {
      const double scale = span / (pmax[c] - pmin[c]);
      for (std::size_t k = 0; k < per_record; ++k) {
        const double x = recording.signals[c][r * per_record + k];
        const long d = std::clamp(
            std::lround((x - pmin[c]) * scale + kDigitalMin),
            static_cast<long>(kDigitalMin), static_cast<long>(kDigitalMax));
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(d));
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return out;
}

double quantization_step(const EdfFile& edf) {
  double step = 0.0;
  for (const auto& s : edf.headers) {
    step = std::max(step, (s.physical_max - s.physical_min) /
                              static_cast<double>(s.digital_max - s.digital_min));
  }
  return step;
}

std::map<std::string, std::vector<SeizureInterval>> read_annotations_csv(
    std::istream& in) {
  std::map<std::string, std::vector<SeizureInterval>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(trim(cell));
    if (line_no == 1 && !cells.empty() && cells[0] == "recording_id") continue;
    if (cells.size() != 4) {
      throw FormatError("annotations line " + std::to_string(line_no) +
                        ": expected recording_id,start_s,end_s,label");
    }
    SeizureInterval s;
    try {
      s.start_s = std::stod(cells[1]);
      s.end_s = std::stod(cells[2]);
    } catch (const std::exception&) {
      throw FormatError("annotations line " + std::to_string(line_no) +
                        ": bad time value");
    }
    s.type = parse_seizure_type(cells[3]);
    out[cells[0]].push_back(s);
  }
  for (auto& [_, list] : out) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  }
  return out;
}

void write_annotations_csv(std::ostream& out,
                           std::span<const Recording> recordings) {
  out << "recording_id,start_s,end_s,label\n";
  const auto old = out.precision(17);
  for (const auto& rec : recordings) {
    for (const auto& a : rec.annotations) {
      out << rec.recording_id << ',' << a.start_s << ',' << a.end_s << ','
          << to_string(a.type) << '\n';
    }
  }
  out.precision(old);
}

}  // namespace metagnn
