#include "metagnn/montage.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "metagnn/errors.hpp"

namespace metagnn {

std::optional<std::size_t> Montage::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == name) return i;
  }
  return std::nullopt;
}

void Montage::validate(bool require_standard_size) const {
  if (channels.size() != coords.size() || channels.empty()) {
    throw ConfigError("montage: channel and coordinate counts differ");
  }
  if (require_standard_size && channels.size() != kNumChannels) {
    throw ConfigError("montage must have " + std::to_string(kNumChannels) +
                      " channels, got " + std::to_string(channels.size()));
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (!seen.insert(channels[i]).second) {
      throw ConfigError("montage: duplicate channel " + channels[i]);
    }
    for (double c : coords[i]) {
      if (!std::isfinite(c)) {
        throw ConfigError("montage: non-finite coordinate for " + channels[i]);
      }
    }
  }
}

Montage Montage::permuted(const std::vector<std::size_t>& order) const {
  Montage out;
  for (auto i : order) {
    out.channels.push_back(channels.at(i));
    out.coords.push_back(coords.at(i));
  }
  return out;
}

Montage Montage::standard_1020() {
  return Montage{
      {"FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2",
       "F7", "F8", "T3", "T4", "T5", "T6", "FZ", "CZ", "PZ"},
      {{{-0.308829, 0.950477, -0.034899}},
       {{0.308829, 0.950477, -0.034899}},
       {{-0.545007, 0.673028, 0.500000}},
       {{0.545007, 0.673028, 0.500000}},
       {{-0.719340, 0.000000, 0.694658}},
       {{0.719340, 0.000000, 0.694658}},
       {{-0.545007, -0.673028, 0.500000}},
       {{0.545007, -0.673028, 0.500000}},
       {{-0.308829, -0.950477, -0.034899}},
       {{0.308829, -0.950477, -0.034899}},
       {{-0.808524, 0.587427, -0.034899}},
       {{0.808524, 0.587427, -0.034899}},
       {{-0.999391, 0.000000, -0.034899}},
       {{0.999391, 0.000000, -0.034899}},
       {{-0.808524, -0.587427, -0.034899}},
       {{0.808524, -0.587427, -0.034899}},
       {{0.000000, 0.719340, 0.694658}},
       {{0.000000, 0.000000, 1.000000}},
       {{0.000000, -0.719340, 0.694658}}}};
}

Montage parse_montage(std::istream& in) {
  Montage m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream row(line);
    std::string name;
    if (!(row >> name)) continue;
    std::array<double, 3> xyz{};
    if (!(row >> xyz[0] >> xyz[1] >> xyz[2])) {
      throw FormatError("montage line " + std::to_string(line_no) +
                        ": expected 'channel x y z'");
    }
    std::string extra;
    if (row >> extra) {
      throw FormatError("montage line " + std::to_string(line_no) +
                        ": trailing field '" + extra + "'");
    }
    m.channels.push_back(name);
    m.coords.push_back(xyz);
  }
  m.validate();
  return m;
}

Montage load_montage(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open montage file " + path.string());
  return parse_montage(in);
}

double electrode_distance(const Montage& montage, std::size_t i,
                          std::size_t j) {
  const auto& a = montage.coords.at(i);
  const auto& b = montage.coords.at(j);
  return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

}  // namespace metagnn
