#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace metagnn {

inline constexpr std::size_t kNumChannels = 19;

/// Electrode names and unit-sphere head coordinates (dimensionless).
struct Montage {
  std::vector<std::string> channels;
  std::vector<std::array<double, 3>> coords;

  std::size_t size() const { return channels.size(); }
  std::optional<std::size_t> index_of(const std::string& name) const;

  /// Throws ConfigError unless channel names are unique and coordinates are
  /// finite. With `require_standard_size`, also demands exactly 19 channels.
  void validate(bool require_standard_size = true) const;

  /// Copy with channels reordered so that new channel i is old channel
  /// order[i].
  Montage permuted(const std::vector<std::size_t>& order) const;

  /// Built-in 10-20 table, identical to data/montage_1020.txt.
  static Montage standard_1020();
};

/// Parse "channel x y z" rows; '#' starts a comment, blank lines ignored.
Montage parse_montage(std::istream& in);
Montage load_montage(const std::filesystem::path& path);

/// Euclidean distance between two electrodes.
double electrode_distance(const Montage& montage, std::size_t i,
                          std::size_t j);

}  // namespace metagnn
