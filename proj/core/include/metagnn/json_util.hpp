#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "metagnn/errors.hpp"

namespace metagnn {

/// Throws ConfigError for the first key of `j` not listed in `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<std::string_view> allowed,
                                std::string_view what) {
  if (!j.is_object()) {
    throw ConfigError(std::string(what) + " must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown " + std::string(what) + " key '" + key + "'");
    }
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace metagnn
