#pragma once

// Keyed text configuration:
//
//   # comment
//   beta = 0.3
//   epochs = 12
//
// Any key can be overridden by an environment variable named CALMIX_ followed
// by the upper-cased key with '.' and '-' replaced by '_' (e.g. CALMIX_BETA).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calmix/selftrain.hpp"
#include "calmix/training.hpp"

namespace calmix {

inline constexpr std::string_view kEnvPrefix = "CALMIX_";

class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text);
  static Config load(const std::string& path);

  // Throws Error(kInvalidArgument) for keys not in known_keys().
  void check_keys() const;

  void apply_env();
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Same syntax parse() accepts, keys sorted.
  std::string to_text() const;

  static const std::vector<std::string>& known_keys();
  static std::string env_name(std::string_view key);

 private:
  std::map<std::string, std::string> values_;
};

// Train settings from config keys mirroring TrainConfig field names. The
// `seed` key is the master seed; the training seed is derived from it for the
// named stage.
training::TrainConfig train_config_from(const Config& config, std::string_view stage = "train");
selftrain::SelfTrainConfig selftrain_config_from(const Config& config);

// Deterministic per-stage seed from one master seed.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);
std::uint64_t master_seed(const Config& config);

}  // namespace calmix
