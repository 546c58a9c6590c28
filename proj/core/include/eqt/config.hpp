#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace eqt {

/// Flat key-value experiment configuration: one `key = value` per line,
/// '#' comments, whitespace-insensitive. Keys are documented in the README;
/// unknown keys are kept (round-trip safe) but validated by the consumer.
class Config {
public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& file);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const; ///< throws if missing
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);

  /// Deterministic (sorted-key) serialization.
  std::string to_string() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

private:
  std::map<std::string, std::string> kv_;
};

} // namespace eqt
