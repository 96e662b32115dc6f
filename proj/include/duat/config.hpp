#pragma once

#include <map>
#include <string>
#include <vector>

#include "duat/base.hpp"

namespace duat {

// Flat dotted-key configuration: "key = value" lines, '#' comments, keys
// validated against the known-key registry (unknown keys are rejected).
// Values stay strings until read through a typed getter.
class Config {
 public:
  Config();  // defaults for every known key

  static Config from_file(const std::string& path);

  // Applies one "key=value" override (the CLI --set form).
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;  // comma separated

  // Sorted "key = value" lines reconstructing this exact configuration.
  std::string echo() const;
  void write(const std::string& path) const;

  static const std::map<std::string, std::string>& known_keys();  // key -> default

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace duat
