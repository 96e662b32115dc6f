#include "duat/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace duat {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

const std::map<std::string, std::string>& Config::known_keys() {
  static const std::map<std::string, std::string> keys = {
      {"seed", "1"},

      {"model.input_size", "64"},
      {"model.arrangement", "parallel"},
      {"model.use_sba", "true"},
      {"model.use_glsa", "true"},
      {"model.fuse_f2", "false"},
      {"encoder.depths", "2,2,2,2"},
      {"encoder.dims", "32,64,96,128"},
      {"encoder.heads", "1,2,4,8"},
      {"encoder.sr_ratios", "8,4,2,1"},
      {"encoder.mlp_ratio", "2"},

      {"loss.lambda_iou", "1.0"},
      {"loss.lambda_bce", "1.0"},
      {"loss.weight_mu", "5.0"},
      {"loss.weight_radius_base", "15"},

      {"optim.lr", "1e-4"},
      {"optim.weight_decay", "1e-4"},
      {"optim.beta1", "0.9"},
      {"optim.beta2", "0.999"},
      {"optim.eps", "1e-8"},

      {"train.steps", "2000"},
      {"train.batch", "4"},
      {"train.precision", "f32"},
      {"train.val_every", "1"},
      {"train.augment", "true"},
      {"train.manifest", ""},
      {"train.val_manifest", ""},

      {"synth.count", "100"},
      {"synth.size", "64"},
      {"synth.objects_min", "1"},
      {"synth.objects_max", "3"},
      {"synth.fraction_min", "0.01"},
      {"synth.fraction_max", "0.25"},
      {"synth.blur_sigma", "1.5"},
      {"synth.contrast", "0.40"},
      {"synth.noise", "0.08"},
      {"synth.train_ratio", "0.8"},
      {"synth.val_ratio", "0.1"},
      {"synth.test_ratio", "0.1"},

      {"eval.checkpoint", ""},
      {"eval.manifest", ""},

      {"predict.checkpoint", ""},
      {"predict.input", ""},

      {"ablate.variants", "gsa_only,lsa_only,serial_gsa_lsa,serial_lsa_gsa,wo_sba,wo_glsa,full"},
  };
  return keys;
}

Config::Config() : values_(known_keys()) {}

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config: line " + std::to_string(lineno) + " of " + path +
                      " is not 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw DataError("config: override '" + assignment + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (known_keys().find(key) == known_keys().end()) {
    throw DataError("config: unknown key '" + key + "'");
  }
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw DataError("config: unknown key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' is not an integer: '" + get(key) + "'");
  }
}

double Config::get_double(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' is not a number: '" + get(key) + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (const std::exception&) {
      throw DataError("config: key '" + key + "' has a non-integer element '" + item + "'");
    }
  }
  if (out.empty()) throw DataError("config: key '" + key + "' is an empty list");
  return out;
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

void Config::write(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("config: cannot write " + path);
  os << echo();
}

}  // namespace duat
