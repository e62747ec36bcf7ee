#include "calmix/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "calmix/error.hpp"
#include "calmix/seeding.hpp"

namespace calmix {
namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

template <typename T, typename Parse>
T parse_number(const std::string& key, const std::string& value, Parse parse) {
  try {
    std::size_t used = 0;
    T result = parse(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return result;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse, "config key '" + key + "': cannot parse '" + value + "'");
  }
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw Error(ErrorCode::kParse, "config line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(std::string_view(stripped).substr(1, stripped.size() - 2));
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParse, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::kParse, "config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    config.values_[key] = trim(std::string_view(stripped).substr(eq + 1));
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {
        "beta", "mix_per_example", "epochs", "batch_size", "learning_rate", "momentum", "seed",
        "embedding_dim", "max_len", "min_freq", "lambda_distribution",
        "selftrain.k", "selftrain.rounds",
        "evaluate.bins",
        "preprocess.eval_groups",
        "data.pool",
        "ablation.rows", "ablation.replicates",
        "grid.candidates", "grid.replicates",
    };
    for (const char* split : {"train", "dev", "test"}) {
      for (const char* part : {"examples", "abstracts", "entities", "relations"}) {
        k.push_back(std::string("data.") + split + "_" + part);
      }
    }
    return k;
  }();
  return keys;
}

void Config::check_keys() const {
  const auto& known = known_keys();
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
  }
}

std::string Config::env_name(std::string_view key) {
  std::string name(kEnvPrefix);
  for (char c : key) {
    name += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

void Config::apply_env() {
  for (const auto& key : known_keys()) {
    if (const char* value = std::getenv(env_name(key).c_str())) values_[key] = trim(value);
  }
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  return parse_number<double>(key, *v, [](const std::string& s, std::size_t* used) { return std::stod(s, used); });
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  return parse_number<std::int64_t>(key, *v,
                                    [](const std::string& s, std::size_t* used) { return std::stoll(s, used); });
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (!v->empty() && v->front() == '-') {
    throw Error(ErrorCode::kParse, "config key '" + key + "': expected a non-negative integer");
  }
  return parse_number<std::uint64_t>(key, *v,
                                     [](const std::string& s, std::size_t* used) { return std::stoull(s, used); });
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(ErrorCode::kParse, "config key '" + key + "': expected a boolean");
}

std::string Config::to_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
  return out.str();
}

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) {
  return derive_seed(master, fnv1a(stage));
}

std::uint64_t master_seed(const Config& config) { return config.get_uint("seed", 42); }

training::TrainConfig train_config_from(const Config& config, std::string_view stage) {
  training::TrainConfig t;
  t.beta = config.get_double("beta", t.beta);
  t.mix_per_example = config.get_uint("mix_per_example", t.mix_per_example);
  t.epochs = config.get_uint("epochs", t.epochs);
  t.batch_size = config.get_uint("batch_size", t.batch_size);
  t.learning_rate = config.get_double("learning_rate", t.learning_rate);
  t.momentum = config.get_double("momentum", t.momentum);
  t.embedding_dim = config.get_uint("embedding_dim", t.embedding_dim);
  t.max_len = config.get_uint("max_len", t.max_len);
  t.min_freq = config.get_uint("min_freq", t.min_freq);
  t.lambda_distribution = config.get_string("lambda_distribution", t.lambda_distribution);
  t.seed = stage_seed(master_seed(config), stage);
  training::validate(t);
  return t;
}

selftrain::SelfTrainConfig selftrain_config_from(const Config& config) {
  selftrain::SelfTrainConfig s;
  s.k = config.get_double("selftrain.k", s.k);
  s.rounds = config.get_uint("selftrain.rounds", s.rounds);
  selftrain::validate(s);
  return s;
}

}  // namespace calmix
