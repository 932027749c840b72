#include "snmt/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <stdexcept>

namespace snmt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw std::invalid_argument("config key '" + key + "': '" + value + "' is not " + expected);
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

std::string from_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

template <class T>
Field size_field(T ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(to_uint(k, v));
          }};
}

Field double_field(double ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return from_double(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = to_double(k, v); }};
}

Field string_field(std::string ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return c.*member; },
          [member](ExperimentConfig& c, const std::string&, const std::string& v) { c.*member = v; }};
}

// Nested members: access through a projection.
template <class Get, class T = std::remove_cvref_t<decltype(std::declval<Get>()(std::declval<ExperimentConfig&>()))>>
Field nested(Get project) {
  Field f;
  f.get = [project](const ExperimentConfig& c) {
    auto& value = project(const_cast<ExperimentConfig&>(c));
    if constexpr (std::is_same_v<T, std::string>) return value;
    else if constexpr (std::is_floating_point_v<T>) return from_double(value);
    else return std::to_string(value);
  };
  f.set = [project](ExperimentConfig& c, const std::string& k, const std::string& v) {
    auto& value = project(c);
    if constexpr (std::is_same_v<T, std::string>) value = v;
    else if constexpr (std::is_floating_point_v<T>) value = to_double(k, v);
    else value = static_cast<T>(to_uint(k, v));
  };
  return f;
}

void add_split(std::map<std::string, Field>& fields, const std::string& name, SplitPaths ExperimentConfig::*split) {
  fields["data." + name + ".source"] = nested([split](ExperimentConfig& c) -> std::string& { return (c.*split).source; });
  fields["data." + name + ".target"] = nested([split](ExperimentConfig& c) -> std::string& { return (c.*split).target; });
  fields["data." + name + ".tags"] = nested([split](ExperimentConfig& c) -> std::string& { return (c.*split).tags; });
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    add_split(f, "train", &ExperimentConfig::train);
    add_split(f, "dev", &ExperimentConfig::dev);
    add_split(f, "test", &ExperimentConfig::test);
    f["data.work_dir"] = string_field(&ExperimentConfig::work_dir);
    f["data.on_misaligned"] = {
        [](const ExperimentConfig& c) { return std::string(c.on_misaligned == MisalignedPolicy::drop ? "drop" : "error"); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "drop") c.on_misaligned = MisalignedPolicy::drop;
          else if (v == "error") c.on_misaligned = MisalignedPolicy::error;
          else bad_value(k, v, "'drop' or 'error'");
        }};

    f["bpe.merges"] = size_field(&ExperimentConfig::bpe_merges);
    f["bpe.min_frequency"] = size_field(&ExperimentConfig::bpe_min_frequency);
    f["bpe.table"] = string_field(&ExperimentConfig::bpe_table);
    f["vocab.source"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.vocab.source; });
    f["vocab.target"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.vocab.target; });
    f["vocab.tags"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.vocab.tags; });
    f["vocab.features"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.vocab.features; });
    f["filter.max_source_length"] = size_field(&ExperimentConfig::max_source_length);
    f["filter.max_target_length"] = size_field(&ExperimentConfig::max_target_length);
    f["filter.max_interleaved_length"] = size_field(&ExperimentConfig::max_interleaved_length);

    f["strategy.mode"] = {[](const ExperimentConfig& c) { return to_string(c.strategy.mode); },
                          [](ExperimentConfig& c, const std::string&, const std::string& v) {
                            c.strategy.mode = parse_strategy(v);
                          }};
    f["strategy.source_features"] = {
        [](const ExperimentConfig& c) { return join_list(c.strategy.source_features); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.strategy.source_features = split_list(v); }};
    f["strategy.tag_loss_weight"] = nested([](ExperimentConfig& c) -> double& { return c.strategy.tag_loss_weight; });

    f["model.source_embedding"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.sizes.source_embedding; });
    f["model.target_embedding"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.sizes.target_embedding; });
    f["model.hidden"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.sizes.hidden; });
    f["model.attention"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.sizes.attention; });
    f["model.output"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.sizes.output; });
    f["model.init_range"] = double_field(&ExperimentConfig::init_range);

    f["train.batch_size"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.batch_size; });
    f["train.max_epochs"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.max_epochs; });
    f["train.valid_interval"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.valid_interval; });
    f["train.patience"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.patience; });
    f["train.best_k"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.best_k; });
    f["train.max_batches"] = nested([](ExperimentConfig& c) -> std::size_t& { return c.schedule.max_batches; });
    f["train.clip_norm"] = nested([](ExperimentConfig& c) -> double& { return c.schedule.clip_norm; });
    f["train.learning_rate"] = nested([](ExperimentConfig& c) -> double& { return c.adam.learning_rate; });
    f["train.beta1"] = nested([](ExperimentConfig& c) -> double& { return c.adam.beta1; });
    f["train.beta2"] = nested([](ExperimentConfig& c) -> double& { return c.adam.beta2; });
    f["train.epsilon"] = nested([](ExperimentConfig& c) -> double& { return c.adam.epsilon; });

    f["decode.beam"] = size_field(&ExperimentConfig::beam);
    f["decode.max_len"] = size_field(&ExperimentConfig::decode_max_len);
    f["decode.interleaved_max_len"] = size_field(&ExperimentConfig::decode_interleaved_max_len);
    f["decode.ensemble"] = size_field(&ExperimentConfig::ensemble_size);

    f["eval.resamples"] = size_field(&ExperimentConfig::resamples);
    f["eval.construct_rules"] = string_field(&ExperimentConfig::construct_rules);

    f["seed"] = size_field(&ExperimentConfig::seed);
    return f;
  }();
  return table;
}

SplitPaths* split_named(ExperimentConfig& c, const std::string& name) {
  if (name == "train") return &c.train;
  if (name == "dev") return &c.dev;
  if (name == "test") return &c.test;
  return nullptr;
}

}  // namespace

LengthLimits ExperimentConfig::length_limits() const {
  LengthLimits l;
  l.source = max_source_length;
  l.target = strategy.mode == Strategy::interleaved ? max_interleaved_length : max_target_length;
  return l;
}

std::size_t ExperimentConfig::max_decode_length() const {
  return strategy.mode == Strategy::interleaved ? decode_interleaved_max_len : decode_max_len;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = fields();
  if (auto it = table.find(key); it != table.end()) {
    it->second.set(config, key, value);
    return;
  }
  // strategy.feature_width.<name>
  const std::string width_prefix = "strategy.feature_width.";
  if (key.rfind(width_prefix, 0) == 0 && key.size() > width_prefix.size()) {
    config.strategy.feature_widths[key.substr(width_prefix.size())] = to_uint(key, value);
    return;
  }
  // data.<split>.feature.<name>
  if (key.rfind("data.", 0) == 0) {
    const auto dot = key.find('.', 5);
    if (dot != std::string::npos && key.compare(dot, 9, ".feature.") == 0 && key.size() > dot + 9) {
      if (SplitPaths* split = split_named(config, key.substr(5, dot - 5))) {
        split->features[key.substr(dot + 9)] = value;
        return;
      }
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::vector<std::string>& lines) {
  ExperimentConfig config;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(i + 1) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(i + 1) + ": empty key");
    set_config_value(config, key, trim(line.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_lines(path)); }

std::vector<std::string> serialize_config(const ExperimentConfig& config) {
  std::map<std::string, std::string> kv;
  for (const auto& [key, field] : fields()) kv[key] = field.get(config);
  for (const auto& [name, width] : config.strategy.feature_widths)
    kv["strategy.feature_width." + name] = std::to_string(width);
  for (const auto& [split, paths] : {std::pair{"train", &config.train}, {"dev", &config.dev}, {"test", &config.test}})
    for (const auto& [name, path] : paths->features) kv[std::string("data.") + split + ".feature." + name] = path;
  std::vector<std::string> out;
  for (const auto& [k, v] : kv) out.push_back(k + " = " + v);
  return out;
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides) {
  for (const auto& [k, v] : overrides) set_config_value(config, k, v);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, field] : fields()) out.push_back(key);
  return out;
}

std::uint64_t sub_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer over the combination
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace snmt
