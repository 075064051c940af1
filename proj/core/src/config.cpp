#include "dmicf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace dmicf {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string bad_value(std::string_view key, std::string_view value, std::string_view expect) {
  return "invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
         std::string(expect) + ")";
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(bad_value(key, v, "a non-negative integer"));
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(bad_value(key, v, "a non-negative integer"));
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(bad_value(key, v, "a number"));
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <class Parse>
auto enum_value(std::string_view key, std::string_view v, Parse parse, std::string_view expect) {
  try {
    return parse(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(bad_value(key, v, expect));
  }
}

struct Entry {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define SIZE_FIELD(name, field, help)                                              \
  Entry {                                                                          \
    {name, help}, [](const RunConfig& c) { return std::to_string(c.field); },      \
        [](RunConfig& c, std::string_view v) { c.field = to_size(name, v); }       \
  }
#define DOUBLE_FIELD(name, field, help)                                            \
  Entry {                                                                          \
    {name, help}, [](const RunConfig& c) { return fmt(c.field); },                 \
        [](RunConfig& c, std::string_view v) { c.field = to_double(name, v); }     \
  }
#define STRING_FIELD(name, field, help)                                            \
  Entry {                                                                          \
    {name, help}, [](const RunConfig& c) { return c.field; },                      \
        [](RunConfig& c, std::string_view v) { c.field = std::string(v); }         \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      SIZE_FIELD("model.embed_dim", model.embed_dim, "embedding width d"),
      SIZE_FIELD("model.prototypes", model.num_prototypes, "intent prototypes per side K"),
      SIZE_FIELD("model.intent_dim", model.intent_dim, "intent embedding width"),
      SIZE_FIELD("model.align_dim", model.align_dim, "alignment output width"),
      SIZE_FIELD("model.intent_hidden", model.intent_hidden, "intent MLP hidden width"),
      SIZE_FIELD("model.align_hidden1", model.align_hidden1, "alignment MLP first hidden width"),
      SIZE_FIELD("model.align_hidden2", model.align_hidden2, "alignment MLP second hidden width"),
      SIZE_FIELD("model.predict_hidden", model.predict_hidden, "prediction MLP hidden width"),
      Entry{{"model.alignment", "concat_mlp | gmf_mlp | cross_attention"},
            [](const RunConfig& c) { return std::string(to_string(c.model.alignment)); },
            [](RunConfig& c, std::string_view v) {
              c.model.alignment = enum_value("model.alignment", v, parse_alignment,
                                             "concat_mlp, gmf_mlp or cross_attention");
            }},
      Entry{{"model.fusion", "sequential | flat"},
            [](const RunConfig& c) { return std::string(to_string(c.model.fusion)); },
            [](RunConfig& c, std::string_view v) {
              c.model.fusion = enum_value("model.fusion", v, parse_fusion, "sequential or flat");
            }},
      Entry{{"model.perspectives", "both | user_only | item_only"},
            [](const RunConfig& c) { return std::string(to_string(c.model.perspectives)); },
            [](RunConfig& c, std::string_view v) {
              c.model.perspectives = enum_value("model.perspectives", v, parse_perspectives,
                                                "both, user_only or item_only");
            }},
      DOUBLE_FIELD("train.temperature", train.temperature, "softmax temperature"),
      SIZE_FIELD("train.negatives", train.negatives, "negatives per positive S"),
      DOUBLE_FIELD("train.learning_rate", train.learning_rate, "Adam step size"),
      SIZE_FIELD("train.batch_size", train.batch_size, "positive edges per batch"),
      SIZE_FIELD("train.eval_every", train.eval_every, "epochs between validation runs"),
      SIZE_FIELD("train.patience", train.patience, "validation rounds without improvement"),
      SIZE_FIELD("train.max_epochs", train.max_epochs, "epoch limit"),
      Entry{{"train.seed", "seed for initialisation, splits and sampling"},
            [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, std::string_view v) { c.train.seed = to_u64("train.seed", v); }},
      DOUBLE_FIELD("train.validation_fraction", train.validation_fraction,
                   "per-user share of train edges held out for early stopping"),
      SIZE_FIELD("train.early_stop_cutoff", train.early_stop_cutoff,
                 "Recall cutoff watched for early stopping"),
      Entry{{"eval.cutoffs", "comma-separated ranking cutoffs"},
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.cutoffs.size(); ++i) {
                if (i) s += ',';
                s += std::to_string(c.cutoffs[i]);
              }
              return s;
            },
            [](RunConfig& c, std::string_view v) { c.cutoffs = parse_cutoffs(v); }},
      STRING_FIELD("data.train", data_train, "training interactions file"),
      STRING_FIELD("data.test", data_test, "test interactions file"),
      STRING_FIELD("output.dir", output_dir, "run output directory"),
      SIZE_FIELD("runtime.threads", threads, "worker threads (1 = deterministic reference)"),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef STRING_FIELD

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::vector<std::size_t> parse_cutoffs(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const auto part = trim(text.substr(pos, comma - pos));
    const std::size_t n = to_size("eval.cutoffs", part);
    if (n == 0) throw ConfigError(bad_value("eval.cutoffs", text, "positive cutoffs"));
    out.push_back(n);
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  find_entry(key).set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (cutoffs.empty()) throw ConfigError("eval.cutoffs must name at least one cutoff");
  if (threads == 0) throw ConfigError("runtime.threads must be >= 1");
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(*this) + "\n";
  return out;
}

RunConfig parse_config(std::string_view text, const std::string& origin, RunConfig base) {
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    try {
      base.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), std::move(base));
}

}  // namespace dmicf
