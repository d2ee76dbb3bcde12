#include "fedtiny/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fedtiny/error.hpp"
#include "fedtiny/parallel.hpp"
#include "fedtiny/pruning.hpp"

namespace fedtiny {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kFedTiny: return "fedtiny";
    case Algorithm::kStaticRandom: return "static_random";
    case Algorithm::kStaticMagnitude: return "static_magnitude";
    case Algorithm::kDenseFedAvg: return "dense_fedavg";
    case Algorithm::kProgressiveOnly: return "progressive_only";
    case Algorithm::kAdaptiveBNOnly: return "adaptive_bn_only";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::kFedTiny, Algorithm::kStaticRandom, Algorithm::kStaticMagnitude,
                 Algorithm::kDenseFedAvg, Algorithm::kProgressiveOnly, Algorithm::kAdaptiveBNOnly})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kParse, "unknown algorithm '" + s +
                              "' (fedtiny|static_random|static_magnitude|dense_fedavg|"
                              "progressive_only|adaptive_bn_only)");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

namespace {

double to_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && p == s.data() + s.size() && std::isfinite(v), ErrorCode::kParse,
          "'" + s + "' is not a number");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && p == s.data() + s.size(), ErrorCode::kParse,
          "'" + s + "' is not a non-negative integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorCode::kParse, "'" + s + "' is not a boolean");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::size_t> to_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    require(b != std::string::npos, ErrorCode::kParse, "empty entry in list '" + s + "'");
    out.push_back(static_cast<std::size_t>(to_uint(item.substr(b, e - b + 1))));
  }
  return out;
}

std::string from_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FT_SIZE(sec, name, member)                                                          \
  Field {                                                                                   \
    sec, name, [](ExperimentConfig& c, const std::string& v) {                              \
      c.member = static_cast<decltype(c.member)>(to_uint(v));                               \
    },                                                                                      \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                  \
  }
#define FT_REAL(sec, name, member)                                                          \
  Field {                                                                                   \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); },  \
        [](const ExperimentConfig& c) { return format_double(c.member); }                   \
  }
#define FT_BOOL(sec, name, member)                                                          \
  Field {                                                                                   \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); },    \
        [](const ExperimentConfig& c) { return from_bool(c.member); }                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"data", "csv_path",
            [](ExperimentConfig& c, const std::string& v) { c.csv_path = v; },
            [](const ExperimentConfig& c) { return c.csv_path; }},
      FT_BOOL("data", "csv_header", csv_header),
      FT_SIZE("data", "classes", classes),
      FT_SIZE("data", "per_class", per_class),
      FT_SIZE("data", "dim", dim),
      FT_REAL("data", "spread", spread),
      FT_REAL("data", "test_fraction", test_fraction),
      FT_REAL("data", "server_fraction", server_fraction),

      FT_SIZE("federation", "clients", clients),
      FT_REAL("federation", "client_fraction", client_fraction),
      FT_REAL("federation", "alpha", alpha),
      FT_BOOL("federation", "weighted_aggregation", weighted_aggregation),

      Field{"model", "hidden",
            [](ExperimentConfig& c, const std::string& v) { c.hidden = to_size_list(v); },
            [](const ExperimentConfig& c) { return from_size_list(c.hidden); }},
      FT_BOOL("model", "batch_norm", batch_norm),
      FT_REAL("model", "bn_momentum", bn_momentum),
      FT_REAL("model", "bn_eps", bn_eps),
      FT_SIZE("model", "blocks", blocks),

      FT_SIZE("training", "rounds", rounds),
      FT_SIZE("training", "local_epochs", local_epochs),
      FT_SIZE("training", "batch_size", batch_size),
      FT_REAL("training", "lr", lr),
      Field{"training", "lr_decay",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "constant") c.lr_decay = LrDecay::kConstant;
              else if (v == "cosine") c.lr_decay = LrDecay::kCosine;
              else fail(ErrorCode::kParse, "'" + v + "' is not constant|cosine");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.lr_decay == LrDecay::kCosine ? "cosine" : "constant");
            }},
      FT_SIZE("training", "pretrain_epochs", pretrain_epochs),

      Field{"pruning", "algorithm",
            [](ExperimentConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); },
            [](const ExperimentConfig& c) { return to_string(c.algorithm); }},
      FT_REAL("pruning", "density", density),
      FT_SIZE("pruning", "pool_size", pool_size),
      FT_REAL("pruning", "noise", noise),
      FT_SIZE("pruning", "min_survivors", min_survivors),
      FT_REAL("pruning", "dev_ratio", dev_ratio),
      FT_BOOL("pruning", "dev_disjoint", dev_disjoint),
      Field{"pruning", "bn_sigma",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "std") c.bn_sigma = SigmaAggregation::kStdDev;
              else if (v == "var") c.bn_sigma = SigmaAggregation::kVariance;
              else fail(ErrorCode::kParse, "'" + v + "' is not std|var");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.bn_sigma == SigmaAggregation::kStdDev ? "std" : "var");
            }},
      FT_SIZE("pruning", "interval", schedule.interval),
      FT_SIZE("pruning", "stop_round", schedule.stop_round),
      FT_REAL("pruning", "beta", schedule.beta),
      Field{"pruning", "granularity",
            [](ExperimentConfig& c, const std::string& v) {
              c.schedule.granularity = parse_granularity(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.schedule.granularity); }},
      Field{"pruning", "order",
            [](ExperimentConfig& c, const std::string& v) { c.schedule.order = parse_block_order(v); },
            [](const ExperimentConfig& c) { return to_string(c.schedule.order); }},

      FT_SIZE("cost", "bit_width", bit_width),

      FT_SIZE("run", "seed", seed),
      FT_SIZE("run", "workers", workers),
  };
  return table;
}

#undef FT_SIZE
#undef FT_REAL
#undef FT_BOOL

const Field& find_field(const std::string& key) {
  const auto dot = key.find('.');
  const Field* hit = nullptr;
  for (const auto& f : fields()) {
    const bool match = dot == std::string::npos
                           ? key == f.key
                           : key.substr(0, dot) == f.section && key.substr(dot + 1) == f.key;
    if (match) {
      hit = &f;
      break;
    }
  }
  require(hit != nullptr, ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  return *hit;
}

void set_field(ExperimentConfig& cfg, const Field& f, const std::string& value) {
  try {
    f.set(cfg, value);
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string(f.section) + "." + f.key + ": " + e.what());
  }
}

}  // namespace

std::size_t ExperimentConfig::resolved_pool_size() const {
  return pool_size == 0 ? auto_pool_size(density) : pool_size;
}

std::size_t ExperimentConfig::resolved_workers() const {
  return workers == 0 ? default_workers() : workers;
}

void ExperimentConfig::validate() const {
  const auto check = [](bool ok, const char* key, const char* what) {
    require(ok, ErrorCode::kInvalidArgument, std::string(key) + ": " + what);
  };
  check(classes >= 2, "data.classes", "must be at least 2");
  check(per_class >= 1, "data.per_class", "must be at least 1");
  check(dim >= 1, "data.dim", "must be at least 1");
  check(spread >= 0.0, "data.spread", "must be non-negative");
  check(test_fraction > 0.0 && test_fraction < 1.0, "data.test_fraction", "must lie in (0, 1)");
  check(server_fraction >= 0.0 && server_fraction + test_fraction < 1.0, "data.server_fraction",
        "must be non-negative and leave data for clients");
  check(clients >= 1, "federation.clients", "must be at least 1");
  check(client_fraction > 0.0 && client_fraction <= 1.0, "federation.client_fraction",
        "must lie in (0, 1]");
  check(alpha > 0.0, "federation.alpha", "must be positive");
  for (auto h : hidden) check(h >= 1, "model.hidden", "widths must be positive");
  check(hidden.size() >= 1, "model.hidden", "needs at least one hidden layer");
  check(bn_momentum > 0.0 && bn_momentum < 1.0, "model.bn_momentum", "must lie in (0, 1)");
  check(bn_eps > 0.0, "model.bn_eps", "must be positive");
  check(blocks >= 1, "model.blocks", "must be at least 1");
  check(rounds >= 1, "training.rounds", "must be at least 1");
  check(local_epochs >= 1, "training.local_epochs", "must be at least 1");
  check(batch_size >= 2, "training.batch_size", "must be at least 2");
  check(lr > 0.0, "training.lr", "must be positive");
  check(density > 0.0 && density <= 1.0, "pruning.density", "must lie in (0, 1]");
  check(noise >= 0.0, "pruning.noise", "must be non-negative");
  check(dev_ratio > 0.0 && dev_ratio <= 1.0, "pruning.dev_ratio", "must lie in (0, 1]");
  check(schedule.interval >= 1, "pruning.interval", "must be at least 1");
  check(schedule.stop_round >= schedule.interval, "pruning.stop_round",
        "must be at least pruning.interval");
  check(schedule.beta > 0.0 && schedule.beta < 1.0, "pruning.beta", "must lie in (0, 1)");
  check(bit_width >= 1 && bit_width <= 64, "cost.bit_width", "must lie in [1, 64]");
}

namespace {

bool is_section(const std::string& name) {
  for (const auto& f : fields())
    if (name == f.section) return true;
  return false;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  // Boost's INI reader only knows ';' comments.
  std::string cleaned;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto b = line.find_first_not_of(" \t");
      if (b != std::string::npos && line[b] == '#') continue;
      cleaned += line + "\n";
    }
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(cleaned);
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      // An empty [section] looks like a bare key with no value.
      if (node.data().empty() && is_section(name)) continue;
      set_field(cfg, find_field(name), node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      const auto full = name + "." + key;
      set_field(cfg, find_field(full), leaf.data());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  set_field(cfg, find_field(key), value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  return find_field(key).get(cfg);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kInvalidArgument,
          "override '" + assignment + "' must look like key=value");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace fedtiny
