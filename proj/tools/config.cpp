#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include "json.hpp"

#include "cli.hpp"

namespace dro::cli {

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed"}},
      {"problem",
       {"source", "synthetic", "m", "d", "data_seed", "path", "label", "group", "features", "positive_label",
        "standardize", "loss", "hidden", "ridge", "init", "init_scale"}},
      {"chi2", {"gamma"}},
      {"kl", {"gamma"}},
      {"wasserstein",
       {"alpha", "gamma", "constraints", "eps_slack", "temp", "groups", "proxy_copies", "objective_l", "prox_iters",
        "g_r", "rho"}},
      {"gcivr",
       {"eta", "t", "k", "schedule", "beta", "zeta", "tau", "s", "b", "regime", "output_rule", "parallel"}},
      {"dist",
       {"eta", "t", "k", "schedule", "beta", "zeta", "tau", "s", "b", "regime", "output_rule", "parallel", "p",
        "shard_sizes", "parallel_workers"}},
      {"baseline", {"kind", "iters", "eta", "batch"}},
      {"output",
       {"dir", "trajectory", "summary", "bench", "record_every", "record_psi", "grad_map_every",
        "grad_map_at_epoch_end"}},
      {"bench", {"checkpoints", "unit"}},
  };
  return keys;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// INI keys are case-insensitive; store them lowercased.
Config normalize(const Config& in) {
  Config out;
  for (const auto& [section, body] : in) {
    if (body.empty()) {
      throw ConfigError("[" + section + "]", "keys must live inside a section");
    }
    Config sec;
    for (const auto& [key, value] : body) sec.put(lower(key), value.data());
    out.add_child(lower(section), sec);
  }
  return out;
}

}  // namespace

Config parse_ini(const std::string& text) {
  std::istringstream in(text);
  Config raw;
  try {
    boost::property_tree::ini_parser::read_ini(in, raw);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  return normalize(raw);
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    const nlohmann::json& body = j.contains("config") ? j["config"] : j;
    if (!body.is_object()) throw ConfigError(path, "\"config\" must be an object");
    Config cfg;
    for (const auto& [section, keys] : body.items()) {
      if (!keys.is_object()) throw ConfigError("[" + section + "]", "expected an object of keys");
      Config sec;
      for (const auto& [key, value] : keys.items()) {
        sec.put(lower(key), value.is_string() ? value.get<std::string>() : value.dump());
      }
      cfg.add_child(lower(section), sec);
    }
    return cfg;
  }
  return parse_ini(text);
}

void apply_env_overrides(Config& cfg, const Env& env) {
  static const std::string prefix = "GCIVR_";
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    const auto sep = rest.find("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= rest.size()) continue;
    const std::string section = lower(rest.substr(0, sep));
    const std::string key = lower(rest.substr(sep + 2));
    auto child = cfg.get_child_optional(section);
    if (!child) child = cfg.add_child(section, Config{});
    child->put(key, value);
  }
}

void validate_config(const Config& cfg) {
  const auto& keys = allowed_keys();
  std::vector<std::string> reductions, solvers;
  for (const auto& [section, body] : cfg) {
    const auto it = keys.find(section);
    if (it == keys.end()) throw ConfigError("[" + section + "]", "unknown section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("[" + section + "] " + key, "unknown key");
      (void)value;
    }
    if (section == "chi2" || section == "kl" || section == "wasserstein") reductions.push_back(section);
    if (section == "gcivr" || section == "dist" || section == "baseline") solvers.push_back(section);
  }
  if (reductions.size() > 1) {
    throw ConfigError("[" + reductions[1] + "]", "duplicate reduction block (already have [" + reductions[0] + "])");
  }
  if (reductions.empty()) throw ConfigError("[chi2|kl|wasserstein]", "missing reduction block");
  if (solvers.size() > 1) {
    throw ConfigError("[" + solvers[1] + "]", "duplicate solver block (already have [" + solvers[0] + "])");
  }
  if (solvers.empty()) throw ConfigError("[gcivr|dist|baseline]", "missing solver block");
}

std::string config_to_json(const Config& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [section, body] : cfg) {
    nlohmann::ordered_json sec = nlohmann::ordered_json::object();
    for (const auto& [key, value] : body) sec[key] = value.data();
    j[section] = sec;
  }
  return j.dump();
}

}  // namespace dro::cli
