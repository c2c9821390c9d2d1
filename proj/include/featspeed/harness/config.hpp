#pragma once
// Experiment configuration with a lossless JSON representation.

#include "featspeed/network.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace featspeed::harness {

inline constexpr std::string_view kCodeVersion = "featspeed 1.0.0";

inline constexpr std::array<std::string_view, 10> kExperimentIds = {
    "fig1a", "fig1b", "fig1c", "fig2a", "fig2b", "table1_audit", "table2_audit", "identity_suite", "invariance_suite",
    "zero_init"};

inline bool is_experiment_id(std::string_view id) {
  for (auto e : kExperimentIds)
    if (e == id) return true;
  return false;
}

/// Unset optionals fall back to per-experiment defaults at run time.
struct ExperimentConfig {
  std::string experiment;
  std::optional<std::size_t> d, m, k, L, batch;
  std::vector<std::size_t> grid_m, grid_L;
  std::vector<double> grid_beta;  // branch scales as multiples of 1/√L
  std::vector<double> grid_c;     // fig1c: β = c/√L
  std::size_t seeds = 5;
  std::optional<double> dt;
  Setting setting = Setting::Dense;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string out = "out";
  bool svg = false;

  void validate() const {
    if (!is_experiment_id(experiment)) throw std::invalid_argument("invalid experiment id: " + experiment);
    if (seeds == 0) throw std::invalid_argument("seeds must be >= 1");
    if (dt && !(*dt > 0.0)) throw std::invalid_argument("dt must be > 0");
    for (auto v : {d, m, k, batch})
      if (v && *v == 0) throw std::invalid_argument("dimensions must be >= 1");
    if (L && *L < 2) throw std::invalid_argument("L must be >= 2");
    for (auto v : grid_m)
      if (v == 0) throw std::invalid_argument("grid-m entries must be >= 1");
    for (auto v : grid_L)
      if (v < 2) throw std::invalid_argument("grid-L entries must be >= 2");
    for (auto v : grid_beta)
      if (!(v > 0.0)) throw std::invalid_argument("grid-beta entries must be > 0");
    for (auto v : grid_c)
      if (!(v > 0.0)) throw std::invalid_argument("grid-c entries must be > 0");
  }
};

namespace detail {

template <class T>
void put_opt(nlohmann::ordered_json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <class T>
void get_opt(const nlohmann::json& j, const char* key, std::optional<T>& v) {
  if (!j.contains(key) || j.at(key).is_null()) {
    v.reset();
    return;
  }
  v = j.at(key).get<T>();
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = c.experiment;
  detail::put_opt(j, "d", c.d);
  detail::put_opt(j, "m", c.m);
  detail::put_opt(j, "k", c.k);
  detail::put_opt(j, "L", c.L);
  detail::put_opt(j, "batch", c.batch);
  j["grid_m"] = c.grid_m;
  j["grid_L"] = c.grid_L;
  j["grid_beta"] = c.grid_beta;
  j["grid_c"] = c.grid_c;
  j["seeds"] = c.seeds;
  detail::put_opt(j, "dt", c.dt);
  j["setting"] = std::string(to_string(c.setting));
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out"] = c.out;
  j["svg"] = c.svg;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::array<std::string_view, 17> known = {"experiment", "d",    "m",     "k",      "L",   "batch",
                                                         "grid_m",     "grid_L", "grid_beta", "grid_c", "seeds", "dt",
                                                         "setting",    "seed", "workers", "out", "svg"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  ExperimentConfig c;
  detail::get_if(j, "experiment", c.experiment);
  detail::get_opt(j, "d", c.d);
  detail::get_opt(j, "m", c.m);
  detail::get_opt(j, "k", c.k);
  detail::get_opt(j, "L", c.L);
  detail::get_opt(j, "batch", c.batch);
  detail::get_if(j, "grid_m", c.grid_m);
  detail::get_if(j, "grid_L", c.grid_L);
  detail::get_if(j, "grid_beta", c.grid_beta);
  detail::get_if(j, "grid_c", c.grid_c);
  detail::get_if(j, "seeds", c.seeds);
  detail::get_opt(j, "dt", c.dt);
  if (j.contains("setting")) c.setting = parse_setting(j.at("setting").get<std::string>());
  detail::get_if(j, "seed", c.seed);
  detail::get_if(j, "workers", c.workers);
  detail::get_if(j, "out", c.out);
  detail::get_if(j, "svg", c.svg);
  return c;
}

inline std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2); }

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// FNV-1a over the canonical JSON, excluding fields that do not affect results.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("workers");
  j.erase("out");
  j.erase("svg");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace featspeed::harness
