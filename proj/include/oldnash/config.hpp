#ifndef OLDNASH_CONFIG_HPP
#define OLDNASH_CONFIG_HPP

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oldnash/grid.hpp"
#include "oldnash/kernel.hpp"
#include "oldnash/solvers.hpp"

namespace oldnash {

// Scenario configuration, parsed from sectioned key-value text:
//
//   [grid]    nx ny lx ly nt t_final
//   [kernel]  nu k lambda
//   [memory]  scheme = ode | trapezoid
//   [regions] leader = x0 x1 y0 y1 ; follower<i> ; core<i> ; support<i>
//   [costs]   alpha | alphas, target = zero|reachable|random,
//             leader_control = zero|random, mode = terminal|tracking,
//             mu<i>, obs<i> (tracking), tracking_data = zero|leader_only
//   [leader]  epsilon, eps_list, tol_accept
//   [run]     seed (mandatory here or via --seed), out_dir, verify_trials
//
// Unset keys fall back to the documented defaults (the desk-scale default
// scenario); the seed has no default.

enum class TargetSource { zero, reachable, random };
enum class LeaderControlSource { zero, random };
enum class CostMode { terminal, tracking };

struct ScenarioConfig {
  GridSpec grid;
  double nu = 1.0, k = 0.5, lambda = 1.0;
  MemoryScheme scheme = MemoryScheme::ode;

  Region leader_region{0.1, 0.4, 0.1, 0.4};
  std::vector<Region> followers;
  std::vector<Region> cores;
  std::vector<Region> supports;

  std::vector<double> alphas;  // filled to follower count with `alpha`
  double alpha = 1e-2;
  TargetSource target = TargetSource::reachable;
  LeaderControlSource leader_control = LeaderControlSource::random;
  CostMode mode = CostMode::terminal;
  std::vector<double> mus;           // tracking mode
  std::vector<Region> obs_regions;   // tracking mode
  std::string tracking_data = "leader_only";

  double epsilon = 0.2;
  std::vector<double> eps_list{0.5, 0.2, 0.1, 0.05};
  double tol_accept = 1e-2;

  bool seed_set = false;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int verify_trials = 10;
};

namespace detail {

struct KeyValue {
  std::string value;
  int line;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const KeyValue& kv, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw Error(ErrorCode::config_bad_value,
                "line " + std::to_string(kv.line) + ": bad number for '" + key + "'");
  }
}

inline long parse_int(const KeyValue& kv, const std::string& key) {
  try {
    size_t pos = 0;
    const long v = std::stol(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw Error(ErrorCode::config_bad_value,
                "line " + std::to_string(kv.line) + ": bad integer for '" + key + "'");
  }
}

inline std::vector<double> parse_list(const KeyValue& kv, const std::string& key) {
  std::vector<double> out;
  std::istringstream is(kv.value);
  std::string tok;
  while (is >> tok) {
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(kv.line) + ": bad list entry for '" + key + "'");
    }
  }
  if (out.empty())
    throw Error(ErrorCode::config_bad_value,
                "line " + std::to_string(kv.line) + ": empty list for '" + key + "'");
  return out;
}

inline Region parse_region(const KeyValue& kv, const std::string& key) {
  const std::vector<double> v = parse_list(kv, key);
  if (v.size() != 4)
    throw Error(ErrorCode::config_bad_value,
                "line " + std::to_string(kv.line) + ": region '" + key + "' needs x0 x1 y0 y1");
  return Region{v[0], v[1], v[2], v[3]};
}

}  // namespace detail

inline void validate_config(const ScenarioConfig& cfg);

inline ScenarioConfig parse_config(const std::string& text) {
  using detail::KeyValue;
  std::map<std::string, KeyValue> kv;
  {
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw Error(ErrorCode::config_bad_value,
                      "line " + std::to_string(lineno) + ": malformed section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::config_bad_value,
                    "line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = section + "." + detail::trim(line.substr(0, eq));
      kv[key] = KeyValue{detail::trim(line.substr(eq + 1)), lineno};
    }
  }

  ScenarioConfig cfg;
  auto take = [&](const std::string& key) -> std::optional<KeyValue> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    KeyValue v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("grid.nx")) cfg.grid.nx = static_cast<int>(detail::parse_int(*v, "grid.nx"));
  if (auto v = take("grid.ny")) cfg.grid.ny = static_cast<int>(detail::parse_int(*v, "grid.ny"));
  if (auto v = take("grid.lx")) cfg.grid.lx = detail::parse_double(*v, "grid.lx");
  if (auto v = take("grid.ly")) cfg.grid.ly = detail::parse_double(*v, "grid.ly");
  if (auto v = take("grid.nt")) cfg.grid.nt = static_cast<int>(detail::parse_int(*v, "grid.nt"));
  if (auto v = take("grid.t_final")) cfg.grid.t_final = detail::parse_double(*v, "grid.t_final");

  if (auto v = take("kernel.nu")) cfg.nu = detail::parse_double(*v, "kernel.nu");
  if (auto v = take("kernel.k")) cfg.k = detail::parse_double(*v, "kernel.k");
  if (auto v = take("kernel.lambda")) cfg.lambda = detail::parse_double(*v, "kernel.lambda");

  if (auto v = take("memory.scheme")) {
    if (v->value == "ode") cfg.scheme = MemoryScheme::ode;
    else if (v->value == "trapezoid") cfg.scheme = MemoryScheme::trapezoid;
    else
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(v->line) + ": memory.scheme must be ode|trapezoid");
  }

  if (auto v = take("regions.leader")) cfg.leader_region = detail::parse_region(*v, "regions.leader");
  for (int i = 1;; ++i) {
    auto v = take("regions.follower" + std::to_string(i));
    if (!v) break;
    cfg.followers.push_back(detail::parse_region(*v, "regions.follower" + std::to_string(i)));
  }
  if (cfg.followers.empty()) {
    cfg.followers.push_back(Region{0.55, 0.85, 0.55, 0.85});
    cfg.followers.push_back(Region{0.55, 0.85, 0.1, 0.4});
  }
  const int N = static_cast<int>(cfg.followers.size());
  for (int i = 1; i <= N; ++i) {
    auto c = take("regions.core" + std::to_string(i));
    auto s = take("regions.support" + std::to_string(i));
    cfg.cores.push_back(c ? detail::parse_region(*c, "core") : cfg.followers[i - 1]);
    if (s) {
      cfg.supports.push_back(detail::parse_region(*s, "support"));
    } else {
      // default support: core inflated by one default taper width, clipped.
      Region r = cfg.cores.back();
      const double pad = 0.1;
      cfg.supports.push_back(Region{std::max(0.0, r.x0 - pad), std::min(cfg.grid.lx, r.x1 + pad),
                                    std::max(0.0, r.y0 - pad), std::min(cfg.grid.ly, r.y1 + pad)});
    }
  }

  if (auto v = take("costs.alpha")) cfg.alpha = detail::parse_double(*v, "costs.alpha");
  if (auto v = take("costs.alphas")) cfg.alphas = detail::parse_list(*v, "costs.alphas");
  if (cfg.alphas.empty()) cfg.alphas.assign(N, cfg.alpha);
  if (static_cast<int>(cfg.alphas.size()) != N)
    throw Error(ErrorCode::config_bad_value, "costs.alphas length must match follower count");

  if (auto v = take("costs.target")) {
    if (v->value == "zero") cfg.target = TargetSource::zero;
    else if (v->value == "reachable") cfg.target = TargetSource::reachable;
    else if (v->value == "random") cfg.target = TargetSource::random;
    else
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(v->line) + ": costs.target must be zero|reachable|random");
  }
  if (auto v = take("costs.leader_control")) {
    if (v->value == "zero") cfg.leader_control = LeaderControlSource::zero;
    else if (v->value == "random") cfg.leader_control = LeaderControlSource::random;
    else
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(v->line) + ": costs.leader_control must be zero|random");
  }
  if (auto v = take("costs.mode")) {
    if (v->value == "terminal") cfg.mode = CostMode::terminal;
    else if (v->value == "tracking") cfg.mode = CostMode::tracking;
    else
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(v->line) + ": costs.mode must be terminal|tracking");
  }
  if (auto v = take("costs.mus")) cfg.mus = detail::parse_list(*v, "costs.mus");
  if (cfg.mus.empty()) cfg.mus.assign(N, 1.0);
  if (auto v = take("costs.tracking_data")) {
    if (v->value != "zero" && v->value != "leader_only")
      throw Error(ErrorCode::config_bad_value,
                  "line " + std::to_string(v->line) + ": costs.tracking_data must be zero|leader_only");
    cfg.tracking_data = v->value;
  }
  for (int i = 1; i <= N; ++i) {
    auto v = take("costs.obs" + std::to_string(i));
    cfg.obs_regions.push_back(v ? detail::parse_region(*v, "costs.obs") : cfg.followers[i - 1]);
  }

  if (auto v = take("leader.epsilon")) cfg.epsilon = detail::parse_double(*v, "leader.epsilon");
  if (auto v = take("leader.eps_list")) cfg.eps_list = detail::parse_list(*v, "leader.eps_list");
  if (auto v = take("leader.tol_accept")) cfg.tol_accept = detail::parse_double(*v, "leader.tol_accept");

  if (auto v = take("run.seed")) {
    cfg.seed = static_cast<std::uint64_t>(detail::parse_int(*v, "run.seed"));
    cfg.seed_set = true;
  }
  if (auto v = take("run.out_dir")) cfg.out_dir = v->value;
  if (auto v = take("run.verify_trials"))
    cfg.verify_trials = static_cast<int>(detail::parse_int(*v, "run.verify_trials"));

  if (!kv.empty()) {
    const auto& first = *kv.begin();
    throw Error(ErrorCode::config_unknown_key,
                "line " + std::to_string(first.second.line) + ": unknown key '" + first.first + "'");
  }

  validate_config(cfg);
  return cfg;
}

inline void validate_config(const ScenarioConfig& cfg) {
  const Grid g = build_grid(cfg.grid);              // grid invariants
  kernel_params(cfg.nu, cfg.k, cfg.lambda);         // dissipativity
  require_inside_domain(cfg.leader_region, g, "leader region");
  if (cfg.leader_region.empty())
    throw Error(ErrorCode::region_violation, "leader region is empty");
  for (size_t i = 0; i < cfg.followers.size(); ++i) {
    require_inside_domain(cfg.followers[i], g, "follower region");
    if (cfg.followers[i].empty())
      throw Error(ErrorCode::region_violation, "follower region is empty");
    for (size_t j = i + 1; j < cfg.followers.size(); ++j)
      if (cfg.followers[i].overlaps(cfg.followers[j]))
        throw Error(ErrorCode::region_violation, "follower domains must be disjoint");
    if (!cfg.supports[i].covers(cfg.cores[i]))
      throw Error(ErrorCode::region_violation, "weight core must be contained in its support");
    require_inside_domain(cfg.supports[i], g, "weight support");
  }
  for (double a : cfg.alphas)
    if (a < 0.0) throw Error(ErrorCode::config_bad_value, "alphas must be >= 0");
  for (double m : cfg.mus)
    if (!(m > 0.0)) throw Error(ErrorCode::config_bad_value, "mus must be > 0");
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorCode::config_bad_value, "epsilon must be > 0");
  for (size_t k = 1; k < cfg.eps_list.size(); ++k)
    if (!(cfg.eps_list[k] < cfg.eps_list[k - 1]) || !(cfg.eps_list[k] > 0.0))
      throw Error(ErrorCode::config_bad_value, "eps_list must be strictly decreasing > 0");
  if (cfg.verify_trials < 1)
    throw Error(ErrorCode::config_bad_value, "verify_trials must be >= 1");
}

/// Enforced after CLI flags are merged in: the seed is mandatory.
inline void require_seed(const ScenarioConfig& cfg) {
  if (!cfg.seed_set)
    throw Error(ErrorCode::config_missing_key,
                "missing mandatory key 'run.seed' (or pass --seed)");
}

}  // namespace oldnash

#endif
