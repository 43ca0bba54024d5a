#pragma once

// Experiment configuration: a flat `key = value` text file, '#' starts a
// comment. Later assignments win, so CLI overrides are appended after the
// file. `setting` and `subject` are applied first; every other key refines
// the setting or the subject profile they selected.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/controllers.hpp"
#include "coadapt/environment.hpp"
#include "coadapt/error.hpp"
#include "coadapt/mlp.hpp"
#include "coadapt/ppo.hpp"

namespace coadapt {

inline HumanModelParams subject_profile(const std::string& name) {
  HumanModelParams p;  // subject_1: moderate gain and noise
  if (name == "subject_1") return p;
  if (name == "subject_13") {  // strong biofeedback
    p.unit_torque *= 2.0;
    return p;
  }
  if (name == "ideal") {  // noise-free, instantaneous reaction
    p.reaction_delay_steps = 0;
    p.noise_std = 0.0;
    return p;
  }
  throw InvalidArgument("unknown subject profile '" + name + "' (known: subject_1, subject_13, ideal)");
}

struct ExperimentConfig {
  int setting_id = 2;
  SettingConfig setting = load_setting(2);
  std::string subject = "subject_1";
  EnvConfig env;
  PPOHyper hyper;
  std::optional<std::uint64_t> seed;
  int updates = 300;
  int eval_episodes = 5;
  std::uint64_t eval_seed = 1000;
  bool machine_only_reward = false;
  std::string output_dir = "runs";

  void validate() const {
    require(seed.has_value(), "a seed is mandatory");
    env.validate();
    hyper.validate();
    require(updates >= 0, "updates must be non-negative");
    require(eval_episodes > 0, "eval_episodes must be positive");
    for (const auto& g : setting.human_pd) require(g.kp >= 0.0 && g.kd >= 0.0, "PD gains must be non-negative");
    for (const auto& g : setting.machine_pid)
      require(g.kp >= 0.0 && g.ki >= 0.0 && g.kd >= 0.0, "PID gains must be non-negative");
    const auto& w = setting.weights;
    require(w.mu >= 0.0 && w.kappa >= 0.0 && w.rho >= 0.0, "reward weights must be non-negative");
  }
};

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::pair<std::string, std::string> split_assignment(std::string_view line) {
  const auto eq = line.find('=');
  require(eq != std::string_view::npos, "expected key = value, got '" + std::string(line) + "'");
  std::string key = trim(line.substr(0, eq));
  require(!key.empty(), "empty key in '" + std::string(line) + "'");
  return {std::move(key), trim(line.substr(eq + 1))};
}

inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  while (std::getline(is, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    auto [k, v] = split_assignment(line);
    kv[k] = v;
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open config file: " + path);
  return parse_key_values(is);
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const InvalidArgument&) {
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw InvalidArgument("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(to_double(key, trim(item)));
  require(out.size() == n, "config key '" + key + "': expected " + std::to_string(n) + " comma-separated values");
  return out;
}

inline std::string join(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) s += (s.empty() ? "" : ",") + format_double(v);
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto dbl = [&t](const std::string& key, std::function<double&(ExperimentConfig&)> field) {
      t[key] = [field](ExperimentConfig& c, const std::string& k, const std::string& v) { field(c) = to_double(k, v); };
    };
    dbl("plant.inertia", [](ExperimentConfig& c) -> double& { return c.env.plant.inertia; });
    dbl("plant.damping", [](ExperimentConfig& c) -> double& { return c.env.plant.damping; });
    dbl("plant.torque_limit", [](ExperimentConfig& c) -> double& { return c.env.plant.torque_limit; });
    dbl("plant.dt", [](ExperimentConfig& c) -> double& { return c.env.plant.dt; });
    dbl("plant.angle_min", [](ExperimentConfig& c) -> double& { return c.env.plant.angle_min; });
    dbl("plant.angle_max", [](ExperimentConfig& c) -> double& { return c.env.plant.angle_max; });
    dbl("plant.omega_max", [](ExperimentConfig& c) -> double& { return c.env.plant.omega_max; });
    dbl("reference.amplitude", [](ExperimentConfig& c) -> double& { return c.env.reference.amplitude; });
    dbl("reference.period", [](ExperimentConfig& c) -> double& { return c.env.reference.period; });
    dbl("reference.phase", [](ExperimentConfig& c) -> double& { return c.env.reference.phase; });
    dbl("reference.offset", [](ExperimentConfig& c) -> double& { return c.env.reference.offset; });
    dbl("human.unit_torque", [](ExperimentConfig& c) -> double& { return c.env.human.unit_torque; });
    dbl("human.lag_time_constant", [](ExperimentConfig& c) -> double& { return c.env.human.lag_time_constant; });
    dbl("human.noise_std", [](ExperimentConfig& c) -> double& { return c.env.human.noise_std; });
    dbl("env.reward_position_scale", [](ExperimentConfig& c) -> double& { return c.env.reward_position_scale; });
    dbl("ppo.gamma", [](ExperimentConfig& c) -> double& { return c.hyper.gamma; });
    dbl("ppo.clip", [](ExperimentConfig& c) -> double& { return c.hyper.clip; });
    dbl("ppo.entropy_weight", [](ExperimentConfig& c) -> double& { return c.hyper.entropy_weight; });
    dbl("ppo.learning_rate", [](ExperimentConfig& c) -> double& { return c.hyper.learning_rate; });
    dbl("ppo.momentum", [](ExperimentConfig& c) -> double& { return c.hyper.momentum; });
    dbl("ppo.reward_scale", [](ExperimentConfig& c) -> double& { return c.hyper.reward_scale; });
    dbl("weights.mu", [](ExperimentConfig& c) -> double& { return c.setting.weights.mu; });
    dbl("weights.kappa", [](ExperimentConfig& c) -> double& { return c.setting.weights.kappa; });
    dbl("weights.rho", [](ExperimentConfig& c) -> double& { return c.setting.weights.rho; });
    dbl("weights.sigma", [](ExperimentConfig& c) -> double& { return c.setting.weights.sigma; });
    dbl("weights.beta", [](ExperimentConfig& c) -> double& { return c.setting.weights.beta; });

    t["seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(to_int(k, v));
    };
    t["updates"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.updates = static_cast<int>(to_int(k, v));
    };
    t["eval_episodes"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.eval_episodes = static_cast<int>(to_int(k, v));
    };
    t["eval_seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.eval_seed = static_cast<std::uint64_t>(to_int(k, v));
    };
    t["output_dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; };
    t["train.machine_only_reward"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.machine_only_reward = to_bool(k, v);
    };
    t["human.reaction_delay_steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.env.human.reaction_delay_steps = static_cast<int>(to_int(k, v));
    };
    t["human.rng_seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.env.human.rng_seed = static_cast<std::uint64_t>(to_int(k, v));
    };
    t["env.decision_interval"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.env.decision_interval = static_cast<int>(to_int(k, v));
    };
    t["env.window"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto n = to_int(k, v);
      require(n >= 0, "env.window must be non-negative");
      c.env.window = static_cast<std::size_t>(n);
    };
    t["env.episode_steps"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.env.episode_steps = static_cast<int>(to_int(k, v));
    };
    t["ppo.batch_size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hyper.batch_size = static_cast<std::size_t>(to_int(k, v));
    };
    t["ppo.buffer_size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hyper.buffer_size = static_cast<std::size_t>(to_int(k, v));
    };
    t["ppo.update_epochs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hyper.update_epochs = static_cast<int>(to_int(k, v));
    };
    t["ppo.normalize_advantages"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hyper.normalize_advantages = to_bool(k, v);
    };
    t["ppo.entropy_mode"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "bonus") c.hyper.entropy_mode = EntropyMode::Bonus;
      else if (v == "literal") c.hyper.entropy_mode = EntropyMode::Literal;
      else throw InvalidArgument("config key '" + k + "': expected bonus or literal");
    };
    t["ppo.optimizer"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "sgd") c.hyper.optimizer = OptimizerKind::SGD;
      else if (v == "momentum") c.hyper.optimizer = OptimizerKind::Momentum;
      else if (v == "adam") c.hyper.optimizer = OptimizerKind::Adam;
      else throw InvalidArgument("config key '" + k + "': expected sgd, momentum or adam");
    };
    for (int i = 0; i < 2; ++i) {
      t["bank.human_pd" + std::to_string(i)] = [i](ExperimentConfig& c, const std::string& k, const std::string& v) {
        const auto g = to_list(k, v, 2);
        c.setting.human_pd[static_cast<std::size_t>(i)] = {g[0], g[1]};
      };
      t["bank.machine_pid" + std::to_string(i)] = [i](ExperimentConfig& c, const std::string& k,
                                                      const std::string& v) {
        const auto g = to_list(k, v, 3);
        c.setting.machine_pid[static_cast<std::size_t>(i)] = {g[0], g[1], g[2]};
      };
    }
    return t;
  }();
  return table;
}

}  // namespace detail

// Builds a configuration from key-values; unknown keys are rejected.
inline ExperimentConfig make_config(const KeyValues& kv) {
  ExperimentConfig c;
  if (auto it = kv.find("setting"); it != kv.end()) {
    c.setting_id = static_cast<int>(detail::to_int("setting", it->second));
    c.setting = load_setting(c.setting_id);
  }
  if (auto it = kv.find("subject"); it != kv.end()) c.subject = it->second;
  c.env.human = subject_profile(c.subject);

  const auto& setters = detail::setters();
  for (const auto& [key, value] : kv) {
    if (key == "setting" || key == "subject") continue;
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidArgument("unknown config key '" + key + "'");
    it->second(c, key, value);
  }
  return c;
}

// Applies `key=value` overrides on top of a file's contents (file may be empty).
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = path.empty() ? KeyValues{} : read_key_values(path);
  for (const auto& o : overrides) {
    auto [k, v] = split_assignment(o);
    kv[k] = v;
  }
  return make_config(kv);
}

// Canonical, fully expanded key-values (sorted by key). Feeding the result
// back through make_config reproduces the configuration.
inline KeyValues to_key_values(const ExperimentConfig& c) {
  using detail::join;
  KeyValues kv;
  auto f = [](double v) { return format_double(v); };
  kv["setting"] = std::to_string(c.setting_id);
  kv["subject"] = c.subject;
  if (c.seed) kv["seed"] = std::to_string(*c.seed);
  kv["updates"] = std::to_string(c.updates);
  kv["eval_episodes"] = std::to_string(c.eval_episodes);
  kv["eval_seed"] = std::to_string(c.eval_seed);
  kv["output_dir"] = c.output_dir;
  kv["train.machine_only_reward"] = c.machine_only_reward ? "true" : "false";
  const auto& p = c.env.plant;
  kv["plant.inertia"] = f(p.inertia);
  kv["plant.damping"] = f(p.damping);
  kv["plant.torque_limit"] = f(p.torque_limit);
  kv["plant.dt"] = f(p.dt);
  kv["plant.angle_min"] = f(p.angle_min);
  kv["plant.angle_max"] = f(p.angle_max);
  kv["plant.omega_max"] = f(p.omega_max);
  const auto& r = c.env.reference;
  kv["reference.amplitude"] = f(r.amplitude);
  kv["reference.period"] = f(r.period);
  kv["reference.phase"] = f(r.phase);
  kv["reference.offset"] = f(r.offset);
  const auto& h = c.env.human;
  kv["human.unit_torque"] = f(h.unit_torque);
  kv["human.reaction_delay_steps"] = std::to_string(h.reaction_delay_steps);
  kv["human.lag_time_constant"] = f(h.lag_time_constant);
  kv["human.noise_std"] = f(h.noise_std);
  kv["human.rng_seed"] = std::to_string(h.rng_seed);
  kv["env.decision_interval"] = std::to_string(c.env.decision_interval);
  kv["env.window"] = std::to_string(c.env.window);
  kv["env.episode_steps"] = std::to_string(c.env.episode_steps);
  kv["env.reward_position_scale"] = f(c.env.reward_position_scale);
  const auto& y = c.hyper;
  kv["ppo.gamma"] = f(y.gamma);
  kv["ppo.clip"] = f(y.clip);
  kv["ppo.entropy_weight"] = f(y.entropy_weight);
  kv["ppo.batch_size"] = std::to_string(y.batch_size);
  kv["ppo.learning_rate"] = f(y.learning_rate);
  kv["ppo.update_epochs"] = std::to_string(y.update_epochs);
  kv["ppo.buffer_size"] = std::to_string(y.buffer_size);
  kv["ppo.entropy_mode"] = y.entropy_mode == EntropyMode::Bonus ? "bonus" : "literal";
  kv["ppo.optimizer"] = y.optimizer == OptimizerKind::SGD ? "sgd" : y.optimizer == OptimizerKind::Momentum ? "momentum" : "adam";
  kv["ppo.momentum"] = f(y.momentum);
  kv["ppo.normalize_advantages"] = y.normalize_advantages ? "true" : "false";
  kv["ppo.reward_scale"] = f(y.reward_scale);
  const auto& w = c.setting.weights;
  kv["weights.mu"] = f(w.mu);
  kv["weights.kappa"] = f(w.kappa);
  kv["weights.rho"] = f(w.rho);
  kv["weights.sigma"] = f(w.sigma);
  kv["weights.beta"] = f(w.beta);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& pd = c.setting.human_pd[i];
    const auto& pid = c.setting.machine_pid[i];
    kv["bank.human_pd" + std::to_string(i)] = join({pd.kp, pd.kd});
    kv["bank.machine_pid" + std::to_string(i)] = join({pid.kp, pid.ki, pid.kd});
  }
  return kv;
}

}  // namespace coadapt
