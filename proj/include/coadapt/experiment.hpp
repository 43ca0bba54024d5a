#pragma once

// Per-setting training runs, the sweep over built-in settings, and the
// files a run leaves behind (CSV tables, checkpoints, manifest).

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "coadapt/config.hpp"
#include "coadapt/harness.hpp"
#include "coadapt/training.hpp"

namespace coadapt {

struct SettingRun {
  int setting_id = 0;
  SettingConfig setting;
  TrainResult training;
  Evaluation evaluation;
};

inline SettingRun run_setting(const ExperimentConfig& cfg) {
  cfg.validate();
  SettingRun run;
  run.setting_id = cfg.setting_id;
  run.setting = cfg.setting;
  run.training = train(cfg.setting, cfg.env, cfg.hyper, *cfg.seed, {cfg.updates, cfg.machine_only_reward, {}});
  run.evaluation = evaluate(run.training.agents, cfg.env, cfg.setting, cfg.eval_episodes, cfg.eval_seed);
  return run;
}

// Every setting is trained and evaluated from the same seeds.
inline std::vector<SettingRun> sweep(const ExperimentConfig& base, std::span<const int> settings) {
  std::vector<SettingRun> runs;
  for (int id : settings) {
    ExperimentConfig cfg = base;
    cfg.setting_id = id;
    cfg.setting = load_setting(id);
    runs.push_back(run_setting(cfg));
  }
  return runs;
}

// "1..8", "2,4,6" or a mix such as "1..3,8".
inline std::vector<int> parse_setting_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    require(!item.empty(), "empty entry in setting list '" + text + "'");
    if (const auto dots = item.find(".."); dots != std::string::npos) {
      const auto lo = detail::to_int("settings", item.substr(0, dots));
      const auto hi = detail::to_int("settings", item.substr(dots + 2));
      require(lo <= hi, "bad setting range '" + item + "'");
      for (auto i = lo; i <= hi; ++i) out.push_back(static_cast<int>(i));
    } else {
      out.push_back(static_cast<int>(detail::to_int("settings", item)));
    }
  }
  for (int id : out) (void)load_setting(id);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kTraceHeader = "t,reference,position,omega,tau_m,tau_h,digit,machine_action,reward";

inline std::string trace_csv(const EpisodeTrace& trace) {
  std::string s = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace.records) {
    s += format_double(r.t) + ',' + format_double(r.reference) + ',' + format_double(r.position) + ',' +
         format_double(r.omega) + ',' + format_double(r.tau_m) + ',' + format_double(r.tau_h) + ',' +
         std::to_string(r.digit) + ',' + std::to_string(r.machine_action) + ',' + format_double(r.reward) + '\n';
  }
  return s;
}

inline EpisodeTrace parse_trace_csv(std::istream& is, int decision_interval, double unit_torque) {
  EpisodeTrace trace;
  trace.decision_interval = decision_interval;
  trace.unit_torque = unit_torque;
  std::string line;
  require(std::getline(is, line) && line == kTraceHeader, "trace CSV: unexpected header");
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    require(f.size() == 9, "trace CSV: expected 9 fields on row " + std::to_string(row));
    TraceRecord r;
    r.t = parse_double(f[0]);
    r.reference = parse_double(f[1]);
    r.position = parse_double(f[2]);
    r.omega = parse_double(f[3]);
    r.tau_m = parse_double(f[4]);
    r.tau_h = parse_double(f[5]);
    r.digit = static_cast<int>(detail::to_int("digit", f[6]));
    r.machine_action = static_cast<int>(detail::to_int("machine_action", f[7]));
    r.reward = parse_double(f[8]);
    trace.records.push_back(r);
  }
  return trace;
}

inline std::string value_table_csv(std::span<const SettingRun> runs) {
  std::string s =
      "setting,mu,kappa,rho,human_pd0,human_pd1,machine_pid0,machine_pid1,value,human_action_mse,tracking_error_mse\n";
  for (const auto& run : runs) {
    const auto& w = run.setting.weights;
    const auto& h = run.setting.human_pd;
    const auto& m = run.setting.machine_pid;
    const auto& e = run.evaluation.mean;
    auto pd = [](const PDGains& g) { return format_double(g.kp) + ' ' + format_double(g.kd); };
    auto pid = [](const PIDGains& g) {
      return format_double(g.kp) + ' ' + format_double(g.ki) + ' ' + format_double(g.kd);
    };
    s += std::to_string(run.setting_id) + ',' + format_double(w.mu) + ',' + format_double(w.kappa) + ',' +
         format_double(w.rho) + ',' + pd(h[0]) + ',' + pd(h[1]) + ',' + pid(m[0]) + ',' + pid(m[1]) + ',' +
         format_double(e.value) + ',' + format_double(e.human_action_mse) + ',' +
         format_double(e.tracking_error_mse) + '\n';
  }
  return s;
}

inline std::string value_curve_csv(std::span<const double> curve) {
  std::string s = "episode,value\n";
  for (std::size_t i = 0; i < curve.size(); ++i) s += std::to_string(i) + ',' + format_double(curve[i]) + '\n';
  return s;
}

inline std::string loss_trace_csv(std::span<const AgentLossRecord> losses) {
  std::string s = "agent,update,epoch,minibatch,actor_loss,critic_loss,entropy,clip_fraction\n";
  for (const auto& r : losses) {
    const auto& l = r.loss;
    s += std::to_string(static_cast<int>(r.agent)) + ',' + std::to_string(l.update) + ',' + std::to_string(l.epoch) +
         ',' + std::to_string(l.minibatch) + ',' + format_double(l.actor_loss) + ',' + format_double(l.critic_loss) +
         ',' + format_double(l.entropy) + ',' + format_double(l.clip_fraction) + '\n';
  }
  return s;
}

inline std::string metrics_csv(std::span<const MetricsReport> episodes) {
  std::string s = "episode,value,human_action_mse,tracking_error_mse\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& m = episodes[i];
    s += std::to_string(i) + ',' + format_double(m.value) + ',' + format_double(m.human_action_mse) + ',' +
         format_double(m.tracking_error_mse) + '\n';
  }
  return s;
}

inline std::string checkpoint_text(const MLPParams& p) {
  std::ostringstream os;
  write_checkpoint(os, p);
  return os.str();
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

// Same id `git hash-object` gives the file.
inline std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

// ---------------------------------------------------------------------------
// Export

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot write " + path.string());
  os << content;
  require(static_cast<bool>(os), "write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline const char* kAgentFiles[4] = {"human_actor.ckpt", "human_critic.ckpt", "machine_actor.ckpt",
                                     "machine_critic.ckpt"};

inline DualAgents load_agents(const std::filesystem::path& dir, const PPOHyper& hyper) {
  DualAgents a;
  a.human.actor = load_checkpoint((dir / kAgentFiles[0]).string());
  a.human.critic = load_checkpoint((dir / kAgentFiles[1]).string());
  a.machine.actor = load_checkpoint((dir / kAgentFiles[2]).string());
  a.machine.critic = load_checkpoint((dir / kAgentFiles[3]).string());
  require(a.human.actor.input_dim() == kHumanObsDim && a.human.actor.output_dim() == kHumanActions,
          "human actor checkpoint has the wrong shape");
  require(a.machine.actor.input_dim() == kMachineObsDim && a.machine.actor.output_dim() == kMachineActions,
          "machine actor checkpoint has the wrong shape");
  a.human.actor_optimizer = Optimizer(a.human.actor, hyper);
  a.human.critic_optimizer = Optimizer(a.human.critic, hyper);
  a.machine.actor_optimizer = Optimizer(a.machine.actor, hyper);
  a.machine.critic_optimizer = Optimizer(a.machine.critic, hyper);
  return a;
}

// Output layout under `dir`:
//   value_table.csv
//   setting_<N>/{trace,value_curve,loss_trace,eval}.csv
//   setting_<N>/checkpoints/{human,machine}_{actor,critic}.ckpt
//   manifest.json   (config, seed, per-file git blob ids, content hash)
// Nothing time- or host-dependent is written, so a rerun is byte-identical.
// Returns the relative paths written, manifest last.
inline std::vector<std::string> export_results(std::span<const SettingRun> runs, const ExperimentConfig& cfg,
                                               const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  files["value_table.csv"] = value_table_csv(runs);
  for (const auto& run : runs) {
    const std::string base = "setting_" + std::to_string(run.setting_id) + "/";
    files[base + "trace.csv"] = trace_csv(run.evaluation.first_trace);
    files[base + "eval.csv"] = metrics_csv(run.evaluation.episodes);
    files[base + "value_curve.csv"] = value_curve_csv(run.training.value_curve);
    files[base + "loss_trace.csv"] = loss_trace_csv(run.training.losses);
    const auto& a = run.training.agents;
    const MLPParams* nets[4] = {&a.human.actor, &a.human.critic, &a.machine.actor, &a.machine.critic};
    for (int i = 0; i < 4; ++i) files[base + "checkpoints/" + kAgentFiles[i]] = checkpoint_text(*nets[i]);
  }

  nlohmann::json manifest;
  manifest["format"] = "coadapt-run 1";
  manifest["seed"] = cfg.seed ? *cfg.seed : 0;
  KeyValues config = to_key_values(cfg);
  config.erase("output_dir");  // location is not part of the result
  manifest["config"] = config;
  std::vector<int> ids;
  for (const auto& run : runs) ids.push_back(run.setting_id);
  manifest["settings"] = ids;
  std::string listing;
  std::vector<std::string> written;
  for (const auto& [rel, content] : files) {
    write_text_file(dir / rel, content);
    const std::string id = git_blob_hash(content);
    manifest["files"][rel] = id;
    listing += id + "  " + rel + "\n";
    written.push_back(rel);
  }
  manifest["content_hash"] = sha1_hex(listing);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back("manifest.json");
  return written;
}

}  // namespace coadapt
