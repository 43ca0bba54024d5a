// coadapt: train, evaluate and sweep co-adapting human/machine agents, and
// serve trained policies over the line protocol.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coadapt/coadapt.hpp"

namespace fs = std::filesystem;
using namespace coadapt;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

void print_metrics(int setting, const MetricsReport& m) {
  std::printf("setting %d  value %.6g  human_action_mse %.6g  tracking_error_mse %.6g\n", setting, m.value,
              m.human_action_mse, m.tracking_error_mse);
}

ExperimentConfig build_config(const Common& c, std::vector<std::string> extra) {
  std::vector<std::string> all = c.overrides;
  all.insert(all.end(), extra.begin(), extra.end());
  return load_config(c.config_file, all);
}

void add_if(std::vector<std::string>& v, const CLI::Option* opt, const std::string& key, const std::string& value) {
  if (opt->count() > 0) v.push_back(key + "=" + value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-adaptive human/machine PPO agents for a simulated ankle rehabilitation pedal"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config_file, "flat key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", common.overrides, "config override key=value (repeatable)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train both agents on one setting and export the run");
  int t_setting = 2;
  std::string t_subject = "subject_1";
  std::uint64_t t_seed = 0;
  int t_updates = 0;
  std::string t_out;
  auto* t_setting_opt = train_cmd->add_option("--setting", t_setting, "setting id (1..8)");
  auto* t_subject_opt = train_cmd->add_option("--subject", t_subject, "subject profile");
  auto* t_seed_opt = train_cmd->add_option("--seed", t_seed, "random seed");
  auto* t_updates_opt = train_cmd->add_option("--updates", t_updates, "PPO updates");
  auto* t_out_opt = train_cmd->add_option("--out", t_out, "output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate exported checkpoints");
  std::string e_ckpt;
  int e_setting = 2;
  std::string e_subject = "subject_1";
  int e_episodes = 0;
  std::uint64_t e_seed = 0;
  bool e_greedy = false;
  std::string e_out;
  eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  auto* e_setting_opt = eval_cmd->add_option("--setting", e_setting, "setting id (1..8)");
  auto* e_subject_opt = eval_cmd->add_option("--subject", e_subject, "subject profile");
  auto* e_episodes_opt = eval_cmd->add_option("--episodes", e_episodes, "evaluation episodes");
  auto* e_seed_opt = eval_cmd->add_option("--eval-seed", e_seed, "evaluation seed");
  eval_cmd->add_flag("--greedy", e_greedy, "argmax actions instead of sampling");
  eval_cmd->add_option("--out", e_out, "write trace.csv and eval.csv here");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate several settings from the same seeds");
  std::string s_settings = "1..8";
  std::string s_subject = "subject_1";
  std::uint64_t s_seed = 0;
  int s_updates = 0;
  std::string s_out;
  sweep_cmd->add_option("--settings", s_settings, "e.g. 1..8 or 2,4,6,8");
  auto* s_subject_opt = sweep_cmd->add_option("--subject", s_subject, "subject profile");
  auto* s_seed_opt = sweep_cmd->add_option("--seed", s_seed, "random seed");
  auto* s_updates_opt = sweep_cmd->add_option("--updates", s_updates, "PPO updates per setting");
  auto* s_out_opt = sweep_cmd->add_option("--out", s_out, "output directory");

  // bridge-serve
  auto* serve_cmd = app.add_subcommand("bridge-serve", "serve trained actors over the line protocol");
  std::string b_endpoint;
  std::string b_ckpt;
  bool b_stochastic = false;
  std::uint64_t b_seed = 0;
  int b_max = 0;
  bool b_refuse = false;
  serve_cmd->add_option("--endpoint", b_endpoint, "HOST:PORT")->required();
  serve_cmd->add_option("--checkpoint", b_ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_flag("--stochastic", b_stochastic, "sample actions instead of argmax");
  serve_cmd->add_option("--seed", b_seed, "sampling seed for --stochastic");
  serve_cmd->add_option("--max-connections", b_max, "exit after this many connections (0: never)");
  serve_cmd->add_flag("--refuse-concurrent", b_refuse, "answer extra clients with ERR instead of queueing them");

  // bridge-run
  auto* run_cmd = app.add_subcommand("bridge-run", "run one episode locally with the machine agent served remotely");
  std::string r_endpoint;
  std::string r_ckpt;
  int r_setting = 2;
  std::uint64_t r_seed = 0;
  std::string r_out;
  run_cmd->add_option("--endpoint", r_endpoint, "HOST:PORT")->required();
  run_cmd->add_option("--checkpoint", r_ckpt, "directory holding human_actor.ckpt")->required();
  auto* r_setting_opt = run_cmd->add_option("--setting", r_setting, "setting id (1..8)");
  auto* r_seed_opt = run_cmd->add_option("--seed", r_seed, "episode seed");
  run_cmd->add_option("--out", r_out, "trace CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      std::vector<std::string> o;
      add_if(o, t_setting_opt, "setting", std::to_string(t_setting));
      add_if(o, t_subject_opt, "subject", t_subject);
      add_if(o, t_seed_opt, "seed", std::to_string(t_seed));
      add_if(o, t_updates_opt, "updates", std::to_string(t_updates));
      add_if(o, t_out_opt, "output_dir", t_out);
      const ExperimentConfig cfg = build_config(common, o);
      cfg.validate();
      const SettingRun run = run_setting(cfg);
      export_results(std::span<const SettingRun>(&run, 1), cfg, cfg.output_dir);
      print_metrics(run.setting_id, run.evaluation.mean);
      std::printf("wrote %s\n", cfg.output_dir.c_str());
    } else if (eval_cmd->parsed()) {
      std::vector<std::string> o;
      add_if(o, e_setting_opt, "setting", std::to_string(e_setting));
      add_if(o, e_subject_opt, "subject", e_subject);
      add_if(o, e_episodes_opt, "eval_episodes", std::to_string(e_episodes));
      add_if(o, e_seed_opt, "eval_seed", std::to_string(e_seed));
      ExperimentConfig cfg = build_config(common, o);
      const DualAgents agents = load_agents(e_ckpt, cfg.hyper);
      const Evaluation ev = evaluate(agents, cfg.env, cfg.setting, cfg.eval_episodes, cfg.eval_seed,
                                     e_greedy ? ActionMode::Greedy : ActionMode::Sample);
      print_metrics(cfg.setting_id, ev.mean);
      if (!e_out.empty()) {
        write_text_file(fs::path(e_out) / "trace.csv", trace_csv(ev.first_trace));
        write_text_file(fs::path(e_out) / "eval.csv", metrics_csv(ev.episodes));
      }
    } else if (sweep_cmd->parsed()) {
      std::vector<std::string> o;
      add_if(o, s_subject_opt, "subject", s_subject);
      add_if(o, s_seed_opt, "seed", std::to_string(s_seed));
      add_if(o, s_updates_opt, "updates", std::to_string(s_updates));
      add_if(o, s_out_opt, "output_dir", s_out);
      const ExperimentConfig cfg = build_config(common, o);
      cfg.validate();
      const std::vector<int> ids = parse_setting_list(s_settings);
      std::vector<SettingRun> runs;
      for (int id : ids) {
        ExperimentConfig one = cfg;
        one.setting_id = id;
        one.setting = load_setting(id);
        runs.push_back(run_setting(one));
        print_metrics(id, runs.back().evaluation.mean);
        std::fflush(stdout);
      }
      export_results(runs, cfg, cfg.output_dir);
      std::printf("wrote %s\n", cfg.output_dir.c_str());
    } else if (serve_cmd->parsed()) {
      const Endpoint ep = parse_endpoint(b_endpoint);
      PolicyServer server(load_checkpoint((fs::path(b_ckpt) / "human_actor.ckpt").string()),
                          load_checkpoint((fs::path(b_ckpt) / "machine_actor.ckpt").string()),
                          b_stochastic ? ActionMode::Sample : ActionMode::Greedy, b_seed);
      ServeOptions opt;
      opt.max_connections = b_max;
      opt.refuse_concurrent = b_refuse;
      opt.on_listening = [&](std::uint16_t port) {
        std::printf("listening on %s:%u\n", ep.host.c_str(), port);
        std::fflush(stdout);
      };
      opt.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
      serve_policies(ep, server, opt);
    } else if (run_cmd->parsed()) {
      std::vector<std::string> o;
      add_if(o, r_setting_opt, "setting", std::to_string(r_setting));
      add_if(o, r_seed_opt, "seed", std::to_string(r_seed));
      const ExperimentConfig cfg = build_config(common, o);
      const MLPParams human = load_checkpoint((fs::path(r_ckpt) / "human_actor.ckpt").string());
      const std::uint64_t seed = cfg.seed.value_or(0);
      BridgeClient client(parse_endpoint(r_endpoint));
      const EpisodeTrace trace =
          run_episode(cfg.env, cfg.setting, actor_policy(human, ActionMode::Sample, make_rng(seed, 11)()),
                      remote_policy(client, 1), seed);
      client.close();
      print_metrics(cfg.setting_id, mse_metrics(trace));
      if (!r_out.empty()) write_text_file(r_out, trace_csv(trace));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
