// Command-line entry points: train, eval, probe, ablate.
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tpc/metrics.hpp"
#include "tpc/probes.hpp"
#include "tpc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "tpc 0.1.0";

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // -1: keep the config's seed
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* c = cmd->add_option("--config", args.config_path, "TOML config file");
  if (config_required) c->required();
  cmd->add_option("--set", args.overrides,
                  "dotted-path override, e.g. loss.lambda2=0.2");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--out", args.out,
                  "output directory (default: $TPC_RUN_ROOT or ./runs)");
}

std::string default_out_root() {
  const char* env = std::getenv("TPC_RUN_ROOT");
  return env && *env ? env : "runs";
}

tpc::Config resolve_config(const CommonArgs& args) {
  tpc::Config cfg = args.config_path.empty()
                        ? tpc::Config()
                        : tpc::Config::load_file(args.config_path);
  for (const auto& o : args.overrides) cfg.apply_override(o);
  if (args.seed >= 0) {
    tpc::ConfigValue v;
    v.kind = tpc::ConfigValue::Kind::Int;
    v.i = args.seed;
    cfg.set("seed", v);
  }
  return cfg;
}

std::string timestamp() {
  char buf[32];
  std::time_t t = std::time(nullptr);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

void write_manifest(const fs::path& run_dir, const CommonArgs& args,
                    const tpc::TrainConfig& cfg, const std::string& snapshot,
                    const std::string& status) {
  json m;
  m["code_version"] = kVersion;
  m["seed"] = cfg.seed;
  m["config_path"] = args.config_path;
  m["overrides"] = args.overrides;
  m["config_snapshot"] = snapshot;
  m["start_time"] = timestamp();
  m["end_time"] = nullptr;
  m["status"] = status;
  m["outputs"] = {{"metrics_csv", "metrics.csv"},
                  {"metrics_jsonl", "metrics.jsonl"},
                  {"checkpoints", "checkpoints"},
                  {"config_snapshot", "config_snapshot.toml"}};
  std::ofstream out(run_dir / "manifest.json");
  out << m.dump(2) << "\n";
}

void finalize_manifest(const fs::path& run_dir, const std::string& status) {
  std::ifstream in(run_dir / "manifest.json");
  json m;
  in >> m;
  in.close();
  m["end_time"] = timestamp();
  m["status"] = status;
  std::ofstream out(run_dir / "manifest.json");
  out << m.dump(2) << "\n";
}

int cmd_train(const CommonArgs& args) {
  tpc::Config raw = resolve_config(args);
  tpc::TrainConfig cfg = tpc::TrainConfig::from_config(raw);
  std::string snapshot = cfg.to_config().serialize();

  fs::path run_dir = args.out.empty()
                         ? fs::path(default_out_root()) /
                               ("train_" + tpc::to_string(cfg.env.task) + "_s" +
                                std::to_string(cfg.seed))
                         : fs::path(args.out);
  fs::create_directories(run_dir);
  {
    std::ofstream snap(run_dir / "config_snapshot.toml");
    snap << snapshot;
  }
  write_manifest(run_dir, args, cfg, snapshot, "running");

  tpc::MetricsWriter metrics((run_dir / "metrics.jsonl").string(),
                             (run_dir / "metrics.csv").string(),
                             tpc::Trainer::metric_columns());
  tpc::Trainer trainer(cfg, &metrics);
  trainer.run(run_dir.string());
  metrics.flush();
  finalize_manifest(run_dir, metrics.error_emitted() ? "error" : "done");

  std::cout << "run_dir: " << run_dir.string() << "\n"
            << "env_steps: " << trainer.env_steps() << "\n"
            << "gradient_steps: " << trainer.gradient_steps() << "\n"
            << "best_eval_return: " << trainer.best_eval_return() << "\n";
  return metrics.error_emitted() ? 1 : 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             int episodes, bool save_episodes) {
  tpc::Config raw = resolve_config(args);
  tpc::TrainConfig cfg = tpc::TrainConfig::from_config(raw);
  tpc::Rng init(cfg.seed);

  tpc::Agent agent(cfg, init);
  agent.load(checkpoint);

  tpc::EnvConfig env_cfg = cfg.env;
  env_cfg.background.eval_split = true;
  tpc::Env env(env_cfg, cfg.seed * 77 + 13);

  fs::path out_dir = args.out.empty()
                         ? fs::path(default_out_root()) / "eval"
                         : fs::path(args.out);
  fs::create_directories(out_dir);

  tpc::NoGradGuard ng;
  auto run_episode = [&](uint64_t ep_seed, bool random_policy,
                         std::vector<std::vector<double>>* act_log,
                         std::vector<double>* rew_log,
                         std::vector<std::vector<double>>* state_log) {
    tpc::Rng noise(ep_seed ^ 0xabcdef);
    auto obs = env.reset(ep_seed);
    tpc::Tensor h = tpc::Tensor::zeros({1, cfg.hidden_dim});
    double ret = 0.0;
    while (!env.done()) {
      std::vector<double> a(env.action_dim());
      tpc::Tensor s = agent.wm.encode(tpc::Tensor::from_values(
          {1, env.obs_dim()}, std::vector<double>(obs.begin(), obs.end())));
      if (random_policy) {
        for (double& x : a) x = noise.uniform(-1.0 + 1e-6, 1.0 - 1e-6);
      } else {
        tpc::Tensor mode = agent.behavior.policy_dist(h, s).mode();
        a.assign(mode.values().begin(), mode.values().end());
      }
      tpc::StepResult r = env.step(a);
      h = agent.wm.rssm_step(
          h, s, tpc::Tensor::from_values({1, env.action_dim()}, a));
      ret += r.reward;
      obs = r.obs;
      if (act_log) act_log->push_back(a);
      if (rew_log) rew_log->push_back(r.reward);
      if (state_log) state_log->push_back(r.state);
    }
    return ret;
  };

  std::vector<double> returns, baseline;
  std::ofstream csv(out_dir / "eval.csv");
  csv << "episode,policy_return,random_return\n";
  for (int e = 0; e < episodes; ++e) {
    uint64_t ep_seed = cfg.seed * 9176 + 31 + e;
    std::vector<std::vector<double>> acts, states;
    std::vector<double> rews;
    double r = run_episode(ep_seed, false, save_episodes ? &acts : nullptr,
                           save_episodes ? &rews : nullptr,
                           save_episodes ? &states : nullptr);
    double rb = run_episode(ep_seed, true, nullptr, nullptr, nullptr);
    returns.push_back(r);
    baseline.push_back(rb);
    csv << e << "," << tpc::format_double(r) << "," << tpc::format_double(rb)
        << "\n";
    if (save_episodes) {
      tpc::write_episode_csv(
          (out_dir / ("episode_" + std::to_string(e) + ".csv")).string(), acts,
          rews, states);
    }
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair<double, double>(m, std::sqrt(s / v.size()));
  };
  auto [pm, ps] = mean_std(returns);
  auto [bm, bs] = mean_std(baseline);
  json rep = {{"episodes", episodes},
              {"policy_return_mean", pm},
              {"policy_return_std", ps},
              {"random_return_mean", bm},
              {"random_return_std", bs}};
  std::ofstream(out_dir / "eval.json") << rep.dump(2) << "\n";
  std::cout << "policy return: " << pm << " +- " << ps << "\n"
            << "random baseline: " << bm << " +- " << bs << "\n";
  return 0;
}

int cmd_probe(const CommonArgs& args, const std::string& checkpoint,
              int episodes, int probe_samples, int decoder_steps) {
  tpc::Config raw = resolve_config(args);
  tpc::TrainConfig cfg = tpc::TrainConfig::from_config(raw);
  tpc::Rng init(cfg.seed);
  tpc::Agent agent(cfg, init);
  agent.load(checkpoint);

  fs::path out_dir = args.out.empty()
                         ? fs::path(default_out_root()) / "probe"
                         : fs::path(args.out);
  fs::create_directories(out_dir);

  // dataset: exploration-noise rollouts of the loaded policy
  tpc::TrainConfig collect_cfg = cfg;
  collect_cfg.eval_every = 0;
  tpc::Trainer collector(collect_cfg, nullptr);
  collector.agent().load(checkpoint);
  for (int i = 0; i < episodes; ++i) {
    collector.collect_episode(cfg.exploration_noise);
  }
  tpc::Rng rng(cfg.seed * 31 + 7);
  tpc::ProbeDataset data = tpc::ProbeDataset::from_buffer(
      collector.buffer(), cfg.env, probe_samples, rng);

  tpc::ReconProbeConfig rcfg;
  rcfg.steps = decoder_steps;
  std::vector<float> recon;
  tpc::ReconProbeReport rr =
      tpc::probe_reconstruction(agent.wm, data, rcfg, rng, &recon);
  tpc::LinearProbeReport lr = tpc::probe_linear(agent.wm, data, 0.2, rng);

  tpc::write_probe_grid((out_dir / "reconstructions.pgm").string(), data, recon,
                        10);
  json rep;
  rep["agent_mse"] = rr.agent_mse;
  rep["background_mse"] = rr.background_mse;
  rep["background_pixel_variance"] = rr.background_pixel_variance;
  json r2 = json::object();
  for (size_t i = 0; i < lr.target_names.size(); ++i) {
    r2[lr.target_names[i]] = lr.r2[i];
  }
  rep["r2"] = r2;
  rep["r2_mean"] = lr.r2_mean();
  rep["ridge_fallback"] = lr.ridge_fallback;
  std::ofstream(out_dir / "probe_report.json") << rep.dump(2) << "\n";
  std::cout << "agent_mse: " << rr.agent_mse
            << "  background_mse: " << rr.background_mse
            << "  r2_mean: " << lr.r2_mean() << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::vector<int64_t>& seeds,
               bool include_no_smoothing) {
  tpc::Config raw = resolve_config(args);

  fs::path out_dir = args.out.empty()
                         ? fs::path(default_out_root()) / "ablate"
                         : fs::path(args.out);
  fs::create_directories(out_dir);

  std::vector<std::string> variants = {"full_tpc", "spc_only", "unstable_tpc"};
  std::ofstream csv(out_dir / "ablate.csv");
  csv << "variant,seed,final_return,best_eval_return,min_latent_std\n";
  std::ofstream traj(out_dir / "latent_std_traj.csv");
  traj << "variant,seed,grad_step,latent_std\n";

  for (const auto& variant : variants) {
    for (int64_t seed : seeds) {
      tpc::Config c = raw;
      tpc::ConfigValue sv;
      sv.kind = tpc::ConfigValue::Kind::String;
      sv.s = variant;
      c.set("train.variant", sv);
      tpc::ConfigValue iv;
      iv.kind = tpc::ConfigValue::Kind::Int;
      iv.i = seed;
      c.set("seed", iv);

      tpc::TrainConfig cfg = tpc::TrainConfig::from_config(c);
      fs::path run_dir = out_dir / (variant + "_s" + std::to_string(seed));
      fs::create_directories(run_dir);
      tpc::MetricsWriter metrics((run_dir / "metrics.jsonl").string(),
                                 (run_dir / "metrics.csv").string(),
                                 tpc::Trainer::metric_columns());
      tpc::Trainer trainer(cfg, &metrics);
      trainer.run(run_dir.string());
      metrics.flush();

      double final_ret = trainer.last_eval_return();
      csv << variant << "," << seed << "," << tpc::format_double(final_ret)
          << "," << tpc::format_double(trainer.best_eval_return()) << ","
          << tpc::format_double(trainer.min_latent_std()) << "\n";
      csv.flush();

      // latent-std trajectory from the jsonl stream
      std::ifstream in(run_dir / "metrics.jsonl");
      std::string line;
      while (std::getline(in, line)) {
        json rec = json::parse(line);
        if (rec["kind"] == "world_model") {
          traj << variant << "," << seed << "," << rec["step"] << ","
               << tpc::format_double(rec["latent_std"].get<double>()) << "\n";
        }
      }
      std::cout << variant << " seed " << seed
                << ": final_return=" << final_ret
                << " min_latent_std=" << trainer.min_latent_std() << "\n";
    }
  }

  if (include_no_smoothing) {
    std::ofstream smooth_csv(out_dir / "no_smoothing.csv");
    smooth_csv << "variant,seed,final_return,best_eval_return\n";
    for (const std::string variant : {"full_tpc", "no_smoothing"}) {
      for (int64_t seed : seeds) {
        tpc::Config c = raw;
        tpc::ConfigValue bv;
        bv.kind = tpc::ConfigValue::Kind::Bool;
        bv.b = variant == "no_smoothing";
        c.set("train.no_smoothing", bv);
        tpc::ConfigValue iv;
        iv.kind = tpc::ConfigValue::Kind::Int;
        iv.i = seed;
        c.set("seed", iv);
        tpc::TrainConfig cfg = tpc::TrainConfig::from_config(c);
        fs::path run_dir = out_dir / (variant + "_s" + std::to_string(seed));
        fs::create_directories(run_dir);
        tpc::MetricsWriter metrics((run_dir / "metrics.jsonl").string(),
                                   (run_dir / "metrics.csv").string(),
                                   tpc::Trainer::metric_columns());
        tpc::Trainer trainer(cfg, &metrics);
        trainer.run(run_dir.string());
        metrics.flush();
        smooth_csv << variant << "," << seed << ","
                   << tpc::format_double(trainer.last_eval_return()) << ","
                   << tpc::format_double(trainer.best_eval_return()) << "\n";
        smooth_csv.flush();
      }
    }
  }
  std::cout << "ablation table: " << (out_dir / "ablate.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space world model with contrastive objectives on toy "
               "pixel control tasks"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train = app.add_subcommand("train", "run the training loop");
  add_common(train, train_args);

  CommonArgs eval_args;
  std::string eval_ckpt;
  int eval_episodes = 3;
  bool save_episodes = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval->add_flag("--save-episodes", save_episodes, "write per-step CSV logs");

  CommonArgs probe_args;
  std::string probe_ckpt;
  int probe_episodes = 5, probe_samples = 2000, decoder_steps = 2000;
  auto* probe = app.add_subcommand("probe", "reconstruction and linear probes");
  add_common(probe, probe_args);
  probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  probe->add_option("--episodes", probe_episodes, "episodes to collect");
  probe->add_option("--samples", probe_samples, "probe sample count");
  probe->add_option("--decoder-steps", decoder_steps, "decoder budget");

  CommonArgs ablate_args;
  std::vector<int64_t> ablate_seeds = {1, 2, 3};
  bool include_no_smoothing = false;
  auto* ablate = app.add_subcommand("ablate", "run objective ablations");
  add_common(ablate, ablate_args);
  ablate->add_option("--seeds", ablate_seeds, "seeds to run");
  ablate->add_flag("--no-smoothing", include_no_smoothing,
                   "also compare the smoothing-disabled variant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) {
      return cmd_eval(eval_args, eval_ckpt, eval_episodes, save_episodes);
    }
    if (probe->parsed()) {
      return cmd_probe(probe_args, probe_ckpt, probe_episodes, probe_samples,
                       decoder_steps);
    }
    if (ablate->parsed()) {
      return cmd_ablate(ablate_args, ablate_seeds, include_no_smoothing);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
