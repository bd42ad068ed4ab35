// act: demos, training, evaluation and ablation sweeps from the command line.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "act/baselines.hpp"
#include "act/demonstrations.hpp"
#include "act/errors.hpp"
#include "act/harness.hpp"
#include "act/inference.hpp"
#include "act/model.hpp"
#include "act/serialize.hpp"
#include "act/training.hpp"

namespace fs = std::filesystem;
using namespace act;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvariant = 2, kNumeric = 3 };

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 1;
};

harness::CellConfig load_config(const Globals& g) {
  harness::CellConfig c;
  if (!g.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_text(g.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("cannot parse " + g.config + ": " + e.what());
    }
    c = harness::cell_config_from_json(j);
  }
  return c;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void print_summary(const std::vector<infer::EpisodeResult>& results) {
  const auto s = infer::summarize(results);
  std::printf("episodes %zu  milestones %.1f%% %.1f%% %.1f%%  jerk %.5f  aborted %zu\n", s.episodes,
              s.success_pct[0], s.success_pct[1], s.success_pct[2], s.jerk, s.aborted);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action chunking policies on a planar bimanual simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "base seed");
  app.add_option("--threads", g.threads, "worker threads for evaluation")->check(CLI::PositiveNumber);

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "record scripted demonstrations");
  std::string gen_task = "transfer_cube", gen_style = "deterministic", gen_out, gen_obs = "state";
  std::size_t gen_n = 50;
  gen->add_option("--task", gen_task, "transfer_cube | peg_insertion");
  gen->add_option("--n", gen_n, "episodes")->check(CLI::PositiveNumber);
  gen->add_option("--style", gen_style, "deterministic | stochastic");
  gen->add_option("--obs-mode", gen_obs, "state | pixels");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a policy on a demo directory");
  std::string tr_data, tr_out, tr_method;
  std::size_t tr_k = 0, tr_steps = 0;
  tr->add_option("--data", tr_data, "demo directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--method", tr_method, "act | bc (overrides the config)");
  tr->add_option("--k", tr_k, "chunk size (overrides the config)");
  tr->add_option("--steps", tr_steps, "training steps (overrides the config)");

  // eval
  auto* ev = app.add_subcommand("eval", "roll out a policy and write results.csv");
  std::string ev_method = "act", ev_ckpt, ev_data, ev_task, ev_mode, ev_out = ".";
  std::size_t ev_episodes = 50, ev_k = 0, ev_len = 0;
  double ev_m = 0.0;
  ev->add_option("--method", ev_method, "act | bc | knn");
  ev->add_option("--ckpt", ev_ckpt, "checkpoint (act, bc)");
  ev->add_option("--data", ev_data, "demo directory (knn)")->check(CLI::ExistingDirectory);
  ev->add_option("--task", ev_task, "transfer_cube | peg_insertion");
  ev->add_option("--episodes", ev_episodes, "episodes")->check(CLI::PositiveNumber);
  ev->add_option("--mode", ev_mode, "chunked | ensembled");
  ev->add_option("--k", ev_k, "executed chunk size (act/bc: at most the trained k)");
  ev->add_option("--m", ev_m, "temporal ensemble decay");
  ev->add_option("--episode-length", ev_len, "ticks per episode (default: task length)");
  ev->add_option("--out", ev_out, "output directory");

  // ablate
  auto* ab = app.add_subcommand("ablate", "sweep one axis over methods and seeds");
  std::string ab_axis, ab_values, ab_methods = "act", ab_data, ab_out;
  std::size_t ab_seeds = 3, ab_episodes = 0;
  bool ab_save = false;
  ab->add_option("--axis", ab_axis, "chunk_size | temporal_ensemble | cvae | loss_fn | m_value")->required();
  ab->add_option("--values", ab_values, "comma-separated values")->required();
  ab->add_option("--methods", ab_methods, "comma-separated methods");
  ab->add_option("--data", ab_data, "demo directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--out", ab_out, "workspace directory")->required();
  ab->add_option("--seeds", ab_seeds, "training seeds per cell")->check(CLI::PositiveNumber);
  ab->add_option("--episodes", ab_episodes, "episodes per cell (overrides the config)");
  ab->add_flag("--save-checkpoints", ab_save, "keep per-cell checkpoints");

  // report
  auto* rep = app.add_subcommand("report", "rebuild summary, aggregate and plot from results.csv");
  std::string rep_in;
  rep->add_option("--in", rep_in, "report directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*gen) {
      auto task = sim::TaskSpec::by_name(sim::task_from_string(gen_task));
      task.obs_mode = sim::obs_mode_from_string(gen_obs);
      const auto style = demo::DemoStyle::by_name(gen_style);
      const auto ds = demo::generate_dataset(task, gen_n, style, g.seed, log_line);
      demo::write_dataset(gen_out, ds);
      std::printf("wrote %zu episodes to %s (%zu resampled)\n", ds.size(), gen_out.c_str(),
                  ds.manifest.resampled_seeds.size());
    } else if (*tr) {
      auto cfg = load_config(g);
      if (!tr_method.empty()) cfg.method = tr_method;
      if (cfg.method == "knn") throw ConfigError("knn has no training step; use eval --method knn --data DIR");
      if (tr_k) cfg.chunk = tr_k;
      if (tr_steps) cfg.train.steps = cfg.bc.steps = tr_steps;
      if (g.seed_given) cfg.train.seed = cfg.bc.seed = g.seed;
      cfg = harness::cell_config_from_json(harness::to_json(cfg));
      const auto ds = demo::load_dataset(tr_data);
      fs::create_directories(tr_out);
      io::write_text(fs::path(tr_out) / "config.json", harness::to_json(cfg).dump(2) + "\n");
      try {
        auto trained = harness::train_policy(ds, cfg, log_line);
        trained.save(tr_out);
        io::write_text(fs::path(tr_out) / "report.csv", trained.report.to_csv());
        std::printf("best step %zu val %.6f (%.1f s)\n", trained.report.best_step, trained.report.best_val,
                    trained.report.wall_seconds);
      } catch (const TrainingDiverged& e) {
        if (e.last_good()) {
          save_act(fs::path(tr_out) / "model.ckpt", *e.last_good(), normalizer_from_manifest(ds.manifest),
                   {{"diverged_at", e.step()}});
          log_line("saved last good checkpoint");
        }
        throw;
      }
    } else if (*ev) {
      auto cfg = load_config(g);
      infer::RolloutConfig rc = cfg.rollout;
      if (!ev_mode.empty()) rc.mode = infer::mode_from_string(ev_mode);
      if (ev_m > 0.0) rc.m = ev_m;
      if (ev_len) rc.episode_length = ev_len;
      if (g.seed_given) rc.seed = g.seed;
      std::shared_ptr<const Policy> policy;
      sim::TaskSpec task = sim::TaskSpec::by_name(sim::task_from_string(ev_task.empty() ? "transfer_cube" : ev_task));
      if (ev_method == "act") {
        if (ev_ckpt.empty()) throw ConfigError("eval --method act needs --ckpt");
        auto loaded = load_act(ev_ckpt);
        task.obs_mode = loaded.model->config().obs_mode;
        task.image_h = loaded.model->config().image_h;
        task.image_w = loaded.model->config().image_w;
        policy = std::make_shared<ActPolicy>(loaded.model, loaded.norm);
      } else if (ev_method == "bc") {
        if (ev_ckpt.empty()) throw ConfigError("eval --method bc needs --ckpt");
        auto loaded = baselines::load_bc(ev_ckpt);
        policy = std::make_shared<baselines::BcPolicy>(loaded.model, loaded.norm);
      } else if (ev_method == "knn") {
        if (ev_data.empty()) throw ConfigError("eval --method knn needs --data");
        const auto ds = demo::load_dataset(ev_data);
        if (ev_task.empty()) task = harness::task_for_dataset(ds.manifest);
        auto sel = baselines::knn_build(ds, ev_k ? ev_k : cfg.chunk, cfg.train.seed, cfg.train.val_fraction,
                                        cfg.knn_candidates);
        log_line("knn neighbours " + std::to_string(sel.index->neighbors()));
        policy = std::make_shared<baselines::KnnPolicy>(sel.index);
      } else {
        throw ConfigError("unknown method '" + ev_method + "' (expected act, bc or knn)");
      }
      if (ev_k && ev_k != policy->chunk_size()) policy = std::make_shared<harness::TruncatedPolicy>(policy, ev_k);
      const auto results = infer::evaluate(*policy, task, rc, ev_episodes, g.threads);
      fs::create_directories(ev_out);
      io::write_text(fs::path(ev_out) / "results.csv", infer::results_csv(results));
      print_summary(results);
    } else if (*ab) {
      harness::SweepSpec spec;
      spec.base = load_config(g);
      if (ab_episodes) spec.base.episodes = ab_episodes;
      if (g.seed_given) spec.base.rollout.seed = g.seed;
      spec.axis = harness::axis_from_string(ab_axis);
      spec.values = split_list(ab_values);
      spec.methods = split_list(ab_methods);
      spec.seeds.clear();
      for (std::size_t i = 0; i < ab_seeds; ++i) spec.seeds.push_back(g.seed + i);
      spec.validate();
      const auto ds = demo::load_dataset(ab_data);
      harness::SweepOptions opts;
      opts.threads = g.threads;
      opts.save_checkpoints = ab_save;
      opts.log = log_line;
      const auto table = harness::run_sweep(spec, ds, ab_out, opts);
      std::fputs(harness::summary_markdown(table).c_str(), stdout);
    } else if (*rep) {
      const auto table = harness::read_report(rep_in);
      harness::emit_report(table, rep_in);
      std::fputs(harness::summary_markdown(table).c_str(), stdout);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kUsage;
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return kInvariant;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvariant;
  }
  return kOk;
}
