// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
// Expensive stages share trained policies: the deterministic k = 20 ACT runs
// feed the end-to-end, chunk-size, CVAE and temporal-ensemble checks.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "act/baselines.hpp"
#include "act/demonstrations.hpp"
#include "act/harness.hpp"
#include "act/inference.hpp"
#include "act/model.hpp"
#include "act/serialize.hpp"
#include "act/training.hpp"
#include "gradcheck.hpp"
#include "op_cases.hpp"
#include "toy_act.hpp"

namespace fs = std::filesystem;
using namespace act;
using namespace act::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Run budget. Desk-scale stand-ins for the full-length training runs.
struct Budget {
  std::size_t demos = 50;
  std::uint64_t demo_seed = 1;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t episodes = 50;
  std::uint64_t eval_seed = 1000;
  std::size_t act_steps = 3000;        // deterministic demos
  std::size_t act_steps_stoch = 20000;  // stochastic demos
  std::size_t bc_steps = 20000;
  std::size_t gradcheck_entries = 4;  // per parameter tensor of the toy model
};

struct Line {
  bool pass = false;
  std::string detail;
};

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string num(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void log(const std::string& s) { std::cout << "  " << s << std::endl; }

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (!fs::exists(a / n) || read_bytes(a / n) != read_bytes(b / n)) return false;
  return true;
}

// ---------------------------------------------------------------------------

struct EvalSet {
  infer::Summary chunked, ensembled;
};

class Run {
 public:
  Run(Budget b, fs::path work) : b_(std::move(b)), work_(std::move(work)) {}

  const demo::Dataset& det() {
    if (!det_) {
      det_ = demo::generate_dataset(sim::TaskSpec::transfer_cube(), b_.demos, demo::DemoStyle::deterministic(),
                                    b_.demo_seed);
      log("generated " + std::to_string(det_->size()) + " deterministic demos");
    }
    return *det_;
  }
  const demo::Dataset& stoch() {
    if (!stoch_) {
      stoch_ = demo::generate_dataset(sim::TaskSpec::transfer_cube(), b_.demos, demo::DemoStyle::stochastic(),
                                      b_.demo_seed);
      log("generated " + std::to_string(stoch_->size()) + " stochastic demos");
    }
    return *stoch_;
  }

  harness::CellConfig cell(const std::string& method, std::size_t k, std::uint64_t seed, bool cvae,
                           std::size_t steps) const {
    harness::CellConfig c;
    c.method = method;
    c.chunk = k;
    c.model.use_cvae = cvae;
    c.train.steps = steps;
    c.train.seed = seed;
    c.bc.steps = b_.bc_steps;
    c.bc.seed = seed;
    c.episodes = b_.episodes;
    c.rollout.seed = b_.eval_seed;
    return c;
  }

  infer::Summary evaluate(const Policy& p, infer::Mode mode, double m = 0.1) const {
    infer::RolloutConfig rc;
    rc.mode = mode;
    rc.m = m;
    rc.seed = b_.eval_seed;
    const auto res = infer::evaluate(p, sim::TaskSpec::transfer_cube(), rc, b_.episodes);
    return infer::summarize(res);
  }

  // Trains (once) and evaluates in both execution modes.
  const EvalSet& policy_set(const std::string& key, const demo::Dataset& ds, const harness::CellConfig& c) {
    auto it = sets_.find(key);
    if (it != sets_.end()) return it->second;
    const auto t0 = Clock::now();
    const auto tp = harness::train_policy(ds, c);
    const double train_s = seconds_since(t0);
    EvalSet e;
    e.chunked = evaluate(*tp.policy, infer::Mode::Chunked);
    e.ensembled = evaluate(*tp.policy, infer::Mode::Ensembled);
    log(key + ": chunked " + pct(e.chunked.success_pct[2]) + "% jerk " + num(e.chunked.jerk) + ", ensembled " +
        pct(e.ensembled.success_pct[2]) + "% jerk " + num(e.ensembled.jerk) + " (train " + num(train_s, 3) +
        " s, total " + num(seconds_since(t0), 3) + " s)");
    if (c.method == "act" && c.chunk == 1) k1_policies_.push_back(tp.policy);
    return sets_.emplace(key, e).first->second;
  }

  std::string act_key(const std::string& data, std::size_t k, bool cvae, std::uint64_t seed) const {
    return "act/" + data + "/k" + std::to_string(k) + (cvae ? "/cvae" : "/nocvae") + "/s" + std::to_string(seed);
  }
  const EvalSet& act_det(std::size_t k, bool cvae, std::uint64_t seed) {
    return policy_set(act_key("det", k, cvae, seed), det(), cell("act", k, seed, cvae, b_.act_steps));
  }
  const EvalSet& act_stoch(bool cvae, std::uint64_t seed) {
    return policy_set(act_key("stoch", 20, cvae, seed), stoch(), cell("act", 20, seed, cvae, b_.act_steps_stoch));
  }
  const EvalSet& baseline(const std::string& method, std::size_t k, std::uint64_t seed) {
    return policy_set(method + "/det/k" + std::to_string(k) + "/s" + std::to_string(seed), det(),
                      cell(method, k, seed, true, 0));
  }

  const std::map<std::string, EvalSet>& sets() const { return sets_; }
  const std::vector<std::shared_ptr<Policy>>& k1_policies() const { return k1_policies_; }
  const Budget& budget() const { return b_; }
  const fs::path& work() const { return work_; }

 private:
  Budget b_;
  fs::path work_;
  std::optional<demo::Dataset> det_, stoch_;
  std::map<std::string, EvalSet> sets_;
  std::vector<std::shared_ptr<Policy>> k1_policies_;
};

double mean_success(const std::vector<infer::Summary>& s) {
  double t = 0.0;
  for (const auto& x : s) t += x.success_pct[2];
  return s.empty() ? 0.0 : t / static_cast<double>(s.size());
}

// ---------------------------------------------------------------------------
// 1. Gradients against central differences, per entry.

Line criterion_gradients(const Budget& b) {
  const auto t0 = Clock::now();
  std::size_t checked = 0, failed = 0;
  double worst_norm = 0.0;
  std::set<std::string> failing_ops;
  for (const auto& c : op_cases()) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto [f, in] = c.make(s);
      const auto r = gradcheck(f, in, s);
      checked += r.checked;
      failed += r.failures;
      if (!r.ok()) failing_ops.insert(c.name);
      for (const auto& t : r.tensors) worst_norm = std::max(worst_norm, t.relative());
    }
  }
  std::size_t toy_checked = 0, toy_failed = 0;
  double toy_worst_norm = 0.0;
  GradCheckOptions opt;
  opt.max_entries = b.gradcheck_entries;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Toy toy(s);
    std::vector<GradInput> in;
    for (auto& e : toy.model->params().entries()) in.push_back({e.name, e.tensor});
    const auto r = gradcheck([&] { return toy.loss(); }, in, s, opt);
    toy_checked += r.checked;
    toy_failed += r.failures;
    for (const auto& t : r.tensors) toy_worst_norm = std::max(toy_worst_norm, t.relative());
  }
  const double secs = seconds_since(t0);
  std::string failing;
  for (const auto& n : failing_ops) failing += (failing.empty() ? "" : ",") + n;
  log("ops: " + std::to_string(failed) + "/" + std::to_string(checked) + " entries outside tolerance" +
      (failing.empty() ? "" : " (" + failing + ")") + ", worst norm-wise rel " + num(worst_norm, 3));
  log("toy ACT loss: " + std::to_string(toy_failed) + "/" + std::to_string(toy_checked) +
      " entries outside tolerance, worst norm-wise rel " + num(toy_worst_norm, 3));
  Line l;
  l.pass = failed == 0 && toy_failed == 0 && secs < 60.0;
  l.detail = std::to_string(failed + toy_failed) + " of " + std::to_string(checked + toy_checked) +
             " entries outside rel 1e-3 / abs 1e-5, " + num(secs, 3) + " s";
  return l;
}

// 2. KL closed form, Monte Carlo agreement, zero at the prior.

Line criterion_kl() {
  Rng rng(7);
  bool formula = true, mc = true;
  double worst = 0.0;
  for (int g = 0; g < 5; ++g) {
    const std::size_t d = 4;
    std::vector<float> mu(d), lv(d);
    for (auto& v : mu) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : lv) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    double by_hand = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double s2 = std::exp(static_cast<double>(lv[i]));
      by_hand += 0.5 * (static_cast<double>(mu[i]) * mu[i] + s2 - lv[i] - 1.0);
    }
    const double closed = kl_closed_form(mu, lv);
    formula = formula && std::fabs(closed - by_hand) <= 1e-12 * std::max(1.0, by_hand);
    // E_q[log q(z) - log p(z)] with z = mu + sigma·eps.
    const std::size_t n = 1000000;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double term = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double eps = rng.normal();
        const double z = mu[i] + std::exp(0.5 * lv[i]) * eps;
        term += -0.5 * eps * eps - 0.5 * lv[i] + 0.5 * z * z;
      }
      acc += term;
    }
    const double est = acc / static_cast<double>(n);
    const double rel = std::fabs(est - closed) / closed;
    worst = std::max(worst, rel);
    mc = mc && rel <= 0.02;
  }
  const std::vector<float> zero(6, 0.0f);
  const bool origin = kl_closed_form(zero, zero) == 0.0;
  Line l;
  l.pass = formula && mc && origin;
  l.detail = std::string("closed form ") + (formula ? "ok" : "wrong") + ", Monte Carlo worst rel " + num(worst, 3) +
             " over 5 Gaussians, KL at origin " + (origin ? "0" : "nonzero");
  return l;
}

// 3. Temporal-ensemble algebra.

Line criterion_ensemble(Run& run) {
  Rng rng(3);
  auto random_action = [&] {
    sim::Action a;
    for (auto& v : a) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    return a;
  };
  bool identity = true, convex = true;
  for (int i = 0; i < 200; ++i) {
    const sim::Action a = random_action();
    const std::vector<sim::Action> one{a};
    identity = identity && infer::ensemble_combine(one, rng.uniform(0.0, 3.0)) == a;
    std::vector<sim::Action> bucket(1 + rng.below(20));
    for (auto& x : bucket) x = random_action();
    const auto out = infer::ensemble_combine(bucket, rng.uniform(0.0, 3.0));
    for (std::size_t j = 0; j < out.size(); ++j) {
      float lo = bucket[0][j], hi = bucket[0][j];
      for (const auto& x : bucket) {
        lo = std::min(lo, x[j]);
        hi = std::max(hi, x[j]);
      }
      convex = convex && out[j] >= lo && out[j] <= hi;
    }
  }
  sim::Action older{}, newer{};
  older.fill(1.0f);
  const std::vector<sim::Action> pair{older, newer};
  const auto two = infer::ensemble_combine(pair, std::log(2.0));
  bool two_thirds = true;
  for (float v : two) two_thirds = two_thirds && std::fabs(v - 2.0f / 3.0f) <= 1e-6f;

  // k = 1: an untrained ACT policy, a kNN policy, and the trained k = 1 ACT runs.
  const auto& ds = run.det();
  std::vector<std::shared_ptr<Policy>> policies;
  ModelConfig mc = model_config_for(ds.manifest);
  mc.chunk = 1;
  const auto untrained = std::make_shared<ActModel>(mc, 5);
  policies.push_back(std::make_shared<ActPolicy>(untrained, normalizer_from_manifest(ds.manifest)));
  policies.push_back(harness::train_policy(ds, run.cell("knn", 1, 0, true, 0)).policy);
  for (const auto& p : run.k1_policies()) policies.push_back(p);
  bool bit_exact = true;
  for (const auto& p : policies) {
    infer::RolloutConfig rc;
    rc.seed = run.budget().eval_seed;
    rc.mode = infer::Mode::Chunked;
    const auto a = infer::evaluate(*p, sim::TaskSpec::transfer_cube(), rc, 10);
    rc.mode = infer::Mode::Ensembled;
    const auto b = infer::evaluate(*p, sim::TaskSpec::transfer_cube(), rc, 10);
    for (std::size_t i = 0; i < a.size(); ++i)
      bit_exact = bit_exact && a[i].actions == b[i].actions && a[i].milestones == b[i].milestones;
    bit_exact = bit_exact && infer::results_csv(a) == infer::results_csv(b);
  }
  Line l;
  l.pass = identity && convex && two_thirds && bit_exact;
  l.detail = std::string("identity ") + (identity ? "ok" : "broken") + ", convex bounds " + (convex ? "ok" : "broken") +
             ", m = ln 2 pair " + num(two[0], 7) + ", k = 1 ensembled vs chunked " +
             (bit_exact ? "bit-exact" : "differ") + " on " + std::to_string(policies.size()) + " policies";
  return l;
}

// 4. End-to-end learning on deterministic demos.

Line criterion_end_to_end(Run& run) {
  const auto t0 = Clock::now();
  std::vector<infer::Summary> s;
  for (auto seed : run.budget().seeds) s.push_back(run.act_det(20, true, seed).ensembled);
  const double secs = seconds_since(t0);
  const double success = mean_success(s);
  Line l;
  l.pass = success >= 70.0 && secs <= 45.0 * 60.0;
  l.detail = "ACT k = 20 ensembled: " + pct(success) + "% final milestone over " + std::to_string(s.size()) +
             " seeds x " + std::to_string(run.budget().episodes) + " episodes, " + num(secs / 60.0, 3) + " min";
  return l;
}

// 5. Chunk-size trend.

Line criterion_chunk_size(Run& run) {
  std::map<std::string, std::pair<double, double>> by_method;  // k = 1, k = 20
  for (const std::string method : {"act", "bc", "knn"}) {
    std::vector<infer::Summary> k1, k20;
    for (auto seed : run.budget().seeds) {
      if (method == "act") {
        k1.push_back(run.act_det(1, true, seed).chunked);
        k20.push_back(run.act_det(20, true, seed).ensembled);
      } else {
        k1.push_back(run.baseline(method, 1, seed).chunked);
        k20.push_back(run.baseline(method, 20, seed).chunked);
      }
    }
    by_method[method] = {mean_success(k1), mean_success(k20)};
  }
  const auto& [a1, a20] = by_method["act"];
  const auto& [b1, b20] = by_method["bc"];
  const auto& [n1, n20] = by_method["knn"];
  Line l;
  l.pass = a1 + 30.0 <= a20 && b1 + 15.0 <= b20 && n1 + 15.0 <= n20;
  l.detail = "k=1 -> k=20: act " + pct(a1) + " -> " + pct(a20) + ", bc " + pct(b1) + " -> " + pct(b20) + ", knn " +
             pct(n1) + " -> " + pct(n20);
  return l;
}

// 6. CVAE trend. Scored in the default (ensembled) execution mode.

Line criterion_cvae(Run& run) {
  std::vector<infer::Summary> det_on, det_off, st_on, st_off;
  for (auto seed : run.budget().seeds) {
    det_on.push_back(run.act_det(20, true, seed).ensembled);
    det_off.push_back(run.act_det(20, false, seed).ensembled);
  }
  st_on.push_back(run.act_stoch(true, 0).ensembled);
  st_off.push_back(run.act_stoch(false, 0).ensembled);
  const double st_gap = mean_success(st_on) - mean_success(st_off);
  const double det_gap = mean_success(det_on) - mean_success(det_off);
  Line l;
  l.pass = st_gap >= 20.0 && std::fabs(det_gap) <= 10.0;
  l.detail = "stochastic: cvae " + pct(mean_success(st_on)) + " vs none " + pct(mean_success(st_off)) + " (gap " +
             pct(st_gap) + "); deterministic: cvae " + pct(mean_success(det_on)) + " vs none " +
             pct(mean_success(det_off)) + " (gap " + pct(det_gap) + ")";
  return l;
}

// 7. Temporal ensembling on every trained k > 1 ACT rollout set; kNN reported.

Line criterion_ensemble_effect(Run& run) {
  for (auto seed : run.budget().seeds) {
    run.act_det(20, true, seed);
    run.act_det(20, false, seed);
  }
  run.act_stoch(true, 0);
  run.act_stoch(false, 0);
  bool pass = true;
  std::size_t n = 0;
  std::string bad;
  for (const auto& [key, e] : run.sets()) {
    if (key.rfind("act/", 0) != 0 || key.find("/k1/") != std::string::npos) continue;
    ++n;
    const bool smoother = e.ensembled.jerk < e.chunked.jerk;
    const bool kept = e.ensembled.success_pct[2] >= e.chunked.success_pct[2] - 5.0;
    if (!smoother || !kept) {
      pass = false;
      bad += " " + key;
    }
  }
  std::vector<infer::Summary> kc, ke;
  for (auto seed : run.budget().seeds) {
    const auto& e = run.baseline("knn", 20, seed);
    kc.push_back(e.chunked);
    ke.push_back(e.ensembled);
  }
  double kjc = 0.0, kje = 0.0;
  for (std::size_t i = 0; i < kc.size(); ++i) {
    kjc += kc[i].jerk / static_cast<double>(kc.size());
    kje += ke[i].jerk / static_cast<double>(ke.size());
  }
  log("knn k = 20: chunked " + pct(mean_success(kc)) + "% jerk " + num(kjc) + ", ensembled " + pct(mean_success(ke)) +
      "% jerk " + num(kje) + (mean_success(ke) < mean_success(kc) ? " (ensembling degrades kNN)" : ""));
  Line l;
  l.pass = pass && n > 0;
  l.detail = std::to_string(n) + " ACT rollout sets" +
             (bad.empty() ? ", all smoother and within 5 points" : ", failing:" + bad);
  return l;
}

// 8. Determinism and bit-exact formats.

Line criterion_determinism(Run& run) {
  const auto& ds = run.det();
  const fs::path root = run.work() / "determinism";
  fs::remove_all(root);
  std::vector<std::string> broken;

  // Datasets: load(write(ds)) == ds, and writing it again gives the same bytes.
  demo::write_dataset(root / "data_a", ds);
  const auto loaded = demo::load_dataset(root / "data_a");
  demo::write_dataset(root / "data_b", loaded);
  std::vector<std::string> files{"manifest.json"};
  for (const auto& f : ds.manifest.files) files.push_back(f);
  if (loaded.episodes != ds.episodes || !same_files(root / "data_a", root / "data_b", files))
    broken.push_back("dataset");

  // Training twice: loss curves and checkpoints.
  harness::CellConfig c = run.cell("act", 5, 3, true, 40);
  c.model.hidden = 32;
  c.model.feedforward = 64;
  c.model.enc_layers = 1;
  c.model.dec_layers = 1;
  c.train.val_every = 20;
  const auto t1 = harness::train_policy(ds, c), t2 = harness::train_policy(ds, c);
  if (t1.report.to_csv() != t2.report.to_csv()) broken.push_back("loss curve");
  fs::create_directories(root / "ckpt_a");
  fs::create_directories(root / "ckpt_b");
  t1.save(root / "ckpt_a");
  t2.save(root / "ckpt_b");
  if (!same_files(root / "ckpt_a", root / "ckpt_b", {"model.ckpt", "model.ckpt.json"})) broken.push_back("checkpoint");

  // Checkpoints: load then save reproduces the bytes.
  const auto la = load_act(root / "ckpt_a" / "model.ckpt");
  fs::create_directories(root / "ckpt_c");
  save_act(root / "ckpt_c" / "model.ckpt", *la.model, la.norm, {{"train", la.sidecar.at("train")}});
  if (!same_files(root / "ckpt_a", root / "ckpt_c", {"model.ckpt", "model.ckpt.json"}))
    broken.push_back("checkpoint round trip");

  // Episodes and per-episode CSVs, including a reloaded policy.
  infer::RolloutConfig rc;
  rc.seed = 11;
  const ActPolicy reloaded(la.model, la.norm);
  const auto e1 = infer::evaluate(*t1.policy, sim::TaskSpec::transfer_cube(), rc, 6);
  const auto e2 = infer::evaluate(*t2.policy, sim::TaskSpec::transfer_cube(), rc, 6);
  const auto e3 = infer::evaluate(reloaded, sim::TaskSpec::transfer_cube(), rc, 6);
  for (std::size_t i = 0; i < e1.size(); ++i)
    if (e1[i].actions != e2[i].actions || e1[i].actions != e3[i].actions) {
      broken.push_back("episodes");
      break;
    }
  if (infer::results_csv(e1) != infer::results_csv(e2) || infer::results_csv(e1) != infer::results_csv(e3))
    broken.push_back("episode CSV");

  // Sweep reports: CSVs, summary and SVG.
  harness::SweepSpec spec;
  spec.axis = harness::Axis::ChunkSize;
  spec.values = {"1", "10"};
  spec.methods = {"knn", "bc"};
  spec.seeds = {0, 1};
  spec.base = c;
  spec.base.bc.steps = 200;
  spec.base.bc.val_every = 100;
  spec.base.episodes = 4;
  const auto r1 = harness::run_sweep(spec, ds, root / "sweep_a");
  const auto r2 = harness::run_sweep(spec, ds, root / "sweep_b");
  const std::vector<std::string> report{"results.csv", "aggregate.csv", "errors.csv", "summary.md", "plot.svg"};
  if (!(r1 == r2) || !same_files(root / "sweep_a", root / "sweep_b", report)) broken.push_back("sweep report");
  if (!(harness::read_report(root / "sweep_a") == r1)) broken.push_back("results.csv round trip");

  Line l;
  l.pass = broken.empty();
  std::string what;
  for (const auto& b : broken) what += (what.empty() ? "" : ", ") + b;
  l.detail = broken.empty() ? "datasets, loss curves, checkpoints, episodes, CSVs and SVG reproduce bit-exactly"
                            : "not reproducible: " + what;
  return l;
}

// 9. Scripted expert on both tasks.

Line criterion_expert() {
  std::string detail;
  bool pass = true;
  for (const auto& task : {sim::TaskSpec::transfer_cube(), sim::TaskSpec::peg_insertion()}) {
    int ok = 0;
    for (std::uint64_t s = 0; s < 100; ++s)
      ok += demo::record_episode(task, demo::DemoStyle::deterministic(), s).success();
    pass = pass && ok >= 98;
    detail += (detail.empty() ? "" : ", ") + sim::to_string(task.name) + " " + std::to_string(ok) + "/100";
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  Budget b;
  std::string work = (fs::temp_directory_path() / "act_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--episodes", b.episodes, "evaluation episodes per policy");
  app.add_option("--act-steps", b.act_steps, "ACT steps on deterministic demos");
  app.add_option("--act-steps-stoch", b.act_steps_stoch, "ACT steps on stochastic demos");
  app.add_option("--bc-steps", b.bc_steps, "BC-MLP steps");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  fs::create_directories(work);
  Run run(b, work);
  std::map<int, Line> lines;
  auto stage = [&](int c, const std::function<Line()>& f) {
    if (!wanted(c)) return;
    std::cout << "criterion " << c << " ..." << std::endl;
    const auto t0 = Clock::now();
    try {
      lines[c] = f();
    } catch (const std::exception& e) {
      lines[c] = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (lines[c].pass ? "PASS" : "FAIL") << "  " << lines[c].detail << "  ["
              << num(seconds_since(t0), 3) << " s]" << std::endl;
  };
  // The expert check runs before any learning experiment.
  stage(9, criterion_expert);
  stage(1, [&] { return criterion_gradients(b); });
  stage(2, criterion_kl);
  stage(4, [&] { return criterion_end_to_end(run); });
  stage(5, [&] { return criterion_chunk_size(run); });
  stage(6, [&] { return criterion_cvae(run); });
  stage(7, [&] { return criterion_ensemble_effect(run); });
  stage(3, [&] { return criterion_ensemble(run); });
  stage(8, [&] { return criterion_determinism(run); });

  std::cout << "\nsummary\n";
  bool all = true;
  for (const auto& [c, l] : lines) {
    std::cout << "criterion " << c << ": " << (l.pass ? "PASS" : "FAIL") << "  " << l.detail << "\n";
    all = all && l.pass;
  }
  return all ? 0 : 1;
}
