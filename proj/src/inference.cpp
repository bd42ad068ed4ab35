#include "act/inference.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act::infer {

std::string to_string(Mode m) { return m == Mode::Chunked ? "chunked" : "ensembled"; }

Mode mode_from_string(const std::string& s) {
  if (s == "chunked") return Mode::Chunked;
  if (s == "ensembled") return Mode::Ensembled;
  throw ConfigError("unknown rollout mode '" + s + "' (expected chunked or ensembled)");
}

void RolloutConfig::validate() const {
  if (mode == Mode::Ensembled && !(m > 0.0)) throw ConfigError("ensembled mode needs m > 0");
}

sim::Action ensemble_combine(std::span<const sim::Action> bucket, double m) {
  if (bucket.empty()) throw InvariantError("ensemble_combine: empty bucket");
  std::array<double, sim::kActDim> acc{};
  double wsum = 0.0;
  for (std::size_t i = 0; i < bucket.size(); ++i) {
    const double w = std::exp(-m * static_cast<double>(i));
    wsum += w;
    for (std::size_t d = 0; d < sim::kActDim; ++d) acc[d] += w * bucket[i][d];
  }
  sim::Action out{};
  for (std::size_t d = 0; d < sim::kActDim; ++d) {
    // Clamp to the entries' range so float rounding cannot leave the hull.
    float lo = bucket[0][d], hi = bucket[0][d];
    for (const auto& a : bucket) {
      lo = std::min(lo, a[d]);
      hi = std::max(hi, a[d]);
    }
    out[d] = std::clamp(static_cast<float>(acc[d] / wsum), lo, hi);
  }
  return out;
}

EnsembleBuffer::EnsembleBuffer(std::size_t horizon, std::size_t k) : k_(k), buckets_(horizon) {
  if (k == 0) throw ConfigError("EnsembleBuffer: k must be >= 1");
}

void EnsembleBuffer::deposit(std::size_t t, std::span<const sim::Action> chunk) {
  if (chunk.size() != k_) throw DimensionError("EnsembleBuffer: chunk length differs from k");
  for (std::size_t i = 0; i < chunk.size() && t + i < buckets_.size(); ++i) buckets_[t + i].push_back(chunk[i]);
}

sim::Action EnsembleBuffer::combine(std::size_t t, double m) const { return ensemble_combine(buckets_.at(t), m); }

double jerk_statistic(std::span<const float> actions) {
  const std::size_t d = sim::kActDim;
  const std::size_t T = actions.size() / d;
  if (T < 2) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t i = 0; i < d; ++i) total += std::fabs(actions[(t + 1) * d + i] - actions[t * d + i]);
  return total / static_cast<double>(T - 1);
}

std::uint64_t episode_seed(std::uint64_t base, std::size_t index) {
  return derive_seed(derive_seed(base, 0xe7a1), index);
}

namespace {

struct Running {
  sim::SimState state;
  sim::Observation obs;
  EnsembleBuffer buffer;
  std::vector<sim::Action> chunk;  // chunked mode: current open-loop plan
  std::size_t chunk_start = 0;
  bool done = false;
};

}  // namespace

std::vector<EpisodeResult> rollout_batch(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                                         std::size_t first, std::size_t count) {
  cfg.validate();
  sim::TaskSpec spec = task;
  if (cfg.episode_length) spec.episode_length = cfg.episode_length;
  const sim::Simulator simulator(spec);
  const std::size_t T = spec.episode_length, k = policy.chunk_size();
  std::vector<EpisodeResult> results(count);
  std::vector<Running> run;
  run.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& r = results[i];
    r.episode = first + i;
    r.seed = episode_seed(cfg.seed, first + i);
    auto s = simulator.reset(r.seed);
    auto o = simulator.observe(s);
    run.push_back(Running{std::move(s), std::move(o), EnsembleBuffer(T, k), {}, 0, false});
    r.actions.reserve(T * sim::kActDim);
  }
  std::vector<sim::Observation> batch_obs;
  std::vector<std::size_t> batch_idx;
  for (std::size_t t = 0; t < T; ++t) {
    const bool query = cfg.mode == Mode::Ensembled || t % k == 0;
    if (query) {
      batch_obs.clear();
      batch_idx.clear();
      for (std::size_t i = 0; i < count; ++i) {
        if (run[i].done) continue;
        batch_obs.push_back(run[i].obs);
        batch_idx.push_back(i);
      }
      if (batch_idx.empty()) break;
      const auto pred = policy.predict(batch_obs);
      if (pred.size() != batch_idx.size() * k * sim::kActDim) throw DimensionError("policy returned wrong chunk size");
      for (std::size_t j = 0; j < batch_idx.size(); ++j) {
        auto& r = run[batch_idx[j]];
        std::vector<sim::Action> chunk(k);
        for (std::size_t i = 0; i < k; ++i)
          std::copy_n(pred.begin() + static_cast<std::ptrdiff_t>((j * k + i) * sim::kActDim), sim::kActDim,
                      chunk[i].begin());
        ++results[batch_idx[j]].queries;
        if (cfg.mode == Mode::Ensembled) {
          r.buffer.deposit(t, chunk);
        } else {
          r.chunk = std::move(chunk);
          r.chunk_start = t;
        }
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      auto& r = run[i];
      if (r.done) continue;
      auto& res = results[i];
      const sim::Action a = cfg.mode == Mode::Ensembled ? r.buffer.combine(t, cfg.m) : r.chunk[t - r.chunk_start];
      bool finite = true;
      for (float v : a) finite = finite && std::isfinite(v);
      if (!finite) {
        res.aborted = true;
        res.error = "non-finite action at tick " + std::to_string(t);
        r.done = true;
        continue;
      }
      res.actions.insert(res.actions.end(), a.begin(), a.end());
      auto [next, obs] = simulator.step(r.state, a);
      r.state = std::move(next);
      r.obs = std::move(obs);
      if (res.steps_to_success < 0 && sim::milestones(r.state)[2]) res.steps_to_success = static_cast<long>(t + 1);
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    results[i].milestones = results[i].aborted ? std::array<bool, 3>{} : sim::milestones(run[i].state);
    if (results[i].aborted) results[i].steps_to_success = -1;
    results[i].jerk = jerk_statistic(results[i].actions);
  }
  return results;
}

EpisodeResult rollout(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                      std::size_t episode_index) {
  return rollout_batch(policy, task, cfg, episode_index, 1).front();
}

std::vector<EpisodeResult> evaluate(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                                    std::size_t n_episodes, std::size_t threads) {
  threads = std::max<std::size_t>(1, std::min(threads, n_episodes));
  if (threads == 1) return rollout_batch(policy, task, cfg, 0, n_episodes);
  std::vector<std::vector<EpisodeResult>> parts(threads);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t per = (n_episodes + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t first = w * per;
    const std::size_t count = first < n_episodes ? std::min(per, n_episodes - first) : 0;
    pool.emplace_back([&, w, first, count] {
      try {
        if (count) parts[w] = rollout_batch(policy, task, cfg, first, count);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<EpisodeResult> out;
  for (auto& p : parts)
    for (auto& r : p) out.push_back(std::move(r));
  return out;
}

Summary summarize(std::span<const EpisodeResult> results) {
  Summary s;
  s.episodes = results.size();
  if (results.empty()) return s;
  for (const auto& r : results) {
    for (std::size_t i = 0; i < 3; ++i) s.success_pct[i] += r.milestones[i] ? 1.0 : 0.0;
    s.jerk += r.jerk;
    s.aborted += r.aborted;
  }
  for (auto& p : s.success_pct) p = 100.0 * p / static_cast<double>(results.size());
  s.jerk /= static_cast<double>(results.size());
  return s;
}

std::string results_csv(std::span<const EpisodeResult> results) {
  std::ostringstream os;
  os << "episode,seed,milestone_1,milestone_2,milestone_3,steps_to_success,jerk\n";
  os << std::setprecision(9);
  for (const auto& r : results) {
    os << r.episode << ',' << r.seed << ',' << r.milestones[0] << ',' << r.milestones[1] << ',' << r.milestones[2]
       << ',' << r.steps_to_success << ',' << r.jerk << '\n';
  }
  return os.str();
}

}  // namespace act::infer
