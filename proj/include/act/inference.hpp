#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "act/policy.hpp"
#include "act/simulator.hpp"

namespace act::infer {

enum class Mode { Chunked, Ensembled };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct RolloutConfig {
  Mode mode = Mode::Ensembled;
  double m = 0.1;
  std::size_t episode_length = 0;  // 0: the task's own length
  std::uint64_t seed = 0;

  void validate() const;
};

// Weighted mean with w_i = exp(-m·i), i = 0 the oldest entry.
sim::Action ensemble_combine(std::span<const sim::Action> bucket, double m);

// B[t] collects every action predicted for timestep t, oldest first.
class EnsembleBuffer {
 public:
  EnsembleBuffer(std::size_t horizon, std::size_t k);

  // Predictions made at step t for t, t+1, ...; entries past the horizon are dropped.
  void deposit(std::size_t t, std::span<const sim::Action> chunk);
  const std::vector<sim::Action>& bucket(std::size_t t) const { return buckets_.at(t); }
  sim::Action combine(std::size_t t, double m) const;
  std::size_t horizon() const { return buckets_.size(); }

 private:
  std::size_t k_;
  std::vector<std::vector<sim::Action>> buckets_;
};

// Mean per-step L1 change of executed actions (rows of act_dim).
double jerk_statistic(std::span<const float> actions);

struct EpisodeResult {
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  std::array<bool, 3> milestones{};
  long steps_to_success = -1;  // ticks until the final milestone latched, -1 if never
  double jerk = 0.0;
  std::size_t queries = 0;
  bool aborted = false;
  std::string error;
  std::vector<float> actions;  // executed, T × act_dim

  bool success() const { return milestones[2]; }
};

// Episode seeds for evaluation are derived from cfg.seed and the episode index.
std::uint64_t episode_seed(std::uint64_t base, std::size_t index);

// Runs episodes [first, first+count) in lockstep, querying the policy in
// batches. Results do not depend on how episodes are grouped.
std::vector<EpisodeResult> rollout_batch(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                                         std::size_t first, std::size_t count);

EpisodeResult rollout(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                      std::size_t episode_index);

// All n episodes, split over `threads` workers (each worker owns a contiguous range).
std::vector<EpisodeResult> evaluate(const Policy& policy, const sim::TaskSpec& task, const RolloutConfig& cfg,
                                    std::size_t n_episodes, std::size_t threads = 1);

struct Summary {
  std::array<double, 3> success_pct{};  // per milestone
  double jerk = 0.0;                    // mean over episodes
  std::size_t episodes = 0;
  std::size_t aborted = 0;
};
Summary summarize(std::span<const EpisodeResult> results);

// episode,seed,milestone_1,milestone_2,milestone_3,steps_to_success,jerk
std::string results_csv(std::span<const EpisodeResult> results);

}  // namespace act::infer
