#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "act/rng.hpp"
#include "act/simulator.hpp"

namespace act::demo {

struct IkResult {
  sim::Joints joints{};
  bool converged = false;
  int iterations = 0;
  double error = 0.0;
};

// Damped least-squares IK on fingertip position:
// dq = Jᵀ (J Jᵀ + λ² I)⁻¹ e, repeated until |e| < tol or max_iter.
IkResult solve_ik(sim::Vec2 target, const sim::Joints& init, sim::Side side, double damping = 0.1,
                  int max_iter = 50, double tol = 1e-4);

// 10τ³ − 15τ⁴ + 6τ⁵
double min_jerk(double tau);

enum class StyleMode { Deterministic, Stochastic };

struct DemoStyle {
  StyleMode mode = StyleMode::Deterministic;
  double pause_prob = 0.0;               // per waypoint
  std::array<int, 2> pause_len{0, 0};    // inclusive range, ticks
  double waypoint_jitter = 0.0;          // σ in metres
  std::vector<double> handover_modes{0.0};  // alternative hand-over x positions

  static DemoStyle deterministic();
  static DemoStyle stochastic();
  static DemoStyle by_name(const std::string& name);
  std::string name() const { return mode == StyleMode::Deterministic ? "deterministic" : "stochastic"; }
  void validate() const;
};

nlohmann::json to_json(const DemoStyle& style);
DemoStyle style_from_json(const nlohmann::json& j);

// Waypoint state machine with min-jerk Cartesian interpolation and IK.
// Stateful: call act() once per tick, starting from the reset state.
class ScriptedExpert {
 public:
  ScriptedExpert(sim::TaskSpec task, DemoStyle style, std::uint64_t seed);

  sim::Action act(const sim::SimState& state);

  bool ik_flagged() const { return ik_flagged_; }
  std::size_t handover_mode() const { return mode_index_; }
  std::size_t planned_length() const;
  std::size_t pause_ticks() const { return pause_ticks_; }

 private:
  struct ArmTarget {
    std::function<sim::Vec2(const sim::SimState&)> goal;  // empty: hold
    bool jitter = false;
  };
  struct Segment {
    int duration = 1;
    std::array<ArmTarget, 2> arm;
    std::array<std::optional<double>, 2> grip;
  };

  void plan(const sim::SimState& s);
  void plan_transfer(const sim::SimState& s);
  void plan_insertion(const sim::SimState& s);
  void insert_pauses();
  void begin_segment(const sim::SimState& s);

  sim::TaskSpec task_;
  DemoStyle style_;
  Rng rng_;
  bool planned_ = false;
  std::vector<Segment> segments_;
  std::size_t seg_ = 0;
  int seg_tick_ = 0;
  std::size_t mode_index_ = 0;
  std::size_t pause_ticks_ = 0;
  std::array<sim::Vec2, 2> cart_target_{};
  std::array<sim::Vec2, 2> seg_start_{};
  std::array<sim::Vec2, 2> seg_goal_{};
  std::array<sim::Joints, 2> joint_target_{};
  std::array<double, 2> grip_target_{1.0, 1.0};
  bool ik_flagged_ = false;
};

struct Episode {
  sim::TaskName task = sim::TaskName::TransferCube;
  std::uint64_t seed = 0;
  std::size_t obs_dim = 0;
  std::vector<float> observations;  // T × obs_dim
  std::vector<float> actions;       // T × act_dim, absolute targets
  std::vector<float> images;        // T × H × W × 3 or empty
  std::size_t image_h = 0, image_w = 0;
  std::array<bool, 3> milestones{};
  float tick_rate_hz = static_cast<float>(sim::kTickRateHz);
  bool ik_flagged = false;

  std::size_t length() const { return obs_dim ? observations.size() / obs_dim : 0; }
  bool success() const { return milestones[2]; }
  std::span<const float> observation(std::size_t t) const {
    return {observations.data() + t * obs_dim, obs_dim};
  }
  std::span<const float> action(std::size_t t) const {
    return {actions.data() + t * sim::kActDim, sim::kActDim};
  }
  std::span<const float> image(std::size_t t) const {
    const std::size_t n = image_h * image_w * 3;
    return {images.data() + t * n, n};
  }
  friend bool operator==(const Episode&, const Episode&) = default;
};

// Runs the scripted expert from reset(seed) for the task's episode length.
Episode record_episode(const sim::TaskSpec& task, const DemoStyle& style, std::uint64_t seed);

// Re-executes the stored actions from the stored seed.
std::array<bool, 3> replay_milestones(const sim::TaskSpec& task, const Episode& ep);

void save_episode(const std::filesystem::path& path, const Episode& ep);
Episode load_episode(const std::filesystem::path& path);

struct Stats {
  std::vector<float> mean;
  std::vector<float> std;
};
// Per-dimension mean and population std, accumulated in f64 in
// (episode, timestep) order.
Stats compute_stats(const std::vector<Episode>& episodes, bool actions);

struct Manifest {
  std::string task;
  std::size_t n_episodes = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> resampled_seeds;  // scripted failures, replaced
  DemoStyle style;
  std::size_t obs_dim = 0;
  std::size_t act_dim = sim::kActDim;
  std::size_t episode_length = 0;
  std::string obs_mode = "state";
  std::array<std::size_t, 2> image_hw{0, 0};
  std::vector<float> action_mean, action_std, obs_mean, obs_std;
  std::vector<std::string> files;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

struct Dataset {
  Manifest manifest;
  std::vector<Episode> episodes;
  std::size_t size() const { return episodes.size(); }
};

// Produces exactly n successful episodes; failed scripted episodes are
// replaced with fresh seeds. Aborts with InvariantError once more than half
// of the attempts have failed.
Dataset generate_dataset(const sim::TaskSpec& task, std::size_t n_episodes, const DemoStyle& style,
                         std::uint64_t base_seed, std::function<void(const std::string&)> log = {});
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

struct Chunk {
  std::vector<float> obs;      // state vector at t
  std::vector<float> image;    // H×W×3 at t (pixel datasets)
  std::vector<float> actions;  // k × act_dim, padded with the final action
  std::vector<std::uint8_t> mask;  // k entries, 1 = real step
};

// Observation at t and actions t..t+k-1; slots past the episode end repeat
// the final action and are masked out.
Chunk load_chunk(const Dataset& ds, std::size_t episode, std::size_t t, std::size_t k);

}  // namespace act::demo
