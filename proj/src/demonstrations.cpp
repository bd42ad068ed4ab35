#include "act/demonstrations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "act/errors.hpp"
#include "act/serialize.hpp"

namespace act::demo {

using sim::Side;
using sim::SimState;
using sim::Vec2;

IkResult solve_ik(Vec2 target, const sim::Joints& init, Side side, double damping, int max_iter, double tol) {
  IkResult r;
  r.joints = init;
  const double lam2 = damping * damping;
  for (int it = 0;; ++it) {
    const Vec2 tip = sim::forward_kinematics(r.joints, side);
    const double ex = target.x - tip.x, ey = target.y - tip.y;
    r.error = std::hypot(ex, ey);
    r.iterations = it;
    if (r.error < tol) {
      r.converged = true;
      return r;
    }
    if (it >= max_iter) return r;
    const auto J = sim::jacobian(r.joints, side);
    // A = J Jᵀ + λ² I (2×2), solve A y = e, dq = Jᵀ y.
    const double a00 = J[0] * J[0] + J[1] * J[1] + J[2] * J[2] + lam2;
    const double a01 = J[0] * J[3] + J[1] * J[4] + J[2] * J[5];
    const double a11 = J[3] * J[3] + J[4] * J[4] + J[5] * J[5] + lam2;
    const double det = a00 * a11 - a01 * a01;
    const double y0 = (a11 * ex - a01 * ey) / det;
    const double y1 = (a00 * ey - a01 * ex) / det;
    for (std::size_t j = 0; j < 3; ++j) {
      r.joints[j] = std::clamp(r.joints[j] + J[j] * y0 + J[3 + j] * y1, -sim::kPi, sim::kPi);
    }
  }
}

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

DemoStyle DemoStyle::deterministic() { return DemoStyle{}; }

DemoStyle DemoStyle::stochastic() {
  DemoStyle s;
  s.mode = StyleMode::Stochastic;
  s.pause_prob = 0.25;
  s.pause_len = {3, 10};
  s.waypoint_jitter = 0.01;
  s.handover_modes = {-0.06, 0.06};
  return s;
}

DemoStyle DemoStyle::by_name(const std::string& name) {
  if (name == "deterministic") return deterministic();
  if (name == "stochastic") return stochastic();
  throw ConfigError("unknown demo style '" + name + "' (expected deterministic or stochastic)");
}

void DemoStyle::validate() const {
  if (pause_prob < 0.0 || pause_prob > 1.0) throw ConfigError("pause_prob must lie in [0, 1]");
  if (pause_len[0] < 0 || pause_len[1] < pause_len[0]) throw ConfigError("pause_len must be a non-negative range");
  if (!(waypoint_jitter >= 0.0)) throw ConfigError("waypoint_jitter must be non-negative");
  if (handover_modes.empty()) throw ConfigError("handover_modes must not be empty");
}

nlohmann::json to_json(const DemoStyle& s) {
  return {{"name", s.name()},
          {"pause_prob", s.pause_prob},
          {"pause_len", {s.pause_len[0], s.pause_len[1]}},
          {"waypoint_jitter", s.waypoint_jitter},
          {"handover_modes", s.handover_modes}};
}

DemoStyle style_from_json(const nlohmann::json& j) {
  DemoStyle s = DemoStyle::by_name(j.at("name").get<std::string>());
  if (j.contains("pause_prob")) s.pause_prob = j.at("pause_prob").get<double>();
  if (j.contains("pause_len")) s.pause_len = {j.at("pause_len").at(0).get<int>(), j.at("pause_len").at(1).get<int>()};
  if (j.contains("waypoint_jitter")) s.waypoint_jitter = j.at("waypoint_jitter").get<double>();
  if (j.contains("handover_modes")) s.handover_modes = j.at("handover_modes").get<std::vector<double>>();
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kMeetHeight = 0.26;
constexpr double kApproachHeight = 0.08;
constexpr double kLiftBy = 0.2;

Vec2 tip_of(const SimState& s, Side side) { return sim::forward_kinematics(s.joints(side), side); }

const sim::Attachment& attachment(const SimState& s, Side side) { return s.attachments[static_cast<int>(side)]; }

}  // namespace

ScriptedExpert::ScriptedExpert(sim::TaskSpec task, DemoStyle style, std::uint64_t seed)
    : task_(std::move(task)), style_(std::move(style)), rng_(derive_seed(seed, 0x5c41)) {
  style_.validate();
}

std::size_t ScriptedExpert::planned_length() const {
  std::size_t n = 0;
  for (const auto& seg : segments_) n += static_cast<std::size_t>(seg.duration);
  return n;
}

void ScriptedExpert::plan(const SimState& s) {
  for (int a = 0; a < 2; ++a) {
    const auto side = static_cast<Side>(a);
    joint_target_[a] = s.joints(side);
    cart_target_[a] = tip_of(s, side);
    grip_target_[a] = s.grip(side);
  }
  mode_index_ = static_cast<std::size_t>(rng_.below(style_.handover_modes.size()));
  if (task_.name == sim::TaskName::TransferCube) {
    plan_transfer(s);
  } else {
    plan_insertion(s);
  }
  insert_pauses();
  planned_ = true;
}

void ScriptedExpert::plan_transfer(const SimState&) {
  const double sigma = style_.waypoint_jitter;
  const Vec2 meet{style_.handover_modes[mode_index_] + rng_.normal() * sigma, kMeetHeight + rng_.normal() * sigma};
  const Vec2 cube_grasp_right{0.012, 0.02};
  const Vec2 cube_grasp_left{-0.012, 0.02};

  auto cube = [](const SimState& st) -> const sim::ObjectState& { return *st.object(sim::ObjectKind::Cube); };
  auto right_grasp = [=](const SimState& st) {
    const auto& c = cube(st);
    return Vec2{c.x, c.y} + cube_grasp_right;
  };

  Segment approach;
  approach.duration = 30;
  approach.arm[1] = {[=](const SimState& st) { return right_grasp(st) + Vec2{0.0, kApproachHeight}; }, true};
  approach.arm[0] = {[=](const SimState&) { return meet + Vec2{-0.13, 0.04}; }, true};
  approach.grip = {1.0, 1.0};

  Segment descend;
  descend.duration = 15;
  descend.arm[1] = {right_grasp, false};

  Segment close;
  close.duration = 14;
  close.grip[1] = 0.0;

  Segment lift;
  lift.duration = 20;
  lift.arm[1] = {[=](const SimState& st) { return tip_of(st, Side::Right) + Vec2{0.0, kLiftBy}; }, true};

  // Carry so that the cube's reference point lands on the meeting point.
  Segment carry;
  carry.duration = 30;
  carry.arm[1] = {[=](const SimState& st) { return meet - attachment(st, Side::Right).offset; }, false};
  carry.arm[0] = {[=](const SimState&) { return meet + cube_grasp_left + Vec2{-0.06, 0.0}; }, true};

  Segment reach;
  reach.duration = 15;
  reach.arm[0] = {[=](const SimState& st) {
                    const auto& c = cube(st);
                    return Vec2{c.x, c.y} + cube_grasp_left;
                  },
                  false};

  Segment take;
  take.duration = 14;
  take.grip[0] = 0.0;

  Segment release;
  release.duration = 12;
  release.grip[1] = 1.0;

  Segment retreat;
  retreat.duration = 20;
  retreat.arm[1] = {[=](const SimState& st) { return tip_of(st, Side::Right) + Vec2{0.1, 0.05}; }, true};

  segments_ = {approach, descend, close, lift, carry, reach, take, release, retreat};
}

void ScriptedExpert::plan_insertion(const SimState&) {
  const double sigma = style_.waypoint_jitter;
  const Vec2 mouth{style_.handover_modes[mode_index_] + rng_.normal() * sigma, kMeetHeight + rng_.normal() * sigma};
  const Vec2 socket_grasp{-0.015, 0.02};
  const Vec2 peg_grasp{0.02, 0.008};
  const auto sg = sim::object_geometry(sim::ObjectKind::Socket);
  const auto pg = sim::object_geometry(sim::ObjectKind::Peg);
  const Vec2 mouth_from_socket{sg.width / 2.0, sg.height / 2.0};
  const Vec2 tip_from_peg{-pg.width / 2.0, pg.height / 2.0};

  auto obj_pos = [](const SimState& st, sim::ObjectKind k) {
    const auto* o = st.object(k);
    return Vec2{o->x, o->y};
  };

  Segment approach;
  approach.duration = 30;
  approach.arm[0] = {[=](const SimState& st) {
                       return obj_pos(st, sim::ObjectKind::Socket) + socket_grasp + Vec2{0.0, kApproachHeight};
                     },
                     true};
  approach.arm[1] = {[=](const SimState& st) {
                       return obj_pos(st, sim::ObjectKind::Peg) + peg_grasp + Vec2{0.0, kApproachHeight};
                     },
                     true};
  approach.grip = {1.0, 1.0};

  Segment descend;
  descend.duration = 15;
  descend.arm[0] = {[=](const SimState& st) { return obj_pos(st, sim::ObjectKind::Socket) + socket_grasp; }, false};
  descend.arm[1] = {[=](const SimState& st) { return obj_pos(st, sim::ObjectKind::Peg) + peg_grasp; }, false};

  Segment close;
  close.duration = 14;
  close.grip = {0.0, 0.0};

  Segment lift;
  lift.duration = 20;
  lift.arm[0] = {[=](const SimState& st) { return tip_of(st, Side::Left) + Vec2{0.0, kLiftBy}; }, true};
  lift.arm[1] = {[=](const SimState& st) { return tip_of(st, Side::Right) + Vec2{0.0, kLiftBy}; }, true};

  // Socket mouth onto the meeting point, peg tip 5 cm to its right.
  Segment align;
  align.duration = 30;
  align.arm[0] = {[=](const SimState& st) { return mouth - mouth_from_socket - attachment(st, Side::Left).offset; },
                  false};
  align.arm[1] = {[=](const SimState& st) {
                    return mouth + Vec2{0.05, 0.0} - tip_from_peg - attachment(st, Side::Right).offset;
                  },
                  false};

  Segment insert;
  insert.duration = 25;
  insert.arm[1] = {[=](const SimState& st) {
                     return mouth + Vec2{-0.025, 0.0} - tip_from_peg - attachment(st, Side::Right).offset;
                   },
                   false};

  segments_ = {approach, descend, close, lift, align, insert};
}

void ScriptedExpert::insert_pauses() {
  pause_ticks_ = 0;
  if (style_.pause_prob <= 0.0 || style_.pause_len[1] <= 0) return;
  constexpr long kMargin = 15;
  long slack = static_cast<long>(task_.episode_length) - static_cast<long>(planned_length()) - kMargin;
  std::vector<Segment> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i > 0 && rng_.bernoulli(style_.pause_prob)) {
      const auto span = static_cast<std::uint64_t>(style_.pause_len[1] - style_.pause_len[0] + 1);
      const long len = style_.pause_len[0] + static_cast<long>(rng_.below(span));
      if (len > 0 && len <= slack) {
        Segment hold;
        hold.duration = static_cast<int>(len);
        out.push_back(hold);
        slack -= len;
        pause_ticks_ += static_cast<std::size_t>(len);
      }
    }
    out.push_back(segments_[i]);
  }
  segments_ = std::move(out);
}

void ScriptedExpert::begin_segment(const SimState& s) {
  const auto& seg = segments_[seg_];
  for (int a = 0; a < 2; ++a) {
    seg_start_[a] = cart_target_[a];
    seg_goal_[a] = cart_target_[a];
    if (seg.arm[a].goal) {
      Vec2 g = seg.arm[a].goal(s);
      if (seg.arm[a].jitter && style_.waypoint_jitter > 0.0) {
        g.x += rng_.normal() * style_.waypoint_jitter;
        g.y += rng_.normal() * style_.waypoint_jitter;
      }
      seg_goal_[a] = g;
    }
    if (seg.grip[a]) grip_target_[a] = *seg.grip[a];
  }
}

sim::Action ScriptedExpert::act(const SimState& s) {
  if (!planned_) plan(s);
  if (seg_ < segments_.size()) {
    if (seg_tick_ == 0) begin_segment(s);
    const auto& seg = segments_[seg_];
    ++seg_tick_;
    const double w = min_jerk(static_cast<double>(seg_tick_) / seg.duration);
    for (int a = 0; a < 2; ++a) {
      const Vec2 c = seg_start_[a] + Vec2{(seg_goal_[a].x - seg_start_[a].x) * w, (seg_goal_[a].y - seg_start_[a].y) * w};
      cart_target_[a] = c;
      const auto ik = solve_ik(c, joint_target_[a], static_cast<Side>(a));
      if (ik.converged) {
        joint_target_[a] = ik.joints;
      } else {
        ik_flagged_ = true;  // keep the last feasible joint target
      }
    }
    if (seg_tick_ >= seg.duration) {
      ++seg_;
      seg_tick_ = 0;
    }
  }
  sim::Action out{};
  for (std::size_t j = 0; j < 3; ++j) {
    out[j] = static_cast<float>(joint_target_[0][j]);
    out[4 + j] = static_cast<float>(joint_target_[1][j]);
  }
  out[3] = static_cast<float>(grip_target_[0]);
  out[7] = static_cast<float>(grip_target_[1]);
  return out;
}

// ---------------------------------------------------------------------------

Episode record_episode(const sim::TaskSpec& task, const DemoStyle& style, std::uint64_t seed) {
  sim::Simulator simulator(task);
  SimState s = simulator.reset(seed);
  ScriptedExpert expert(task, style, seed);
  Episode ep;
  ep.task = task.name;
  ep.seed = seed;
  ep.obs_dim = task.obs_dim();
  const std::size_t T = task.episode_length;
  ep.observations.reserve(T * ep.obs_dim);
  ep.actions.reserve(T * sim::kActDim);
  if (task.obs_mode == sim::ObsMode::Pixels) {
    ep.image_h = task.image_h;
    ep.image_w = task.image_w;
    ep.images.reserve(T * task.image_h * task.image_w * 3);
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto obs = simulator.observe(s);
    const auto v = obs.state_vector();
    ep.observations.insert(ep.observations.end(), v.begin(), v.end());
    if (!obs.image.empty()) ep.images.insert(ep.images.end(), obs.image.begin(), obs.image.end());
    const auto a = expert.act(s);
    ep.actions.insert(ep.actions.end(), a.begin(), a.end());
    s = simulator.step(s, a).first;
  }
  ep.milestones = sim::milestones(s);
  ep.ik_flagged = expert.ik_flagged();
  return ep;
}

std::array<bool, 3> replay_milestones(const sim::TaskSpec& task, const Episode& ep) {
  sim::Simulator simulator(task);
  SimState s = simulator.reset(ep.seed);
  for (std::size_t t = 0; t < ep.length(); ++t) {
    sim::Action a{};
    const auto src = ep.action(t);
    std::copy(src.begin(), src.end(), a.begin());
    s = simulator.step(s, a).first;
  }
  return sim::milestones(s);
}

namespace {

Tensor vec_tensor(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v));
}

const Tensor& find_tensor(const std::vector<NamedTensor>& ts, const std::string& name, const std::string& where) {
  for (const auto& nt : ts)
    if (nt.name == name) return nt.tensor;
  throw IoError(where + ": missing tensor '" + name + "'");
}

bool has_tensor(const std::vector<NamedTensor>& ts, const std::string& name) {
  return std::any_of(ts.begin(), ts.end(), [&](const NamedTensor& nt) { return nt.name == name; });
}

}  // namespace

void save_episode(const std::filesystem::path& path, const Episode& ep) {
  const std::size_t T = ep.length();
  std::vector<NamedTensor> ts;
  ts.push_back({"observations", Tensor::from({T, ep.obs_dim}, ep.observations)});
  ts.push_back({"actions", Tensor::from({T, sim::kActDim}, ep.actions)});
  if (!ep.images.empty()) ts.push_back({"images", Tensor::from({T, ep.image_h, ep.image_w, 3}, ep.images)});
  ts.push_back({"milestones", vec_tensor({static_cast<float>(ep.milestones[0]), static_cast<float>(ep.milestones[1]),
                                          static_cast<float>(ep.milestones[2])})});
  // 16-bit chunks are exactly representable in f32.
  std::vector<float> seed(4);
  for (std::size_t i = 0; i < 4; ++i) seed[i] = static_cast<float>((ep.seed >> (16 * i)) & 0xffffu);
  ts.push_back({"seed", vec_tensor(std::move(seed))});
  ts.push_back({"task_id", vec_tensor({static_cast<float>(static_cast<int>(ep.task))})});
  ts.push_back({"tick_rate_hz", vec_tensor({ep.tick_rate_hz})});
  ts.push_back({"flags", vec_tensor({ep.ik_flagged ? 1.0f : 0.0f})});
  io::save_tensors(path, io::kEpisodeMagic, ts);
}

Episode load_episode(const std::filesystem::path& path) {
  const auto ts = io::load_tensors(path, io::kEpisodeMagic);
  const std::string where = path.string();
  Episode ep;
  const auto& obs = find_tensor(ts, "observations", where);
  const auto& act = find_tensor(ts, "actions", where);
  if (obs.ndim() != 2 || act.ndim() != 2 || act.dim(1) != sim::kActDim || obs.dim(0) != act.dim(0)) {
    throw IoError(where + ": inconsistent observation/action shapes " + shape_str(obs.shape()) + " and " +
                  shape_str(act.shape()));
  }
  ep.obs_dim = obs.dim(1);
  ep.observations.assign(obs.data().begin(), obs.data().end());
  ep.actions.assign(act.data().begin(), act.data().end());
  if (has_tensor(ts, "images")) {
    const auto& img = find_tensor(ts, "images", where);
    if (img.ndim() != 4 || img.dim(0) != obs.dim(0) || img.dim(3) != 3) throw IoError(where + ": bad image tensor shape");
    ep.image_h = img.dim(1);
    ep.image_w = img.dim(2);
    ep.images.assign(img.data().begin(), img.data().end());
  }
  const auto& ms = find_tensor(ts, "milestones", where);
  if (ms.numel() != 3) throw IoError(where + ": expected 3 milestone flags");
  for (std::size_t i = 0; i < 3; ++i) ep.milestones[i] = ms.data()[i] != 0.0f;
  const auto& seed = find_tensor(ts, "seed", where);
  if (seed.numel() != 4) throw IoError(where + ": seed must have 4 chunks");
  ep.seed = 0;
  for (std::size_t i = 0; i < 4; ++i) ep.seed |= static_cast<std::uint64_t>(seed.data()[i]) << (16 * i);
  const int task_id = static_cast<int>(find_tensor(ts, "task_id", where).data()[0]);
  if (task_id != 0 && task_id != 1) throw IoError(where + ": unknown task id " + std::to_string(task_id));
  ep.task = static_cast<sim::TaskName>(task_id);
  ep.tick_rate_hz = find_tensor(ts, "tick_rate_hz", where).data()[0];
  if (has_tensor(ts, "flags")) ep.ik_flagged = find_tensor(ts, "flags", where).data()[0] != 0.0f;
  return ep;
}

Stats compute_stats(const std::vector<Episode>& episodes, bool actions) {
  if (episodes.empty()) throw ConfigError("cannot compute statistics of an empty dataset");
  const std::size_t dim = actions ? sim::kActDim : episodes.front().obs_dim;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  std::size_t count = 0;
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const auto row = actions ? ep.action(t) : ep.observation(t);
      if (row.size() != dim) throw DimensionError("episode dimension mismatch in compute_stats");
      for (std::size_t d = 0; d < dim; ++d) sum[d] += row[d];
    }
    count += ep.length();
  }
  Stats st;
  st.mean.resize(dim);
  std::vector<double> mean(dim);
  for (std::size_t d = 0; d < dim; ++d) mean[d] = sum[d] / static_cast<double>(count);
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const auto row = actions ? ep.action(t) : ep.observation(t);
      for (std::size_t d = 0; d < dim; ++d) {
        const double c = row[d] - mean[d];
        sq[d] += c * c;
      }
    }
  }
  st.std.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    st.mean[d] = static_cast<float>(mean[d]);
    st.std[d] = static_cast<float>(std::sqrt(sq[d] / static_cast<double>(count)));
  }
  return st;
}

nlohmann::json to_json(const Manifest& m) {
  return {{"task", m.task},
          {"n_episodes", m.n_episodes},
          {"seeds", m.seeds},
          {"resampled_seeds", m.resampled_seeds},
          {"style", to_json(m.style)},
          {"obs_dim", m.obs_dim},
          {"act_dim", m.act_dim},
          {"episode_length", m.episode_length},
          {"obs_mode", m.obs_mode},
          {"image_hw", {m.image_hw[0], m.image_hw[1]}},
          {"action_mean", m.action_mean},
          {"action_std", m.action_std},
          {"obs_mean", m.obs_mean},
          {"obs_std", m.obs_std},
          {"files", m.files}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.task = j.at("task").get<std::string>();
    m.n_episodes = j.at("n_episodes").get<std::size_t>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("resampled_seeds")) m.resampled_seeds = j.at("resampled_seeds").get<std::vector<std::uint64_t>>();
    m.style = style_from_json(j.at("style"));
    m.obs_dim = j.at("obs_dim").get<std::size_t>();
    m.act_dim = j.at("act_dim").get<std::size_t>();
    m.episode_length = j.value("episode_length", std::size_t{0});
    m.obs_mode = j.value("obs_mode", std::string("state"));
    if (j.contains("image_hw")) m.image_hw = {j.at("image_hw").at(0).get<std::size_t>(), j.at("image_hw").at(1).get<std::size_t>()};
    // f32 values are stored as the nearest double, so the cast back is exact.
    auto floats = [&](const char* key) {
      std::vector<float> out;
      for (double v : j.at(key).get<std::vector<double>>()) out.push_back(static_cast<float>(v));
      return out;
    };
    m.action_mean = floats("action_mean");
    m.action_std = floats("action_std");
    m.obs_mean = floats("obs_mean");
    m.obs_std = floats("obs_std");
    m.files = j.at("files").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  if (m.act_dim != sim::kActDim) throw IoError("manifest act_dim must be " + std::to_string(sim::kActDim));
  if (m.files.size() != m.n_episodes || m.seeds.size() != m.n_episodes) {
    throw IoError("manifest lists " + std::to_string(m.files.size()) + " files and " + std::to_string(m.seeds.size()) +
                  " seeds for " + std::to_string(m.n_episodes) + " episodes");
  }
  return m;
}

Dataset generate_dataset(const sim::TaskSpec& task, std::size_t n_episodes, const DemoStyle& style,
                         std::uint64_t base_seed, std::function<void(const std::string&)> log) {
  if (n_episodes == 0) throw ConfigError("n_episodes must be positive");
  style.validate();
  Dataset ds;
  auto& m = ds.manifest;
  std::size_t failures = 0;
  for (std::uint64_t attempt = 0; ds.episodes.size() < n_episodes; ++attempt) {
    const std::uint64_t seed = derive_seed(base_seed, attempt);
    Episode ep = record_episode(task, style, seed);
    if (ep.success() && !ep.ik_flagged) {
      m.seeds.push_back(seed);
      ds.episodes.push_back(std::move(ep));
      continue;
    }
    ++failures;
    m.resampled_seeds.push_back(seed);
    if (log) log("scripted episode with seed " + std::to_string(seed) + " failed; resampling");
    if (2 * failures > n_episodes) {
      throw InvariantError("scripted expert failed on " + std::to_string(failures) + " episodes, more than half of the " +
                           std::to_string(n_episodes) + " requested");
    }
  }
  m.task = sim::to_string(task.name);
  m.n_episodes = n_episodes;
  m.style = style;
  m.obs_dim = task.obs_dim();
  m.episode_length = task.episode_length;
  m.obs_mode = sim::to_string(task.obs_mode);
  if (task.obs_mode == sim::ObsMode::Pixels) m.image_hw = {task.image_h, task.image_w};
  const auto as = compute_stats(ds.episodes, true);
  const auto os = compute_stats(ds.episodes, false);
  m.action_mean = as.mean;
  m.action_std = as.std;
  m.obs_mean = os.mean;
  m.obs_std = os.std;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    std::ostringstream name;
    name << "episode_" << std::setw(4) << std::setfill('0') << i << ".acte";
    m.files.push_back(name.str());
  }
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) save_episode(dir / ds.manifest.files.at(i), ds.episodes[i]);
  io::write_text(dir / "manifest.json", to_json(ds.manifest).dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse " + (dir / "manifest.json").string() + ": " + e.what());
  }
  ds.manifest = manifest_from_json(j);
  for (const auto& f : ds.manifest.files) {
    ds.episodes.push_back(load_episode(dir / f));
    if (ds.episodes.back().obs_dim != ds.manifest.obs_dim) {
      throw IoError((dir / f).string() + ": observation width " + std::to_string(ds.episodes.back().obs_dim) +
                    " does not match manifest obs_dim " + std::to_string(ds.manifest.obs_dim));
    }
  }
  return ds;
}

Chunk load_chunk(const Dataset& ds, std::size_t episode, std::size_t t, std::size_t k) {
  if (episode >= ds.episodes.size()) throw DimensionError("episode index out of range");
  const auto& ep = ds.episodes[episode];
  const std::size_t T = ep.length();
  if (t >= T) throw DimensionError("timestep " + std::to_string(t) + " past episode length " + std::to_string(T));
  if (k == 0) throw ConfigError("chunk size must be positive");
  Chunk c;
  const auto o = ep.observation(t);
  c.obs.assign(o.begin(), o.end());
  if (!ep.images.empty()) {
    const auto im = ep.image(t);
    c.image.assign(im.begin(), im.end());
  }
  c.actions.resize(k * sim::kActDim);
  c.mask.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t src = std::min(t + i, T - 1);
    const auto a = ep.action(src);
    std::copy(a.begin(), a.end(), c.actions.begin() + static_cast<std::ptrdiff_t>(i * sim::kActDim));
    c.mask[i] = t + i < T ? 1 : 0;
  }
  return c;
}

}  // namespace act::demo
