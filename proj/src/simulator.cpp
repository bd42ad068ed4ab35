#include "act/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act::sim {

std::string to_string(TaskName t) { return t == TaskName::TransferCube ? "transfer_cube" : "peg_insertion"; }

TaskName task_from_string(const std::string& s) {
  if (s == "transfer_cube") return TaskName::TransferCube;
  if (s == "peg_insertion") return TaskName::PegInsertion;
  throw ConfigError("unknown task '" + s + "' (expected transfer_cube | peg_insertion)");
}

std::string to_string(ObsMode m) { return m == ObsMode::State ? "state" : "pixels"; }

ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "state") return ObsMode::State;
  if (s == "pixels") return ObsMode::Pixels;
  throw ConfigError("unknown observation mode '" + s + "' (expected state | pixels)");
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

const ObjectState* SimState::object(ObjectKind kind) const {
  for (const auto& o : objects)
    if (o.kind == kind) return &o;
  return nullptr;
}

std::vector<float> Observation::state_vector() const {
  std::vector<float> v(joints.begin(), joints.end());
  v.insert(v.end(), objects.begin(), objects.end());
  return v;
}

TaskSpec TaskSpec::transfer_cube() {
  TaskSpec t;
  t.name = TaskName::TransferCube;
  t.objects = {ObjectKind::Cube};
  t.init_regions = {Rect{0.0, 0.2, 0.0, 0.0}};
  t.milestone_names = {"touched", "lifted", "transfer"};
  return t;
}

TaskSpec TaskSpec::peg_insertion() {
  TaskSpec t;
  t.name = TaskName::PegInsertion;
  t.objects = {ObjectKind::Socket, ObjectKind::Peg};
  t.init_regions = {Rect{-0.2, 0.0, 0.0, 0.0}, Rect{0.0, 0.2, 0.0, 0.0}};
  t.milestone_names = {"grasp", "contact", "insert"};
  return t;
}

TaskSpec TaskSpec::by_name(TaskName name) {
  return name == TaskName::TransferCube ? transfer_cube() : peg_insertion();
}

Joints home_joints(Side side) {
  // Fingertip at (∓0.3, 0.25), last link pointing straight down.
  const Joints left{1.6918293669655131, -0.8298316245918765, -2.4327940691685335};
  if (side == Side::Left) return left;
  return {kPi - left[0], -left[1], -left[2]};
}

std::array<Vec2, 4> arm_points(const Joints& joints, Side side) {
  std::array<Vec2, 4> pts;
  Vec2 p{kBaseX[static_cast<int>(side)], 0.0};
  pts[0] = p;
  double angle = 0.0;
  for (std::size_t i = 0; i < kJointsPerArm; ++i) {
    angle += joints[i];
    p.x += kLinkLengths[i] * std::cos(angle);
    p.y += kLinkLengths[i] * std::sin(angle);
    pts[i + 1] = p;
  }
  return pts;
}

Vec2 forward_kinematics(const Joints& joints, Side side) { return arm_points(joints, side)[3]; }

std::array<double, 6> jacobian(const Joints& joints, Side side) {
  (void)side;
  std::array<double, 3> cum{};
  double angle = 0.0;
  for (std::size_t i = 0; i < kJointsPerArm; ++i) {
    angle += joints[i];
    cum[i] = angle;
  }
  std::array<double, 6> jac{};
  for (std::size_t i = 0; i < kJointsPerArm; ++i) {
    double dx = 0.0, dy = 0.0;
    for (std::size_t j = i; j < kJointsPerArm; ++j) {
      dx -= kLinkLengths[j] * std::sin(cum[j]);
      dy += kLinkLengths[j] * std::cos(cum[j]);
    }
    jac[i] = dx;
    jac[3 + i] = dy;
  }
  return jac;
}

ObjectGeometry object_geometry(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Cube:
      return {0.04, 0.04};
    case ObjectKind::Peg:
      return {0.08, 0.016};
    case ObjectKind::Socket:
      return {0.06, 0.04};
  }
  return {0.0, 0.0};
}

namespace {

std::vector<Vec2> default_grasp_points(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Cube:
      return {{-0.012, 0.02}, {0.012, 0.02}};
    case ObjectKind::Peg:
      return {{0.02, 0.008}};
    case ObjectKind::Socket:
      return {{-0.015, 0.02}};
  }
  return {};
}

Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 local_to_world(const ObjectState& obj, Vec2 local) { return Vec2{obj.x, obj.y} + rotate(local, obj.theta); }

double clamp_joint(double q) { return std::clamp(q, -kPi, kPi); }

double track(double current, double target) {
  return current + std::clamp(target - current, -kRateLimit, kRateLimit);
}

ObjectState* find_object(SimState& s, int id) {
  for (auto& o : s.objects)
    if (o.id == id) return &o;
  return nullptr;
}

}  // namespace

Vec2 grasp_point_world(const ObjectState& obj, std::size_t i) { return local_to_world(obj, obj.grasp_points.at(i)); }

Vec2 peg_tip(const ObjectState& peg) {
  const auto g = object_geometry(ObjectKind::Peg);
  return local_to_world(peg, {-g.width / 2.0, g.height / 2.0});
}

Vec2 socket_mouth(const ObjectState& socket) {
  const auto g = object_geometry(ObjectKind::Socket);
  return local_to_world(socket, {g.width / 2.0, g.height / 2.0});
}

std::array<bool, 3> milestone_predicates(const SimState& s) {
  std::array<bool, 3> p{false, false, false};
  const auto& left_att = s.attachments[0];
  const auto& right_att = s.attachments[1];
  if (s.task == TaskName::TransferCube) {
    const ObjectState* cube = s.object(ObjectKind::Cube);
    if (!cube) return p;
    const Vec2 tip = forward_kinematics(s.right_joints, Side::Right);
    double best = 1e9;
    for (std::size_t i = 0; i < cube->grasp_points.size(); ++i) best = std::min(best, distance(tip, grasp_point_world(*cube, i)));
    const bool held_right = right_att.object_id == cube->id;
    const bool held_left = left_att.object_id == cube->id;
    p[0] = best <= kGraspEps || held_right;
    p[1] = (held_left || held_right) && cube->y > kLiftHeight;
    p[2] = held_left && s.right_grip >= kReleaseThreshold;
  } else {
    const ObjectState* peg = s.object(ObjectKind::Peg);
    const ObjectState* socket = s.object(ObjectKind::Socket);
    if (!peg || !socket) return p;
    const bool both = right_att.object_id == peg->id && left_att.object_id == socket->id;
    const Vec2 tip = peg_tip(*peg);
    const Vec2 mouth = socket_mouth(*socket);
    p[0] = both;
    p[1] = both && distance(tip, mouth) <= kContactDist;
    // Inside the cavity along its axis, vertically within the clearance.
    const Vec2 rel = rotate(tip - mouth, -socket->theta);
    p[2] = both && rel.x <= -kContactDist && rel.x >= -kSocketCavityDepth && std::fabs(rel.y) <= kInsertClearance;
  }
  return p;
}

std::array<bool, 3> milestones(const SimState& state) {
  return {(state.milestones & 1u) != 0, (state.milestones & 2u) != 0, (state.milestones & 4u) != 0};
}

Action joint_vector(const SimState& s) {
  Action a{};
  for (std::size_t i = 0; i < 3; ++i) {
    a[i] = static_cast<float>(s.left_joints[i]);
    a[4 + i] = static_cast<float>(s.right_joints[i]);
  }
  a[3] = static_cast<float>(s.left_grip);
  a[7] = static_cast<float>(s.right_grip);
  return a;
}

Simulator::Simulator(TaskSpec task) : task_(std::move(task)) {
  if (task_.init_regions.size() != task_.objects.size()) throw ConfigError("task needs one init region per object");
  if (task_.episode_length == 0) throw ConfigError("episode length must be positive");
}

SimState Simulator::reset(std::uint64_t seed) const {
  SimState s;
  s.task = task_.name;
  s.left_joints = home_joints(Side::Left);
  s.right_joints = home_joints(Side::Right);
  s.left_grip = 1.0;
  s.right_grip = 1.0;
  s.rng_state = mix64(seed);
  auto draw = [&s]() {
    s.rng_state = mix64(s.rng_state);
    return static_cast<double>(s.rng_state >> 11) * 0x1.0p-53;
  };
  for (std::size_t i = 0; i < task_.objects.size(); ++i) {
    const auto& r = task_.init_regions[i];
    ObjectState o;
    o.id = static_cast<int>(i);
    o.kind = task_.objects[i];
    const double ux = draw();
    const double uy = draw();
    o.x = r.x_min + ux * (r.x_max - r.x_min);
    o.y = r.y_min + uy * (r.y_max - r.y_min);
    o.theta = 0.0;
    o.grasp_points = default_grasp_points(o.kind);
    s.objects.push_back(std::move(o));
  }
  return s;
}

std::pair<SimState, Observation> Simulator::step(const SimState& state, const Action& action) const {
  for (float a : action) {
    if (!std::isfinite(a)) throw std::invalid_argument("step: non-finite action rejected");
  }
  SimState s = state;
  for (std::size_t i = 0; i < 3; ++i) {
    s.left_joints[i] = clamp_joint(track(state.left_joints[i], clamp_joint(action[i])));
    s.right_joints[i] = clamp_joint(track(state.right_joints[i], clamp_joint(action[4 + i])));
  }
  s.left_grip = std::clamp(track(state.left_grip, std::clamp<double>(action[3], 0.0, 1.0)), 0.0, 1.0);
  s.right_grip = std::clamp(track(state.right_grip, std::clamp<double>(action[7], 0.0, 1.0)), 0.0, 1.0);

  const std::array<Vec2, 2> tips{forward_kinematics(s.left_joints, Side::Left),
                                 forward_kinematics(s.right_joints, Side::Right)};
  const std::array<double, 2> prev_grip{state.left_grip, state.right_grip};
  const std::array<double, 2> new_grip{s.left_grip, s.right_grip};

  // Releases first, then grasps, left before right.
  for (int side = 0; side < 2; ++side) {
    auto& att = s.attachments[side];
    if (att.object_id >= 0 && new_grip[side] > kReleaseThreshold) {
      if (auto* obj = find_object(s, att.object_id)) obj->y = 0.0;
      att = Attachment{};
    }
  }
  for (int side = 0; side < 2; ++side) {
    if (!(prev_grip[side] >= kCloseThreshold && new_grip[side] < kCloseThreshold)) continue;
    if (s.attachments[side].object_id >= 0) continue;
    const ObjectState* best = nullptr;
    double best_d = kGraspEps;
    for (const auto& obj : s.objects) {
      for (std::size_t g = 0; g < obj.grasp_points.size(); ++g) {
        const double d = distance(tips[side], grasp_point_world(obj, g));
        if (d <= best_d) {
          best_d = d;
          best = &obj;
        }
      }
    }
    if (!best) continue;
    auto& other = s.attachments[1 - side];
    if (other.object_id == best->id) other = Attachment{};  // hand-over
    s.attachments[side] = Attachment{best->id, Vec2{best->x, best->y} - tips[side]};
  }
  for (int side = 0; side < 2; ++side) {
    const auto& att = s.attachments[side];
    if (att.object_id < 0) continue;
    if (auto* obj = find_object(s, att.object_id)) {
      const Vec2 p = tips[side] + att.offset;
      obj->x = p.x;
      obj->y = p.y;
    }
  }
  s.tick = state.tick + 1;

  const auto pred = milestone_predicates(s);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool prev_ok = i == 0 || (s.milestones & (1u << (i - 1)));
    if (pred[i] && prev_ok) s.milestones |= (1u << i);
  }
  return {s, observe(s)};
}

Observation Simulator::observe(const SimState& s) const {
  Observation o;
  o.joints = joint_vector(s);
  for (const auto& obj : s.objects) {
    o.objects.push_back(static_cast<float>(obj.x));
    o.objects.push_back(static_cast<float>(obj.y));
  }
  if (task_.obs_mode == ObsMode::Pixels) o.image = render(s, task_.image_w, task_.image_h);
  o.tick = s.tick;
  return o;
}

namespace {

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a, ap = p - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0.0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, Vec2{a.x + t * ab.x, a.y + t * ab.y});
}

bool inside_box(const ObjectState& obj, Vec2 p, double x0, double x1, double y0, double y1) {
  const Vec2 local = rotate(p - Vec2{obj.x, obj.y}, -obj.theta);
  return local.x >= x0 && local.x <= x1 && local.y >= y0 && local.y <= y1;
}

}  // namespace

std::vector<float> render(const SimState& state, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ConfigError("render: empty image size");
  std::vector<float> img(width * height * 3);
  const double sx = (kViewX1 - kViewX0) / static_cast<double>(width);
  const double sy = (kViewY1 - kViewY0) / static_cast<double>(height);
  constexpr double kArmHalfWidth = 0.012;
  const auto left = arm_points(state.left_joints, Side::Left);
  const auto right = arm_points(state.right_joints, Side::Right);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const Vec2 p{kViewX0 + (static_cast<double>(c) + 0.5) * sx, kViewY1 - (static_cast<double>(r) + 0.5) * sy};
      Color col = kTableColor;
      for (const auto* pts : {&left, &right}) {
        for (std::size_t i = 0; i < 3; ++i) {
          if (segment_distance(p, (*pts)[i], (*pts)[i + 1]) <= kArmHalfWidth) col = kArmColor;
        }
      }
      // Sockets first so an inserted peg stays visible.
      for (ObjectKind kind : {ObjectKind::Socket, ObjectKind::Cube, ObjectKind::Peg}) {
        for (const auto& obj : state.objects) {
          if (obj.kind != kind) continue;
          const auto g = object_geometry(kind);
          if (!inside_box(obj, p, -g.width / 2.0, g.width / 2.0, 0.0, g.height)) continue;
          if (kind == ObjectKind::Cube) col = kCubeColor;
          if (kind == ObjectKind::Peg) col = kPegColor;
          if (kind == ObjectKind::Socket) {
            const double mid = g.height / 2.0;
            const bool cavity = inside_box(obj, p, g.width / 2.0 - kSocketCavityDepth, g.width / 2.0,
                                           mid - kSocketCavityHalfHeight, mid + kSocketCavityHalfHeight);
            col = cavity ? kTableColor : kSocketColor;
          }
        }
      }
      float* px = img.data() + (r * width + c) * 3;
      px[0] = col.r;
      px[1] = col.g;
      px[2] = col.b;
    }
  }
  return img;
}

}  // namespace act::sim
