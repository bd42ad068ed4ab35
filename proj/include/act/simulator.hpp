#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Deterministic planar bimanual world. The plane is vertical: x runs along
// the table, y is height above it. Two 3-link arms are mounted on the table
// at x = -0.4 (left) and x = +0.4 (right); each carries a 1-DoF gripper.
// Contact is kinematic: a closing gripper near a grasp point attaches the
// object, which then rigidly follows the fingertip until released.
namespace act::sim {

inline constexpr std::size_t kJointsPerArm = 3;
inline constexpr std::size_t kActDim = 8;  // left 3 + left grip + right 3 + right grip
inline constexpr double kRateLimit = 0.08;  // rad (or aperture units) per tick
inline constexpr double kGraspEps = 0.02;   // m
inline constexpr double kCloseThreshold = 0.3;
inline constexpr double kReleaseThreshold = 0.5;
inline constexpr double kLiftHeight = 0.05;
inline constexpr double kContactDist = 0.01;
inline constexpr double kInsertClearance = 0.005;
inline constexpr double kTickRateHz = 50.0;
inline constexpr std::array<double, 3> kLinkLengths{0.25, 0.20, 0.15};
inline constexpr std::array<double, 2> kBaseX{-0.4, 0.4};
inline constexpr double kPi = 3.14159265358979323846;

using Action = std::array<float, kActDim>;
using Joints = std::array<double, kJointsPerArm>;

enum class Side { Left = 0, Right = 1 };
enum class ObjectKind { Cube, Peg, Socket };
enum class TaskName { TransferCube, PegInsertion };
enum class ObsMode { State, Pixels };

std::string to_string(TaskName t);
TaskName task_from_string(const std::string& s);
std::string to_string(ObsMode m);
ObsMode obs_mode_from_string(const std::string& s);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
double distance(Vec2 a, Vec2 b);

struct ObjectState {
  int id = 0;
  ObjectKind kind = ObjectKind::Cube;
  double x = 0.0, y = 0.0, theta = 0.0;  // reference point is the bottom centre
  std::vector<Vec2> grasp_points;        // offsets from (x, y)
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct Attachment {
  int object_id = -1;  // -1 when empty
  Vec2 offset;         // object reference point minus fingertip
  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct SimState {
  TaskName task = TaskName::TransferCube;
  Joints left_joints{};
  Joints right_joints{};
  double left_grip = 1.0;
  double right_grip = 1.0;
  std::vector<ObjectState> objects;
  std::array<Attachment, 2> attachments{};  // indexed by Side
  std::uint64_t tick = 0;
  std::uint64_t rng_state = 0;
  std::uint32_t milestones = 0;  // latched bitmask, bit i = milestone i

  const Joints& joints(Side s) const { return s == Side::Left ? left_joints : right_joints; }
  double grip(Side s) const { return s == Side::Left ? left_grip : right_grip; }
  const ObjectState* object(ObjectKind kind) const;
  friend bool operator==(const SimState&, const SimState&) = default;
};

struct Observation {
  std::array<float, kActDim> joints{};
  std::vector<float> objects;  // (x, y) per object, task order
  std::vector<float> image;    // H×W×3 in [0,1], pixel mode only
  std::uint64_t tick = 0;

  // joints followed by object features; the proprioceptive + object-state
  // vector consumed by state-mode policies.
  std::vector<float> state_vector() const;
};

struct Rect {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};

struct TaskSpec {
  TaskName name = TaskName::TransferCube;
  std::vector<ObjectKind> objects;  // spawn order
  std::vector<Rect> init_regions;   // one per object
  std::array<std::string, 3> milestone_names;
  std::size_t episode_length = 200;
  ObsMode obs_mode = ObsMode::State;
  std::size_t image_h = 48;
  std::size_t image_w = 64;

  static TaskSpec transfer_cube();
  static TaskSpec peg_insertion();
  static TaskSpec by_name(TaskName name);

  std::size_t num_milestones() const { return milestone_names.size(); }
  std::size_t obs_dim() const { return kActDim + 2 * objects.size(); }
};

// Canonical arm configuration at reset.
Joints home_joints(Side side);

Vec2 forward_kinematics(const Joints& joints, Side side);
// Positions of base, elbow, wrist and fingertip.
std::array<Vec2, 4> arm_points(const Joints& joints, Side side);
// 2×3 positional Jacobian of the fingertip, row-major.
std::array<double, 6> jacobian(const Joints& joints, Side side);

// Geometry helpers shared by milestones, rendering and the scripted expert.
Vec2 grasp_point_world(const ObjectState& obj, std::size_t i);
Vec2 peg_tip(const ObjectState& peg);
Vec2 socket_mouth(const ObjectState& socket);

struct ObjectGeometry {
  double width, height;
};
ObjectGeometry object_geometry(ObjectKind kind);
inline constexpr double kSocketCavityDepth = 0.04;
inline constexpr double kSocketCavityHalfHeight = 0.013;

// Instantaneous milestone predicates (not latched).
std::array<bool, 3> milestone_predicates(const SimState& state);
// Latched flags stored in the state.
std::array<bool, 3> milestones(const SimState& state);

class Simulator {
 public:
  explicit Simulator(TaskSpec task);

  const TaskSpec& task() const { return task_; }

  SimState reset(std::uint64_t seed) const;
  // Pure transition. Throws std::invalid_argument on a non-finite action.
  std::pair<SimState, Observation> step(const SimState& state, const Action& action) const;
  Observation observe(const SimState& state) const;

 private:
  TaskSpec task_;
};

// Current joint/grip positions in action layout.
Action joint_vector(const SimState& state);

// Flat-colour rasterization, H×W×3 in [0,1], row 0 at the top.
std::vector<float> render(const SimState& state, std::size_t width, std::size_t height);

// World window covered by render(): x in [x0, x1], y in [y0, y1].
inline constexpr double kViewX0 = -0.6, kViewX1 = 0.6, kViewY0 = -0.05, kViewY1 = 0.85;

struct Color {
  float r, g, b;
};
inline constexpr Color kTableColor{0.0f, 0.0f, 0.0f};
inline constexpr Color kArmColor{0.5f, 0.5f, 0.5f};
inline constexpr Color kCubeColor{1.0f, 0.0f, 0.0f};
inline constexpr Color kPegColor{0.0f, 0.0f, 1.0f};
inline constexpr Color kSocketColor{0.0f, 1.0f, 0.0f};

}  // namespace act::sim
