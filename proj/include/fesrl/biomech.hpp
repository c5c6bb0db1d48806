#pragma once

// Planar closed-chain cycling model.
//
// Frame: crank centre at the origin, +y up. The rider faces -x, so the hip
// sits at (crank_hip_dx, crank_hip_dy) and a positive cadence is forward
// pedalling. Crank angle is measured counter-clockwise from +x for the right
// pedal; the left pedal leads by pi.
//
// Joint conventions (per leg):
//   knee: interior angle between thigh and shank, 0 = folded, pi = straight.
//   hip:  thigh elevation above the forward horizontal, plus seat_angle.
// Positive joint torque acts in the direction of increasing joint angle, i.e.
// knee extension and hip flexion.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fesrl::biomech {

enum class Side { Right, Left };
enum class MuscleName { Quadriceps, Hamstrings, GluteusMaximus };

std::string to_string(MuscleName m);
MuscleName muscle_from_string(const std::string& s);

/// Signed raised-cosine bump for one joint:
/// share * max(0, cos(pi * (q - q_opt) / width)).
struct JointProfile {
  double share = 0.0;
  double q_opt = 0.0;  // rad
  double width = 0.0;  // rad, full width of the positive lobe

  double operator()(double q) const;
};

struct MuscleParams {
  MuscleName name = MuscleName::Quadriceps;
  double t_max = 0.0;           // N*m
  double activation_tau = 0.1;  // s
  JointProfile hip;
  JointProfile knee;
};

/// Default muscle set for one leg: quadriceps, hamstrings and, for three
/// muscles, gluteus maximus.
std::vector<MuscleParams> default_muscles(int n_muscles_per_leg);

struct CyclingConfig {
  double crank_hip_dx = 0.60;
  double crank_hip_dy = 0.25;
  double crank_arm = 0.17;
  double thigh_len = 0.44;
  double shank_len = 0.43;
  double seat_angle = 0.35;
  int n_muscles_per_leg = 2;
  double resistance_coulomb = 1.0;
  double resistance_viscous = 1.5;
  double crank_inertia = 1.5;
  std::optional<std::uint64_t> perturbation_seed;
  // Overrides default_muscles() when present.
  std::optional<std::vector<MuscleParams>> muscles;
};

/// Reachability margin used by validation.
inline constexpr double kReachEpsilon = 1e-6;

/// A CyclingConfig that passed validate_config().
class ValidatedConfig {
 public:
  const CyclingConfig& get() const noexcept { return config_; }
  const CyclingConfig* operator->() const noexcept { return &config_; }

 private:
  friend ValidatedConfig validate_config(const CyclingConfig&);
  explicit ValidatedConfig(CyclingConfig c) : config_(std::move(c)) {}
  CyclingConfig config_;
};

/// Throws NonPositiveParameterError, UnreachableError or InvalidArgumentError.
ValidatedConfig validate_config(const CyclingConfig& config);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct JointAngles {
  double hip = 0.0;
  double knee = 0.0;
};

/// d(joint angle)/d(crank angle).
struct JointJacobian {
  double hip = 0.0;
  double knee = 0.0;
};

struct JointTorques {
  double hip = 0.0;
  double knee = 0.0;
};

Vec2 hip_position(const ValidatedConfig& config);
Vec2 pedal_position(const ValidatedConfig& config, double crank_angle, Side side);

/// Two-link inverse kinematics, knee-up branch. The left leg is evaluated as
/// the right leg at crank_angle + pi.
JointAngles solve_leg_ik(const ValidatedConfig& config, double crank_angle, Side side);

/// Pedal (ankle) position reached by the given joint angles.
Vec2 forward_kinematics(const ValidatedConfig& config, const JointAngles& joints);

JointJacobian joint_jacobian(const ValidatedConfig& config, double crank_angle, Side side);

/// Exact integration of da/dt = (u - a) / tau over dt, clamped to [0, 1].
double activation_step(double activation, double excitation, double dt, double tau);

/// Hill-type force-velocity factor applied to a joint shortening velocity.
double force_velocity(double shortening_velocity);
inline constexpr double kMaxJointVelocity = 15.0;  // rad/s

JointTorques muscle_joint_torques(const MuscleParams& params, double activation,
                                  const JointAngles& joints, const JointJacobian& joint_velocities);

struct SimState {
  double crank_angle = 0.0;  // [0, 2pi)
  double cadence = 0.0;      // rad/s
  std::vector<double> activations;  // right leg first
  double sim_time = 0.0;
};

/// Simulator parameters: a validated geometry plus one leg's muscle set (the
/// left leg uses the same muscles).
struct CyclingModel {
  ValidatedConfig config;
  std::vector<MuscleParams> muscles;

  int n_muscles_per_leg() const { return static_cast<int>(muscles.size()); }
};

/// Builds the model, applying a default reality gap if the config carries a
/// perturbation_seed.
CyclingModel make_model(const CyclingConfig& config);

SimState initial_state(const CyclingModel& model, double crank_angle);

double crank_torque(const CyclingModel& model, const SimState& state);

inline constexpr double kControlDt = 0.05;
inline constexpr double kInnerDt = 0.001;
inline constexpr double kStictionVelocity = 1e-3;

/// Advances one control interval with controls held constant. Throws
/// NonFiniteStateError.
SimState sim_step(const CyclingModel& model, const SimState& state, std::span<const double> controls,
                  double dt_control = kControlDt);

/// Number of sim_step calls made by this process. Used to assert that offline
/// training never touches a simulator.
std::uint64_t interaction_count();

/// Parameter perturbation emulating a sim-to-real gap.
struct RealityGap {
  double t_max_spread = 0.20;     // multiplicative, uniform in [1 - s, 1 + s]
  double q_opt_shift_deg = 15.0;  // additive, uniform in [-d, d]
  double resistance_scale = 1.3;
  std::uint64_t seed = 0;
};

CyclingModel apply_reality_gap(const CyclingModel& model, const RealityGap& gap);

nlohmann::json config_to_json(const CyclingConfig& config);
/// Throws InvalidArgumentError on missing, mistyped or unknown keys.
CyclingConfig config_from_json(const nlohmann::json& j);

nlohmann::json gap_to_json(const RealityGap& gap);
RealityGap gap_from_json(const nlohmann::json& j);

/// Stable FNV-1a hash of the serialized config.
std::string config_hash(const CyclingConfig& config);

}  // namespace fesrl::biomech
