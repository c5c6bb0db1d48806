#include "fesrl/biomech.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "fesrl/error.hpp"

namespace fesrl::biomech {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::atomic<std::uint64_t> g_interactions{0};

double deg(double d) { return d * kPi / 180.0; }

double wrap_two_pi(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

// Geometry of the hip-to-pedal segment for the right leg at crank angle theta.
struct Chain {
  Vec2 d;      // pedal - hip
  Vec2 d_dot;  // d(pedal)/d(theta)
  double dist;
};

Chain chain(const CyclingConfig& c, double theta) {
  Chain ch;
  ch.d = {c.crank_arm * std::cos(theta) - c.crank_hip_dx, c.crank_arm * std::sin(theta) - c.crank_hip_dy};
  ch.d_dot = {-c.crank_arm * std::sin(theta), c.crank_arm * std::cos(theta)};
  ch.dist = std::hypot(ch.d.x, ch.d.y);
  return ch;
}

double leg_angle(Side side, double theta) { return side == Side::Right ? theta : theta + kPi; }

}  // namespace

std::string to_string(MuscleName m) {
  switch (m) {
    case MuscleName::Quadriceps: return "quadriceps";
    case MuscleName::Hamstrings: return "hamstrings";
    case MuscleName::GluteusMaximus: return "gluteus_maximus";
  }
  return "unknown";
}

MuscleName muscle_from_string(const std::string& s) {
  if (s == "quadriceps") return MuscleName::Quadriceps;
  if (s == "hamstrings") return MuscleName::Hamstrings;
  if (s == "gluteus_maximus") return MuscleName::GluteusMaximus;
  throw InvalidArgumentError("unknown muscle name: " + s);
}

double JointProfile::operator()(double q) const {
  if (share == 0.0) return 0.0;
  return share * std::max(0.0, std::cos(kPi * (q - q_opt) / width));
}

std::vector<MuscleParams> default_muscles(int n_muscles_per_leg) {
  if (n_muscles_per_leg != 2 && n_muscles_per_leg != 3)
    throw InvalidArgumentError("n_muscles_per_leg must be 2 or 3");
  std::vector<MuscleParams> m;
  // Knee operating range for the nominal geometry is roughly 65..140 deg and
  // hip roughly 5..75 deg; the lobes cover those ranges with a peak inside.
  m.push_back({MuscleName::Quadriceps, 30.0, 0.1, {}, {1.0, deg(110.0), deg(200.0)}});
  m.push_back({MuscleName::Hamstrings, 20.0, 0.1, {-0.6, deg(40.0), deg(200.0)}, {-1.0, deg(90.0), deg(200.0)}});
  if (n_muscles_per_leg == 3)
    m.push_back({MuscleName::GluteusMaximus, 25.0, 0.1, {-1.0, deg(50.0), deg(200.0)}, {}});
  return m;
}

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw NonPositiveParameterError(name);
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw NonPositiveParameterError(name);
}

void validate_muscles(const std::vector<MuscleParams>& muscles, int n) {
  if (static_cast<int>(muscles.size()) != n)
    throw InvalidArgumentError("muscle list length does not match n_muscles_per_leg");
  for (const auto& m : muscles) {
    require_positive(m.t_max, "t_max");
    require_positive(m.activation_tau, "activation_tau");
    for (const JointProfile* p : {&m.hip, &m.knee}) {
      if (p->share == 0.0) continue;
      require_positive(p->width, "width");
      if (std::abs(p->share) > 1.0) throw InvalidArgumentError("torque share must lie in [-1, 1]");
    }
  }
}

}  // namespace

ValidatedConfig validate_config(const CyclingConfig& c) {
  require_positive(c.crank_hip_dx, "crank_hip_dx");
  require_positive(c.crank_hip_dy, "crank_hip_dy");
  require_positive(c.crank_arm, "crank_arm");
  require_positive(c.thigh_len, "thigh_len");
  require_positive(c.shank_len, "shank_len");
  require_positive(c.crank_inertia, "crank_inertia");
  require_non_negative(c.resistance_coulomb, "resistance_coulomb");
  require_non_negative(c.resistance_viscous, "resistance_viscous");
  if (!std::isfinite(c.seat_angle)) throw InvalidArgumentError("seat_angle must be finite");
  if (c.n_muscles_per_leg != 2 && c.n_muscles_per_leg != 3)
    throw InvalidArgumentError("n_muscles_per_leg must be 2 or 3");
  if (c.muscles) validate_muscles(*c.muscles, c.n_muscles_per_leg);

  const double lo = std::abs(c.thigh_len - c.shank_len) + kReachEpsilon;
  const double hi = c.thigh_len + c.shank_len - kReachEpsilon;
  for (int k = 0; k < 360; ++k) {
    const double theta = deg(k);
    for (Side side : {Side::Right, Side::Left}) {
      const double dist = chain(c, leg_angle(side, theta)).dist;
      if (!(dist > lo && dist < hi)) throw UnreachableError(theta);
    }
  }
  return ValidatedConfig(c);
}

Vec2 hip_position(const ValidatedConfig& config) { return {config->crank_hip_dx, config->crank_hip_dy}; }

Vec2 pedal_position(const ValidatedConfig& config, double crank_angle, Side side) {
  const double a = leg_angle(side, crank_angle);
  return {config->crank_arm * std::cos(a), config->crank_arm * std::sin(a)};
}

JointAngles solve_leg_ik(const ValidatedConfig& config, double crank_angle, Side side) {
  const CyclingConfig& c = config.get();
  const Chain ch = chain(c, leg_angle(side, crank_angle));
  const double l1 = c.thigh_len;
  const double l2 = c.shank_len;
  const double dist = ch.dist;
  const double cos_knee = std::clamp((l1 * l1 + l2 * l2 - dist * dist) / (2.0 * l1 * l2), -1.0, 1.0);
  const double cos_alpha = std::clamp((l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist), -1.0, 1.0);
  // Thigh direction: hip->pedal line rotated clockwise by the hip triangle angle.
  const double thigh = std::atan2(ch.d.y, ch.d.x) - std::acos(cos_alpha);
  return {std::remainder(kPi - thigh, kTwoPi) + c.seat_angle, std::acos(cos_knee)};
}

Vec2 forward_kinematics(const ValidatedConfig& config, const JointAngles& joints) {
  const CyclingConfig& c = config.get();
  const double thigh = kPi - (joints.hip - c.seat_angle);
  const double shank = thigh + (kPi - joints.knee);
  return {c.crank_hip_dx + c.thigh_len * std::cos(thigh) + c.shank_len * std::cos(shank),
          c.crank_hip_dy + c.thigh_len * std::sin(thigh) + c.shank_len * std::sin(shank)};
}

JointJacobian joint_jacobian(const ValidatedConfig& config, double crank_angle, Side side) {
  const CyclingConfig& c = config.get();
  const Chain ch = chain(c, leg_angle(side, crank_angle));
  const double l1 = c.thigh_len;
  const double l2 = c.shank_len;
  const double dist = ch.dist;
  const double dist_rate = (ch.d.x * ch.d_dot.x + ch.d.y * ch.d_dot.y) / dist;
  const double psi_rate = (ch.d.x * ch.d_dot.y - ch.d.y * ch.d_dot.x) / (dist * dist);

  const double cos_knee = (l1 * l1 + l2 * l2 - dist * dist) / (2.0 * l1 * l2);
  const double sin_knee = std::sqrt(std::max(0.0, 1.0 - cos_knee * cos_knee));
  const double cos_alpha = (l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist);
  const double sin_alpha = std::sqrt(std::max(0.0, 1.0 - cos_alpha * cos_alpha));

  const double knee_rate = dist * dist_rate / (l1 * l2 * sin_knee);
  const double alpha_rate = -(dist * dist - l1 * l1 + l2 * l2) / (2.0 * l1 * dist * dist) * dist_rate / sin_alpha;
  return {-(psi_rate - alpha_rate), knee_rate};
}

double activation_step(double activation, double excitation, double dt, double tau) {
  const double next = excitation + (activation - excitation) * std::exp(-dt / tau);
  return std::clamp(next, 0.0, 1.0);
}

double force_velocity(double shortening_velocity) {
  return std::clamp(1.0 - shortening_velocity / kMaxJointVelocity, 0.0, 1.5);
}

JointTorques muscle_joint_torques(const MuscleParams& p, double activation, const JointAngles& joints,
                                  const JointJacobian& joint_velocities) {
  JointTorques t;
  if (activation == 0.0) return t;
  if (p.hip.share != 0.0) {
    const double shortening = std::copysign(1.0, p.hip.share) * joint_velocities.hip;
    t.hip = activation * p.t_max * p.hip(joints.hip) * force_velocity(shortening);
  }
  if (p.knee.share != 0.0) {
    const double shortening = std::copysign(1.0, p.knee.share) * joint_velocities.knee;
    t.knee = activation * p.t_max * p.knee(joints.knee) * force_velocity(shortening);
  }
  return t;
}

CyclingModel make_model(const CyclingConfig& config) {
  CyclingConfig c = config;
  if (!c.muscles) c.muscles = default_muscles(c.n_muscles_per_leg);
  CyclingModel model{validate_config(c), *c.muscles};
  if (config.perturbation_seed) {
    RealityGap gap;
    gap.seed = *config.perturbation_seed;
    model = apply_reality_gap(model, gap);
  }
  return model;
}

SimState initial_state(const CyclingModel& model, double crank_angle) {
  SimState s;
  s.crank_angle = wrap_two_pi(crank_angle);
  s.activations.assign(2 * model.muscles.size(), 0.0);
  return s;
}

double crank_torque(const CyclingModel& model, const SimState& state) {
  const std::size_t n = model.muscles.size();
  double torque = 0.0;
  for (Side side : {Side::Right, Side::Left}) {
    const std::size_t offset = side == Side::Right ? 0 : n;
    const JointJacobian jac = joint_jacobian(model.config, state.crank_angle, side);
    bool any = false;
    for (std::size_t m = 0; m < n; ++m) any = any || state.activations[offset + m] != 0.0;
    if (!any) continue;
    const JointAngles q = solve_leg_ik(model.config, state.crank_angle, side);
    const JointJacobian qdot{jac.hip * state.cadence, jac.knee * state.cadence};
    for (std::size_t m = 0; m < n; ++m) {
      const JointTorques tau = muscle_joint_torques(model.muscles[m], state.activations[offset + m], q, qdot);
      torque += tau.hip * jac.hip + tau.knee * jac.knee;
    }
  }
  return torque;
}

SimState sim_step(const CyclingModel& model, const SimState& state, std::span<const double> controls,
                  double dt_control) {
  const std::size_t n = model.muscles.size();
  if (controls.size() != 2 * n) throw ShapeMismatchError("control vector must have 2*n_muscles entries");
  if (state.activations.size() != 2 * n) throw ShapeMismatchError("activation vector size mismatch");
  if (!(dt_control > 0.0)) throw InvalidArgumentError("dt_control must be positive");
  ++g_interactions;

  const CyclingConfig& c = model.config.get();
  const int substeps = std::max(1, static_cast<int>(std::lround(dt_control / kInnerDt)));
  const double dt = dt_control / substeps;

  SimState s = state;
  for (int k = 0; k < substeps; ++k) {
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double u = std::clamp(controls[i], 0.0, 1.0);
      s.activations[i] = activation_step(s.activations[i], u, dt, model.muscles[i % n].activation_tau);
    }
    const double torque = crank_torque(model, s);
    const double omega = s.cadence;
    if (std::abs(omega) < kStictionVelocity && std::abs(torque) <= c.resistance_coulomb) {
      s.cadence = 0.0;
      continue;
    }
    const double friction_dir = std::abs(omega) >= kStictionVelocity ? std::copysign(1.0, omega)
                                                                      : std::copysign(1.0, torque);
    double next = (omega + dt * (torque - c.resistance_coulomb * friction_dir) / c.crank_inertia) /
                  (1.0 + dt * c.resistance_viscous / c.crank_inertia);
    // Friction alone cannot reverse the crank.
    if (next * omega < 0.0 && std::abs(torque) <= c.resistance_coulomb) next = 0.0;
    s.cadence = next;
    s.crank_angle = wrap_two_pi(s.crank_angle + dt * next);
  }
  s.sim_time = state.sim_time + dt_control;

  bool finite = std::isfinite(s.crank_angle) && std::isfinite(s.cadence);
  for (double a : s.activations) finite = finite && std::isfinite(a);
  if (!finite) throw NonFiniteStateError("simulation produced a non-finite state");
  return s;
}

std::uint64_t interaction_count() { return g_interactions.load(); }

CyclingModel apply_reality_gap(const CyclingModel& model, const RealityGap& gap) {
  std::mt19937_64 rng(gap.seed);
  std::uniform_real_distribution<double> scale(1.0 - gap.t_max_spread, 1.0 + gap.t_max_spread);
  std::uniform_real_distribution<double> shift(-deg(gap.q_opt_shift_deg), deg(gap.q_opt_shift_deg));
  std::vector<MuscleParams> muscles = model.muscles;
  for (auto& m : muscles) {
    m.t_max *= scale(rng);
    const double hip_shift = shift(rng);
    const double knee_shift = shift(rng);
    m.hip.q_opt += hip_shift;
    m.knee.q_opt += knee_shift;
  }
  CyclingConfig c = model.config.get();
  c.resistance_coulomb *= gap.resistance_scale;
  c.resistance_viscous *= gap.resistance_scale;
  c.muscles = muscles;
  return CyclingModel{validate_config(c), muscles};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json profile_to_json(const JointProfile& p) { return {{"share", p.share}, {"q_opt", p.q_opt}, {"width", p.width}}; }

void check_keys(const json& j, std::initializer_list<const char*> required, std::initializer_list<const char*> optional,
                const char* what) {
  if (!j.is_object()) throw InvalidArgumentError(std::string(what) + " must be a JSON object");
  std::set<std::string> known;
  for (const char* k : required) {
    known.insert(k);
    if (!j.contains(k)) throw InvalidArgumentError(std::string(what) + ": missing key '" + k + "'");
  }
  for (const char* k : optional) known.insert(k);
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw InvalidArgumentError(std::string(what) + ": unknown key '" + item.key() + "'");
}

double number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw InvalidArgumentError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

JointProfile profile_from_json(const json& j) {
  check_keys(j, {"share", "q_opt", "width"}, {}, "joint profile");
  return {number(j, "share"), number(j, "q_opt"), number(j, "width")};
}

}  // namespace

nlohmann::json config_to_json(const CyclingConfig& c) {
  json j;
  j["crank_hip_dx"] = c.crank_hip_dx;
  j["crank_hip_dy"] = c.crank_hip_dy;
  j["crank_arm"] = c.crank_arm;
  j["thigh_len"] = c.thigh_len;
  j["shank_len"] = c.shank_len;
  j["seat_angle"] = c.seat_angle;
  j["n_muscles_per_leg"] = c.n_muscles_per_leg;
  j["resistance_coulomb"] = c.resistance_coulomb;
  j["resistance_viscous"] = c.resistance_viscous;
  j["crank_inertia"] = c.crank_inertia;
  j["perturbation_seed"] = c.perturbation_seed ? json(*c.perturbation_seed) : json(nullptr);
  if (c.muscles) {
    json arr = json::array();
    for (const auto& m : *c.muscles)
      arr.push_back({{"name", to_string(m.name)},
                     {"t_max", m.t_max},
                     {"activation_tau", m.activation_tau},
                     {"hip", profile_to_json(m.hip)},
                     {"knee", profile_to_json(m.knee)}});
    j["muscles"] = arr;
  }
  return j;
}

CyclingConfig config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"crank_hip_dx", "crank_hip_dy", "crank_arm", "thigh_len", "shank_len", "seat_angle",
              "n_muscles_per_leg", "resistance_coulomb", "resistance_viscous", "crank_inertia"},
             {"perturbation_seed", "muscles"}, "cycling config");
  CyclingConfig c;
  c.crank_hip_dx = number(j, "crank_hip_dx");
  c.crank_hip_dy = number(j, "crank_hip_dy");
  c.crank_arm = number(j, "crank_arm");
  c.thigh_len = number(j, "thigh_len");
  c.shank_len = number(j, "shank_len");
  c.seat_angle = number(j, "seat_angle");
  if (!j.at("n_muscles_per_leg").is_number_integer())
    throw InvalidArgumentError("'n_muscles_per_leg' must be an integer");
  c.n_muscles_per_leg = j.at("n_muscles_per_leg").get<int>();
  c.resistance_coulomb = number(j, "resistance_coulomb");
  c.resistance_viscous = number(j, "resistance_viscous");
  c.crank_inertia = number(j, "crank_inertia");
  if (j.contains("perturbation_seed") && !j.at("perturbation_seed").is_null()) {
    if (!j.at("perturbation_seed").is_number_unsigned())
      throw InvalidArgumentError("'perturbation_seed' must be a non-negative integer");
    c.perturbation_seed = j.at("perturbation_seed").get<std::uint64_t>();
  }
  if (j.contains("muscles")) {
    if (!j.at("muscles").is_array()) throw InvalidArgumentError("'muscles' must be an array");
    std::vector<MuscleParams> muscles;
    for (const auto& mj : j.at("muscles")) {
      check_keys(mj, {"name", "t_max", "activation_tau", "hip", "knee"}, {}, "muscle");
      if (!mj.at("name").is_string()) throw InvalidArgumentError("muscle name must be a string");
      muscles.push_back({muscle_from_string(mj.at("name").get<std::string>()), number(mj, "t_max"),
                         number(mj, "activation_tau"), profile_from_json(mj.at("hip")),
                         profile_from_json(mj.at("knee"))});
    }
    c.muscles = std::move(muscles);
  }
  return c;
}

nlohmann::json gap_to_json(const RealityGap& g) {
  return {{"t_max_spread", g.t_max_spread},
          {"q_opt_shift_deg", g.q_opt_shift_deg},
          {"resistance_scale", g.resistance_scale},
          {"seed", g.seed}};
}

RealityGap gap_from_json(const nlohmann::json& j) {
  check_keys(j, {}, {"t_max_spread", "q_opt_shift_deg", "resistance_scale", "seed"}, "reality gap");
  RealityGap g;
  if (j.contains("t_max_spread")) g.t_max_spread = number(j, "t_max_spread");
  if (j.contains("q_opt_shift_deg")) g.q_opt_shift_deg = number(j, "q_opt_shift_deg");
  if (j.contains("resistance_scale")) g.resistance_scale = number(j, "resistance_scale");
  if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
  if (g.t_max_spread < 0.0 || g.t_max_spread >= 1.0) throw InvalidArgumentError("t_max_spread must be in [0, 1)");
  require_non_negative(g.q_opt_shift_deg, "q_opt_shift_deg");
  require_positive(g.resistance_scale, "resistance_scale");
  return g;
}

std::string config_hash(const CyclingConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fesrl::biomech
