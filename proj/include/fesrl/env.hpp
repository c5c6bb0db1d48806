#pragma once

// RL view of the cycling simulator. The agent controls the right leg; the
// left leg is driven by the same policy fed a mirrored observation, which
// yields two experience tuples per control step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "fesrl/biomech.hpp"

namespace fesrl::env {

using biomech::Side;
using ActionVector = std::vector<double>;

struct Observation {
  double sin_theta = 0.0;
  double cos_theta = 1.0;
  double cadence = 0.0;
  ActionVector prev_action;

  std::size_t size() const { return 3 + prev_action.size(); }
  /// [sin, cos, cadence, prev_action...]
  std::vector<double> to_vector() const;
  bool operator==(const Observation&) const = default;
};

inline std::size_t observation_size(int n_muscles_per_leg) { return 3 + static_cast<std::size_t>(n_muscles_per_leg); }

struct ExperienceTuple {
  Observation s;
  ActionVector a;
  double r = 0.0;
  Observation s_next;
};

struct EpisodeConfig {
  int steps = 100;
  double dt = biomech::kControlDt;
  double beta = 1.0;
  double gamma = 0.99;
  std::uint64_t seed = 0;
};

/// Throws InvalidArgumentError.
void validate(const EpisodeConfig& ec);

/// Simulator state plus the previous action of each leg.
struct EnvState {
  biomech::SimState sim;
  ActionVector prev_right;
  ActionVector prev_left;
};

/// Uniform random crank angle, zero cadence, zero activations and actions.
std::pair<EnvState, Observation> reset(const biomech::CyclingModel& model, std::uint64_t seed);

/// Right: [sin, cos, cadence, prev]; Left: [-sin, -cos, cadence, prev].
Observation make_observation(const biomech::SimState& state, const ActionVector& prev_action, Side side);

/// cadence_next - beta * sum(a_i^2)
double reward(double cadence_next, const ActionVector& action, double beta);

struct StepResult {
  EnvState state;
  ExperienceTuple right;
  ExperienceTuple left;
};

/// Applies concat(a_right, a_left) for ec.dt. Throws NonFiniteStateError.
StepResult env_step(const biomech::CyclingModel& model, const EnvState& state, const ActionVector& a_right,
                    const ActionVector& a_left, const EpisodeConfig& ec);

/// Maps an observation to an action for one leg.
using Policy = std::function<ActionVector(const Observation&)>;

struct EpisodeRow {
  double time = 0.0;
  double crank_angle = 0.0;
  double cadence = 0.0;
  std::vector<double> controls;  // right leg first
  double reward_right = 0.0;
  double reward_left = 0.0;
};

struct EpisodeResult {
  double episode_return = 0.0;  // discounted sum of right-leg rewards
  std::vector<ExperienceTuple> tuples;  // right, left, right, left, ...
  std::vector<EpisodeRow> log;
};

/// Runs ec.steps control steps from reset(model, ec.seed), querying the
/// policy once per leg per step.
EpisodeResult run_episode(const Policy& policy, const biomech::CyclingModel& model, const EpisodeConfig& ec);

/// CSV: time, crank_angle, cadence, u_<side>_<muscle>..., reward_right, reward_left.
void write_episode_csv(const std::filesystem::path& path, const biomech::CyclingModel& model,
                       const std::vector<EpisodeRow>& log);

}  // namespace fesrl::env
