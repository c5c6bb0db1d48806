#include "fesrl/env.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fesrl/csv.hpp"
#include "fesrl/error.hpp"

namespace fesrl::env {

std::vector<double> Observation::to_vector() const {
  std::vector<double> v{sin_theta, cos_theta, cadence};
  v.insert(v.end(), prev_action.begin(), prev_action.end());
  return v;
}

void validate(const EpisodeConfig& ec) {
  if (ec.steps < 1) throw InvalidArgumentError("episode steps must be >= 1");
  if (!(ec.dt > 0.0)) throw InvalidArgumentError("episode dt must be positive");
  if (!(ec.beta >= 0.0)) throw InvalidArgumentError("beta must be non-negative");
  if (!(ec.gamma >= 0.0 && ec.gamma < 1.0)) throw InvalidArgumentError("gamma must lie in [0, 1)");
}

std::pair<EnvState, Observation> reset(const biomech::CyclingModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = model.muscles.size();
  EnvState s{biomech::initial_state(model, angle(rng)), ActionVector(n, 0.0), ActionVector(n, 0.0)};
  Observation obs = make_observation(s.sim, s.prev_right, Side::Right);
  return {std::move(s), std::move(obs)};
}

Observation make_observation(const biomech::SimState& state, const ActionVector& prev_action, Side side) {
  const double sign = side == Side::Right ? 1.0 : -1.0;
  return {sign * std::sin(state.crank_angle), sign * std::cos(state.crank_angle), state.cadence, prev_action};
}

double reward(double cadence_next, const ActionVector& action, double beta) {
  double penalty = 0.0;
  for (double a : action) penalty += a * a;
  return cadence_next - beta * penalty;
}

StepResult env_step(const biomech::CyclingModel& model, const EnvState& state, const ActionVector& a_right,
                    const ActionVector& a_left, const EpisodeConfig& ec) {
  const std::size_t n = model.muscles.size();
  if (a_right.size() != n || a_left.size() != n) throw ShapeMismatchError("action length must equal muscles per leg");
  for (const auto* a : {&a_right, &a_left})
    for (double v : *a)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgumentError("actions must lie in [0, 1]");

  std::vector<double> controls(a_right);
  controls.insert(controls.end(), a_left.begin(), a_left.end());

  StepResult out;
  out.state.sim = biomech::sim_step(model, state.sim, controls, ec.dt);
  out.state.prev_right = a_right;
  out.state.prev_left = a_left;

  const double cadence_next = out.state.sim.cadence;
  out.right = {make_observation(state.sim, state.prev_right, Side::Right), a_right,
               reward(cadence_next, a_right, ec.beta),
               make_observation(out.state.sim, a_right, Side::Right)};
  out.left = {make_observation(state.sim, state.prev_left, Side::Left), a_left, reward(cadence_next, a_left, ec.beta),
              make_observation(out.state.sim, a_left, Side::Left)};
  return out;
}

EpisodeResult run_episode(const Policy& policy, const biomech::CyclingModel& model, const EpisodeConfig& ec) {
  validate(ec);
  EpisodeResult result;
  result.tuples.reserve(2 * static_cast<std::size_t>(ec.steps));
  result.log.reserve(static_cast<std::size_t>(ec.steps));

  auto [state, obs] = reset(model, ec.seed);
  double discount = 1.0;
  for (int t = 0; t < ec.steps; ++t) {
    const ActionVector a_right = policy(make_observation(state.sim, state.prev_right, Side::Right));
    const ActionVector a_left = policy(make_observation(state.sim, state.prev_left, Side::Left));
    StepResult step = env_step(model, state, a_right, a_left, ec);

    EpisodeRow row{state.sim.sim_time, state.sim.crank_angle, state.sim.cadence, a_right, step.right.r, step.left.r};
    row.controls.insert(row.controls.end(), a_left.begin(), a_left.end());
    result.log.push_back(std::move(row));

    result.episode_return += discount * step.right.r;
    discount *= ec.gamma;
    result.tuples.push_back(std::move(step.right));
    result.tuples.push_back(std::move(step.left));
    state = std::move(step.state);
  }
  return result;
}

void write_episode_csv(const std::filesystem::path& path, const biomech::CyclingModel& model,
                       const std::vector<EpisodeRow>& log) {
  std::vector<std::string> header{"time", "crank_angle", "cadence"};
  for (const char* side : {"right", "left"})
    for (const auto& m : model.muscles) header.push_back(std::string("u_") + side + "_" + biomech::to_string(m.name));
  header.push_back("reward_right");
  header.push_back("reward_left");

  std::vector<std::vector<std::string>> rows;
  rows.reserve(log.size());
  for (const auto& r : log) {
    std::vector<std::string> cells{format_number(r.time), format_number(r.crank_angle), format_number(r.cadence)};
    for (double u : r.controls) cells.push_back(format_number(u));
    cells.push_back(format_number(r.reward_right));
    cells.push_back(format_number(r.reward_left));
    rows.push_back(std::move(cells));
  }
  write_csv(path, header, rows);
}

}  // namespace fesrl::env
