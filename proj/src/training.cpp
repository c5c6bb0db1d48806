#include "fesrl/training.hpp"

#include <algorithm>
#include <cmath>

#include "fesrl/error.hpp"

namespace fesrl::training {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void validate(const OnlineConfig& oc) {
  if (oc.max_episodes < 1) throw InvalidArgumentError("max_episodes must be >= 1");
  if (oc.test_interval < 1) throw InvalidArgumentError("test_interval must be >= 1");
  if (oc.test_episodes < 1) throw InvalidArgumentError("test_episodes must be >= 1");
  if (oc.plateau_window < 1) throw InvalidArgumentError("plateau_window must be >= 1");
  env::validate(oc.episode);
}

bool plateau_reached(const std::vector<double>& tests, int window, double tolerance) {
  const auto w = static_cast<std::size_t>(window);
  if (tests.size() <= w) return false;
  const double before = *std::max_element(tests.begin(), tests.end() - static_cast<std::ptrdiff_t>(w));
  const double recent = *std::max_element(tests.end() - static_cast<std::ptrdiff_t>(w), tests.end());
  return recent - before < tolerance * std::abs(before);
}

double test_return(const rl::Agent& agent, const biomech::CyclingModel& model, const OnlineConfig& oc) {
  const env::Policy policy = [&agent](const env::Observation& o) { return agent.act_deterministic(o); };
  double total = 0.0;
  for (int k = 0; k < oc.test_episodes; ++k) {
    env::EpisodeConfig ec = oc.episode;
    ec.seed = mix_seed(oc.seed ^ 0x7e57ULL, static_cast<std::uint64_t>(k));
    total += env::run_episode(policy, model, ec).episode_return;
  }
  return total / oc.test_episodes;
}

OnlineResult train_online(const biomech::CyclingModel& model, const rl::TrainConfig& tc, const OnlineConfig& oc,
                          const EpisodeCallback& on_episode) {
  const int n = model.n_muscles_per_leg();
  return train_online(rl::Agent(static_cast<int>(env::observation_size(n)), n, tc), model, oc, on_episode);
}

OnlineResult train_online(rl::Agent agent, const biomech::CyclingModel& model, const OnlineConfig& oc,
                          const EpisodeCallback& on_episode) {
  validate(oc);
  if (agent.n_actions() != model.n_muscles_per_leg()) throw ShapeMismatchError("agent and model muscle counts differ");
  rl::ReplayBuffer buffer(agent.obs_dim(), agent.n_actions());
  OnlineResult result{std::move(agent), {}, false};
  rl::Agent& a = result.agent;
  std::vector<double> tests;

  for (int episode = 1; episode <= oc.max_episodes; ++episode) {
    env::EpisodeConfig ec = oc.episode;
    ec.seed = mix_seed(oc.seed, static_cast<std::uint64_t>(episode));
    const env::EpisodeResult ep = env::run_episode(a.policy(rl::PolicyMode::Stochastic), model, ec);
    for (const auto& t : ep.tuples) buffer.push(t);
    if (buffer.size() >= static_cast<std::size_t>(a.config().batch)) a.sac_update(buffer);

    CurveRow row{episode, ep.episode_return, std::nullopt};
    if (episode % oc.test_interval == 0) {
      row.test_return = test_return(a, model, oc);
      tests.push_back(*row.test_return);
    }
    result.curve.push_back(row);
    if (on_episode) on_episode(row);
    if (oc.stop_on_plateau && row.test_return && plateau_reached(tests, oc.plateau_window, oc.plateau_tolerance)) {
      result.plateaued = true;
      break;
    }
  }
  return result;
}

std::vector<double> normalized_test_curve(const std::vector<CurveRow>& curve, int tail) {
  std::vector<double> tests;
  for (const auto& r : curve)
    if (r.test_return) tests.push_back(*r.test_return);
  if (tests.empty()) return {};
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(tail, 1)), 1, tests.size());
  double level = 0.0;
  for (std::size_t i = tests.size() - k; i < tests.size(); ++i) level += tests[i];
  level /= static_cast<double>(k);
  for (double& t : tests) t /= level;
  return tests;
}

}  // namespace fesrl::training
