#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fesrl/biomech.hpp"
#include "fesrl/env.hpp"
#include "fesrl/sac.hpp"

namespace fesrl::training {

/// Stateless 64-bit mixer used to derive per-episode seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct OnlineConfig {
  int max_episodes = 200;
  int test_interval = 5;   // a performance test after every k-th episode
  int test_episodes = 3;   // deterministic episodes averaged per test
  int plateau_window = 10; // tests without enough improvement before stopping
  double plateau_tolerance = 0.02;
  bool stop_on_plateau = true;
  env::EpisodeConfig episode;
  std::uint64_t seed = 0;
};

void validate(const OnlineConfig& oc);

struct CurveRow {
  int episode = 0;  // 1-based
  double train_return = 0.0;
  std::optional<double> test_return;
};

/// Stop when the best test return of the last `window` tests improves on the
/// best earlier test by less than `tolerance` (relative).
bool plateau_reached(const std::vector<double>& test_returns, int window, double tolerance);

/// Mean discounted return of deterministic episodes from fixed test seeds.
double test_return(const rl::Agent& agent, const biomech::CyclingModel& model, const OnlineConfig& oc);

struct OnlineResult {
  rl::Agent agent;
  std::vector<CurveRow> curve;
  bool plateaued = false;
};

using EpisodeCallback = std::function<void(const CurveRow&)>;

/// Episodic SAC: one stochastic episode, both legs' tuples into the replay
/// buffer, then a batch of gradient steps once the buffer holds a batch.
OnlineResult train_online(const biomech::CyclingModel& model, const rl::TrainConfig& tc, const OnlineConfig& oc,
                          const EpisodeCallback& on_episode = {});

/// Continues training an existing agent.
OnlineResult train_online(rl::Agent agent, const biomech::CyclingModel& model, const OnlineConfig& oc,
                          const EpisodeCallback& on_episode = {});

/// Test returns divided by the plateau level: the mean of the last
/// `tail` test returns (at least one).
std::vector<double> normalized_test_curve(const std::vector<CurveRow>& curve, int tail);

}  // namespace fesrl::training
