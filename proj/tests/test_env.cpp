#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "fesrl/csv.hpp"
#include "fesrl/env.hpp"
#include "fesrl/error.hpp"

using namespace fesrl;
using namespace fesrl::env;

namespace {

biomech::CyclingModel nominal(int n = 2) {
  biomech::CyclingConfig c;
  c.n_muscles_per_leg = n;
  return biomech::make_model(c);
}

Policy constant(int n, double v) {
  return [n, v](const Observation&) { return ActionVector(static_cast<std::size_t>(n), v); };
}

void check_unit_circle(const Observation& o) {
  CHECK(std::abs(o.sin_theta * o.sin_theta + o.cos_theta * o.cos_theta - 1.0) < 1e-12);
}

}  // namespace

TEST_CASE("reset") {
  const auto model = nominal();
  const auto [a, oa] = reset(model, 11);
  const auto [b, ob] = reset(model, 11);
  CHECK(a.sim.crank_angle == b.sim.crank_angle);
  CHECK(oa == ob);
  CHECK(oa.cadence == 0.0);
  CHECK(oa.prev_action == ActionVector{0.0, 0.0});
  for (double act : a.sim.activations) CHECK(act == 0.0);
  CHECK(reset(model, 12).first.sim.crank_angle != a.sim.crank_angle);
}

TEST_CASE("reset start angles are uniform (chi-square, 36 bins)") {
  const auto model = nominal();
  const int n = 10000, bins = 36;
  std::vector<int> count(bins, 0);
  for (int k = 0; k < n; ++k) {
    const double angle = reset(model, static_cast<std::uint64_t>(k)).first.sim.crank_angle;
    REQUIRE(angle >= 0.0);
    REQUIRE(angle < 2 * std::numbers::pi);
    ++count[static_cast<std::size_t>(angle / (2 * std::numbers::pi) * bins)];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / bins;
  for (int c : count) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 35 degrees of freedom.
  CHECK(chi2 < 57.34);
}

TEST_CASE("make_observation") {
  const auto model = nominal();
  auto s = biomech::initial_state(model, std::numbers::pi / 2);
  s.cadence = 3.0;
  const auto right = make_observation(s, {0.2, 0.4}, Side::Right);
  CHECK(right.sin_theta == doctest::Approx(1.0));
  CHECK(std::abs(right.cos_theta) < 1e-15);
  CHECK(right.cadence == 3.0);
  const auto left = make_observation(s, {0.2, 0.4}, Side::Left);
  CHECK(left.sin_theta == doctest::Approx(-1.0));
  CHECK(right.to_vector() == std::vector<double>{right.sin_theta, right.cos_theta, 3.0, 0.2, 0.4});

  for (double angle : {0.0, 0.3, 1.7, 3.0, 4.4, 6.0}) {
    auto here = biomech::initial_state(model, angle);
    auto half = biomech::initial_state(model, angle + std::numbers::pi);
    const auto l = make_observation(here, {1.0, 0.0}, Side::Left);
    const auto r = make_observation(half, {1.0, 0.0}, Side::Right);
    CHECK(l.sin_theta == doctest::Approx(r.sin_theta).epsilon(1e-12));
    CHECK(l.cos_theta == doctest::Approx(r.cos_theta).epsilon(1e-12));
    check_unit_circle(l);
  }
}

TEST_CASE("reward") {
  CHECK(reward(5.0, {1.0, 0.0}, 1.0) == 4.0);
  CHECK(reward(5.0, {0.5, 0.5, 0.5}, 1.0) == 4.25);
  CHECK(reward(2.5, {0.0, 0.0}, 1.0) == 2.5);
  CHECK(reward(2.5, {1.0, 1.0}, 0.0) == 2.5);
}

TEST_CASE("env_step") {
  const auto model = nominal();
  const EpisodeConfig ec;
  const auto [start, obs] = reset(model, 3);
  const auto rest = env_step(model, start, {0.0, 0.0}, {0.0, 0.0}, ec);
  CHECK(rest.right.r == 0.0);
  CHECK(rest.left.r == 0.0);
  CHECK(rest.state.sim.cadence == 0.0);

  const ActionVector ar{0.9, 0.1}, al{0.3, 0.6};
  const auto step = env_step(model, start, ar, al, ec);
  const double sum_r = 0.81 + 0.01, sum_l = 0.09 + 0.36;
  CHECK(step.right.r - step.left.r == doctest::Approx(ec.beta * (sum_l - sum_r)).epsilon(1e-12));
  CHECK(step.right.s == obs);
  CHECK(step.right.a == ar);
  CHECK(step.left.a == al);
  CHECK(step.right.s_next.prev_action == ar);
  CHECK(step.left.s_next.prev_action == al);
  CHECK(step.right.s_next.cadence == step.state.sim.cadence);
  CHECK(step.state.prev_right == ar);
  CHECK(step.state.sim.sim_time == doctest::Approx(0.05));

  CHECK_THROWS_AS(env_step(model, start, {0.5}, al, ec), ShapeMismatchError);
  CHECK_THROWS_AS(env_step(model, start, {0.5, 1.5}, al, ec), InvalidArgumentError);
}

TEST_CASE("episode config validation") {
  EpisodeConfig ec;
  ec.steps = 0;
  CHECK_THROWS_AS(validate(ec), InvalidArgumentError);
  ec = {};
  ec.dt = 0.0;
  CHECK_THROWS_AS(validate(ec), InvalidArgumentError);
  ec = {};
  ec.beta = -1.0;
  CHECK_THROWS_AS(validate(ec), InvalidArgumentError);
}

TEST_CASE("run_episode invariants") {
  const auto model = nominal(3);
  EpisodeConfig ec;
  ec.seed = 5;
  const auto zero = run_episode(constant(3, 0.0), model, ec);
  CHECK(zero.tuples.size() == 200);
  CHECK(zero.log.size() == 100);
  CHECK(zero.episode_return == 0.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Policy noisy = [&](const Observation&) { return ActionVector{u(rng), u(rng), u(rng)}; };
  const auto ep = run_episode(noisy, model, ec);
  REQUIRE(ep.tuples.size() == 200);
  double ret = 0.0, discount = 1.0;
  for (std::size_t k = 0; k < ep.tuples.size(); ++k) {
    const auto& t = ep.tuples[k];
    CHECK(t.r == reward(t.s_next.cadence, t.a, ec.beta));
    check_unit_circle(t.s);
    check_unit_circle(t.s_next);
    CHECK(t.s.prev_action.size() == 3);
    if (k % 2 == 0) {
      ret += discount * t.r;
      discount *= ec.gamma;
      CHECK(ep.tuples[k + 1].s_next.cadence == t.s_next.cadence);
    }
  }
  CHECK(ep.episode_return == doctest::Approx(ret).epsilon(1e-12));

  const auto again = run_episode(constant(3, 1.0), model, ec);
  CHECK(again.episode_return == run_episode(constant(3, 1.0), model, ec).episode_return);
}

TEST_CASE("left-leg tuples see the right-leg observation half a turn later") {
  const auto model = nominal();
  EpisodeConfig ec;
  ec.seed = 8;
  const auto ep = run_episode(constant(2, 1.0), model, ec);
  for (std::size_t k = 0; k < ep.tuples.size(); k += 2) {
    const auto& right = ep.tuples[k].s;
    const auto& left = ep.tuples[k + 1].s;
    CHECK(left.sin_theta == -right.sin_theta);
    CHECK(left.cos_theta == -right.cos_theta);
    CHECK(left.cadence == right.cadence);
  }
}

TEST_CASE("episode csv") {
  const auto model = nominal();
  const auto ep = run_episode(constant(2, 0.5), model, {});
  const auto path = std::filesystem::temp_directory_path() / "fesrl_test_episode.csv";
  write_episode_csv(path, model, ep.log);
  const auto table = read_csv(path);
  CHECK(table.rows.size() == 100);
  CHECK(table.header.size() == 3 + 4 + 2);
  CHECK(parse_number(table.rows[10][table.column("reward_right")]) ==
        doctest::Approx(ep.log[10].reward_right).epsilon(1e-8));
  std::filesystem::remove(path);
}
