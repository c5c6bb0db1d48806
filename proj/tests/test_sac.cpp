#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fesrl/error.hpp"
#include "fesrl/sac.hpp"

using namespace fesrl;
using namespace fesrl::rl;

namespace {

constexpr int kObs = 5;
constexpr int kAct = 2;

MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n;
  MatrixXd m(rows, cols);
  for (auto& x : m.reshaped()) x = n(rng);
  return m;
}

MatrixXd uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (auto& x : m.reshaped()) x = u(rng);
  return m;
}

Batch random_batch(std::mt19937_64& rng, Eigen::Index b, int obs = kObs, int act = kAct) {
  Batch batch;
  batch.s = normal_matrix(rng, obs, b);
  batch.a = uniform_matrix(rng, act, b);
  batch.r = normal_matrix(rng, b, 1);
  batch.s_next = normal_matrix(rng, obs, b);
  return batch;
}

Actor random_actor(std::mt19937_64& rng, int obs = kObs, int act = kAct) {
  return {Mlp::random({obs, 64, 64, 2 * act}, rng), act};
}

Critics random_critics(std::mt19937_64& rng, int obs = kObs, int act = kAct) {
  Critics c;
  c.q1 = Mlp::random({obs + act, 64, 64, 1}, rng);
  c.q2 = Mlp::random({obs + act, 64, 64, 1}, rng);
  c.q1_target = Mlp::random({obs + act, 64, 64, 1}, rng);
  c.q2_target = Mlp::random({obs + act, 64, 64, 1}, rng);
  return c;
}

double rel_error(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

// Central differences of f over every entry of params.
template <class F>
VectorXd finite_difference(VectorXd& params, F f, double h = 1e-5) {
  VectorXd fd(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params(i);
    params(i) = keep + h;
    const double up = f();
    params(i) = keep - h;
    const double down = f();
    params(i) = keep;
    fd(i) = (up - down) / (2 * h);
  }
  return fd;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

env::ExperienceTuple tuple(double s0, double a, double r, int n = 1) {
  env::Observation o{s0, 1.0, 0.0, std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  return {o, std::vector<double>(static_cast<std::size_t>(n), a), r, o};
}

}  // namespace

TEST_CASE("squashed log-prob matches the change-of-variables oracle") {
  std::mt19937_64 rng(1);
  const MatrixXd mean = normal_matrix(rng, 3, 50);
  const MatrixXd log_std = uniform_matrix(rng, 3, 50) * 3.0 - MatrixXd::Constant(3, 50, 2.0);
  const MatrixXd u = mean + log_std.array().exp().matrix().cwiseProduct(normal_matrix(rng, 3, 50));
  const VectorXd lp = squashed_log_prob(mean, log_std, u);
  for (int j = 0; j < 50; ++j) {
    double ref = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double sd = std::exp(log_std(i, j));
      const double a = 1.0 / (1.0 + std::exp(-u(i, j)));
      const double gauss = std::exp(-0.5 * std::pow((u(i, j) - mean(i, j)) / sd, 2)) / (sd * std::sqrt(2 * std::numbers::pi));
      ref += std::log(gauss) - std::log(a * (1.0 - a));
    }
    CHECK(lp(j) == doctest::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("sampled actions follow the log-prob density (KS)") {
  std::mt19937_64 rng(2);
  Actor actor{Mlp({1, 4, 2}), 1};
  actor.net.bias(1)(0) = 0.4;   // mean
  actor.net.bias(1)(1) = -0.3;  // log std
  const int samples = 1'000'000;
  const PolicyBatch p = policy_forward(actor, MatrixXd::Zero(1, samples), normal_matrix(rng, 1, samples));
  std::vector<double> a(p.action.data(), p.action.data() + samples);
  std::sort(a.begin(), a.end());
  CHECK(a.front() > 0.0);
  CHECK(a.back() < 1.0);

  // CDF by integrating exp(log_prob) over the action on a fine grid.
  const int grid = 20000;
  std::vector<double> x(grid + 1), cdf(grid + 1, 0.0);
  auto density = [&](double v) {
    const double u = std::log(v / (1.0 - v));
    MatrixXd m(1, 1), ls(1, 1), pre(1, 1);
    m << 0.4;
    ls << -0.3;
    pre << u;
    return std::exp(squashed_log_prob(m, ls, pre)(0));
  };
  for (int k = 0; k <= grid; ++k) x[k] = 1e-9 + (1.0 - 2e-9) * k / grid;
  for (int k = 1; k <= grid; ++k) cdf[k] = cdf[k - 1] + 0.5 * (density(x[k]) + density(x[k - 1])) * (x[k] - x[k - 1]);
  CHECK(cdf.back() == doctest::Approx(1.0).epsilon(1e-4));

  double d = 0.0;
  for (int i = 0; i < samples; i += 97) {
    const auto k = std::min<std::ptrdiff_t>(std::upper_bound(x.begin(), x.end(), a[i]) - x.begin(), grid);
    const double t = (a[i] - x[k - 1]) / (x[k] - x[k - 1]);
    const double f = cdf[k - 1] + t * (cdf[k] - cdf[k - 1]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / samples), std::abs(f - static_cast<double>(i + 1) / samples)});
  }
  // Kolmogorov critical value at p = 0.01.
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(samples)));
  // And against the closed form Phi((logit(a) - mean) / std).
  for (double v : {0.2, 0.5, 0.7, 0.9}) {
    const auto k = std::upper_bound(x.begin(), x.end(), v) - x.begin();
    CHECK(cdf[k] == doctest::Approx(std_normal_cdf((std::log(v / (1 - v)) - 0.4) / std::exp(-0.3))).epsilon(1e-3));
  }
}

TEST_CASE("policy modes") {
  std::mt19937_64 rng(3);
  Actor zero{Mlp({kObs, 8, 2 * kAct}), kAct};
  const env::Observation obs{0.1, 0.2, 3.0, {0.0, 1.0}};
  const auto det = policy_sample(zero, obs, PolicyMode::Deterministic, rng);
  CHECK(det.action == env::ActionVector{0.5, 0.5});
  CHECK(det.log_prob == 0.0);
  zero.net.bias(1).tail(kAct).setConstant(-50.0);  // log std clamps to -5
  const auto narrow = policy_sample(zero, obs, PolicyMode::Stochastic, rng);
  for (double a : narrow.action) CHECK(std::abs(a - 0.5) < 0.01);

  const Actor actor = random_actor(rng);
  CHECK(policy_sample(actor, obs, PolicyMode::Deterministic, rng).action ==
        policy_sample(actor, obs, PolicyMode::Deterministic, rng).action);
  const PolicyBatch wide = policy_forward(actor, normal_matrix(rng, kObs, 1000), 20.0 * normal_matrix(rng, kAct, 1000));
  CHECK((wide.action.array() > 0.0).all());
  CHECK((wide.action.array() < 1.0).all());
}

TEST_CASE("critic loss degenerate case and duplicates") {
  std::mt19937_64 rng(4);
  const Actor actor = random_actor(rng);
  const Critics c = random_critics(rng);
  const Batch batch = random_batch(rng, 3);
  const MatrixXd noise = normal_matrix(rng, kAct, 3);
  const CriticLoss cl = critic_loss(c, actor, 0.0, 0.0, batch, noise);
  const VectorXd q1 = q_values(c.q1, batch.s, batch.a);
  const VectorXd q2 = q_values(c.q2, batch.s, batch.a);
  CHECK(cl.loss == doctest::Approx((q1 - batch.r).squaredNorm() / 3 + (q2 - batch.r).squaredNorm() / 3));

  Batch dup = batch;
  dup.s.col(2) = batch.s.col(0);
  dup.a.col(2) = batch.a.col(0);
  dup.r(2) = batch.r(0);
  dup.s_next.col(2) = batch.s_next.col(0);
  auto single = [&](int j) {
    Batch one{batch.s.col(j), batch.a.col(j), batch.r.segment(j, 1), batch.s_next.col(j)};
    return critic_loss(c, actor, 0.0, 0.0, one, noise.col(j)).loss;
  };
  CHECK(critic_loss(c, actor, 0.0, 0.0, dup, noise).loss == doctest::Approx((2 * single(0) + single(1)) / 3));
}

TEST_CASE("critic loss gradient matches finite differences") {
  std::mt19937_64 rng(5);
  const Actor actor = random_actor(rng);
  Critics c = random_critics(rng);
  const Batch batch = random_batch(rng, 3);
  const MatrixXd noise = normal_matrix(rng, kAct, 3);
  const CriticLoss cl = critic_loss(c, actor, 0.2, 0.99, batch, noise);
  auto loss = [&] { return critic_loss(c, actor, 0.2, 0.99, batch, noise).loss; };
  CHECK(rel_error(cl.grad_q1, finite_difference(c.q1.params(), loss)) < 1e-4);
  CHECK(rel_error(cl.grad_q2, finite_difference(c.q2.params(), loss)) < 1e-4);
}

TEST_CASE("actor loss: zero critic, gradient check, descent") {
  std::mt19937_64 rng(6);
  Actor actor = random_actor(rng);
  Critics zero{Mlp({kObs + kAct, 64, 64, 1}), Mlp({kObs + kAct, 64, 64, 1}), Mlp({kObs + kAct, 64, 64, 1}),
               Mlp({kObs + kAct, 64, 64, 1})};
  const Batch batch = random_batch(rng, 4);
  const MatrixXd noise = normal_matrix(rng, kAct, 4);
  const ActorLoss pure = actor_loss(actor, zero, 0.3, batch, noise);
  CHECK(pure.loss == doctest::Approx(0.3 * pure.mean_log_prob));

  const Critics c = random_critics(rng);
  const ActorLoss al = actor_loss(actor, c, 0.3, batch, noise);
  auto loss = [&] { return actor_loss(actor, c, 0.3, batch, noise).loss; };
  CHECK(rel_error(al.grad, finite_difference(actor.net.params(), loss)) < 1e-4);

  // Q peaked at a = 0.9 for the first action: one step moves the mean toward it.
  Critics peaked = zero;
  peaked.q1.weight(0)(0, kObs) = 1.0;
  peaked.q1.weight(1)(0, 0) = 1.0;
  peaked.q1.weight(2)(0, 0) = 5.0;
  peaked.q2 = peaked.q1;
  const ActorLoss before = actor_loss(actor, peaked, 0.0, batch, noise);
  const VectorXd keep = actor.net.params();
  actor.net.params() -= 1e-3 * before.grad;
  const ActorLoss after = actor_loss(actor, peaked, 0.0, batch, noise);
  CHECK(after.loss < before.loss);
  const PolicyBatch p0 = [&] {
    Actor a0{actor.net, kAct};
    a0.net.params() = keep;
    return policy_forward(a0, batch.s, noise);
  }();
  const PolicyBatch p1 = policy_forward(actor, batch.s, noise);
  CHECK(p1.mean.row(0).sum() > p0.mean.row(0).sum());
}

TEST_CASE("CQL regulariser gradient matches finite differences") {
  std::mt19937_64 rng(7);
  const Actor actor = random_actor(rng);
  Critics c = random_critics(rng);
  const Batch batch = random_batch(rng, 3);
  const int n = 4;
  const MatrixXd uni = uniform_matrix(rng, kAct, 3 * n);
  const MatrixXd noise = normal_matrix(rng, kAct, 3 * n);
  const CqlTerm term = cql_regularizer(c, actor, batch, uni, noise, n);
  auto value = [&] { return cql_regularizer(c, actor, batch, uni, noise, n).value; };
  // 27 columns through 128 ReLUs: a smaller step keeps clear of kinks.
  CHECK(rel_error(term.grad_q1, finite_difference(c.q1.params(), value, 1e-6)) < 1e-4);
  CHECK(rel_error(term.grad_q2, finite_difference(c.q2.params(), value, 1e-6)) < 1e-4);

  // The per-critic value is the log-sum-exp estimate minus Q at the data.
  const VectorXd lse1 = cql_logsumexp(c.q1, actor, batch.s, uni, noise, n);
  const VectorXd lse2 = cql_logsumexp(c.q2, actor, batch.s, uni, noise, n);
  const double ref = (lse1 - q_values(c.q1, batch.s, batch.a)).mean() + (lse2 - q_values(c.q2, batch.s, batch.a)).mean();
  CHECK(term.value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("CQL constant-Q cancellation") {
  std::mt19937_64 rng(8);
  const Actor actor = random_actor(rng);
  const Batch batch = random_batch(rng, 6);
  const int n = 10;
  const MatrixXd uni = uniform_matrix(rng, kAct, 6 * n);
  const MatrixXd noise = normal_matrix(rng, kAct, 6 * n);
  auto constant = [](double value) {
    Mlp q({kObs + kAct, 64, 64, 1});
    q.bias(2)(0) = value;
    return q;
  };
  const Critics low{constant(0.0), constant(0.0), constant(0.0), constant(0.0)};
  const Critics high{constant(7.5), constant(7.5), constant(0.0), constant(0.0)};
  const CqlTerm a = cql_regularizer(low, actor, batch, uni, noise, n);
  const CqlTerm b = cql_regularizer(high, actor, batch, uni, noise, n);
  CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
  CHECK(b.grad_q1.norm() < 1e-12);
  CHECK(b.grad_q2.norm() < 1e-12);
}

TEST_CASE("CQL log-sum-exp estimator vs dense grid in 1-D") {
  std::mt19937_64 rng(9);
  const int obs = 4;
  Actor actor = random_actor(rng, obs, 1);
  Mlp q = Mlp::random({obs + 1, 64, 64, 1}, rng);
  q.weight(2) *= 4.0;
  q.bias(2)(0) = 2.0;
  const int states = 32;
  const int n = 64;
  const MatrixXd s = normal_matrix(rng, obs, states);
  const VectorXd est = cql_logsumexp(q, actor, s, uniform_matrix(rng, 1, states * n), normal_matrix(rng, 1, states * n), n);
  double worst = 0.0;
  for (int j = 0; j < states; ++j) {
    const int grid = 4000;
    MatrixXd a(1, grid);
    for (int k = 0; k < grid; ++k) a(0, k) = (k + 0.5) / grid;
    const VectorXd qa = q_values(q, s.col(j).replicate(1, grid), a);
    const double m = qa.maxCoeff();
    const double exact = m + std::log((qa.array() - m).exp().mean());
    worst = std::max(worst, std::abs(est(j) - exact) / std::abs(exact));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("polyak update is parameter-wise") {
  std::mt19937_64 rng(10);
  Mlp target = Mlp::random({3, 4, 1}, rng);
  const Mlp online = Mlp::random({3, 4, 1}, rng);
  const VectorXd before = target.params();
  polyak_update(target, online, 0.005);
  for (Eigen::Index i = 0; i < before.size(); ++i)
    CHECK(target.params()(i) == doctest::Approx(0.995 * before(i) + 0.005 * online.params()(i)).epsilon(1e-15));
  CHECK_THROWS_AS(polyak_update(target, Mlp({2, 1}), 0.1), ShapeMismatchError);
}

TEST_CASE("replay buffer contents and sampling frequency") {
  ReplayBuffer buf(4, 1, 10);
  for (int k = 0; k < 15; ++k) buf.push(tuple(k, 0.5, k));
  CHECK(buf.size() == 10);
  CHECK(buf.insertions() == 15);
  for (std::size_t i = 0; i < 10; ++i) CHECK(buf.at(i).s.sin_theta == 5.0 + i);
  CHECK_THROWS_AS(buf.push({{0, 1, 0, {0.0, 0.0}}, {0.5}, 0.0, {0, 1, 0, {0.0}}}), ShapeMismatchError);

  std::mt19937_64 rng(11);
  const int draws = 100000;
  std::vector<int> hits(10, 0);
  for (std::size_t slot : buf.sample_indices(rng, draws)) ++hits[slot];
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  for (int h : hits) CHECK(std::abs(h - draws * 0.1) < 3 * sigma);
  CHECK_THROWS_AS(ReplayBuffer(4, 1).sample(rng, 1), InsufficientDataError);
}

TEST_CASE("sac_update: errors, determinism, checkpoint") {
  ReplayBuffer buf(kObs, kAct);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u;
  for (int k = 0; k < 300; ++k)
    buf.push({{u(rng), u(rng), u(rng), {u(rng), u(rng)}}, {u(rng), u(rng)}, u(rng), {u(rng), u(rng), u(rng), {u(rng), u(rng)}}});
  TrainConfig tc;
  tc.batch = 32;
  tc.seed = 5;
  tc.cql_weight = 1.0;
  tc.cql_num_samples = 3;
  Agent a(kObs, kAct, tc), b(kObs, kAct, tc);
  a.sac_update(buf, 20);
  b.sac_update(buf, 20);
  CHECK(a.actor().net.params() == b.actor().net.params());
  CHECK(a.critics().q1_target.params() == b.critics().q1_target.params());
  CHECK(a.log_alpha() == b.log_alpha());

  const std::string text = a.to_json().dump();
  Agent restored = Agent::from_json(nlohmann::json::parse(text));
  CHECK(restored.to_json().dump() == text);
  a.sac_update(buf, 5);
  restored.sac_update(buf, 5);
  CHECK(a.actor().net.params() == restored.actor().net.params());
  CHECK(a.critics().q2.params() == restored.critics().q2.params());

  a.set_alpha(0.25);
  CHECK(a.alpha() == doctest::Approx(0.25));
  CHECK_THROWS_AS(a.set_alpha(0.0), InvalidArgumentError);

  tc.batch = 1000;
  Agent big(kObs, kAct, tc);
  CHECK_THROWS_AS(big.sac_update(buf), InsufficientDataError);
  auto bad = nlohmann::json::parse(text);
  bad["format"] = "other";
  CHECK_THROWS_AS(Agent::from_json(bad), InvalidArgumentError);
}

TEST_CASE("train config json") {
  TrainConfig tc;
  tc.cql_weight = 5.0;
  tc.seed = 77;
  const TrainConfig back = train_config_from_json(to_json(tc));
  CHECK(back.cql_weight == 5.0);
  CHECK(back.seed == 77);
  CHECK(std::isnan(back.target_entropy));
  CHECK_THROWS_AS(train_config_from_json({{"unknown", 1}}), InvalidArgumentError);
  CHECK_THROWS_AS(train_config_from_json({{"batch", 0}}), InvalidArgumentError);
}

TEST_CASE("bandit converges to the analytic optimum") {
  TrainConfig tc;
  tc.gamma = 0.0;
  tc.seed = 13;
  Agent agent(4, 1, tc);
  ReplayBuffer buf(4, 1);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u;
  for (int k = 0; k < 5000; ++k) {
    const double a = u(rng);
    buf.push(tuple(0.0, a, -(a - 0.7) * (a - 0.7)));
  }
  agent.sac_update(buf, 2000);
  const double a = agent.act_deterministic(tuple(0.0, 0.0, 0.0).s)[0];
  CHECK(a == doctest::Approx(0.7).epsilon(0.05 / 0.7));
}

TEST_CASE("CQL keeps Q at dataset actions above random actions") {
  TrainConfig tc;
  tc.batch = 64;
  tc.seed = 15;
  tc.cql_weight = 5.0;
  Agent agent(4, 1, tc);
  ReplayBuffer buf(4, 1);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> jitter(0.0, 0.03);
  for (int k = 0; k < 2000; ++k) {
    const double s = 2.0 * u(rng) - 1.0;
    const double a = std::clamp(0.8 + jitter(rng), 0.0, 1.0);
    buf.push(tuple(s, a, s - a * a));
  }
  agent.sac_update(buf, 300);
  const Batch all = buf.all();
  const VectorXd q_data = q_values(agent.critics().q1, all.s, all.a);
  const VectorXd q_rand = q_values(agent.critics().q1, all.s, uniform_matrix(rng, 1, all.size()));
  CHECK(q_data.mean() >= q_rand.mean());
}
