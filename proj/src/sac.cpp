#include "fesrl/sac.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "fesrl/error.hpp"

namespace fesrl::rl {

namespace {

constexpr double kPreSquashLimit = 30.0;
const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd stack(const MatrixXd& top, const MatrixXd& bottom) {
  MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

MatrixXd uniform01(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

MatrixXd repeat_columns(const MatrixXd& m, int times) {
  MatrixXd out(m.rows(), m.cols() * times);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (int k = 0; k < times; ++k) out.col(j * times + k) = m.col(j);
  return out;
}

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const nlohmann::json& j, Eigen::Index expected, const char* what) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected)
    throw ShapeMismatchError(std::string("checkpoint array '") + what + "' has the wrong length");
  return Eigen::Map<const VectorXd>(values.data(), expected);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void validate(const TrainConfig& tc) {
  if (!(tc.gamma >= 0.0 && tc.gamma < 1.0)) throw InvalidArgumentError("gamma must lie in [0, 1)");
  if (!(tc.lr > 0.0)) throw InvalidArgumentError("lr must be positive");
  if (tc.batch < 1) throw InvalidArgumentError("batch must be >= 1");
  if (!(tc.polyak > 0.0 && tc.polyak <= 1.0)) throw InvalidArgumentError("polyak must lie in (0, 1]");
  if (!(tc.init_alpha > 0.0)) throw InvalidArgumentError("init_alpha must be positive");
  if (!(tc.cql_weight >= 0.0)) throw InvalidArgumentError("cql_weight must be non-negative");
  if (tc.grad_steps_per_episode < 1) throw InvalidArgumentError("grad_steps_per_episode must be >= 1");
  if (tc.cql_num_samples < 1) throw InvalidArgumentError("cql_num_samples must be >= 1");
  if (tc.hidden < 1) throw InvalidArgumentError("hidden must be >= 1");
}

nlohmann::json to_json(const TrainConfig& tc) {
  return {{"gamma", tc.gamma},
          {"lr", tc.lr},
          {"batch", tc.batch},
          {"polyak", tc.polyak},
          {"init_alpha", tc.init_alpha},
          {"auto_alpha", tc.auto_alpha},
          {"backup_entropy", tc.backup_entropy},
          {"target_entropy", std::isnan(tc.target_entropy) ? nlohmann::json(nullptr) : nlohmann::json(tc.target_entropy)},
          {"cql_weight", tc.cql_weight},
          {"grad_steps_per_episode", tc.grad_steps_per_episode},
          {"cql_num_samples", tc.cql_num_samples},
          {"hidden", tc.hidden},
          {"seed", tc.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig tc) {
  if (!j.is_object()) throw InvalidArgumentError("train config must be a JSON object");
  static const std::set<std::string> known{"gamma", "lr", "batch", "polyak", "init_alpha", "auto_alpha", "backup_entropy",
                                           "target_entropy", "cql_weight", "grad_steps_per_episode",
                                           "cql_num_samples", "hidden", "seed"};
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw InvalidArgumentError("train config: unknown key '" + item.key() + "'");
  try {
    if (j.contains("gamma")) tc.gamma = j["gamma"].get<double>();
    if (j.contains("lr")) tc.lr = j["lr"].get<double>();
    if (j.contains("batch")) tc.batch = j["batch"].get<int>();
    if (j.contains("polyak")) tc.polyak = j["polyak"].get<double>();
    if (j.contains("init_alpha")) tc.init_alpha = j["init_alpha"].get<double>();
    if (j.contains("auto_alpha")) tc.auto_alpha = j["auto_alpha"].get<bool>();
    if (j.contains("backup_entropy")) tc.backup_entropy = j["backup_entropy"].get<bool>();
    if (j.contains("target_entropy"))
      tc.target_entropy = j["target_entropy"].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                        : j["target_entropy"].get<double>();
    if (j.contains("cql_weight")) tc.cql_weight = j["cql_weight"].get<double>();
    if (j.contains("grad_steps_per_episode")) tc.grad_steps_per_episode = j["grad_steps_per_episode"].get<int>();
    if (j.contains("cql_num_samples")) tc.cql_num_samples = j["cql_num_samples"].get<int>();
    if (j.contains("hidden")) tc.hidden = j["hidden"].get<int>();
    if (j.contains("seed")) tc.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError(std::string("train config: ") + e.what());
  }
  validate(tc);
  return tc;
}

// ---------------------------------------------------------------------------
// Policy

VectorXd squashed_log_prob(const MatrixXd& mean, const MatrixXd& log_std, const MatrixXd& pre_squash) {
  VectorXd lp = VectorXd::Zero(mean.cols());
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      const double z = (pre_squash(i, j) - mean(i, j)) / std::exp(log_std(i, j));
      const double u = pre_squash(i, j);
      // Gaussian log density plus -log|da/du| = -log(a (1 - a)).
      s += -0.5 * z * z - log_std(i, j) - kHalfLogTwoPi + softplus(u) + softplus(-u);
    }
    lp(j) = s;
  }
  return lp;
}

PolicyBatch policy_forward(const Actor& actor, const MatrixXd& obs, const MatrixXd& noise) {
  const int n = actor.n_actions;
  if (noise.rows() != n || noise.cols() != obs.cols()) throw ShapeMismatchError("policy noise shape mismatch");
  PolicyBatch p;
  const MatrixXd out = actor.net.forward(obs, &p.cache);
  p.mean = out.topRows(n);
  const MatrixXd raw = out.bottomRows(n);
  p.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  p.log_std_free = (raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax);
  p.std = p.log_std.array().exp().matrix();
  p.noise = noise;
  p.pre_squash = p.mean + p.std.cwiseProduct(noise);
  p.action = p.pre_squash.unaryExpr(
      [](double u) { return sigmoid(std::clamp(u, -kPreSquashLimit, kPreSquashLimit)); });
  p.log_prob = squashed_log_prob(p.mean, p.log_std, p.pre_squash);
  return p;
}

PolicySample policy_sample(const Actor& actor, const env::Observation& obs, PolicyMode mode, std::mt19937_64& rng) {
  const std::vector<double> x = obs.to_vector();
  const MatrixXd in = Eigen::Map<const MatrixXd>(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  if (mode == PolicyMode::Deterministic) {
    const MatrixXd out = actor.net.forward(in);
    PolicySample s;
    for (int i = 0; i < actor.n_actions; ++i)
      s.action.push_back(sigmoid(std::clamp(out(i, 0), -kPreSquashLimit, kPreSquashLimit)));
    return s;
  }
  const PolicyBatch p = policy_forward(actor, in, gaussian(rng, actor.n_actions, 1));
  return {std::vector<double>(p.action.data(), p.action.data() + p.action.size()), p.log_prob(0)};
}

// ---------------------------------------------------------------------------
// Losses

VectorXd q_values(const Mlp& q, const MatrixXd& obs, const MatrixXd& actions) {
  return q.forward(stack(obs, actions)).row(0).transpose();
}

CriticLoss critic_loss(const Critics& c, const Actor& actor, double alpha, double gamma, const Batch& batch,
                       const MatrixXd& next_noise) {
  const auto b = static_cast<double>(batch.size());
  if (batch.size() == 0) throw InsufficientDataError("empty batch");
  const PolicyBatch next = policy_forward(actor, batch.s_next, next_noise);
  const VectorXd q_next =
      q_values(c.q1_target, batch.s_next, next.action).cwiseMin(q_values(c.q2_target, batch.s_next, next.action));
  const VectorXd target = batch.r + gamma * (q_next - alpha * next.log_prob);

  CriticLoss out;
  const MatrixXd in = stack(batch.s, batch.a);
  for (int k = 0; k < 2; ++k) {
    const Mlp& q = k == 0 ? c.q1 : c.q2;
    VectorXd& grad = k == 0 ? out.grad_q1 : out.grad_q2;
    Mlp::Cache cache;
    const VectorXd diff = q.forward(in, &cache).row(0).transpose() - target;
    out.loss += diff.squaredNorm() / b;
    grad = VectorXd::Zero(q.num_params());
    q.backward(cache, (2.0 / b) * diff.transpose(), grad);
  }
  return out;
}

ActorLoss actor_loss(const Actor& actor, const Critics& c, double alpha, const Batch& batch, const MatrixXd& noise) {
  const Eigen::Index bsz = batch.size();
  if (bsz == 0) throw InsufficientDataError("empty batch");
  const auto b = static_cast<double>(bsz);
  const int n = actor.n_actions;
  const PolicyBatch p = policy_forward(actor, batch.s, noise);
  const MatrixXd in = stack(batch.s, p.action);

  Mlp::Cache c1, c2;
  const VectorXd q1 = c.q1.forward(in, &c1).row(0).transpose();
  const VectorXd q2 = c.q2.forward(in, &c2).row(0).transpose();
  MatrixXd g1 = MatrixXd::Zero(1, bsz), g2 = MatrixXd::Zero(1, bsz);
  double q_sum = 0.0;
  for (Eigen::Index j = 0; j < bsz; ++j) {
    if (q1(j) <= q2(j)) {
      g1(0, j) = -1.0 / b;
      q_sum += q1(j);
    } else {
      g2(0, j) = -1.0 / b;
      q_sum += q2(j);
    }
  }
  VectorXd scratch;
  MatrixXd din1, din2;
  c.q1.backward(c1, g1, scratch, &din1);
  scratch.setZero();
  c.q2.backward(c2, g2, scratch, &din2);
  const MatrixXd dq_da = (din1 + din2).bottomRows(n);

  ActorLoss out;
  out.mean_log_prob = p.log_prob.mean();
  out.loss = alpha * out.mean_log_prob - q_sum / b;

  const Eigen::ArrayXXd a = p.action.array();
  const Eigen::ArrayXXd d_pre = dq_da.array() * a * (1.0 - a) + (alpha / b) * (2.0 * a - 1.0);
  MatrixXd head_grad(2 * n, bsz);
  head_grad.topRows(n) = d_pre.matrix();
  const Eigen::ArrayXXd d_log_std = d_pre * p.std.array() * p.noise.array() - alpha / b;
  head_grad.bottomRows(n) = p.log_std_free.select(d_log_std, 0.0).matrix();
  out.grad = VectorXd::Zero(actor.net.num_params());
  actor.net.backward(p.cache, head_grad, out.grad);
  return out;
}

namespace {

// Both proposal sets, with log of the mixture density 0.5 * (1 + pi(a)) that
// every sample is importance-corrected by.
struct CqlProposals {
  MatrixXd in_uniform, in_policy;
  VectorXd log_mix_uniform, log_mix_policy;
};

CqlProposals cql_proposals(const Actor& actor, const MatrixXd& obs, const MatrixXd& uniform_actions,
                           const MatrixXd& policy_noise, int num_samples) {
  if (num_samples < 1) throw InvalidArgumentError("cql_num_samples must be >= 1");
  const Eigen::Index cols = obs.cols() * num_samples;
  if (uniform_actions.rows() != actor.n_actions || uniform_actions.cols() != cols)
    throw ShapeMismatchError("uniform action matrix has the wrong shape");
  const MatrixXd obs_rep = repeat_columns(obs, num_samples);
  // Policy proposals enter only through their (fixed) actions and densities.
  const PolicyBatch pol = policy_forward(actor, obs_rep, policy_noise);
  const MatrixXd logit = uniform_actions.unaryExpr([](double a) {
    return std::clamp(std::log(a) - std::log1p(-a), -kPreSquashLimit, kPreSquashLimit);
  });
  const VectorXd lp_uniform = squashed_log_prob(pol.mean, pol.log_std, logit);
  const double log_two = std::log(2.0);
  CqlProposals out;
  out.in_uniform = stack(obs_rep, uniform_actions);
  out.in_policy = stack(obs_rep, pol.action);
  out.log_mix_uniform = lp_uniform.unaryExpr([&](double lp) { return softplus(lp) - log_two; });
  out.log_mix_policy = pol.log_prob.unaryExpr([&](double lp) { return softplus(lp) - log_two; });
  return out;
}

}  // namespace

VectorXd cql_logsumexp(const Mlp& q, const Actor& actor, const MatrixXd& obs, const MatrixXd& uniform_actions,
                       const MatrixXd& policy_noise, int num_samples) {
  const CqlProposals prop = cql_proposals(actor, obs, uniform_actions, policy_noise, num_samples);
  const VectorXd qu = q.forward(prop.in_uniform).row(0).transpose() - prop.log_mix_uniform;
  const VectorXd qp = q.forward(prop.in_policy).row(0).transpose() - prop.log_mix_policy;
  VectorXd lse(obs.cols());
  const double log_count = std::log(2.0 * num_samples);
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    const auto su = qu.segment(j * num_samples, num_samples);
    const auto sp = qp.segment(j * num_samples, num_samples);
    const double m = std::max(su.maxCoeff(), sp.maxCoeff());
    const double s = (su.array() - m).exp().sum() + (sp.array() - m).exp().sum();
    lse(j) = m + std::log(s) - log_count;
  }
  return lse;
}

CqlTerm cql_regularizer(const Critics& c, const Actor& actor, const Batch& batch, const MatrixXd& uniform_actions,
                        const MatrixXd& policy_noise, int num_samples) {
  const Eigen::Index bsz = batch.size();
  if (bsz == 0) throw InsufficientDataError("empty batch");
  const auto b = static_cast<double>(bsz);
  const CqlProposals prop = cql_proposals(actor, batch.s, uniform_actions, policy_noise, num_samples);
  const MatrixXd in_data = stack(batch.s, batch.a);
  const double log_count = std::log(2.0 * num_samples);

  CqlTerm out;
  for (int k = 0; k < 2; ++k) {
    const Mlp& q = k == 0 ? c.q1 : c.q2;
    VectorXd& grad = k == 0 ? out.grad_q1 : out.grad_q2;
    grad = VectorXd::Zero(q.num_params());

    Mlp::Cache cu, cp, cd;
    const VectorXd qu = q.forward(prop.in_uniform, &cu).row(0).transpose() - prop.log_mix_uniform;
    const VectorXd qp = q.forward(prop.in_policy, &cp).row(0).transpose() - prop.log_mix_policy;
    const VectorXd qd = q.forward(in_data, &cd).row(0).transpose();
    MatrixXd gu(1, qu.size()), gp(1, qp.size());
    double total = 0.0;
    for (Eigen::Index j = 0; j < bsz; ++j) {
      const auto su = qu.segment(j * num_samples, num_samples);
      const auto sp = qp.segment(j * num_samples, num_samples);
      const double m = std::max(su.maxCoeff(), sp.maxCoeff());
      const Eigen::ArrayXd eu = (su.array() - m).exp();
      const Eigen::ArrayXd ep = (sp.array() - m).exp();
      const double s = eu.sum() + ep.sum();
      total += m + std::log(s) - log_count - qd(j);
      // d logsumexp / d Q = softmax weight.
      gu.block(0, j * num_samples, 1, num_samples) = (eu / (s * b)).matrix().transpose();
      gp.block(0, j * num_samples, 1, num_samples) = (ep / (s * b)).matrix().transpose();
    }
    out.value += total / b;
    q.backward(cu, gu, grad);
    q.backward(cp, gp, grad);
    q.backward(cd, MatrixXd::Constant(1, bsz, -1.0 / b), grad);
  }
  return out;
}

void polyak_update(Mlp& target, const Mlp& online, double tau) {
  if (target.num_params() != online.num_params()) throw ShapeMismatchError("target and online networks differ");
  target.params() = (1.0 - tau) * target.params() + tau * online.params();
}

// ---------------------------------------------------------------------------
// Agent

Agent::Agent(int obs_dim, int n_actions, TrainConfig tc)
    : obs_dim_(obs_dim), n_actions_(n_actions), tc_(tc), rng_(tc.seed) {
  validate(tc_);
  if (obs_dim < 1 || n_actions < 1) throw InvalidArgumentError("agent dimensions must be positive");
  const int h = tc_.hidden;
  actor_ = {Mlp::random({obs_dim, h, h, 2 * n_actions}, rng_), n_actions};
  critics_.q1 = Mlp::random({obs_dim + n_actions, h, h, 1}, rng_);
  critics_.q2 = Mlp::random({obs_dim + n_actions, h, h, 1}, rng_);
  critics_.q1_target = critics_.q1;
  critics_.q2_target = critics_.q2;
  log_alpha_ = std::log(tc_.init_alpha);
  for (Adam* opt : {&actor_opt_, &q1_opt_, &q2_opt_, &alpha_opt_}) opt->lr = tc_.lr;
}

double Agent::alpha() const { return std::exp(log_alpha_); }

void Agent::set_alpha(double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgumentError("alpha must be positive");
  log_alpha_ = std::log(alpha);
}

env::ActionVector Agent::act(const env::Observation& obs, PolicyMode mode) {
  return policy_sample(actor_, obs, mode, rng_).action;
}

env::ActionVector Agent::act_deterministic(const env::Observation& obs) const {
  std::mt19937_64 unused(0);
  return policy_sample(actor_, obs, PolicyMode::Deterministic, unused).action;
}

env::Policy Agent::policy(PolicyMode mode) {
  if (mode == PolicyMode::Deterministic)
    return [this](const env::Observation& o) { return act_deterministic(o); };
  return [this](const env::Observation& o) { return act(o, PolicyMode::Stochastic); };
}

Agent::UpdateStats Agent::gradient_step(const ReplayBuffer& data) {
  const auto bsz = static_cast<Eigen::Index>(tc_.batch);
  const Batch batch = data.sample(rng_, static_cast<std::size_t>(tc_.batch));
  UpdateStats stats;
  const double a = alpha();

  CriticLoss cl = critic_loss(critics_, actor_, tc_.backup_entropy ? a : 0.0, tc_.gamma, batch,
                              gaussian(rng_, n_actions_, bsz));
  stats.critic_loss = cl.loss;
  if (tc_.cql_weight > 0.0) {
    const Eigen::Index cols = bsz * tc_.cql_num_samples;
    const MatrixXd uniform = uniform01(rng_, n_actions_, cols);
    const MatrixXd noise = gaussian(rng_, n_actions_, cols);
    const CqlTerm cq = cql_regularizer(critics_, actor_, batch, uniform, noise, tc_.cql_num_samples);
    stats.cql = cq.value;
    cl.grad_q1 = tc_.cql_weight * cq.grad_q1 + 0.5 * cl.grad_q1;
    cl.grad_q2 = tc_.cql_weight * cq.grad_q2 + 0.5 * cl.grad_q2;
  }
  q1_opt_.step(critics_.q1.params(), cl.grad_q1);
  q2_opt_.step(critics_.q2.params(), cl.grad_q2);

  const ActorLoss al = actor_loss(actor_, critics_, a, batch, gaussian(rng_, n_actions_, bsz));
  stats.actor_loss = al.loss;
  actor_opt_.step(actor_.net.params(), al.grad);

  if (tc_.auto_alpha) {
    const double target = std::isnan(tc_.target_entropy) ? -static_cast<double>(n_actions_) : tc_.target_entropy;
    VectorXd la(1);
    la << log_alpha_;
    VectorXd g(1);
    g << -(al.mean_log_prob + target);
    alpha_opt_.step(la, g);
    log_alpha_ = la(0);
  }
  stats.alpha = alpha();

  polyak_update(critics_.q1_target, critics_.q1, tc_.polyak);
  polyak_update(critics_.q2_target, critics_.q2, tc_.polyak);
  ++updates_;
  return stats;
}

Agent::UpdateStats Agent::sac_update(const ReplayBuffer& data) { return sac_update(data, tc_.grad_steps_per_episode); }

Agent::UpdateStats Agent::sac_update(const ReplayBuffer& data, int steps) {
  if (data.size() < static_cast<std::size_t>(tc_.batch))
    throw InsufficientDataError("need at least " + std::to_string(tc_.batch) + " tuples, have " +
                                std::to_string(data.size()));
  if (data.obs_dim() != obs_dim_ || data.n_actions() != n_actions_)
    throw ShapeMismatchError("data dimensions do not match the agent");
  UpdateStats last;
  for (int k = 0; k < steps; ++k) last = gradient_step(data);
  return last;
}

nlohmann::json Agent::to_json() const {
  auto net = [](const Mlp& m) { return nlohmann::json{{"layer_sizes", m.layer_sizes()}, {"params", vec_json(m.params())}}; };
  auto opt = [](const Adam& o) {
    return nlohmann::json{{"t", o.t}, {"m", vec_json(o.m)}, {"v", vec_json(o.v)}};
  };
  std::ostringstream rng_state;
  rng_state << rng_;
  return {{"format", "fesrl-agent-v1"},
          {"obs_dim", obs_dim_},
          {"n_actions", n_actions_},
          {"config", rl::to_json(tc_)},
          {"seed", tc_.seed},
          {"actor", net(actor_.net)},
          {"q1", net(critics_.q1)},
          {"q2", net(critics_.q2)},
          {"q1_target", net(critics_.q1_target)},
          {"q2_target", net(critics_.q2_target)},
          {"log_alpha", log_alpha_},
          {"optimizer",
           {{"actor", opt(actor_opt_)}, {"q1", opt(q1_opt_)}, {"q2", opt(q2_opt_)}, {"alpha", opt(alpha_opt_)}}},
          {"rng", rng_state.str()},
          {"updates", updates_}};
}

Agent Agent::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "fesrl-agent-v1") throw InvalidArgumentError("unsupported checkpoint format");
    Agent agent(j.at("obs_dim").get<int>(), j.at("n_actions").get<int>(), train_config_from_json(j.at("config")));
    auto load_net = [](Mlp& m, const nlohmann::json& nj, const char* what) {
      if (nj.at("layer_sizes").get<std::vector<int>>() != m.layer_sizes())
        throw ShapeMismatchError(std::string("checkpoint network '") + what + "' has unexpected layer sizes");
      m.params() = json_vec(nj.at("params"), m.num_params(), what);
    };
    load_net(agent.actor_.net, j.at("actor"), "actor");
    load_net(agent.critics_.q1, j.at("q1"), "q1");
    load_net(agent.critics_.q2, j.at("q2"), "q2");
    load_net(agent.critics_.q1_target, j.at("q1_target"), "q1_target");
    load_net(agent.critics_.q2_target, j.at("q2_target"), "q2_target");
    agent.log_alpha_ = j.at("log_alpha").get<double>();
    auto load_opt = [](Adam& o, const nlohmann::json& oj, Eigen::Index n) {
      o.t = oj.at("t").get<long long>();
      if (o.t > 0) {
        o.m = json_vec(oj.at("m"), n, "adam.m");
        o.v = json_vec(oj.at("v"), n, "adam.v");
      }
    };
    const auto& oj = j.at("optimizer");
    load_opt(agent.actor_opt_, oj.at("actor"), agent.actor_.net.num_params());
    load_opt(agent.q1_opt_, oj.at("q1"), agent.critics_.q1.num_params());
    load_opt(agent.q2_opt_, oj.at("q2"), agent.critics_.q2.num_params());
    load_opt(agent.alpha_opt_, oj.at("alpha"), 1);
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> agent.rng_;
    if (!rng_state) throw InvalidArgumentError("corrupt rng state in checkpoint");
    agent.updates_ = j.at("updates").get<long long>();
    return agent;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError(std::string("malformed agent checkpoint: ") + e.what());
  }
}

}  // namespace fesrl::rl
