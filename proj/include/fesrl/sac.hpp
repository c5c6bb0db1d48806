#pragma once

// Soft actor-critic with sigmoid-squashed Gaussian actions on [0,1]^n, twin
// critics with Polyak-averaged targets, automatic entropy temperature and an
// optional conservative Q-learning (CQL) regulariser for offline training.
//
// Loss functions take their random draws explicitly so that gradients can be
// checked against finite differences with the noise held fixed.

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fesrl/env.hpp"
#include "fesrl/mlp.hpp"
#include "fesrl/replay.hpp"

namespace fesrl::rl {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct TrainConfig {
  double gamma = 0.99;
  double lr = 3e-4;
  int batch = 256;
  double polyak = 0.005;
  double init_alpha = 0.1;
  bool auto_alpha = true;
  // Include -alpha * log pi(a'|s') in the critic's TD target.
  bool backup_entropy = true;
  // Defaults to -n_actions when unset (NaN).
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double cql_weight = 0.0;
  int grad_steps_per_episode = 200;
  int cql_num_samples = 10;
  int hidden = 64;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& tc);
nlohmann::json to_json(const TrainConfig& tc);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Gaussian policy head: the network emits [mean; raw log-std] per action.
struct Actor {
  Mlp net;
  int n_actions = 0;
};

enum class PolicyMode { Stochastic, Deterministic };

struct PolicySample {
  env::ActionVector action;
  double log_prob = 0.0;  // zero in deterministic mode
};

/// Batched reparameterised sample with the forward pass kept for backprop.
struct PolicyBatch {
  MatrixXd mean;       // n x B
  MatrixXd log_std;    // n x B, clamped
  MatrixXd std;        // n x B
  MatrixXd noise;      // n x B
  MatrixXd pre_squash; // n x B, mean + std * noise
  MatrixXd action;     // n x B
  VectorXd log_prob;   // B
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> log_std_free;  // false where clamped
  Mlp::Cache cache;
};

PolicyBatch policy_forward(const Actor& actor, const MatrixXd& obs, const MatrixXd& noise);

/// Log density of [0,1]^n actions given pre-squash values.
VectorXd squashed_log_prob(const MatrixXd& mean, const MatrixXd& log_std, const MatrixXd& pre_squash);

PolicySample policy_sample(const Actor& actor, const env::Observation& obs, PolicyMode mode, std::mt19937_64& rng);

struct Critics {
  Mlp q1, q2;
  Mlp q1_target, q2_target;
};

/// Q(s, a) for every column pair.
VectorXd q_values(const Mlp& q, const MatrixXd& obs, const MatrixXd& actions);

struct CriticLoss {
  double loss = 0.0;  // sum over both critics of mean squared TD error
  VectorXd grad_q1;
  VectorXd grad_q2;
};

/// next_noise: n x B draws for a' ~ pi(.|s').
CriticLoss critic_loss(const Critics& critics, const Actor& actor, double alpha, double gamma, const Batch& batch,
                       const MatrixXd& next_noise);

struct ActorLoss {
  double loss = 0.0;
  double mean_log_prob = 0.0;
  VectorXd grad;
};

ActorLoss actor_loss(const Actor& actor, const Critics& critics, double alpha, const Batch& batch,
                     const MatrixXd& noise);

struct CqlTerm {
  double value = 0.0;  // summed over both critics
  VectorXd grad_q1;
  VectorXd grad_q2;
};

/// Importance-sampled estimate of log integral exp Q(s, a) da over [0,1]^n
/// from equal numbers of uniform and policy proposals, each weighted by the
/// mixture density (1 + pi(a)) / 2, minus Q at the dataset actions.
/// uniform_actions and policy_noise are n x (B * num_samples), sample k of
/// state j in column j * num_samples + k.
CqlTerm cql_regularizer(const Critics& critics, const Actor& actor, const Batch& batch,
                        const MatrixXd& uniform_actions, const MatrixXd& policy_noise, int num_samples);

/// The per-state log-sum-exp estimate used by cql_regularizer for one critic.
VectorXd cql_logsumexp(const Mlp& q, const Actor& actor, const MatrixXd& obs, const MatrixXd& uniform_actions,
                       const MatrixXd& policy_noise, int num_samples);

/// target <- (1 - tau) * target + tau * online
void polyak_update(Mlp& target, const Mlp& online, double tau);

class Agent {
 public:
  Agent(int obs_dim, int n_actions, TrainConfig tc);

  int obs_dim() const { return obs_dim_; }
  int n_actions() const { return n_actions_; }
  const TrainConfig& config() const { return tc_; }
  TrainConfig& config() { return tc_; }

  double alpha() const;
  double log_alpha() const { return log_alpha_; }
  /// Throws InvalidArgumentError unless alpha > 0.
  void set_alpha(double alpha);

  Actor& actor() { return actor_; }
  const Actor& actor() const { return actor_; }
  Critics& critics() { return critics_; }
  const Critics& critics() const { return critics_; }
  std::mt19937_64& rng() { return rng_; }

  env::ActionVector act(const env::Observation& obs, PolicyMode mode);
  /// Deterministic, const and thread-safe.
  env::ActionVector act_deterministic(const env::Observation& obs) const;
  env::Policy policy(PolicyMode mode);

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double cql = 0.0;
    double alpha = 0.0;
  };

  /// One critic, actor, temperature and target step on a sampled batch.
  UpdateStats gradient_step(const ReplayBuffer& data);

  /// tc.grad_steps_per_episode gradient steps. Throws InsufficientDataError
  /// when the buffer holds fewer than one batch.
  UpdateStats sac_update(const ReplayBuffer& data);
  UpdateStats sac_update(const ReplayBuffer& data, int steps);

  long long updates() const { return updates_; }

  nlohmann::json to_json() const;
  static Agent from_json(const nlohmann::json& j);

 private:
  int obs_dim_;
  int n_actions_;
  TrainConfig tc_;
  Actor actor_;
  Critics critics_;
  double log_alpha_;
  Adam actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  std::mt19937_64 rng_;
  long long updates_ = 0;
};

}  // namespace fesrl::rl
