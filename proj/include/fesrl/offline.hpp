#pragma once

// Fine-tuning phase: pattern-driven sessions on a (perturbed) simulator,
// conversion of their logs into mirrored experience tuples, conservative
// offline training and open-loop pattern evaluation.

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "fesrl/biomech.hpp"
#include "fesrl/env.hpp"
#include "fesrl/pattern.hpp"
#include "fesrl/replay.hpp"
#include "fesrl/sac.hpp"

namespace fesrl::offline {

using biomech::Side;

/// Config hash of the effective simulator, muscles (and any gap) included.
std::string model_hash(const biomech::CyclingModel& model);

struct LogRow {
  double time = 0.0;
  double crank_angle = 0.0;  // rad
  double cadence = 0.0;      // rad/s
  std::vector<double> controls;  // right leg first, each 0 or 1
};

struct SessionLog {
  int session = 0;
  std::string pattern_id;
  pattern::StimulationPattern pattern;
  double duration_s = 0.0;
  double dt = biomech::kControlDt;
  int n_muscles = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<LogRow> rows;  // row k at time k * dt, controls applied over [t, t + dt)
};

/// A named sequence of perturbations applied to the base pattern.
struct ScheduledPerturbation {
  std::string id;
  std::vector<pattern::PatternPerturbation> steps;
};

/// Ten fixed entries (the first one unperturbed), repeated cyclically for
/// more sessions.
std::vector<ScheduledPerturbation> default_schedule(int n_sessions);

pattern::StimulationPattern apply_schedule(const pattern::StimulationPattern& base, const ScheduledPerturbation& entry);

/// Cadence a stimulating pattern is launched with. Patterns cannot start
/// from rest near the dead centres, where the crank Jacobian vanishes; an
/// empty pattern always starts from rest.
inline constexpr double kLaunchCadence = 5.0;  // rad/s

struct CollectOptions {
  int n_sessions = 10;
  double duration_s = 10.0;
  double launch_cadence = kLaunchCadence;
  std::vector<ScheduledPerturbation> schedule;  // default_schedule() when empty
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Initial simulator state for a pattern-driven run: random crank angle,
/// launch cadence unless the pattern is empty.
biomech::SimState launch_state(const biomech::CyclingModel& model, const pattern::StimulationPattern& p,
                               double launch_cadence, std::uint64_t seed);

/// Throws InvalidArgumentError for a bad session count, duration or schedule.
std::vector<SessionLog> collect_sessions(const biomech::CyclingModel& model, const pattern::StimulationPattern& base,
                                         const CollectOptions& opt);

struct TupleSource {
  int session = 0;
  int row = 0;
  Side side = Side::Right;
};

struct OfflineDataset {
  int n_muscles = 0;
  std::string config_hash;
  std::string behavior = "pattern";
  std::vector<int> sessions;
  std::vector<env::ExperienceTuple> tuples;  // right, left, right, left, ...
  std::vector<TupleSource> sources;          // parallel to tuples

  std::size_t size() const { return tuples.size(); }
};

struct DatasetOptions {
  double skip_initial_s = 1.0;  // assisted-start period left out
  double beta = 1.0;
};

/// Consecutive rows become one right and one mirrored left tuple; the last
/// row of each session only serves as s'. Throws InconsistentConfigError
/// when the logs disagree on config, dt or muscle count, and
/// InvalidArgumentError for malformed rows.
OfflineDataset logs_to_dataset(const std::vector<SessionLog>& logs, const DatasetOptions& opt = {});

rl::ReplayBuffer to_replay(const OfflineDataset& data);

struct FinetuneOptions {
  double cql_weight = 0.5;
  int epochs = 0;  // 0: enough epochs for about total_grad_steps
  int total_grad_steps = 20000;
  // The temperature stays at the agent's online value by default: with
  // ON/OFF dataset actions the entropy target is unreachable and a tuned
  // alpha grows without bound.
  bool auto_alpha = false;
  bool backup_entropy = false;
};

/// Number of gradient steps finetune() will take on a dataset of this size.
long long finetune_steps(std::size_t dataset_size, int batch, const FinetuneOptions& opt);

/// CQL-regularised updates sampling only from the dataset. Throws
/// InsufficientDataError when the dataset holds less than one batch.
rl::Agent finetune(rl::Agent agent, const OfflineDataset& data, const FinetuneOptions& opt = {});

struct EvalOptions {
  double duration_s = 30.0;
  double transient_s = 5.0;
  double launch_cadence = kLaunchCadence;
  int n_trials = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrialResult {
  std::uint64_t seed = 0;
  double mean_rpm = 0.0;
  double min_rpm = 0.0;
  double max_rpm = 0.0;
  std::vector<double> rpm;  // one sample per control step, from t = 0
};

struct EvalResult {
  double mean_rpm = 0.0;
  std::vector<TrialResult> trials;
};

inline double to_rpm(double cadence) { return cadence * 30.0 / std::numbers::pi; }

/// Open-loop pattern drive from random start angles; RPM averaged after the
/// transient.
EvalResult evaluate_pattern(const biomech::CyclingModel& model, const pattern::StimulationPattern& p,
                            const EvalOptions& opt = {});

// Files. CSV tables with a JSON sidecar next to them. All throw IoError.

/// Writes session_<k>.csv and session_<k>.json into dir; returns the CSV paths.
std::vector<std::filesystem::path> write_sessions(const std::filesystem::path& dir, const std::vector<SessionLog>& logs);
/// Reads every session_*.csv (with sidecar) in dir, ordered by session number.
std::vector<SessionLog> read_sessions(const std::filesystem::path& dir);

void write_dataset(const std::filesystem::path& csv_path, const OfflineDataset& data);

void write_evaluation_csv(const std::filesystem::path& path, const EvalResult& result);

}  // namespace fesrl::offline
