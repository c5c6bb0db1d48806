#include "fesrl/offline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>

#include "fesrl/csv.hpp"
#include "fesrl/error.hpp"
#include "fesrl/parallel.hpp"
#include "fesrl/training.hpp"

namespace fesrl::offline {

namespace {

using pattern::PatternPerturbation;
using Kind = PatternPerturbation::Kind;

int step_count(double duration_s, double dt) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw InvalidArgumentError("duration must be positive");
  const int n = static_cast<int>(std::lround(duration_s / dt));
  if (n < 1) throw InvalidArgumentError("duration shorter than one control step");
  return n;
}

std::vector<double> concat_controls(const pattern::StimulationPattern& p, double crank_angle) {
  std::vector<double> u = pattern::pattern_control(p, crank_angle, Side::Right);
  const auto left = pattern::pattern_control(p, crank_angle, Side::Left);
  u.insert(u.end(), left.begin(), left.end());
  return u;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string model_hash(const biomech::CyclingModel& model) {
  biomech::CyclingConfig c = model.config.get();
  c.perturbation_seed.reset();
  c.muscles = model.muscles;
  return biomech::config_hash(c);
}

biomech::SimState launch_state(const biomech::CyclingModel& model, const pattern::StimulationPattern& p,
                               double launch_cadence, std::uint64_t seed) {
  if (!(launch_cadence >= 0.0)) throw InvalidArgumentError("launch cadence must be non-negative");
  biomech::SimState state = env::reset(model, seed).first.sim;
  bool stimulates = false;
  for (const auto& list : p.intervals) stimulates = stimulates || !list.empty();
  if (stimulates) state.cadence = launch_cadence;
  return state;
}

std::vector<ScheduledPerturbation> default_schedule(int n_sessions) {
  auto all = [](Kind k, double m) { return PatternPerturbation{k, std::nullopt, m}; };
  auto one = [](Kind k, int muscle, double m) { return PatternPerturbation{k, muscle, m}; };
  const std::vector<ScheduledPerturbation> base{
      {"identity", {}},
      {"rotate+10", {all(Kind::Rotate, 10)}},
      {"rotate-10", {all(Kind::Rotate, -10)}},
      {"rotate+20", {all(Kind::Rotate, 20)}},
      {"rotate-20", {all(Kind::Rotate, -20)}},
      {"shrink10", {all(Kind::Shrink, 10)}},
      {"extend10", {all(Kind::Extend, 10)}},
      {"shrink10-m0+extend10-m1", {one(Kind::Shrink, 0, 10), one(Kind::Extend, 1, 10)}},
      {"extend10-m0+shrink10-m1", {one(Kind::Extend, 0, 10), one(Kind::Shrink, 1, 10)}},
      {"rotate+10-m0+rotate-10-m1", {one(Kind::Rotate, 0, 10), one(Kind::Rotate, 1, -10)}},
  };
  if (n_sessions < 0) throw InvalidArgumentError("session count must be non-negative");
  std::vector<ScheduledPerturbation> out;
  for (int k = 0; k < n_sessions; ++k) out.push_back(base[static_cast<std::size_t>(k) % base.size()]);
  return out;
}

pattern::StimulationPattern apply_schedule(const pattern::StimulationPattern& base, const ScheduledPerturbation& entry) {
  pattern::StimulationPattern p = base;
  for (const auto& step : entry.steps) {
    if (step.muscle && *step.muscle >= p.n_muscles()) continue;
    p = pattern::perturb_pattern(p, step);
  }
  return p;
}

std::vector<SessionLog> collect_sessions(const biomech::CyclingModel& model, const pattern::StimulationPattern& base,
                                         const CollectOptions& opt) {
  if (opt.n_sessions < 1) throw InvalidArgumentError("at least one session required");
  if (base.n_muscles() != model.n_muscles_per_leg())
    throw MuscleSetMismatchError("pattern and model muscle counts differ");
  pattern::validate(base);
  const auto schedule = opt.schedule.empty() ? default_schedule(opt.n_sessions) : opt.schedule;
  if (schedule.size() < static_cast<std::size_t>(opt.n_sessions))
    throw InvalidArgumentError("schedule must provide one perturbation per session");
  const double dt = biomech::kControlDt;
  const int steps = step_count(opt.duration_s, dt);
  const std::string hash = model_hash(model);

  std::vector<SessionLog> logs(static_cast<std::size_t>(opt.n_sessions));
  parallel_for(logs.size(), opt.jobs, [&](std::size_t k) {
    SessionLog& log = logs[k];
    log.session = static_cast<int>(k);
    log.pattern_id = schedule[k].id;
    log.pattern = apply_schedule(base, schedule[k]);
    log.duration_s = steps * dt;
    log.dt = dt;
    log.n_muscles = model.n_muscles_per_leg();
    log.config_hash = hash;
    log.seed = training::mix_seed(opt.seed, k);
    log.rows.reserve(static_cast<std::size_t>(steps));
    biomech::SimState state = launch_state(model, log.pattern, opt.launch_cadence, log.seed);
    for (int t = 0; t < steps; ++t) {
      LogRow row{t * dt, state.crank_angle, state.cadence, concat_controls(log.pattern, state.crank_angle)};
      state = biomech::sim_step(model, state, row.controls, dt);
      log.rows.push_back(std::move(row));
    }
  });
  return logs;
}

OfflineDataset logs_to_dataset(const std::vector<SessionLog>& logs, const DatasetOptions& opt) {
  OfflineDataset data;
  if (logs.empty()) return data;
  const SessionLog& first = logs.front();
  data.n_muscles = first.n_muscles;
  data.config_hash = first.config_hash;
  const auto n = static_cast<std::size_t>(first.n_muscles);

  for (const SessionLog& log : logs) {
    if (log.config_hash != first.config_hash) throw InconsistentConfigError("sessions come from different configs");
    if (log.n_muscles != first.n_muscles) throw InconsistentConfigError("sessions use different muscle sets");
    if (log.dt != first.dt) throw InconsistentConfigError("sessions use different control intervals");
    data.sessions.push_back(log.session);

    for (std::size_t k = 0; k < log.rows.size(); ++k) {
      const LogRow& row = log.rows[k];
      if (row.controls.size() != 2 * n) throw InvalidArgumentError("log row has the wrong number of controls");
      if (std::abs(row.time - static_cast<double>(k) * log.dt) > 1e-6)
        throw InvalidArgumentError("session " + std::to_string(log.session) + ": timestamps must advance by dt");
    }
    for (std::size_t k = 0; k + 1 < log.rows.size(); ++k) {
      const LogRow& row = log.rows[k];
      if (row.time < opt.skip_initial_s - 1e-9) continue;
      const LogRow& next = log.rows[k + 1];
      biomech::SimState now{row.crank_angle, row.cadence, {}, row.time};
      biomech::SimState after{next.crank_angle, next.cadence, {}, next.time};
      for (Side side : {Side::Right, Side::Left}) {
        const std::size_t off = side == Side::Right ? 0 : n;
        const auto slice = [&](const LogRow& r) {
          return env::ActionVector(r.controls.begin() + off, r.controls.begin() + off + n);
        };
        const env::ActionVector prev = k == 0 ? env::ActionVector(n, 0.0) : slice(log.rows[k - 1]);
        const env::ActionVector a = slice(row);
        data.tuples.push_back({env::make_observation(now, prev, side), a, env::reward(next.cadence, a, opt.beta),
                               env::make_observation(after, a, side)});
        data.sources.push_back({log.session, static_cast<int>(k), side});
      }
    }
  }
  return data;
}

rl::ReplayBuffer to_replay(const OfflineDataset& data) {
  rl::ReplayBuffer buffer(static_cast<int>(env::observation_size(data.n_muscles)), data.n_muscles,
                          std::max<std::size_t>(data.size(), 1));
  for (const auto& t : data.tuples) buffer.push(t);
  return buffer;
}

long long finetune_steps(std::size_t dataset_size, int batch, const FinetuneOptions& opt) {
  if (batch < 1) throw InvalidArgumentError("batch must be >= 1");
  const long long per_epoch = (static_cast<long long>(dataset_size) + batch - 1) / batch;
  if (per_epoch == 0) return 0;
  if (opt.epochs > 0) return per_epoch * opt.epochs;
  const long long epochs = std::max(1LL, std::llround(static_cast<double>(opt.total_grad_steps) / per_epoch));
  return per_epoch * epochs;
}

rl::Agent finetune(rl::Agent agent, const OfflineDataset& data, const FinetuneOptions& opt) {
  if (!(opt.cql_weight >= 0.0)) throw InvalidArgumentError("cql_weight must be non-negative");
  if (opt.epochs < 0) throw InvalidArgumentError("epochs must be non-negative");
  if (data.n_muscles != agent.n_actions()) throw ShapeMismatchError("dataset and agent muscle counts differ");
  const int batch = agent.config().batch;
  if (data.size() < static_cast<std::size_t>(batch))
    throw InsufficientDataError("dataset holds " + std::to_string(data.size()) + " tuples, need at least " +
                                std::to_string(batch));
  const rl::ReplayBuffer buffer = to_replay(data);
  agent.config().cql_weight = opt.cql_weight;
  agent.config().auto_alpha = opt.auto_alpha;
  agent.config().backup_entropy = opt.backup_entropy;
  const long long steps = finetune_steps(data.size(), batch, opt);
  for (long long k = 0; k < steps; ++k) agent.gradient_step(buffer);
  return agent;
}

EvalResult evaluate_pattern(const biomech::CyclingModel& model, const pattern::StimulationPattern& p,
                            const EvalOptions& opt) {
  if (opt.n_trials < 1) throw InvalidArgumentError("at least one trial required");
  if (!(opt.transient_s >= 0.0) || opt.transient_s >= opt.duration_s)
    throw InvalidArgumentError("transient must be shorter than the trial");
  if (p.n_muscles() != model.n_muscles_per_leg()) throw MuscleSetMismatchError("pattern and model muscle counts differ");
  pattern::validate(p);
  const double dt = biomech::kControlDt;
  const int steps = step_count(opt.duration_s, dt);

  EvalResult result;
  result.trials.resize(static_cast<std::size_t>(opt.n_trials));
  parallel_for(result.trials.size(), opt.jobs, [&](std::size_t k) {
    TrialResult& trial = result.trials[k];
    trial.seed = training::mix_seed(opt.seed, k);
    biomech::SimState state = launch_state(model, p, opt.launch_cadence, trial.seed);
    trial.rpm.reserve(static_cast<std::size_t>(steps));
    double sum = 0.0;
    int counted = 0;
    trial.min_rpm = std::numeric_limits<double>::infinity();
    trial.max_rpm = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < steps; ++t) {
      state = biomech::sim_step(model, state, concat_controls(p, state.crank_angle), dt);
      const double rpm = to_rpm(state.cadence);
      trial.rpm.push_back(rpm);
      if ((t + 1) * dt > opt.transient_s + 1e-9) {
        sum += rpm;
        ++counted;
        trial.min_rpm = std::min(trial.min_rpm, rpm);
        trial.max_rpm = std::max(trial.max_rpm, rpm);
      }
    }
    trial.mean_rpm = sum / counted;
  });
  double total = 0.0;
  for (const auto& t : result.trials) total += t.mean_rpm;
  result.mean_rpm = total / opt.n_trials;
  return result;
}

std::vector<std::filesystem::path> write_sessions(const std::filesystem::path& dir,
                                                  const std::vector<SessionLog>& logs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  for (const SessionLog& log : logs) {
    const auto muscles = pattern::muscle_set(log.n_muscles);
    std::vector<std::string> header{"time", "crank_angle", "cadence"};
    for (const char* side : {"right", "left"})
      for (auto m : muscles) header.push_back(std::string("u_") + side + "_" + biomech::to_string(m));
    header.push_back("pattern_id");
    std::vector<std::vector<std::string>> rows;
    rows.reserve(log.rows.size());
    for (const LogRow& r : log.rows) {
      std::vector<std::string> cells{format_number(r.time), format_number(r.crank_angle), format_number(r.cadence)};
      for (double u : r.controls) cells.push_back(format_number(u));
      cells.push_back(log.pattern_id);
      rows.push_back(std::move(cells));
    }
    const std::string stem = "session_" + std::to_string(log.session);
    const auto csv = dir / (stem + ".csv");
    write_csv(csv, header, rows);
    write_json_file(dir / (stem + ".json"), {{"session", log.session},
                                            {"pattern_id", log.pattern_id},
                                            {"pattern", pattern::to_json(log.pattern)},
                                            {"duration_s", log.duration_s},
                                            {"dt", log.dt},
                                            {"n_muscles", log.n_muscles},
                                            {"config_hash", log.config_hash},
                                            {"seed", log.seed},
                                            {"steps", log.rows.size()}});
    paths.push_back(csv);
  }
  return paths;
}

std::vector<SessionLog> read_sessions(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  const std::regex name(R"(session_(\d+)\.csv)");
  std::vector<std::pair<int, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, name)) found.emplace_back(std::stoi(m[1].str()), entry.path());
  }
  std::sort(found.begin(), found.end());

  std::vector<SessionLog> logs;
  for (const auto& [index, csv] : found) {
    auto sidecar = csv;
    sidecar.replace_extension(".json");
    const nlohmann::json meta = read_json_file(sidecar);
    SessionLog log;
    try {
      log.session = meta.at("session").get<int>();
      log.pattern_id = meta.at("pattern_id").get<std::string>();
      log.pattern = pattern::pattern_from_json(meta.at("pattern"));
      log.duration_s = meta.at("duration_s").get<double>();
      log.dt = meta.at("dt").get<double>();
      log.n_muscles = meta.at("n_muscles").get<int>();
      log.config_hash = meta.at("config_hash").get<std::string>();
      log.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(sidecar.string() + ": " + e.what());
    }
    const CsvTable table = read_csv(csv);
    const auto n = static_cast<std::size_t>(log.n_muscles);
    if (table.header.size() != 4 + 2 * n) throw IoError(csv.string() + ": unexpected column count");
    try {
      for (const auto& cells : table.rows) {
        LogRow row{parse_number(cells.at(0)), parse_number(cells.at(1)), parse_number(cells.at(2)), {}};
        for (std::size_t i = 0; i < 2 * n; ++i) row.controls.push_back(parse_number(cells.at(3 + i)));
        log.rows.push_back(std::move(row));
      }
    } catch (const std::out_of_range&) {
      throw IoError(csv.string() + ": short row");
    }
    logs.push_back(std::move(log));
  }
  return logs;
}

void write_dataset(const std::filesystem::path& csv_path, const OfflineDataset& data) {
  const auto obs_dim = env::observation_size(data.n_muscles);
  std::vector<std::string> header{"session", "row", "side"};
  for (std::size_t i = 0; i < obs_dim; ++i) header.push_back("s" + std::to_string(i));
  for (int i = 0; i < data.n_muscles; ++i) header.push_back("a" + std::to_string(i));
  header.push_back("r");
  for (std::size_t i = 0; i < obs_dim; ++i) header.push_back("s_next" + std::to_string(i));

  std::vector<std::vector<std::string>> rows;
  rows.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& t = data.tuples[k];
    const auto& src = data.sources[k];
    std::vector<std::string> cells{std::to_string(src.session), std::to_string(src.row),
                                   src.side == Side::Right ? "right" : "left"};
    for (double v : t.s.to_vector()) cells.push_back(format_number(v));
    for (double v : t.a) cells.push_back(format_number(v));
    cells.push_back(format_number(t.r));
    for (double v : t.s_next.to_vector()) cells.push_back(format_number(v));
    rows.push_back(std::move(cells));
  }
  write_csv(csv_path, header, rows);
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  write_json_file(sidecar, {{"n_muscles", data.n_muscles},
                            {"config_hash", data.config_hash},
                            {"behavior", data.behavior},
                            {"sessions", data.sessions},
                            {"tuples", data.size()}});
}

void write_evaluation_csv(const std::filesystem::path& path, const EvalResult& result) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < result.trials.size(); ++k) {
    const auto& t = result.trials[k];
    rows.push_back({std::to_string(k), std::to_string(t.seed), format_number(t.mean_rpm), format_number(t.min_rpm),
                    format_number(t.max_rpm)});
  }
  write_csv(path, {"trial", "seed", "mean_rpm", "min_rpm", "max_rpm"}, rows);
}

}  // namespace fesrl::offline
