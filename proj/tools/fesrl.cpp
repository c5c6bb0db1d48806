// fesrl: command-line front end for the stimulation-pattern pipeline.
//
//   fesrl validate config.json
//   fesrl train config.json train.json --out agent.json --curve curve.csv
//   fesrl extract agent.json config.json --out pattern.json --svg pattern.svg
//   fesrl collect config.json pattern.json [--gap gap.json] --out logs/
//   fesrl finetune agent.json logs/ train.json --out agent_ft.json
//   fesrl evaluate config.json pattern.json [--gap gap.json] --trials N --out eval.csv
//   fesrl compare a.json b.json --out compare.json
//
// Exit codes: 0 ok, 1 domain error, 2 I/O or parse error.

#include <malloc.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fesrl/biomech.hpp"
#include "fesrl/csv.hpp"
#include "fesrl/error.hpp"
#include "fesrl/offline.hpp"
#include "fesrl/pattern.hpp"
#include "fesrl/sac.hpp"
#include "fesrl/training.hpp"

#ifndef FESRL_VERSION
#define FESRL_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fesrl;

namespace {

// Parse failures carry the byte offset reported by the JSON reader.
struct ParseError : IoError {
  ParseError(const fs::path& path, std::size_t byte, const std::string& what)
      : IoError(path.string() + ": " + what), byte_offset(byte) {}
  std::size_t byte_offset;
};

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path, e.byte, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::optional<std::uint64_t> seed_override() {
  const char* env = std::getenv("FESRL_SEED");
  if (!env || !*env) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgumentError(std::string("FESRL_SEED is not an unsigned integer: ") + env);
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// One per run, written next to the outputs.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& role, const fs::path& p) { inputs_[role] = p.string(); }
  void seed(const std::string& role, std::uint64_t s) { seeds_[role] = s; }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  json to_json() const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return {{"command", command_}, {"inputs", inputs_},     {"seeds", seeds_},         {"version", FESRL_VERSION},
            {"started", started_}, {"wall_clock_s", wall}, {"outputs", outputs_}};
  }

  void write(const fs::path& path) {
    output(path);
    write_json(path, to_json());
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  std::string started_ = utc_now();
  json inputs_ = json::object();
  json seeds_ = json::object();
  std::vector<std::string> outputs_;
};

fs::path manifest_path(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

biomech::CyclingModel load_model(const fs::path& config, const std::optional<fs::path>& gap) {
  biomech::CyclingModel model = biomech::make_model(biomech::config_from_json(read_json(config)));
  if (gap) model = biomech::apply_reality_gap(model, biomech::gap_from_json(read_json(*gap)));
  return model;
}

rl::Agent load_agent(const fs::path& path) { return rl::Agent::from_json(read_json(path)); }

pattern::StimulationPattern load_pattern(const fs::path& path) { return pattern::pattern_from_json(read_json(path)); }

// train.json holds the SAC hyperparameters plus optional "online" and
// "finetune" sections.
struct TrainFile {
  rl::TrainConfig tc;
  training::OnlineConfig online;
  offline::FinetuneOptions finetune;
  double skip_initial_s = offline::DatasetOptions{}.skip_initial_s;
};

template <class T>
void take(const json& section, const char* key, T& field) {
  if (section.contains(key)) field = section.at(key).get<T>();
}

void reject_unknown(const json& section, std::initializer_list<const char*> known, const std::string& what) {
  if (!section.is_object()) throw InvalidArgumentError(what + " must be a JSON object");
  for (const auto& item : section.items())
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }) == known.end())
      throw InvalidArgumentError(what + ": unknown key '" + item.key() + "'");
}

TrainFile load_train(const fs::path& path) {
  json j = read_json(path);
  if (!j.is_object()) throw InvalidArgumentError("train config must be a JSON object");
  TrainFile f;
  bool online_seed = false;
  try {
    if (j.contains("online")) {
      const json o = j.at("online");
      reject_unknown(o,
                     {"max_episodes", "test_interval", "test_episodes", "plateau_window", "plateau_tolerance",
                      "stop_on_plateau", "episode_steps", "beta", "seed"},
                     "online");
      take(o, "max_episodes", f.online.max_episodes);
      take(o, "test_interval", f.online.test_interval);
      take(o, "test_episodes", f.online.test_episodes);
      take(o, "plateau_window", f.online.plateau_window);
      take(o, "plateau_tolerance", f.online.plateau_tolerance);
      take(o, "stop_on_plateau", f.online.stop_on_plateau);
      take(o, "episode_steps", f.online.episode.steps);
      take(o, "beta", f.online.episode.beta);
      take(o, "seed", f.online.seed);
      online_seed = o.contains("seed");
      j.erase("online");
    }
    if (j.contains("finetune")) {
      const json o = j.at("finetune");
      reject_unknown(o, {"cql_weight", "epochs", "total_grad_steps", "skip_initial_s", "auto_alpha", "backup_entropy"},
                     "finetune");
      take(o, "cql_weight", f.finetune.cql_weight);
      take(o, "epochs", f.finetune.epochs);
      take(o, "auto_alpha", f.finetune.auto_alpha);
      take(o, "backup_entropy", f.finetune.backup_entropy);
      take(o, "skip_initial_s", f.skip_initial_s);
      take(o, "total_grad_steps", f.finetune.total_grad_steps);
      j.erase("finetune");
    }
  } catch (const json::exception& e) {
    throw InvalidArgumentError(std::string("train config: ") + e.what());
  }
  f.tc = rl::train_config_from_json(j);
  if (!online_seed) f.online.seed = f.tc.seed;
  f.online.episode.gamma = f.tc.gamma;
  return f;
}

// ---------------------------------------------------------------------------

int cmd_validate(const fs::path& config) {
  Manifest manifest("validate");
  manifest.input("config", config);
  json report;
  int code = 0;
  try {
    const auto c = biomech::config_from_json(read_json(config));
    biomech::validate_config(c);
    report = {{"valid", true}};
  } catch (const UnreachableError& e) {
    report = {{"valid", false}, {"error", e.kind()}, {"message", e.what()}, {"crank_angle", e.crank_angle()}};
    code = 1;
  } catch (const NonPositiveParameterError& e) {
    report = {{"valid", false}, {"error", e.kind()}, {"message", e.what()}, {"parameter", e.name()}};
    code = 1;
  } catch (const ParseError&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    report = {{"valid", false}, {"error", e.kind()}, {"message", e.what()}};
    code = 1;
  }
  report["manifest"] = manifest.to_json();
  std::cout << report.dump(2) << '\n';
  return code;
}

int cmd_train(const fs::path& config, const fs::path& train_path, const fs::path& out, const fs::path& curve_path,
              std::optional<int> max_episodes) {
  Manifest manifest("train");
  manifest.input("config", config);
  manifest.input("train", train_path);
  const auto model = load_model(config, std::nullopt);
  TrainFile tf = load_train(train_path);
  if (max_episodes) {
    if (*max_episodes < 1) throw InvalidArgumentError("--max-episodes must be >= 1");
    tf.online.max_episodes = *max_episodes;
  }
  if (const auto s = seed_override()) {
    tf.tc.seed = *s;
    tf.online.seed = *s;
  }
  manifest.seed("agent", tf.tc.seed);
  manifest.seed("episodes", tf.online.seed);

  const auto result = training::train_online(model, tf.tc, tf.online, [](const training::CurveRow& r) {
    if (r.test_return) std::cerr << "episode " << r.episode << " test return " << format_number(*r.test_return) << '\n';
  });

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : result.curve)
    rows.push_back({std::to_string(r.episode), format_number(r.train_return),
                    r.test_return ? format_number(*r.test_return) : std::string()});
  write_csv(curve_path, {"episode", "return", "test_return"}, rows);
  write_json(out, result.agent.to_json());
  manifest.output(out);
  manifest.output(curve_path);
  manifest.write(manifest_path(out));
  std::cout << "episodes " << result.curve.size() << (result.plateaued ? " (plateau)" : "") << '\n';
  return 0;
}

int cmd_extract(const fs::path& agent_path, const fs::path& config, const fs::path& out,
                const std::optional<fs::path>& svg, bool fine_tuned) {
  Manifest manifest("extract");
  manifest.input("agent", agent_path);
  manifest.input("config", config);
  const auto model = load_model(config, std::nullopt);
  const rl::Agent agent = load_agent(agent_path);
  if (agent.n_actions() != model.n_muscles_per_leg())
    throw MuscleSetMismatchError("agent has " + std::to_string(agent.n_actions()) + " muscles, config has " +
                                 std::to_string(model.n_muscles_per_leg()));
  const auto policy = [&agent](const env::Observation& o) { return agent.act_deterministic(o); };
  const auto p = pattern::extract_pattern(policy, agent.n_actions(), {},
                                          fine_tuned ? pattern::Source::FineTuned : pattern::Source::ModelBased);
  write_json(out, pattern::to_json(p));
  manifest.output(out);
  if (svg) {
    write_text(*svg, pattern::to_svg(p));
    manifest.output(*svg);
  }
  manifest.write(manifest_path(out));
  std::cout << pattern::to_json(p).dump() << '\n';
  return 0;
}

int cmd_collect(const fs::path& config, const fs::path& pattern_path, const std::optional<fs::path>& gap,
                const fs::path& out, int sessions, double duration, int jobs) {
  Manifest manifest("collect");
  manifest.input("config", config);
  manifest.input("pattern", pattern_path);
  if (gap) manifest.input("gap", *gap);
  const auto model = load_model(config, gap);
  const auto p = load_pattern(pattern_path);
  offline::CollectOptions opt;
  opt.n_sessions = sessions;
  opt.duration_s = duration;
  opt.jobs = jobs;
  if (const auto s = seed_override()) opt.seed = *s;
  manifest.seed("sessions", opt.seed);
  const auto logs = offline::collect_sessions(model, p, opt);
  for (const auto& path : offline::write_sessions(out, logs)) manifest.output(path);
  manifest.write(out / "manifest.json");
  std::size_t rows = 0;
  for (const auto& log : logs) rows += log.rows.size();
  std::cout << logs.size() << " sessions, " << rows << " rows\n";
  return 0;
}

int cmd_finetune(const fs::path& agent_path, const fs::path& logs_dir, const fs::path& train_path,
                 const fs::path& out) {
  Manifest manifest("finetune");
  manifest.input("agent", agent_path);
  manifest.input("logs", logs_dir);
  manifest.input("train", train_path);
  rl::Agent agent = load_agent(agent_path);
  TrainFile tf = load_train(train_path);
  offline::DatasetOptions dopt;
  dopt.skip_initial_s = tf.skip_initial_s;
  dopt.beta = tf.online.episode.beta;
  const auto data = offline::logs_to_dataset(offline::read_sessions(logs_dir), dopt);
  std::uint64_t seed = tf.tc.seed;
  if (const auto s = seed_override()) seed = *s;
  agent.rng().seed(seed);
  manifest.seed("agent", seed);
  const auto tuned = offline::finetune(std::move(agent), data, tf.finetune);
  write_json(out, tuned.to_json());
  manifest.output(out);
  manifest.write(manifest_path(out));
  std::cout << data.size() << " tuples, " << offline::finetune_steps(data.size(), tuned.config().batch, tf.finetune)
            << " gradient steps\n";
  return 0;
}

int cmd_evaluate(const fs::path& config, const fs::path& pattern_path, const std::optional<fs::path>& gap,
                 int trials, double duration, const fs::path& out, int jobs) {
  Manifest manifest("evaluate");
  manifest.input("config", config);
  manifest.input("pattern", pattern_path);
  if (gap) manifest.input("gap", *gap);
  const auto model = load_model(config, gap);
  const auto p = load_pattern(pattern_path);
  offline::EvalOptions opt;
  opt.n_trials = trials;
  opt.duration_s = duration;
  opt.jobs = jobs;
  if (const auto s = seed_override()) opt.seed = *s;
  manifest.seed("trials", opt.seed);
  const auto result = offline::evaluate_pattern(model, p, opt);
  offline::write_evaluation_csv(out, result);
  manifest.output(out);
  manifest.write(manifest_path(out));
  std::cout << "mean_rpm " << format_number(result.mean_rpm) << '\n';
  return 0;
}

int cmd_compare(const fs::path& a, const fs::path& b, const fs::path& out) {
  Manifest manifest("compare");
  manifest.input("a", a);
  manifest.input("b", b);
  const auto metrics = pattern::pattern_metrics(load_pattern(a), load_pattern(b));
  const json j = pattern::metrics_to_json(metrics);
  write_json(out, j);
  manifest.output(out);
  manifest.write(manifest_path(out));
  std::cout << j.dump() << '\n';
  return 0;
}

void print_error(const std::string& kind, const std::string& message, std::optional<std::size_t> byte = {}) {
  json e = {{"error", kind}, {"message", message}};
  if (byte) e["byte_offset"] = *byte;
  std::cerr << e.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large matrix temporaries on the heap instead of fresh mappings.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);

  CLI::App app{"FES cycling stimulation patterns: train, extract, collect, fine-tune, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FESRL_VERSION);

  std::string config, train, agent, pattern_file, logs, out, curve, svg, gap, other;
  std::optional<int> max_episodes;
  int sessions = 10, trials = 5, jobs = 1;
  double duration = 10.0, eval_duration = 30.0;
  bool fine_tuned = false;

  auto* validate = app.add_subcommand("validate", "check a cycling configuration");
  validate->add_option("config", config)->required();

  auto* train_cmd = app.add_subcommand("train", "online SAC training on the simulator");
  train_cmd->add_option("config", config)->required();
  train_cmd->add_option("train", train)->required();
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_option("--curve", curve)->required();
  train_cmd->add_option("--max-episodes", max_episodes);

  auto* extract = app.add_subcommand("extract", "threshold a policy into a stimulation pattern");
  extract->add_option("agent", agent)->required();
  extract->add_option("config", config)->required();
  extract->add_option("--out", out)->required();
  extract->add_option("--svg", svg);
  extract->add_flag("--fine-tuned", fine_tuned, "label the pattern as fine-tuned");

  auto* collect = app.add_subcommand("collect", "log cycling sessions driven by a pattern");
  collect->add_option("config", config)->required();
  collect->add_option("pattern", pattern_file)->required();
  collect->add_option("--gap", gap);
  collect->add_option("--out", out)->required();
  collect->add_option("--sessions", sessions);
  collect->add_option("--duration", duration);
  collect->add_option("--jobs", jobs);

  auto* finetune = app.add_subcommand("finetune", "offline CQL fine-tuning from logged sessions");
  finetune->add_option("agent", agent)->required();
  finetune->add_option("logs", logs)->required();
  finetune->add_option("train", train)->required();
  finetune->add_option("--out", out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "mean cadence of a pattern over trials");
  evaluate->add_option("config", config)->required();
  evaluate->add_option("pattern", pattern_file)->required();
  evaluate->add_option("--gap", gap);
  evaluate->add_option("--trials", trials);
  evaluate->add_option("--duration", eval_duration);
  evaluate->add_option("--out", out)->required();
  evaluate->add_option("--jobs", jobs);

  auto* compare = app.add_subcommand("compare", "per-muscle onset/offset differences of two patterns");
  compare->add_option("a", pattern_file)->required();
  compare->add_option("b", other)->required();
  compare->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    for (const auto& f : {out, curve, svg})
      if (const fs::path parent = fs::path(f).parent_path(); !f.empty() && !parent.empty()) fs::create_directories(parent);
    if (*validate) return cmd_validate(config);
    if (*train_cmd) return cmd_train(config, train, out, curve, max_episodes);
    if (*extract) return cmd_extract(agent, config, out, opt_path(svg), fine_tuned);
    if (*collect) return cmd_collect(config, pattern_file, opt_path(gap), out, sessions, duration, jobs);
    if (*finetune) return cmd_finetune(agent, logs, train, out);
    if (*evaluate) return cmd_evaluate(config, pattern_file, opt_path(gap), trials, eval_duration, out, jobs);
    if (*compare) return cmd_compare(pattern_file, other, out);
  } catch (const ParseError& e) {
    print_error(e.kind(), e.what(), e.byte_offset);
    return 2;
  } catch (const IoError& e) {
    print_error(e.kind(), e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    print_error("IoError", e.what());
    return 2;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const json::exception& e) {
    print_error("IoError", e.what());
    return 2;
  }
  return 0;
}
