#include "fesrl/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fesrl/csv.hpp"
#include "fesrl/error.hpp"

namespace fesrl::pattern {

namespace {

constexpr double kPi = std::numbers::pi;

double signed_shift(double from, double to) {
  double d = std::fmod(to - from, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

struct Segment {
  double lo, hi;
};

std::vector<Segment> linear_segments(const std::vector<Interval>& v) {
  std::vector<Segment> out;
  for (const auto& i : v) {
    if (i.full()) {
      out.push_back({0.0, 360.0});
    } else if (i.wraps()) {
      out.push_back({i.on_deg, 360.0});
      if (i.off_deg > 0.0) out.push_back({0.0, i.off_deg});
    } else {
      out.push_back({i.on_deg, i.off_deg});
    }
  }
  return out;
}

int grid_size(double resolution_deg) {
  if (!(resolution_deg > 0.0)) throw InvalidArgumentError("resolution must be positive");
  const double n = 360.0 / resolution_deg;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9) throw InvalidArgumentError("resolution must divide 360 degrees");
  return static_cast<int>(r);
}

}  // namespace

double Interval::arc() const {
  if (full()) return 360.0;
  return wraps() ? 360.0 - on_deg + off_deg : off_deg - on_deg;
}

bool Interval::contains(double deg) const {
  if (full()) return true;
  return wraps() ? (deg >= on_deg || deg < off_deg) : (deg >= on_deg && deg < off_deg);
}

std::string to_string(Source s) {
  switch (s) {
    case Source::ModelBased: return "model_based";
    case Source::FineTuned: return "fine_tuned";
    case Source::Manual: return "manual";
  }
  return "manual";
}

Source source_from_string(const std::string& s) {
  if (s == "model_based") return Source::ModelBased;
  if (s == "fine_tuned") return Source::FineTuned;
  if (s == "manual") return Source::Manual;
  throw InvalidArgumentError("unknown pattern source: " + s);
}

double StimulationPattern::on_arc(int muscle) const {
  double total = 0.0;
  for (const auto& i : intervals.at(static_cast<std::size_t>(muscle))) total += i.arc();
  return total;
}

std::vector<MuscleName> muscle_set(int n_muscles) {
  if (n_muscles == 2) return {MuscleName::Quadriceps, MuscleName::Hamstrings};
  if (n_muscles == 3) return {MuscleName::Quadriceps, MuscleName::Hamstrings, MuscleName::GluteusMaximus};
  throw InvalidArgumentError("patterns cover 2 or 3 muscles");
}

StimulationPattern empty_pattern(int n_muscles, Source source) {
  StimulationPattern p;
  p.muscles = muscle_set(n_muscles);
  p.intervals.assign(p.muscles.size(), {});
  p.source = source;
  return p;
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  const double r = std::round(w);
  if (std::abs(w - r) < 1e-9) w = r;
  if (w >= 360.0) w -= 360.0;
  return w;
}

std::pair<double, double> sincos_deg(double deg) {
  const double d = wrap_degrees(deg);
  if (d >= 180.0) {
    const auto [s, c] = sincos_deg(d - 180.0);
    return {-s, -c};
  }
  const double rad = d * kPi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

StimulationPattern normalize(StimulationPattern p) {
  if (p.intervals.size() != p.muscles.size()) throw InvalidArgumentError("one interval list per muscle required");
  for (auto& list : p.intervals) {
    std::vector<Interval> wrapped;
    for (const auto& i : list) {
      if (std::isnan(i.on_deg) || std::isnan(i.off_deg)) throw InvalidArgumentError("NaN interval endpoint");
      if (i.full()) {
        wrapped.push_back(i);
        continue;
      }
      const Interval w{wrap_degrees(i.on_deg), wrap_degrees(i.off_deg)};
      if (w.on_deg != w.off_deg) wrapped.push_back(w);
    }
    std::vector<Segment> segs = linear_segments(wrapped);
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.lo < b.lo; });
    std::vector<Segment> merged;
    for (const auto& s : segs) {
      if (!merged.empty() && s.lo <= merged.back().hi)
        merged.back().hi = std::max(merged.back().hi, s.hi);
      else
        merged.push_back(s);
    }
    list.clear();
    if (merged.empty()) continue;
    if (merged.size() == 1 && merged[0].lo == 0.0 && merged[0].hi == 360.0) {
      list.push_back({0.0, 360.0});
      continue;
    }
    // A segment ending at 360 joins one starting at 0 into a wrapping interval.
    if (merged.size() > 1 && merged.front().lo == 0.0 && merged.back().hi == 360.0) {
      merged.back().hi = merged.front().hi;
      merged.erase(merged.begin());
    }
    for (const auto& s : merged) list.push_back({s.lo, s.hi == 360.0 ? 0.0 : s.hi});
  }
  return p;
}

void validate(const StimulationPattern& p) {
  if (p.intervals.size() != p.muscles.size()) throw InvalidArgumentError("one interval list per muscle required");
  for (std::size_t m = 0; m < p.intervals.size(); ++m) {
    const auto& list = p.intervals[m];
    const std::string name = biomech::to_string(p.muscles[m]);
    if (list.size() == 1 && list[0].full()) continue;
    double prev_off = -1.0;
    double total = 0.0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      const Interval& i = list[k];
      if (!(i.on_deg >= 0.0 && i.on_deg < 360.0 && i.off_deg >= 0.0 && i.off_deg < 360.0))
        throw InvalidArgumentError(name + ": interval endpoints must lie in [0, 360)");
      if (i.on_deg == i.off_deg) throw InvalidArgumentError(name + ": empty interval");
      if (i.on_deg < prev_off) throw InvalidArgumentError(name + ": intervals unsorted or overlapping");
      if (i.wraps() && k + 1 != list.size()) throw InvalidArgumentError(name + ": wrapping interval must be last");
      prev_off = i.off_deg;
      total += i.arc();
    }
    if (!list.empty() && list.back().wraps() && list.back().off_deg > list.front().on_deg)
      throw InvalidArgumentError(name + ": wrapping interval overlaps the first interval");
    if (total >= 360.0) throw InvalidArgumentError(name + ": ON arc must be below 360 degrees");
  }
}

std::vector<env::ActionVector> policy_schedule(const DeterministicPolicy& policy, int n_muscles,
                                               const ExtractOptions& opt, Side side) {
  const int n = grid_size(opt.resolution_deg);
  const double sign = side == Side::Right ? 1.0 : -1.0;
  env::ActionVector prev(static_cast<std::size_t>(n_muscles), 0.0);
  std::vector<env::ActionVector> lap2, lap3;
  for (int lap = 1; lap <= 3; ++lap) {
    for (int k = 0; k < n; ++k) {
      const auto [s, c] = sincos_deg(k * opt.resolution_deg);
      env::ActionVector a = policy(env::Observation{sign * s, sign * c, opt.reference_cadence, prev});
      if (a.size() != static_cast<std::size_t>(n_muscles)) throw ShapeMismatchError("policy action length mismatch");
      if (lap == 2) lap2.push_back(a);
      if (lap == 3) lap3.push_back(a);
      prev = std::move(a);
    }
  }
  int disagree = 0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n_muscles; ++i)
      disagree += (lap2[k][i] > opt.threshold) != (lap3[k][i] > opt.threshold);
  if (disagree > opt.max_lap_disagreement * n * n_muscles)
    throw NonConvergentPrevActionError("ON states of laps two and three differ on " + std::to_string(disagree) +
                                       " grid points");
  return lap3;
}

std::vector<Interval> grid_to_intervals(const std::vector<bool>& on, double resolution_deg, double cleanup_deg) {
  const int n = static_cast<int>(on.size());
  if (n == 0) return {};
  struct Run {
    int start, len;
    bool value;
  };
  // Circular run-length encoding; a run may wrap past the last grid point.
  auto encode = [n](const std::vector<bool>& g) {
    std::vector<Run> runs;
    int z = 0;
    while (z < n && g[z] == g[0]) ++z;
    if (z == n) return std::vector<Run>{{0, n, g[0]}};
    for (int k = 0; k < n; ++k) {
      const int idx = (z + k) % n;
      if (!runs.empty() && runs.back().value == g[idx])
        ++runs.back().len;
      else
        runs.push_back({idx, 1, g[idx]});
    }
    return runs;
  };
  auto apply = [n](std::vector<bool>& g, const Run& r, bool v) {
    for (int k = 0; k < r.len; ++k) g[(r.start + k) % n] = v;
  };

  std::vector<bool> grid = on;
  for (const Run& r : encode(grid))
    if (!r.value && r.len * resolution_deg < cleanup_deg) apply(grid, r, true);
  for (const Run& r : encode(grid))
    if (r.value && r.len * resolution_deg < cleanup_deg) apply(grid, r, false);

  std::vector<Interval> out;
  for (const Run& r : encode(grid)) {
    if (!r.value) continue;
    if (r.len == n) return {{0.0, 360.0}};
    out.push_back({wrap_degrees(r.start * resolution_deg), wrap_degrees((r.start + r.len) * resolution_deg)});
  }
  std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) { return a.on_deg < b.on_deg; });
  return out;
}

StimulationPattern extract_pattern(const DeterministicPolicy& policy, int n_muscles, const ExtractOptions& opt,
                                   Source source) {
  const auto schedule = policy_schedule(policy, n_muscles, opt, Side::Right);
  StimulationPattern p = empty_pattern(n_muscles, source);
  for (int i = 0; i < n_muscles; ++i) {
    std::vector<bool> grid(schedule.size());
    for (std::size_t k = 0; k < schedule.size(); ++k) grid[k] = schedule[k][i] > opt.threshold;
    p.intervals[i] = grid_to_intervals(grid, opt.resolution_deg, opt.cleanup_deg);
  }
  return normalize(std::move(p));
}

StimulationPattern mirror_pattern(const StimulationPattern& p) {
  StimulationPattern m = p;
  for (auto& list : m.intervals)
    for (auto& i : list)
      if (!i.full()) i = {wrap_degrees(i.on_deg + 180.0), wrap_degrees(i.off_deg + 180.0)};
  return normalize(std::move(m));
}

StimulationPattern perturb_pattern(const StimulationPattern& p, const PatternPerturbation& pert) {
  using Kind = PatternPerturbation::Kind;
  if (!(std::abs(pert.magnitude_deg) <= kMaxPerturbationDeg))
    throw InvalidArgumentError("perturbation magnitude must not exceed 45 degrees");
  if (pert.muscle && (*pert.muscle < 0 || *pert.muscle >= p.n_muscles()))
    throw InvalidArgumentError("perturbation muscle index out of range");
  StimulationPattern out = p;
  for (int m = 0; m < p.n_muscles(); ++m) {
    if (pert.muscle && *pert.muscle != m) continue;
    for (auto& i : out.intervals[m]) {
      const double mag = pert.magnitude_deg;
      if (i.full()) {
        if (pert.kind == Kind::Rotate) continue;
        throw DegenerateIntervalError("cannot shrink or extend a full-circle interval");
      }
      const double width = i.arc();
      switch (pert.kind) {
        case Kind::Shrink:
          if (width - mag <= 0.0) throw DegenerateIntervalError("shrink would empty the interval");
          if (width - mag >= 360.0) throw DegenerateIntervalError("interval would cover the full circle");
          i = {wrap_degrees(i.on_deg + mag / 2.0), wrap_degrees(i.off_deg - mag / 2.0)};
          break;
        case Kind::Extend:
          if (width + mag >= 360.0) throw DegenerateIntervalError("extension would cover the full circle");
          if (width + mag <= 0.0) throw DegenerateIntervalError("extension would empty the interval");
          i = {wrap_degrees(i.on_deg - mag / 2.0), wrap_degrees(i.off_deg + mag / 2.0)};
          break;
        case Kind::Rotate:
          i = {wrap_degrees(i.on_deg + mag), wrap_degrees(i.off_deg + mag)};
          break;
      }
    }
  }
  return normalize(std::move(out));
}

env::ActionVector pattern_control_deg(const StimulationPattern& p, double crank_angle_deg, Side side) {
  const double deg = wrap_degrees(side == Side::Right ? crank_angle_deg : crank_angle_deg - 180.0);
  env::ActionVector u(p.muscles.size(), 0.0);
  for (std::size_t m = 0; m < p.intervals.size(); ++m)
    for (const auto& i : p.intervals[m])
      if (i.contains(deg)) u[m] = 1.0;
  return u;
}

env::ActionVector pattern_control(const StimulationPattern& p, double crank_angle_rad, Side side) {
  return pattern_control_deg(p, crank_angle_rad * 180.0 / kPi, side);
}

double overlap_deg(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  double total = 0.0;
  for (const auto& x : linear_segments(a))
    for (const auto& y : linear_segments(b)) total += std::max(0.0, std::min(x.hi, y.hi) - std::max(x.lo, y.lo));
  return total;
}

std::vector<MuscleMetrics> pattern_metrics(const StimulationPattern& p, const StimulationPattern& q) {
  if (p.muscles != q.muscles) throw MuscleSetMismatchError("patterns cover different muscle sets");
  std::vector<MuscleMetrics> out;
  for (int m = 0; m < p.n_muscles(); ++m) {
    MuscleMetrics mm;
    mm.muscle = p.muscles[m];
    const auto& pi = p.intervals[m];
    const auto& qi = q.intervals[m];
    mm.on_arc_deg = p.on_arc(m);
    for (const auto& i : pi) {
      mm.on_angles.push_back(i.on_deg);
      mm.off_angles.push_back(i.off_deg);
    }
    mm.overlap_deg = overlap_deg(pi, qi);
    if (!pi.empty() && !qi.empty() && !pi[0].full() && !qi[0].full()) {
      mm.on_offset_deg = signed_shift(pi[0].on_deg, qi[0].on_deg);
      mm.off_offset_deg = signed_shift(pi[0].off_deg, qi[0].off_deg);
    }
    out.push_back(std::move(mm));
  }
  return out;
}

nlohmann::json metrics_to_json(const std::vector<MuscleMetrics>& metrics) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& m : metrics) {
    nlohmann::json e{{"on_arc_deg", m.on_arc_deg},
                     {"on_angles", m.on_angles},
                     {"off_angles", m.off_angles},
                     {"overlap_deg", m.overlap_deg}};
    e["on_offset_deg"] = m.on_offset_deg ? nlohmann::json(*m.on_offset_deg) : nlohmann::json(nullptr);
    e["off_offset_deg"] = m.off_offset_deg ? nlohmann::json(*m.off_offset_deg) : nlohmann::json(nullptr);
    j[biomech::to_string(m.muscle)] = e;
  }
  return j;
}

nlohmann::json to_json(const StimulationPattern& p) {
  nlohmann::json muscles = nlohmann::json::object();
  for (int m = 0; m < p.n_muscles(); ++m) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& i : p.intervals[m]) list.push_back({i.on_deg, i.off_deg});
    muscles[biomech::to_string(p.muscles[m])] = list;
  }
  return {{"source", to_string(p.source)}, {"n_muscles", p.n_muscles()}, {"muscles", muscles}};
}

StimulationPattern pattern_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw InvalidArgumentError("pattern must be a JSON object");
    for (const auto& item : j.items())
      if (item.key() != "source" && item.key() != "n_muscles" && item.key() != "muscles")
        throw InvalidArgumentError("pattern: unknown key '" + item.key() + "'");
    StimulationPattern p = empty_pattern(j.at("n_muscles").get<int>(), source_from_string(j.at("source").get<std::string>()));
    const auto& muscles = j.at("muscles");
    if (!muscles.is_object() || muscles.size() != p.muscles.size())
      throw InvalidArgumentError("pattern muscles do not match n_muscles");
    for (int m = 0; m < p.n_muscles(); ++m) {
      const std::string name = biomech::to_string(p.muscles[m]);
      if (!muscles.contains(name)) throw InvalidArgumentError("pattern is missing muscle '" + name + "'");
      for (const auto& pair : muscles.at(name)) {
        if (!pair.is_array() || pair.size() != 2) throw InvalidArgumentError("intervals are [on, off] pairs");
        p.intervals[m].push_back({pair[0].get<double>(), pair[1].get<double>()});
      }
    }
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError(std::string("malformed pattern: ") + e.what());
  }
}

std::string to_svg(const StimulationPattern& p) {
  const double size = 120.0 + 80.0 * p.n_muscles();
  const double c = size / 2.0;
  std::ostringstream s;
  auto pt = [&](double r, double deg) {
    const double rad = deg * kPi / 180.0;
    return format_number(c + r * std::cos(rad)) + "," + format_number(c - r * std::sin(rad));
  };
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_number(size) << "\" height=\""
    << format_number(size) << "\" viewBox=\"0 0 " << format_number(size) << ' ' << format_number(size) << "\">\n";
  s << "  <line x1=\"" << format_number(c) << "\" y1=\"" << format_number(c) << "\" x2=\"" << format_number(size - 4)
    << "\" y2=\"" << format_number(c) << "\" stroke=\"#999\"/>\n";
  for (int m = 0; m < p.n_muscles(); ++m) {
    const double r = 40.0 + 40.0 * m;
    s << "  <circle cx=\"" << format_number(c) << "\" cy=\"" << format_number(c) << "\" r=\"" << format_number(r)
      << "\" fill=\"none\" stroke=\"#ddd\" stroke-width=\"24\"/>\n";
    for (const auto& i : p.intervals[m]) {
      if (i.full()) {
        s << "  <circle cx=\"" << format_number(c) << "\" cy=\"" << format_number(c) << "\" r=\"" << format_number(r)
          << "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"20\"/>\n";
        continue;
      }
      const int large = i.arc() > 180.0 ? 1 : 0;
      s << "  <path d=\"M " << pt(r, i.on_deg) << " A " << format_number(r) << ' ' << format_number(r) << " 0 "
        << large << " 0 " << pt(r, i.off_deg) << "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"20\"/>\n";
    }
    s << "  <text x=\"" << format_number(c + 4) << "\" y=\"" << format_number(c - r - 14) << "\" font-size=\"11\">"
      << biomech::to_string(p.muscles[m]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace fesrl::pattern
