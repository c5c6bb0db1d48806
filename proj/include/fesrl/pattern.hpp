#pragma once

// Stimulation patterns: per-muscle ON intervals of the right crank angle in
// degrees, counter-clockwise, half-open [on, off). An interval with on > off
// wraps through 0 deg; [0, 360) is the full circle. The left leg uses the same
// pattern rotated by 180 deg.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fesrl/biomech.hpp"
#include "fesrl/env.hpp"

namespace fesrl::pattern {

using biomech::MuscleName;
using biomech::Side;

struct Interval {
  double on_deg = 0.0;
  double off_deg = 0.0;

  bool full() const { return on_deg == 0.0 && off_deg == 360.0; }
  bool wraps() const { return on_deg > off_deg; }
  double arc() const;
  bool contains(double deg) const;
  bool operator==(const Interval&) const = default;
};

enum class Source { ModelBased, FineTuned, Manual };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct StimulationPattern {
  std::vector<MuscleName> muscles;
  std::vector<std::vector<Interval>> intervals;  // one list per muscle
  Source source = Source::Manual;

  int n_muscles() const { return static_cast<int>(muscles.size()); }
  double on_arc(int muscle) const;
  bool operator==(const StimulationPattern&) const = default;
};

/// Canonical muscle order for n muscles per leg.
std::vector<MuscleName> muscle_set(int n_muscles);

/// Empty pattern over the canonical muscle set.
StimulationPattern empty_pattern(int n_muscles, Source source = Source::Manual);

/// Wraps endpoints into [0, 360), merges overlapping intervals and sorts by
/// ON angle. Throws InvalidArgumentError for NaN endpoints.
StimulationPattern normalize(StimulationPattern p);

/// Throws InvalidArgumentError when intervals are unsorted, overlapping or
/// out of range.
void validate(const StimulationPattern& p);

/// Angle in degrees in [0, 360); values within 1e-9 deg of an integer snap to
/// it so that grid-based comparisons are exact.
double wrap_degrees(double deg);

/// Exact sine and cosine for angles in degrees: sin_deg(x + 180) == -sin_deg(x).
std::pair<double, double> sincos_deg(double deg);

/// Deterministic per-leg policy as seen by the extractor.
using DeterministicPolicy = std::function<env::ActionVector(const env::Observation&)>;

struct ExtractOptions {
  double resolution_deg = 1.0;
  double reference_cadence = 5.0;  // rad/s
  double threshold = 0.5;
  double cleanup_deg = 5.0;
  double max_lap_disagreement = 0.02;
};

/// Policy outputs on the grid during the third lap, for one leg's
/// observation stream. Row k is grid angle k * resolution. Throws
/// NonConvergentPrevActionError if laps two and three disagree (after
/// thresholding) on more than max_lap_disagreement of the grid points.
std::vector<env::ActionVector> policy_schedule(const DeterministicPolicy& policy, int n_muscles,
                                               const ExtractOptions& opt, Side side = Side::Right);

/// Thresholded, cleaned ON intervals of one boolean circular grid.
std::vector<Interval> grid_to_intervals(const std::vector<bool>& on, double resolution_deg, double cleanup_deg);

StimulationPattern extract_pattern(const DeterministicPolicy& policy, int n_muscles, const ExtractOptions& opt = {},
                                   Source source = Source::ModelBased);

StimulationPattern mirror_pattern(const StimulationPattern& p);

struct PatternPerturbation {
  enum class Kind { Shrink, Extend, Rotate };
  Kind kind = Kind::Rotate;
  std::optional<int> muscle;  // all muscles when empty
  double magnitude_deg = 0.0;
};

inline constexpr double kMaxPerturbationDeg = 45.0;

/// Throws DegenerateIntervalError when a shrink empties an interval or an
/// extension covers the full circle, InvalidArgumentError when the magnitude
/// exceeds 45 deg.
StimulationPattern perturb_pattern(const StimulationPattern& p, const PatternPerturbation& perturbation);

/// 1.0 for muscles ON at the leg's crank angle, else 0.0. The left leg reads
/// the pattern at crank angle - 180 deg.
env::ActionVector pattern_control(const StimulationPattern& p, double crank_angle_rad, Side side);
env::ActionVector pattern_control_deg(const StimulationPattern& p, double crank_angle_deg, Side side);

struct MuscleMetrics {
  MuscleName muscle = MuscleName::Quadriceps;
  double on_arc_deg = 0.0;
  std::vector<double> on_angles;
  std::vector<double> off_angles;
  double overlap_deg = 0.0;
  // Signed q - p shift of the first ON and OFF angle, in (-180, 180].
  std::optional<double> on_offset_deg;
  std::optional<double> off_offset_deg;
};

/// Throws MuscleSetMismatchError.
std::vector<MuscleMetrics> pattern_metrics(const StimulationPattern& p, const StimulationPattern& q);

/// Length of the circular intersection of two interval lists.
double overlap_deg(const std::vector<Interval>& a, const std::vector<Interval>& b);

nlohmann::json metrics_to_json(const std::vector<MuscleMetrics>& m);

nlohmann::json to_json(const StimulationPattern& p);
StimulationPattern pattern_from_json(const nlohmann::json& j);

/// Polar bar diagram: one ring per muscle, ON arcs drawn as thick strokes.
std::string to_svg(const StimulationPattern& p);

}  // namespace fesrl::pattern
