#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "molerase/state.hpp"

namespace molerase {

enum class ImageKind { Nondestructive, Error, Destructive };

struct LoadStep {
  int n_sites = 1;
  double fill_prob = 1.0;
};
struct ImageStep {
  ImageKind kind = ImageKind::Error;
  std::optional<double> theta;  // overrides the run's classifier threshold
};
struct PumpStep {
  double duration = 0.0;
};
struct MicrowaveStep {
  double fidelity = 1.0;
  StateBin source = StateBin::DPrime;
  StateBin dest = StateBin::MMinus;
};
struct RamanStep {
  std::string scheme = "xb";
  double angle = 0.0;
  double axis_phase = 0.0;
};
struct CompositeStep {
  std::string scheme = "xb";
  bool include_image = true;
};
struct HoldStep {
  double duration = 0.0;
  std::optional<double> repump_period;
};
struct RampStep {
  double depth_uk = 930.0;
};
struct ConvertStep {};
struct MeasureStep {
  StateBin target = StateBin::MMinus;
};

using Step = std::variant<LoadStep, ImageStep, PumpStep, MicrowaveStep,
                          RamanStep, CompositeStep, HoldStep, RampStep,
                          ConvertStep, MeasureStep>;

struct Schedule {
  std::vector<Step> steps;

  int n_sites() const;
  // Indices of steps that record an error flag (error images and composite
  // detections with imaging).
  std::vector<int> flag_steps() const;
  // True when the schedule works on the hyperfine qubit: Raman or composite
  // steps, or transfers/measurements addressing the qubit bins. Selects the
  // partition configuration of the run.
  bool has_qubit_steps() const;
};

enum class ParseErrorCode {
  EmptySchedule,
  UnknownPrimitive,
  ArityMismatch,
  BadValue,
  InvariantViolation,
};

struct ParseError : std::runtime_error {
  ParseError(ParseErrorCode code, int line, int col, const std::string& msg);
  ParseErrorCode code;
  int line;
  int col;
};

// Line-oriented script: one primitive per line, '#' comments,
// case-insensitive keywords, duration suffixes s/ms/us, angles as radians or
// pi fractions (pi, pi/2, -pi/4, 3pi/2).
Schedule parse_script(const std::string& text);

// Canonical form: parse(print(s)) == s and printing is a fixed point.
std::string print_script(const Schedule& schedule);

// Physics-sanity warnings (not errors): holds long enough for leaked
// population to decay without conversion, detection below the calibrated
// depth.
std::vector<std::string> validate_schedule(const Schedule& schedule,
                                           const PhysicsParams& p);

}  // namespace molerase
