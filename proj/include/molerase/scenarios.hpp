#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace molerase {

// A registered reproduction target: one quantitative result of the
// calibration data set (or one always-on property gate), runnable on its
// own from the CLI and collected into the acceptance suite.
enum class GateKind {
  AbsWindow,    // pass iff |simulated - reference| <= tolerance
  LowerBound,   // pass iff simulated >= reference
  UpperBound,   // pass iff simulated <= reference
  BoolCheck,    // simulated is 1 (pass) or 0
};

struct ScenarioResult {
  std::string id;
  std::string description;
  double reference = 0.0;
  double tolerance = 0.0;
  GateKind gate = GateKind::AbsWindow;
  double simulated = 0.0;
  bool pass = false;
  std::string detail;
};

struct ScenarioInfo {
  std::string id;
  std::string description;
  int criterion = 0;  // acceptance criterion the target belongs to
};

const std::vector<ScenarioInfo>& scenario_catalog();
bool is_scenario_id(const std::string& id);

// Runs one target. Results of shared underlying simulations are memoized
// per (group, seed), so running every target in sequence does each
// simulation once.
ScenarioResult run_scenario(const std::string& id, std::uint64_t seed);

std::string format_result(const ScenarioResult& r);

}  // namespace molerase
