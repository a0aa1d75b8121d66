#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "molerase/instruments.hpp"
#include "molerase/schedule.hpp"
#include "molerase/state.hpp"

namespace molerase {

struct TrialRecord {
  int trial = 0;
  int site = 0;
  int occupied_initial = 0;
  std::vector<std::pair<int, int>> flags;  // (step_index, bit)
  StateBin final_bin = StateBin::Empty;
  std::optional<int> final_measure;
  // Diagnostics; carried in memory only, never serialized.
  int bb_excitations = 0;
  int conversions = 0;
};

struct RunOptions {
  ImageParams image = ImageParams::defaults();
  // Occupancy identification prioritizes purity over retention: see README.
  double nondestructive_theta = 12.0;
  int threads = 1;
};

struct BoundedRunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Executes the schedule for every (trial, site) pair. Each pair evolves on
// its own RNG substream keyed by (master_seed, trial, site, step), so the
// records are byte-identical for any execution order or thread count. The
// engine never conditions on flags; excision is analysis-side.
std::vector<TrialRecord> run_trials(const Schedule& schedule,
                                    std::uint64_t n_trials,
                                    std::uint64_t master_seed,
                                    const PhysicsParams& params,
                                    const RunOptions& options = {});

// CSV with header trial,site,occupied,flags,final_bin,measure; flags are
// semicolon-joined bits in schedule order, measure is empty when absent.
void write_records_csv(std::ostream& os,
                       const std::vector<TrialRecord>& records);
void write_records_jsonl(std::ostream& os,
                         const std::vector<TrialRecord>& records);

double survival_probability(const std::vector<TrialRecord>& records);

}  // namespace molerase
