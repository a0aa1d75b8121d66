#pragma once

#include <map>
#include <string>
#include <vector>

#include "molerase/engine.hpp"

namespace molerase {

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UndefinedConditionalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IncompleteDesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;  // 1-sigma uncertainties
  double residual_norm = 0.0;
  int n_points = 0;
  bool converged = false;

  double value(const std::string& name) const;
  double sigma(const std::string& name) const;
};

struct XY {
  double x = 0.0;
  double y = 0.0;
};

// Least squares A exp(-gamma t) (+ C with with_offset). Log-domain
// initialization, Levenberg-Marquardt refinement.
FitResult fit_exponential(const std::vector<XY>& points, bool with_offset);

// Fringe fit y = C + (A/2) cos(phi - phi0) via the linear quadrature form.
// Amplitude uncertainty from a residual bootstrap (200 resamples).
FitResult fit_fringe(const std::vector<XY>& points);

// Post-selection: keeps records that are occupied_initial = 1 and carry
// flag = 0 at the k-th flagged image (ordinal, 0-based). The retained
// fraction is relative to the occupied baseline.
struct ExciseResult {
  std::vector<TrialRecord> records;
  double retained_fraction = 1.0;
};
ExciseResult excise(const std::vector<TrialRecord>& records, int image_index);
// Excise on every flagged image at once.
ExciseResult excise_all(const std::vector<TrialRecord>& records);

// Detection-conditioned state purity for success probability s and
// classifier infidelities eps01 (false positive) and eps10 (false negative).
double conditional_purity(double s, double eps01, double eps10);

// Per-image loss-rate decomposition by channel differencing. Each batch is
// a survival-vs-image-count curve keyed by the channel combination: "tev"
// (ramps + detection light + repump), "ev", "t", and "none". Rates are per
// cycle.
struct RateContribution {
  double rate = 0.0;
  double sigma = 0.0;
};
struct ContributionTable {
  RateContribution detect_light;  // tev - t
  RateContribution ramps;         // t - none
  RateContribution background;    // none
  RateContribution total;         // tev
  double additivity_residual = 0.0;  // tev - t - ev + none
  double additivity_sigma = 0.0;
  bool additive_within_2sigma = false;
};
ContributionTable rate_decompose(
    const std::map<std::string, std::vector<XY>>& batches);

// Interpolated 1/e crossing of a decay curve, normalized to its first
// point. Local log-linear interpolation around the crossing; used for
// coherence curves whose shape is not exponential.
double one_over_e_time(const std::vector<XY>& curve);

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

}  // namespace molerase
