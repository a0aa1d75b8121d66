#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "molerase/dynamics.hpp"
#include "molerase/rng.hpp"
#include "molerase/state.hpp"

namespace molerase {

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AuditError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rapid resonant imaging parameters. Counts are calibrated photoelectron
// units; the classification threshold theta_e is in the same units.
struct ImageParams {
  double duration = 3.0e-3;          // s
  double mean_signal_counts = 20.0;  // detected photons, molecule in DETECT
  double mean_background_counts = 0.5;
  double camera_noise_sigma = 2.0;  // Gaussian read noise, counts
  double theta_e = 4.8;             // classification threshold
  // Probability that a bright molecule goes dark partway through the
  // exposure (slow repump excursions). Calibrated so eps10(theta_e) matches
  // the measured operating point; see calibrate_dark_excursion().
  double dark_excursion_prob = 0.145;

  void validate() const;
  static ImageParams defaults();
};

// P(Pois(mean) + N(0,sigma) <= x).
double count_below_prob(double mean, double sigma, double x);
double poisson_cdf(int k, double lambda);

// Model classifier curves for a fixed set of image parameters.
double eps01_model(double theta, const ImageParams& img);
double eps10_model(double theta, const ImageParams& img);

// Solves dark_excursion_prob so that eps10(img.theta_e) = target.
double calibrate_dark_excursion(const ImageParams& img, double target);

enum class RamanSchemeKind { XB, XACurrent, XAOptimal };

struct RamanScheme {
  RamanSchemeKind kind = RamanSchemeKind::XB;
  std::string name = "xb";
  double q_pi = 37.0;                 // pi pulses per leaked molecule
  double pure_dephasing_per_pi = 0.0; // full phase randomization probability
  bool resonant_with_f = false;       // heats DETECT molecules out of the trap

  static RamanScheme xb(const PhysicsParams& p);
  static RamanScheme xa_current(const PhysicsParams& p);
  static RamanScheme xa_optimal(const PhysicsParams& p);
  static RamanScheme from_name(const std::string& name,
                               const PhysicsParams& p);
};

// Per-site instrument context threaded through an experiment: the OU
// detuning channel, the frozen quasi-static detune for this shot, the
// current trap depth and this site's depth inhomogeneity factor.
struct SiteContext {
  OUNoiseState ou;
  double quasistatic_detune = 0.0;  // rad/s, drawn once per (trial, site)
  double depth = 930.0;             // uK
  double depth_delta = 0.0;         // fractional, drawn once per site
  HoldStats stats;
  const RateMatrix* chain = nullptr;  // cached hold chain
};

double trap_detune(const PhysicsParams& p, double depth, double depth_delta);

// One fluorescence exposure: rotational repump recovery, detection-light
// leakage on the dark target manifold, chain evolution across the exposure
// with bright-time tracking, dark excursions, detection-manifold loss, and
// the photon count draw. V1 bins are dark (erasures must be converted to the
// detection manifold before they can flag).
struct ImageResult {
  double count = 0.0;
  SiteState site;
};
ImageResult fluorescence_image(const SiteState& site, const ImageParams& img,
                               const PhysicsParams& p, RngStream& rng,
                               SiteContext* ctx = nullptr);

// 1 iff count > theta.
int classify(double count, double theta_e);

// Optical pumping toward DPRIME within the detection manifold:
// f(t) = f_inf - (f_inf - f0) exp(-t / tau_op), f0 = 1/12. No-op outside
// DETECT.
SiteState optical_pump(const SiteState& site, double duration,
                       const PhysicsParams& p, RngStream& rng);

// State-selective transfer source -> dest with the given fidelity. Guarded:
// the pair must connect the target and detection classes of the active
// partition.
SiteState microwave_transfer(const SiteState& site, double fidelity,
                             StateBin source, StateBin dest,
                             const Partition& partition, RngStream& rng);

// Raman rotation with off-resonant scattering leakage and pure dephasing
// kicks. Promotes a pure qubit-basis bin to the QUBIT sentinel. A scheme
// resonant with the detection manifold heats DETECT molecules out of the
// trap.
SiteState raman_pulse(const SiteState& site, const RamanScheme& scheme,
                      double angle, double axis_phase, const PhysicsParams& p,
                      RngStream& rng);

// Tweezer depth ramp: charges half of the ramp-pair loss, advances the
// background chain over the ramp duration, and updates the site's trap
// detune. The deep-detune interval is symmetric for an up/down pair around
// an image so a mid-image echo pulse cancels it.
SiteState ramp_depth(const SiteState& site, double to_depth,
                     const PhysicsParams& p, RngStream& rng, SiteContext& ctx);

// Composite erasure detection: ramp to the detection depth, image with a
// mid-exposure echo pi pulse, ramp back. Returns the error flag. Schemes
// resonant with the detection manifold are rejected. `include_image = false`
// runs the ramps + pi pulse variant (no detection light, no flag).
struct CompositeResult {
  int flag = 0;
  bool has_flag = false;
  SiteState site;
};
CompositeResult composite_erasure_detect(const SiteState& site,
                                         const RamanScheme& scheme,
                                         const ImageParams& img,
                                         const PhysicsParams& p,
                                         RngStream& rng, SiteContext& ctx,
                                         bool include_image = true);

// v=1 repump pulse; see apply_v1_repump.
SiteState convert_erasures(const SiteState& site, const PhysicsParams& p,
                           RngStream& rng);

// Static transition tables for the crosstalk audit: op name -> set of
// possible (from, to) bin transitions. Ops allowed to connect the target and
// detection classes are listed in audit_whitelist().
std::map<std::string, std::vector<std::pair<StateBin, StateBin>>>
instrument_transition_tables(const PhysicsParams& p);
std::vector<std::string> audit_whitelist();

}  // namespace molerase
