#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace molerase {

// Binned internal-state catalog for a CaF molecule in a tweezer, plus the two
// absorbing bookkeeping bins (SINK for dark lost-to-model states, EMPTY for a
// lost molecule). QUBIT is a sentinel for a coherent superposition of Q_DOWN
// and Q_ZERO carried by a Bloch vector.
enum class StateBin : int {
  QDown = 0,   // |X, v=0, N=0, F=1, mF=0>   ("down")
  QZero,       // |X, v=0, N=0, F=0, mF=0>   ("zero")
  Qubit,       // coherent superposition of QDown/QZero (Bloch vector present)
  MMinus,      // |X, v=0, N=0, F=1, mF=-1>  ("minus"), preparation target
  MPlus,       // |X, v=0, N=0, F=1, mF=+1>
  DPrime,      // |X, v=0, N=1, J=3/2, F=2, mF=-2>, optical pumping target
  Up,          // |X, v=0, N=1, J=1/2, F=0, mF=0>, verification shelf
  FRest,       // remaining X(v=0, N=1) hyperfine states (11/12 of the manifold)
  N2,          // X(v=0, N=2)
  N3,          // X(v=0, N=3), recovered by the rotational repump at images
  V1N1,        // X(v=1, N=1), reached from N=0 by blackbody absorption
  V1Other,     // X(v=1, N=0 or 2), reached from N=1 by blackbody absorption
  Sink,        // absorbing dark bin (deep leakage, failed conversions)
  Empty,       // no molecule in the tweezer
};

inline constexpr int kNumBins = 14;

inline constexpr std::array<StateBin, kNumBins> kAllBins = {
    StateBin::QDown,  StateBin::QZero, StateBin::Qubit,  StateBin::MMinus,
    StateBin::MPlus,  StateBin::DPrime, StateBin::Up,    StateBin::FRest,
    StateBin::N2,     StateBin::N3,    StateBin::V1N1,   StateBin::V1Other,
    StateBin::Sink,   StateBin::Empty};

std::string_view bin_name(StateBin b);
StateBin bin_from_name(std::string_view name);  // throws CatalogError

// The four X(v=0,N=0) population bins (QUBIT excluded; it is a view onto
// QDown/QZero).
bool is_n0_bin(StateBin b);

enum class PartitionClass : int { Target, Detect, Erasable, Sink, Empty };

std::string_view partition_class_name(PartitionClass c);

struct CatalogError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Assignment of every bin to exactly one partition class. The detection
// manifold and bookkeeping classes are fixed; the target set depends on the
// experiment (single prepared state vs. the hyperfine qubit pair).
class Partition {
 public:
  // Target = {MMinus}: state-preparation experiments.
  static Partition preparation();
  // Target = {QDown, QZero} (and the QUBIT sentinel): qubit experiments.
  static Partition qubit();

  PartitionClass of(StateBin b) const;
  std::string_view name() const { return name_; }

 private:
  Partition() = default;
  std::array<PartitionClass, kNumBins> classes_{};
  std::string name_;
};

inline PartitionClass partition_of(StateBin b, const Partition& p) {
  return p.of(b);
}

struct Bloch {
  double x = 0.0;
  double y = 0.0;
  double z = 1.0;

  double norm() const;
};

// Per-site hybrid state: a discrete bin plus, for the QUBIT sentinel, a Bloch
// vector. phase_accum tracks the frame phase picked up between pulses;
// static_detune is the current trap-induced qubit shift in rad/s.
struct SiteState {
  StateBin bin = StateBin::Empty;
  std::optional<Bloch> bloch;
  double phase_accum = 0.0;
  double static_detune = 0.0;

  bool present() const {
    return bin != StateBin::Empty && bin != StateBin::Sink;
  }
};

// Ideal Bloch rotation by `angle` about the equatorial axis at azimuth
// `axis_phase`. Contract: acts only on the QUBIT sentinel; any other bin is
// returned unchanged (the pulse addresses only the qubit subspace).
SiteState apply_rotation(const SiteState& site, double axis_phase,
                         double angle);

// Fraction of final bins outside {EMPTY, SINK}. Throws on an empty batch.
double survival_probability(std::span<const StateBin> final_bins);

struct UndefinedStatisticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Calibrated rate table. Defaults reproduce the measured error budget of the
// apparatus; every field can be overridden from the CLI by dotted key.
struct PhysicsParams {
  // Imaging transition (used by offres_ratio). rad/s.
  double gamma_opt = 2 * 3.14159265358979324 * 10.0e6;
  double delta_ft = 2 * 3.14159265358979324 * 20.0e9;

  // Per-image loss budget for a molecule in the target manifold.
  double loss_detectlight_per_image = 3.0e-3;  // leakage to N2 / mF=+-1
  double loss_ramp_pair_per_image = 2.4e-3;    // tweezer ramp up+down pair
  double loss_f_per_image = 1.0e-3;            // detection-manifold loss
  // Reference totals from the calibration data set (not used by the
  // dynamics; kept for reporting and audits).
  double loss_t_per_image_ref = 3.8e-3;
  double background_loss_per_image_ref = 1.2e-3;

  // Raman pulse quality factors (leakage = (angle/pi)/q_pi) and the pure
  // dephasing fraction per pi pulse for each scheme.
  double q_pi_xb = 37.0;
  double q_pi_xa_current = 320.0;    // ~3.1e-3 leakage per pi pulse
  double q_pi_xa_optimal = 10000.0;  // projected 1e-4 leakage per pi pulse
  double dephasing_per_pi_xb = 0.013;
  double dephasing_per_pi_xa_current = 0.0065;
  double dephasing_per_pi_xa_optimal = 0.0059;

  // Blackbody chain and trap losses, s^-1.
  double gamma_bb_01 = 0.3;  // X(v=0) -> X(v=1) absorption
  double gamma_bb_10 = 5.3;  // X(v=1) -> X(v=0) spontaneous decay
  // Effective v=1,N=1 decay branch that repopulates N=0 (uniformly over its
  // four hyperfine bins); the rest parks in N2. Not printed anywhere; the
  // hold-sweep loss rates fix the product branch/4 to about 0.07.
  double branch_v1_to_n0 = 0.27;
  double branch_repump_to_f = 0.98;  // A-state decay branch to N=1 on repump
  double eta_convert = 0.90;         // v=1 repump transfer efficiency
  double eta_detect_bb_ref = 0.80;   // reference detected fraction, reporting
  // The 13.5 s detection-manifold lifetime splits into a vacuum part (all
  // bins) and an N=1-specific part (double blackbody excitation to N>=5 and
  // other dark leakage); the split is a calibration choice, the sum is not.
  double gamma_vac = 0.015;          // vacuum loss, all occupied bins
  double gamma_detect_sink = 0.059;  // N=1-specific dark loss

  // Trap depths (uK) and the depth-dependent qubit shift.
  double depth_hf = 39.0;
  double depth_ed = 930.0;
  double qubit_shift_deep = 2 * 3.14159265358979324 * 400.0;  // rad/s at U_ED
  double depth_inhomogeneity = 0.10;
  double ramp_duration = 0.2e-3;  // seconds per ramp (up or down)

  // Optical pumping curve f(t) = f_inf - (f_inf - f0) exp(-t/tau).
  double pump_f_inf = 0.96;
  double pump_f0 = 1.0 / 12.0;
  double pump_tau = 1.0e-3;

  // Split of detection-light leakage between N2 and the mF=+-1 states.
  // Not constrained by the calibration data; 50/50 by default.
  double leak_n2_fraction = 0.5;

  // Occupancy-identification image: post-detection survival loss.
  double loss_nondestructive_postdetect = 0.04;

  // Dephasing model: a quasi-static Gaussian detune plus an OU process.
  // Set by calibrate_dephasing(); defaults below correspond to
  // T2* = 19.5 ms, echo T2 = 288 ms.
  double sigma_quasistatic = 72.52;  // rad/s
  double sigma_ou = 11.11;           // rad/s
  double tau_ou = 0.048;             // s

  void validate() const;  // throws std::invalid_argument on violations

  static PhysicsParams defaults();
};

}  // namespace molerase
