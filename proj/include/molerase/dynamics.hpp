#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "molerase/rng.hpp"
#include "molerase/state.hpp"

namespace molerase {

// Ornstein-Uhlenbeck detuning channel, updated by exact discretization.
struct OUNoiseState {
  double current_detune = 0.0;  // rad/s
  double tau_ou = 1.0;          // s
  double sigma_ou = 0.0;        // rad/s

  static OUNoiseState stationary(const PhysicsParams& p, RngStream& rng);
};

// Advances the OU state by dt and returns the phase accumulated over the
// step (trapezoidal detune integral). Exact mean reversion and stationary
// variance for any dt.
std::pair<double, OUNoiseState> ou_phase_increment(const OUNoiseState& noise,
                                                   double dt, RngStream& rng);

// Transition-rate generator over the bin catalog. Column = source bin,
// row = destination bin, diagonal = -(total outflow). Columns sum to zero;
// population is conserved including the absorbing EMPTY/SINK bins.
class RateMatrix {
 public:
  RateMatrix();  // zero generator

  void set_rate(StateBin from, StateBin to, double rate_per_s);
  double rate(StateBin from, StateBin to) const;
  double total_outflow(StateBin from) const;
  const Eigen::MatrixXd& generator() const { return g_; }

  // The free-hold chain: blackbody excitation and decay, vacuum loss, and
  // the N=1 double-excitation sink.
  static RateMatrix hold_chain(const PhysicsParams& p);

 private:
  Eigen::MatrixXd g_;
};

// Matrix-exponential solution of d occupancy/dt = G * occupancy.
// `initial` must sum to 1 within 1e-9 (argument error otherwise); the result
// sums to 1 within 1e-9.
Eigen::VectorXd master_rates_solve(const RateMatrix& rates,
                                   const Eigen::VectorXd& initial, double t);

// One exponential-waiting-time jump for the chain: returns the waiting time
// (infinity if the bin is absorbing) and the destination sampled at jump
// time.
std::pair<double, StateBin> next_jump(const RateMatrix& rates, StateBin from,
                                      RngStream& rng);

// v=1 repump pulse primitive: V1_N1 is transferred to F_REST with
// probability eta_convert * branch_repump_to_f, otherwise to SINK. All other
// bins are untouched. (instruments::convert_erasures is this operation.)
SiteState apply_v1_repump(const SiteState& site, const PhysicsParams& p,
                          RngStream& rng);

struct HoldStats {
  int bb_excitations_from_n0 = 0;  // jumps N=0 -> v=1 during the hold
  int conversions = 0;             // successful repump transfers to F_REST
};

// Adds `seg` seconds of qubit phase: constant detunes integrated exactly,
// the OU component in dt = min(1 ms, tau_ou/10) chunks. No-op unless the
// site is in the QUBIT bin.
void accrue_qubit_phase(SiteState& site, double seg, double const_detune,
                        OUNoiseState& ou, const PhysicsParams& p,
                        RngStream& rng);

// Free evolution for `duration` seconds: exponential jump sampling on the
// hold chain, optional v=1 repump pulses every `repump_period` (pulses fire
// at every multiple of the period, including one at the end of the hold when
// the duration is an exact multiple), and dephasing phase accrual while the
// site is in the QUBIT bin. `extra_detune` adds a constant (quasi-static)
// detune on top of the site's trap shift. When `ou` is null and the site is
// a qubit, a stationary OU state is drawn internally.
SiteState evolve_hold(const SiteState& site, double duration,
                      const PhysicsParams& p,
                      std::optional<double> repump_period, RngStream& rng,
                      OUNoiseState* ou = nullptr, double extra_detune = 0.0,
                      HoldStats* stats = nullptr);

// Same, against a prebuilt hold chain (avoids rebuilding the generator in
// inner loops; `chain` must be RateMatrix::hold_chain(p)).
SiteState evolve_hold_chain(const SiteState& site, double duration,
                            const PhysicsParams& p, const RateMatrix& chain,
                            std::optional<double> repump_period,
                            RngStream& rng, OUNoiseState* ou = nullptr,
                            double extra_detune = 0.0,
                            HoldStats* stats = nullptr);

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DephasingCalibration {
  double sigma_quasistatic = 0.0;  // rad/s
  double sigma_ou = 0.0;           // rad/s
  double tau_ou = 0.0;             // s
  double residual = 0.0;           // |echo amplitude at t2_echo - 1/e|
};

// OU echo attenuation exponent chi(t) for a single spin echo; the echo
// amplitude is exp(-chi(t)). Quasi-static noise refocuses exactly and does
// not enter.
double ou_echo_exponent(double sigma_ou, double tau_ou, double t);
// Free-induction OU exponent (Ramsey without echo).
double ou_fid_exponent(double sigma_ou, double tau_ou, double t);

// Fixes the two-component dephasing model from the measured coherence
// times: sigma_quasistatic = sqrt(2)/t2_star (Ramsey 1/e), and sigma_ou
// root-solved so the modeled single-echo amplitude, including the
// population-loss envelope exp(-amplitude_loss_rate * t), reaches 1/e of its
// initial value at t2_echo. tau_ou is pinned to t2_echo / 4.8.
DephasingCalibration calibrate_dephasing(double t2_star, double t2_echo,
                                         double amplitude_loss_rate);
// Overload using the default-parameter loss envelope (blackbody + vacuum).
DephasingCalibration calibrate_dephasing(double t2_star, double t2_echo);

// Off-resonant scattering ratio 9 (gamma/delta)^2.
double offres_ratio(double gamma, double delta);

}  // namespace molerase
