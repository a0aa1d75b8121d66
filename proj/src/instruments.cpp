#include "molerase/instruments.hpp"

#include <algorithm>
#include <cmath>

namespace molerase {

namespace {

constexpr double kPi = 3.14159265358979324;

bool in_detect(StateBin b) {
  return b == StateBin::DPrime || b == StateBin::Up || b == StateBin::FRest;
}

// Normal CDF.
double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Rz(phase_accum) folded into the Bloch vector before a pulse acts.
void fold_frame_phase(SiteState& s) {
  if (s.bin != StateBin::Qubit || !s.bloch) {
    s.phase_accum = 0.0;
    return;
  }
  double c = std::cos(s.phase_accum);
  double sn = std::sin(s.phase_accum);
  Bloch b = *s.bloch;
  s.bloch = Bloch{b.x * c - b.y * sn, b.x * sn + b.y * c, b.z};
  s.phase_accum = 0.0;
}

// Chain evolution across an exposure window. Returns the fraction of the
// window spent in the detection manifold; accrues qubit phase per segment.
double expose_chain(SiteState& cur, double duration, const PhysicsParams& p,
                    RngStream& rng, SiteContext* ctx) {
  if (duration <= 0.0) return 0.0;
  RateMatrix local_chain;
  const RateMatrix* chain = ctx && ctx->chain ? ctx->chain : nullptr;
  if (chain == nullptr) {
    local_chain = RateMatrix::hold_chain(p);
    chain = &local_chain;
  }
  OUNoiseState local_ou;
  OUNoiseState* ou = ctx ? &ctx->ou : nullptr;
  if (ou == nullptr) {
    local_ou = OUNoiseState::stationary(p, rng);
    ou = &local_ou;
  }
  double qs = ctx ? ctx->quasistatic_detune : 0.0;

  double t = 0.0;
  double bright = 0.0;
  auto [wait, dest] = next_jump(*chain, cur.bin, rng);
  double t_jump = wait;
  while (t < duration) {
    double boundary = std::min(t_jump, duration);
    if (in_detect(cur.bin)) bright += boundary - t;
    accrue_qubit_phase(cur, boundary - t, qs, *ou, p, rng);
    t = boundary;
    if (t_jump <= duration) {
      if (ctx && dest == StateBin::V1N1 && cur.bin != StateBin::V1N1) {
        ++ctx->stats.bb_excitations_from_n0;
      }
      cur.bin = dest;
      cur.bloch.reset();
      std::tie(wait, dest) = next_jump(*chain, cur.bin, rng);
      t_jump = t + wait;
    }
  }
  return bright / duration;
}

// Detection light drives a small leak out of the dark target manifold into
// N2 or the mF=+-1 states. Leaks out of the mF=+-1 bins themselves are
// folded into N2: every leak is a one-way error, matching how the loss
// budget was measured.
void apply_detect_light_leak(SiteState& s, const PhysicsParams& p,
                             RngStream& rng) {
  if (!(is_n0_bin(s.bin) || s.bin == StateBin::Qubit)) return;
  if (!rng.bernoulli(p.loss_detectlight_per_image)) return;
  StateBin to;
  if (s.bin == StateBin::MMinus || s.bin == StateBin::MPlus ||
      rng.bernoulli(p.leak_n2_fraction)) {
    to = StateBin::N2;
  } else {
    to = rng.bernoulli(0.5) ? StateBin::MMinus : StateBin::MPlus;
  }
  s.bin = to;
  s.bloch.reset();
}

double draw_count(double bright_fraction, const ImageParams& img,
                  RngStream& rng) {
  double mean =
      img.mean_signal_counts * bright_fraction + img.mean_background_counts;
  return rng.poisson(mean) + rng.normal(0.0, img.camera_noise_sigma);
}

}  // namespace

void ImageParams::validate() const {
  if (!(duration > 0)) throw std::invalid_argument("image duration <= 0");
  if (mean_signal_counts < 0 || mean_background_counts < 0) {
    throw std::invalid_argument("negative count means");
  }
  if (theta_e < 0) throw std::invalid_argument("negative threshold");
  if (!(dark_excursion_prob >= 0 && dark_excursion_prob <= 1)) {
    throw std::invalid_argument("dark_excursion_prob outside [0,1]");
  }
}

ImageParams ImageParams::defaults() {
  static const ImageParams cal = [] {
    ImageParams img;
    img.dark_excursion_prob = calibrate_dark_excursion(img, 0.033);
    return img;
  }();
  return cal;
}

double poisson_cdf(int k, double lambda) {
  if (k < 0) return 0.0;
  double term = std::exp(-lambda);
  double sum = term;
  for (int i = 1; i <= k; ++i) {
    term *= lambda / i;
    sum += term;
  }
  return std::min(sum, 1.0);
}

double count_below_prob(double mean, double sigma, double x) {
  if (sigma <= 0.0) {
    return poisson_cdf(static_cast<int>(std::floor(x)), mean);
  }
  int kmax = static_cast<int>(std::ceil(mean + 12.0 * std::sqrt(mean + 1.0)));
  double term = std::exp(-mean);
  double total = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) term *= mean / k;
    total += term * phi((x - k) / sigma);
  }
  return total;
}

double eps01_model(double theta, const ImageParams& img) {
  return 1.0 - count_below_prob(img.mean_background_counts,
                                img.camera_noise_sigma, theta);
}

namespace {

double partial_signal_below(double theta, const ImageParams& img) {
  constexpr int kGrid = 400;
  double total = 0.0;
  for (int j = 0; j < kGrid; ++j) {
    double u = (j + 0.5) / kGrid;
    total += count_below_prob(
        img.mean_signal_counts * u + img.mean_background_counts,
        img.camera_noise_sigma, theta);
  }
  return total / kGrid;
}

}  // namespace

double eps10_model(double theta, const ImageParams& img) {
  double full = count_below_prob(
      img.mean_signal_counts + img.mean_background_counts,
      img.camera_noise_sigma, theta);
  double partial = partial_signal_below(theta, img);
  return img.dark_excursion_prob * partial +
         (1.0 - img.dark_excursion_prob) * full;
}

double calibrate_dark_excursion(const ImageParams& img, double target) {
  double full = count_below_prob(
      img.mean_signal_counts + img.mean_background_counts,
      img.camera_noise_sigma, img.theta_e);
  double partial = partial_signal_below(img.theta_e, img);
  if (partial <= full) {
    throw CalibrationError("partial-signal tail not above the full tail");
  }
  double p = (target - full) / (partial - full);
  return std::clamp(p, 0.0, 1.0);
}

RamanScheme RamanScheme::xb(const PhysicsParams& p) {
  return {RamanSchemeKind::XB, "xb", p.q_pi_xb, p.dephasing_per_pi_xb, false};
}

RamanScheme RamanScheme::xa_current(const PhysicsParams& p) {
  return {RamanSchemeKind::XACurrent, "xa-current", p.q_pi_xa_current,
          p.dephasing_per_pi_xa_current, true};
}

RamanScheme RamanScheme::xa_optimal(const PhysicsParams& p) {
  return {RamanSchemeKind::XAOptimal, "xa-optimal", p.q_pi_xa_optimal,
          p.dephasing_per_pi_xa_optimal, false};
}

RamanScheme RamanScheme::from_name(const std::string& name,
                                   const PhysicsParams& p) {
  if (name == "xb") return xb(p);
  if (name == "xa-current") return xa_current(p);
  if (name == "xa-optimal") return xa_optimal(p);
  throw std::invalid_argument("unknown Raman scheme: " + name);
}

double trap_detune(const PhysicsParams& p, double depth, double depth_delta) {
  return p.qubit_shift_deep * (depth / p.depth_ed) * (1.0 + depth_delta);
}

ImageResult fluorescence_image(const SiteState& site, const ImageParams& img,
                               const PhysicsParams& p, RngStream& rng,
                               SiteContext* ctx) {
  img.validate();
  SiteState s = site;
  if (s.bin == StateBin::N3) s.bin = StateBin::FRest;  // rotational repump
  apply_detect_light_leak(s, p, rng);
  double bright = expose_chain(s, img.duration, p, rng, ctx);
  if (bright > 0.0 && rng.bernoulli(img.dark_excursion_prob)) {
    bright *= rng.uniform();
  }
  if (in_detect(s.bin) && rng.bernoulli(p.loss_f_per_image)) {
    s.bin = StateBin::Empty;
  }
  return {draw_count(bright, img, rng), s};
}

int classify(double count, double theta_e) { return count > theta_e ? 1 : 0; }

SiteState optical_pump(const SiteState& site, double duration,
                       const PhysicsParams& p, RngStream& rng) {
  if (duration < 0) throw std::invalid_argument("negative pump duration");
  if (!in_detect(site.bin)) return site;  // pump light only addresses F
  double f = p.pump_f_inf -
             (p.pump_f_inf - p.pump_f0) * std::exp(-duration / p.pump_tau);
  SiteState s = site;
  s.bin = rng.bernoulli(f) ? StateBin::DPrime : StateBin::FRest;
  return s;
}

SiteState microwave_transfer(const SiteState& site, double fidelity,
                             StateBin source, StateBin dest,
                             const Partition& partition, RngStream& rng) {
  if (source == dest) {
    throw std::invalid_argument("microwave source equals destination");
  }
  PartitionClass cs = partition.of(source);
  PartitionClass cd = partition.of(dest);
  bool target_detect =
      (cs == PartitionClass::Target && cd == PartitionClass::Detect) ||
      (cs == PartitionClass::Detect && cd == PartitionClass::Target);
  if (!target_detect) {
    throw AuditError("microwave transfer must connect the target and "
                     "detection classes (got " +
                     std::string(partition_class_name(cs)) + " -> " +
                     std::string(partition_class_name(cd)) + ")");
  }
  SiteState s = site;
  // A state-selective pulse on a superposition projects it first.
  if (s.bin == StateBin::Qubit && s.bloch &&
      (source == StateBin::QDown || source == StateBin::QZero)) {
    double p_down = 0.5 * (1.0 + s.bloch->z);
    s.bin = rng.bernoulli(p_down) ? StateBin::QDown : StateBin::QZero;
    s.bloch.reset();
  }
  if (s.bin == source && rng.bernoulli(fidelity)) s.bin = dest;
  return s;
}

SiteState raman_pulse(const SiteState& site, const RamanScheme& scheme,
                      double angle, double axis_phase, const PhysicsParams& p,
                      RngStream& rng) {
  SiteState s = site;
  if (scheme.resonant_with_f && in_detect(s.bin)) {
    s.bin = StateBin::Empty;  // resonant light heats F out of the trap
    s.bloch.reset();
    return s;
  }
  if (s.bin == StateBin::QDown) {
    s.bin = StateBin::Qubit;
    s.bloch = Bloch{0.0, 0.0, 1.0};
  } else if (s.bin == StateBin::QZero) {
    s.bin = StateBin::Qubit;
    s.bloch = Bloch{0.0, 0.0, -1.0};
  }
  if (s.bin != StateBin::Qubit) return s;

  double pulse_fraction = std::abs(angle) / kPi;
  if (rng.bernoulli(pulse_fraction / scheme.q_pi)) {
    // Off-resonant scattering leaks the molecule out of the qubit subspace.
    s.bin = rng.bernoulli(p.leak_n2_fraction) ? StateBin::N2 : StateBin::MPlus;
    s.bloch.reset();
    return s;
  }
  if (rng.bernoulli(pulse_fraction * scheme.pure_dephasing_per_pi)) {
    s.phase_accum += rng.uniform(0.0, 2.0 * kPi);
  }
  fold_frame_phase(s);
  return apply_rotation(s, axis_phase, angle);
}

SiteState ramp_depth(const SiteState& site, double to_depth,
                     const PhysicsParams& p, RngStream& rng,
                     SiteContext& ctx) {
  if (!(to_depth > 0)) throw std::invalid_argument("ramp depth must be > 0");
  SiteState s = site;
  if (rng.bernoulli(p.loss_ramp_pair_per_image / 2.0)) {
    s.bin = StateBin::Empty;
    s.bloch.reset();
  }
  double new_detune = trap_detune(p, to_depth, ctx.depth_delta);
  bool up = to_depth > ctx.depth;
  auto advance = [&] {
    if (p.ramp_duration > 0) {
      RateMatrix local;
      const RateMatrix* chain = ctx.chain;
      if (chain == nullptr) {
        local = RateMatrix::hold_chain(p);
        chain = &local;
      }
      s = evolve_hold_chain(s, p.ramp_duration, p, *chain, std::nullopt, rng,
                            &ctx.ou, ctx.quasistatic_detune, &ctx.stats);
    }
  };
  // Deep-detune intervals stay symmetric around a mid-image echo pulse: an
  // up ramp switches the shift at its start, a down ramp at its end.
  if (up) {
    s.static_detune = new_detune;
    advance();
  } else {
    advance();
    s.static_detune = new_detune;
  }
  ctx.depth = to_depth;
  return s;
}

CompositeResult composite_erasure_detect(const SiteState& site,
                                         const RamanScheme& scheme,
                                         const ImageParams& img,
                                         const PhysicsParams& p,
                                         RngStream& rng, SiteContext& ctx,
                                         bool include_image) {
  if (scheme.resonant_with_f) {
    throw PreconditionError(
        "composite erasure detection requires a Raman scheme that is not "
        "resonant with the detection manifold");
  }
  img.validate();
  double home_depth = ctx.depth;
  CompositeResult out;
  SiteState s = ramp_depth(site, p.depth_ed, p, rng, ctx);
  if (include_image) {
    if (s.bin == StateBin::N3) s.bin = StateBin::FRest;
    apply_detect_light_leak(s, p, rng);
    double bright = 0.0;
    bright += expose_chain(s, img.duration / 2.0, p, rng, &ctx) / 2.0;
    s = raman_pulse(s, scheme, kPi, 0.0, p, rng);
    bright += expose_chain(s, img.duration / 2.0, p, rng, &ctx) / 2.0;
    if (bright > 0.0 && rng.bernoulli(img.dark_excursion_prob)) {
      bright *= rng.uniform();
    }
    if (in_detect(s.bin) && rng.bernoulli(p.loss_f_per_image)) {
      s.bin = StateBin::Empty;
    }
    out.flag = classify(draw_count(bright, img, rng), img.theta_e);
    out.has_flag = true;
  } else {
    s = raman_pulse(s, scheme, kPi, 0.0, p, rng);
  }
  out.site = ramp_depth(s, home_depth, p, rng, ctx);
  return out;
}

SiteState convert_erasures(const SiteState& site, const PhysicsParams& p,
                           RngStream& rng) {
  return apply_v1_repump(site, p, rng);
}

std::map<std::string, std::vector<std::pair<StateBin, StateBin>>>
instrument_transition_tables(const PhysicsParams& p) {
  using T = std::pair<StateBin, StateBin>;
  std::map<std::string, std::vector<T>> tables;

  std::vector<T> chain;
  RateMatrix hold = RateMatrix::hold_chain(p);
  for (StateBin from : kAllBins) {
    for (StateBin to : kAllBins) {
      if (from != to && hold.rate(from, to) > 0.0) chain.emplace_back(from, to);
    }
  }
  tables["hold_chain"] = chain;

  std::vector<T> image = chain;  // exposure evolves the same chain
  image.emplace_back(StateBin::N3, StateBin::FRest);
  for (StateBin b :
       {StateBin::QDown, StateBin::QZero, StateBin::Qubit}) {
    image.emplace_back(b, StateBin::N2);
    image.emplace_back(b, StateBin::MPlus);
    image.emplace_back(b, StateBin::MMinus);
  }
  image.emplace_back(StateBin::MMinus, StateBin::N2);
  image.emplace_back(StateBin::MPlus, StateBin::N2);
  for (StateBin b : {StateBin::DPrime, StateBin::Up, StateBin::FRest}) {
    image.emplace_back(b, StateBin::Empty);
  }
  tables["fluorescence_image"] = image;

  tables["optical_pump"] = {{StateBin::DPrime, StateBin::FRest},
                            {StateBin::Up, StateBin::DPrime},
                            {StateBin::Up, StateBin::FRest},
                            {StateBin::FRest, StateBin::DPrime}};

  tables["microwave_transfer"] = {{StateBin::DPrime, StateBin::MMinus},
                                  {StateBin::MMinus, StateBin::Up},
                                  {StateBin::QDown, StateBin::Up}};

  tables["raman_pulse"] = {{StateBin::QDown, StateBin::Qubit},
                           {StateBin::QZero, StateBin::Qubit},
                           {StateBin::Qubit, StateBin::N2},
                           {StateBin::Qubit, StateBin::MPlus},
                           {StateBin::DPrime, StateBin::Empty},
                           {StateBin::Up, StateBin::Empty},
                           {StateBin::FRest, StateBin::Empty}};

  std::vector<T> ramp;
  for (StateBin b : kAllBins) {
    if (b != StateBin::Empty && b != StateBin::Sink) {
      ramp.emplace_back(b, StateBin::Empty);
    }
  }
  tables["ramp_depth"] = ramp;

  tables["convert_erasures"] = {{StateBin::V1N1, StateBin::FRest},
                                {StateBin::V1N1, StateBin::Sink}};
  return tables;
}

std::vector<std::string> audit_whitelist() {
  return {"microwave_transfer", "convert_erasures"};
}

}  // namespace molerase
