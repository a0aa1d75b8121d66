#include "molerase/state.hpp"

#include <cmath>

namespace molerase {

namespace {

constexpr std::array<std::string_view, kNumBins> kBinNames = {
    "Q_DOWN", "Q_ZERO", "QUBIT",  "M_MINUS", "M_PLUS", "DPRIME", "UP",
    "F_REST", "N2",     "N3",     "V1_N1",   "V1_OTHER", "SINK", "EMPTY"};

}  // namespace

std::string_view bin_name(StateBin b) {
  return kBinNames[static_cast<int>(b)];
}

StateBin bin_from_name(std::string_view name) {
  for (int i = 0; i < kNumBins; ++i) {
    if (kBinNames[i] == name) return static_cast<StateBin>(i);
  }
  throw CatalogError("unknown state bin: " + std::string(name));
}

bool is_n0_bin(StateBin b) {
  return b == StateBin::QDown || b == StateBin::QZero ||
         b == StateBin::MMinus || b == StateBin::MPlus;
}

std::string_view partition_class_name(PartitionClass c) {
  switch (c) {
    case PartitionClass::Target: return "TARGET";
    case PartitionClass::Detect: return "DETECT";
    case PartitionClass::Erasable: return "ERASABLE";
    case PartitionClass::Sink: return "SINK";
    case PartitionClass::Empty: return "EMPTY";
  }
  throw CatalogError("unknown partition class");
}

Partition Partition::preparation() {
  Partition p;
  p.name_ = "preparation";
  auto set = [&p](StateBin b, PartitionClass c) {
    p.classes_[static_cast<int>(b)] = c;
  };
  for (StateBin b : kAllBins) set(b, PartitionClass::Erasable);
  set(StateBin::MMinus, PartitionClass::Target);
  set(StateBin::DPrime, PartitionClass::Detect);
  set(StateBin::Up, PartitionClass::Detect);
  set(StateBin::FRest, PartitionClass::Detect);
  set(StateBin::Sink, PartitionClass::Sink);
  set(StateBin::Empty, PartitionClass::Empty);
  return p;
}

Partition Partition::qubit() {
  Partition p = preparation();
  p.name_ = "qubit";
  auto set = [&p](StateBin b, PartitionClass c) {
    p.classes_[static_cast<int>(b)] = c;
  };
  set(StateBin::MMinus, PartitionClass::Erasable);
  set(StateBin::QDown, PartitionClass::Target);
  set(StateBin::QZero, PartitionClass::Target);
  set(StateBin::Qubit, PartitionClass::Target);
  return p;
}

PartitionClass Partition::of(StateBin b) const {
  int i = static_cast<int>(b);
  if (i < 0 || i >= kNumBins) throw CatalogError("bin outside catalog");
  return classes_[i];
}

double Bloch::norm() const { return std::sqrt(x * x + y * y + z * z); }

SiteState apply_rotation(const SiteState& site, double axis_phase,
                         double angle) {
  if (site.bin != StateBin::Qubit || !site.bloch) return site;
  const Bloch& b = *site.bloch;
  // Rodrigues rotation about the equatorial axis (cos a, sin a, 0).
  double nx = std::cos(axis_phase);
  double ny = std::sin(axis_phase);
  double c = std::cos(angle);
  double s = std::sin(angle);
  double dot = nx * b.x + ny * b.y;
  Bloch r;
  r.x = b.x * c + (ny * b.z) * s + nx * dot * (1.0 - c);
  r.y = b.y * c + (-nx * b.z) * s + ny * dot * (1.0 - c);
  r.z = b.z * c + (nx * b.y - ny * b.x) * s;
  SiteState out = site;
  out.bloch = r;
  return out;
}

double survival_probability(std::span<const StateBin> final_bins) {
  if (final_bins.empty()) {
    throw UndefinedStatisticError("survival probability of an empty batch");
  }
  std::size_t alive = 0;
  for (StateBin b : final_bins) {
    if (b != StateBin::Empty && b != StateBin::Sink) ++alive;
  }
  return static_cast<double>(alive) / static_cast<double>(final_bins.size());
}

void PhysicsParams::validate() const {
  auto prob = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(what) + " outside [0,1]");
    }
  };
  auto rate = [](double v, const char* what) {
    if (!(v >= 0.0)) {
      throw std::invalid_argument(std::string(what) + " negative");
    }
  };
  prob(loss_detectlight_per_image, "loss_detectlight_per_image");
  prob(loss_ramp_pair_per_image, "loss_ramp_pair_per_image");
  prob(loss_f_per_image, "loss_f_per_image");
  prob(branch_v1_to_n0, "branch_v1_to_n0");
  prob(branch_repump_to_f, "branch_repump_to_f");
  prob(eta_convert, "eta_convert");
  prob(dephasing_per_pi_xb, "dephasing_per_pi_xb");
  prob(dephasing_per_pi_xa_current, "dephasing_per_pi_xa_current");
  prob(dephasing_per_pi_xa_optimal, "dephasing_per_pi_xa_optimal");
  prob(pump_f_inf, "pump_f_inf");
  prob(pump_f0, "pump_f0");
  prob(leak_n2_fraction, "leak_n2_fraction");
  prob(loss_nondestructive_postdetect, "loss_nondestructive_postdetect");
  prob(depth_inhomogeneity, "depth_inhomogeneity");
  rate(gamma_bb_01, "gamma_bb_01");
  rate(gamma_bb_10, "gamma_bb_10");
  rate(gamma_vac, "gamma_vac");
  rate(gamma_detect_sink, "gamma_detect_sink");
  rate(sigma_quasistatic, "sigma_quasistatic");
  rate(sigma_ou, "sigma_ou");
  if (!(q_pi_xb > 0 && q_pi_xa_current > 0 && q_pi_xa_optimal > 0)) {
    throw std::invalid_argument("q_pi must be positive");
  }
  if (!(tau_ou > 0)) throw std::invalid_argument("tau_ou must be positive");
  if (!(pump_tau > 0)) throw std::invalid_argument("pump_tau must be positive");
  if (!(ramp_duration >= 0)) {
    throw std::invalid_argument("ramp_duration negative");
  }
  if (!(depth_ed > depth_hf)) {
    throw std::invalid_argument("depth_ed must exceed depth_hf");
  }
}

PhysicsParams PhysicsParams::defaults() { return PhysicsParams{}; }

}  // namespace molerase
