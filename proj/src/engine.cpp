#include "molerase/engine.hpp"

#include <cmath>
#include <ostream>
#include <thread>

#include "molerase/dynamics.hpp"

namespace molerase {

namespace {

constexpr std::uint64_t kSaltSiteStatics = 0x5149'5545'5a45'52ULL;
constexpr std::uint64_t kSaltTrialStatics = 0x514e'4f49'5345ULL;
constexpr std::uint64_t kMaxCells = 200'000'000ULL;

struct StepRunner {
  const Schedule& schedule;
  const PhysicsParams& params;
  const RunOptions& options;
  const Partition& partition;
  const RateMatrix& chain;

  TrialRecord run(std::uint64_t master_seed, int trial, int site) const {
    TrialRecord rec;
    rec.trial = trial;
    rec.site = site;

    SiteContext ctx;
    ctx.chain = &chain;
    ctx.depth = params.depth_ed;
    {
      RngStream site_rng = RngStream::keyed(master_seed, kSaltSiteStatics,
                                            static_cast<std::uint64_t>(site),
                                            0);
      // Depth inhomogeneity is a property of the tweezer, fixed across
      // trials.
      ctx.depth_delta = site_rng.uniform(-params.depth_inhomogeneity,
                                         params.depth_inhomogeneity);
    }
    {
      RngStream trial_rng = RngStream::keyed(
          master_seed, kSaltTrialStatics,
          (static_cast<std::uint64_t>(trial) << 20) ^
              static_cast<std::uint64_t>(site),
          1);
      ctx.quasistatic_detune =
          trial_rng.normal(0.0, params.sigma_quasistatic);
      ctx.ou = OUNoiseState::stationary(params, trial_rng);
    }

    SiteState s;
    for (std::size_t i = 0; i < schedule.steps.size(); ++i) {
      RngStream rng = RngStream::keyed(
          master_seed, static_cast<std::uint64_t>(trial),
          static_cast<std::uint64_t>(site), static_cast<std::uint64_t>(i));
      const Step& step = schedule.steps[i];

      if (const auto* load = std::get_if<LoadStep>(&step)) {
        if (rng.bernoulli(load->fill_prob)) {
          // Loaded molecules occupy the laser-coolable manifold, spread
          // over its 12 hyperfine states.
          s.bin = rng.bernoulli(1.0 / 12.0) ? StateBin::DPrime
                                            : StateBin::FRest;
        } else {
          s.bin = StateBin::Empty;
        }
        s.static_detune = trap_detune(params, ctx.depth, ctx.depth_delta);
      } else if (const auto* img = std::get_if<ImageStep>(&step)) {
        ImageParams ip = options.image;
        if (img->theta) ip.theta_e = *img->theta;
        if (img->kind == ImageKind::Nondestructive && !img->theta) {
          ip.theta_e = options.nondestructive_theta;
        }
        ImageResult r = fluorescence_image(s, ip, params, rng, &ctx);
        s = r.site;
        int bit = classify(r.count, ip.theta_e);
        switch (img->kind) {
          case ImageKind::Nondestructive:
            rec.occupied_initial = bit;
            if (s.present() &&
                rng.bernoulli(params.loss_nondestructive_postdetect)) {
              s.bin = StateBin::Empty;
              s.bloch.reset();
            }
            break;
          case ImageKind::Error:
            rec.flags.emplace_back(static_cast<int>(i), bit);
            break;
          case ImageKind::Destructive:
            rec.final_measure = bit;
            break;
        }
      } else if (const auto* pump = std::get_if<PumpStep>(&step)) {
        s = optical_pump(s, pump->duration, params, rng);
      } else if (const auto* mw = std::get_if<MicrowaveStep>(&step)) {
        s = microwave_transfer(s, mw->fidelity, mw->source, mw->dest,
                               partition, rng);
      } else if (const auto* raman = std::get_if<RamanStep>(&step)) {
        RamanScheme scheme = RamanScheme::from_name(raman->scheme, params);
        s = raman_pulse(s, scheme, raman->angle, raman->axis_phase, params,
                        rng);
      } else if (const auto* comp = std::get_if<CompositeStep>(&step)) {
        RamanScheme scheme = RamanScheme::from_name(comp->scheme, params);
        CompositeResult r = composite_erasure_detect(
            s, scheme, options.image, params, rng, ctx, comp->include_image);
        s = r.site;
        if (r.has_flag) rec.flags.emplace_back(static_cast<int>(i), r.flag);
      } else if (const auto* hold = std::get_if<HoldStep>(&step)) {
        s = evolve_hold_chain(s, hold->duration, params, chain,
                              hold->repump_period, rng, &ctx.ou,
                              ctx.quasistatic_detune, &ctx.stats);
      } else if (const auto* ramp = std::get_if<RampStep>(&step)) {
        s = ramp_depth(s, ramp->depth_uk, params, rng, ctx);
      } else if (std::get_if<ConvertStep>(&step)) {
        bool was_v1 = s.bin == StateBin::V1N1;
        s = convert_erasures(s, params, rng);
        if (was_v1 && s.bin == StateBin::FRest) ++ctx.stats.conversions;
      } else if (const auto* meas = std::get_if<MeasureStep>(&step)) {
        if (s.bin == StateBin::Qubit && s.bloch &&
            (meas->target == StateBin::QDown ||
             meas->target == StateBin::QZero)) {
          double z = s.bloch->z;
          double p_down = 0.5 * (1.0 + z);
          s.bin = rng.bernoulli(p_down) ? StateBin::QDown : StateBin::QZero;
          s.bloch.reset();
        }
        rec.final_measure = (s.bin == meas->target) ? 1 : 0;
      }
    }
    rec.final_bin = s.bin;
    rec.bb_excitations = ctx.stats.bb_excitations_from_n0;
    rec.conversions = ctx.stats.conversions;
    return rec;
  }
};

}  // namespace

std::vector<TrialRecord> run_trials(const Schedule& schedule,
                                    std::uint64_t n_trials,
                                    std::uint64_t master_seed,
                                    const PhysicsParams& params,
                                    const RunOptions& options) {
  params.validate();
  int n_sites = schedule.n_sites();
  if (n_sites <= 0) throw std::invalid_argument("schedule lacks a load step");
  if (n_trials * static_cast<std::uint64_t>(n_sites) > kMaxCells) {
    throw BoundedRunError("run exceeds the record budget (" +
                          std::to_string(kMaxCells) + " site-trials)");
  }

  Partition partition = schedule.has_qubit_steps() ? Partition::qubit()
                                                   : Partition::preparation();
  RateMatrix chain = RateMatrix::hold_chain(params);
  StepRunner runner{schedule, params, options, partition, chain};

  std::vector<TrialRecord> records(n_trials *
                                   static_cast<std::uint64_t>(n_sites));
  auto work = [&](std::uint64_t t_begin, std::uint64_t t_end) {
    for (std::uint64_t t = t_begin; t < t_end; ++t) {
      for (int site = 0; site < n_sites; ++site) {
        records[t * n_sites + site] =
            runner.run(master_seed, static_cast<int>(t), site);
      }
    }
  };

  int threads = std::max(1, options.threads);
  if (threads == 1 || n_trials < 2 * static_cast<std::uint64_t>(threads)) {
    work(0, n_trials);
  } else {
    std::vector<std::thread> pool;
    std::uint64_t chunk = (n_trials + threads - 1) / threads;
    for (int k = 0; k < threads; ++k) {
      std::uint64_t lo = k * chunk;
      std::uint64_t hi = std::min(n_trials, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return records;
}

void write_records_csv(std::ostream& os,
                       const std::vector<TrialRecord>& records) {
  os << "trial,site,occupied,flags,final_bin,measure\n";
  for (const TrialRecord& r : records) {
    os << r.trial << "," << r.site << "," << r.occupied_initial << ",";
    for (std::size_t i = 0; i < r.flags.size(); ++i) {
      if (i) os << ";";
      os << r.flags[i].second;
    }
    os << "," << bin_name(r.final_bin) << ",";
    if (r.final_measure) os << *r.final_measure;
    os << "\n";
  }
}

void write_records_jsonl(std::ostream& os,
                         const std::vector<TrialRecord>& records) {
  for (const TrialRecord& r : records) {
    os << "{\"trial\":" << r.trial << ",\"site\":" << r.site
       << ",\"occupied\":" << r.occupied_initial << ",\"flags\":[";
    for (std::size_t i = 0; i < r.flags.size(); ++i) {
      if (i) os << ",";
      os << r.flags[i].second;
    }
    os << "],\"final_bin\":\"" << bin_name(r.final_bin) << "\"";
    if (r.final_measure) os << ",\"measure\":" << *r.final_measure;
    os << "}\n";
  }
}

double survival_probability(const std::vector<TrialRecord>& records) {
  if (records.empty()) {
    throw UndefinedStatisticError("survival probability of an empty batch");
  }
  std::size_t alive = 0;
  for (const TrialRecord& r : records) {
    if (r.final_bin != StateBin::Empty && r.final_bin != StateBin::Sink) {
      ++alive;
    }
  }
  return static_cast<double>(alive) / records.size();
}

}  // namespace molerase
