#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "molerase/analysis.hpp"
#include "molerase/dynamics.hpp"
#include "molerase/engine.hpp"
#include "molerase/scenarios.hpp"
#include "molerase/schedule.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace molerase;

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;
constexpr int kExitIo = 5;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Dotted-key registry over the run's parameter set.
std::map<std::string, double*> param_registry(PhysicsParams& p,
                                              ImageParams& img,
                                              RunOptions& opts) {
  return {
      {"physics.gamma_opt", &p.gamma_opt},
      {"physics.delta_ft", &p.delta_ft},
      {"physics.loss_detectlight_per_image", &p.loss_detectlight_per_image},
      {"physics.loss_ramp_pair_per_image", &p.loss_ramp_pair_per_image},
      {"physics.loss_f_per_image", &p.loss_f_per_image},
      {"physics.q_pi_xb", &p.q_pi_xb},
      {"physics.q_pi_xa_current", &p.q_pi_xa_current},
      {"physics.q_pi_xa_optimal", &p.q_pi_xa_optimal},
      {"physics.dephasing_per_pi_xb", &p.dephasing_per_pi_xb},
      {"physics.dephasing_per_pi_xa_current", &p.dephasing_per_pi_xa_current},
      {"physics.dephasing_per_pi_xa_optimal", &p.dephasing_per_pi_xa_optimal},
      {"physics.gamma_bb_01", &p.gamma_bb_01},
      {"physics.gamma_bb_10", &p.gamma_bb_10},
      {"physics.branch_v1_to_n0", &p.branch_v1_to_n0},
      {"physics.branch_repump_to_f", &p.branch_repump_to_f},
      {"physics.eta_convert", &p.eta_convert},
      {"physics.gamma_vac", &p.gamma_vac},
      {"physics.gamma_detect_sink", &p.gamma_detect_sink},
      {"physics.depth_hf", &p.depth_hf},
      {"physics.depth_ed", &p.depth_ed},
      {"physics.qubit_shift_deep", &p.qubit_shift_deep},
      {"physics.depth_inhomogeneity", &p.depth_inhomogeneity},
      {"physics.ramp_duration", &p.ramp_duration},
      {"physics.pump_f_inf", &p.pump_f_inf},
      {"physics.pump_f0", &p.pump_f0},
      {"physics.pump_tau", &p.pump_tau},
      {"physics.leak_n2_fraction", &p.leak_n2_fraction},
      {"physics.loss_nondestructive_postdetect",
       &p.loss_nondestructive_postdetect},
      {"physics.sigma_quasistatic", &p.sigma_quasistatic},
      {"physics.sigma_ou", &p.sigma_ou},
      {"physics.tau_ou", &p.tau_ou},
      {"image.duration", &img.duration},
      {"image.mean_signal_counts", &img.mean_signal_counts},
      {"image.mean_background_counts", &img.mean_background_counts},
      {"image.camera_noise_sigma", &img.camera_noise_sigma},
      {"image.theta_e", &img.theta_e},
      {"image.dark_excursion_prob", &img.dark_excursion_prob},
      {"run.nondestructive_theta", &opts.nondestructive_theta},
  };
}

json params_json(PhysicsParams& p, ImageParams& img, RunOptions& opts) {
  json out;
  for (const auto& [key, ptr] : param_registry(p, img, opts)) out[key] = *ptr;
  return out;
}

struct RunConfig {
  std::string script_path;
  std::uint64_t trials = 0;
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string format = "csv";
  int threads = 1;
  std::map<std::string, double> overrides;
};

int apply_overrides(PhysicsParams& p, ImageParams& img, RunOptions& opts,
                    const std::map<std::string, double>& overrides) {
  auto reg = param_registry(p, img, opts);
  for (const auto& [key, value] : overrides) {
    auto it = reg.find(key);
    if (it == reg.end()) {
      std::cerr << "error: unknown parameter '" << key << "'\n";
      std::cerr << "known keys:\n";
      for (const auto& [k, _] : reg) std::cerr << "  " << k << "\n";
      return kExitConfig;
    }
    *it->second = value;
  }
  return kExitOk;
}

int load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read config file " << path << "\n";
    return kExitIo;
  }
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    std::cerr << "error: bad config json: " << e.what() << "\n";
    return kExitConfig;
  }
  if (j.contains("script") && cfg.script_path.empty()) {
    cfg.script_path = j["script"].get<std::string>();
  }
  if (j.contains("trials") && cfg.trials == 0) {
    cfg.trials = j["trials"].get<std::uint64_t>();
  }
  if (j.contains("seed") && !cfg.has_seed) {
    cfg.seed = j["seed"].get<std::uint64_t>();
    cfg.has_seed = true;
  }
  if (j.contains("output")) cfg.output_dir = j["output"].get<std::string>();
  if (j.contains("format")) cfg.format = j["format"].get<std::string>();
  if (j.contains("overrides")) {
    for (const auto& [k, v] : j["overrides"].items()) {
      if (!cfg.overrides.count(k)) cfg.overrides[k] = v.get<double>();
    }
  }
  return kExitOk;
}

struct RunOutput {
  Schedule schedule;
  std::vector<TrialRecord> records;
  json summary;
};

int execute_run(const RunConfig& cfg, PhysicsParams& p, ImageParams& img,
                RunOptions& opts, RunOutput& out) {
  std::ifstream in(cfg.script_path);
  if (!in) {
    std::cerr << "error: cannot read script " << cfg.script_path << "\n";
    return kExitIo;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();

  try {
    out.schedule = parse_script(text);
  } catch (const ParseError& e) {
    std::cerr << "error: script parse failed: " << e.what() << "\n";
    return kExitParse;
  }
  std::vector<std::string> warnings = validate_schedule(out.schedule, p);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

  opts.image = img;
  opts.threads = cfg.threads;
  try {
    out.records = run_trials(out.schedule, cfg.trials, cfg.seed, p, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: run failed: " << e.what() << "\n";
    return kExitRuntime;
  }

  json summary;
  summary["master_seed"] = cfg.seed;
  summary["n_trials"] = cfg.trials;
  summary["n_sites"] = out.schedule.n_sites();
  summary["schedule_hash"] = fnv1a(print_script(out.schedule));
  summary["params_hash"] = fnv1a(params_json(p, img, opts).dump());
  summary["warnings"] = warnings;
  int occupied = 0;
  for (const auto& r : out.records) occupied += r.occupied_initial;
  summary["occupied_fraction"] =
      out.records.empty()
          ? 0.0
          : static_cast<double>(occupied) / out.records.size();
  summary["survival"] = survival_probability(out.records);
  {
    int n = 0;
    double s = 0;
    for (const auto& r : out.records) {
      if (r.occupied_initial && r.final_measure) {
        ++n;
        s += *r.final_measure;
      }
    }
    summary["mean_measure_occupied"] = n ? s / n : 0.0;
  }
  const std::vector<int> flag_steps = out.schedule.flag_steps();
  json retained = json::array();
  for (std::size_t k = 0; k < flag_steps.size(); ++k) {
    retained.push_back(excise(out.records, static_cast<int>(k))
                           .retained_fraction);
  }
  summary["retained_fraction_per_image"] = retained;
  if (!flag_steps.empty()) {
    auto all = excise_all(out.records);
    summary["retained_fraction_all_images"] = all.retained_fraction;
    int n = 0;
    double s = 0;
    for (const auto& r : all.records) {
      if (r.final_measure) {
        ++n;
        s += *r.final_measure;
      }
    }
    summary["mean_measure_excised"] = n ? s / n : 0.0;
  }
  out.summary = summary;
  return kExitOk;
}

int write_outputs(const RunConfig& cfg, const RunOutput& out,
                  PhysicsParams& p, ImageParams& img, RunOptions& opts) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output dir: " << ec.message() << "\n";
    return kExitIo;
  }
  std::string base = cfg.output_dir + "/records.";
  {
    std::ofstream os(base + (cfg.format == "jsonl" ? "jsonl" : "csv"));
    os << "# master_seed=" << cfg.seed
       << " schedule_hash=" << fnv1a(print_script(out.schedule))
       << " params_hash=" << fnv1a(params_json(p, img, opts).dump()) << "\n";
    if (cfg.format == "jsonl") {
      write_records_jsonl(os, out.records);
    } else {
      write_records_csv(os, out.records);
    }
  }
  {
    std::ofstream os(cfg.output_dir + "/summary.json");
    os << out.summary.dump(2) << "\n";
  }
  {
    // Wall-clock provenance is confined to this sidecar so record and
    // summary files stay byte-reproducible.
    std::ofstream os(cfg.output_dir + "/run_meta.json");
    json meta;
    meta["timestamp_unix"] = static_cast<long long>(std::time(nullptr));
    meta["script"] = cfg.script_path;
    meta["format"] = cfg.format;
    os << meta.dump(2) << "\n";
  }
  {
    std::ofstream os(cfg.output_dir + "/calibration.txt");
    os << "# dephasing model calibration cache\n"
       << "# derived from t2_star=19.5ms t2_echo=288ms and the default "
          "loss envelope\n"
       << "sigma_quasistatic " << p.sigma_quasistatic << "\n"
       << "sigma_ou " << p.sigma_ou << "\n"
       << "tau_ou " << p.tau_ou << "\n";
  }
  return kExitOk;
}

json catalog_json() {
  json bins = json::array();
  for (StateBin b : kAllBins) {
    json bin;
    bin["name"] = std::string(bin_name(b));
    bin["preparation_class"] =
        std::string(partition_class_name(Partition::preparation().of(b)));
    bin["qubit_class"] =
        std::string(partition_class_name(Partition::qubit().of(b)));
    bins.push_back(bin);
  }
  json out;
  out["bins"] = bins;
  return out;
}

json rates_json(const PhysicsParams& p) {
  RateMatrix chain = RateMatrix::hold_chain(p);
  json entries = json::array();
  for (StateBin from : kAllBins) {
    for (StateBin to : kAllBins) {
      if (from == to) continue;
      double r = chain.rate(from, to);
      if (r > 0) {
        json e;
        e["from"] = std::string(bin_name(from));
        e["to"] = std::string(bin_name(to));
        e["rate_per_s"] = r;
        entries.push_back(e);
      }
    }
  }
  json out;
  out["hold_chain"] = entries;
  json deph;
  deph["sigma_quasistatic_rad_s"] = p.sigma_quasistatic;
  deph["sigma_ou_rad_s"] = p.sigma_ou;
  deph["tau_ou_s"] = p.tau_ou;
  out["dephasing"] = deph;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "molerase: Monte Carlo simulator of site-resolved error detection and "
      "erasure conversion in a molecular tweezer array"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::vector<std::string> override_args;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--script", cfg.script_path, "experiment script file");
    cmd->add_option("--trials", cfg.trials, "number of trials");
    cmd->add_option("--seed", cfg.seed, "master seed (required)")
        ->each([&](const std::string&) { cfg.has_seed = true; });
    cmd->add_option("--output", cfg.output_dir, "output directory");
    cmd->add_option("--format", cfg.format, "records format: csv|jsonl");
    cmd->add_option("--threads", cfg.threads, "worker threads");
    cmd->add_option("--config", config_path, "optional JSON config file");
    cmd->add_option("--set", override_args,
                    "parameter override key=value (dotted keys)");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment script");
  add_common(run_cmd);

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run a script over a parameter sweep");
  add_common(sweep_cmd);
  std::string sweep_key;
  std::vector<double> sweep_values;
  sweep_cmd->add_option("--param", sweep_key, "dotted parameter key")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "sweep values")
      ->delimiter(',');

  CLI::App* repro_cmd = app.add_subcommand(
      "reproduce", "run a registered reproduction target (or 'all')");
  std::string target = "all";
  std::uint64_t repro_seed = 20260810ULL;
  repro_cmd->add_option("target", target, "target id or 'all'");
  repro_cmd->add_option("--seed", repro_seed, "master seed");

  CLI::App* catalog_cmd =
      app.add_subcommand("catalog", "print the state catalog as JSON");
  CLI::App* rates_cmd =
      app.add_subcommand("rates", "print the calibrated rate table as JSON");
  add_common(rates_cmd);

  CLI11_PARSE(app, argc, argv);

  PhysicsParams params = PhysicsParams::defaults();
  ImageParams image = ImageParams::defaults();
  RunOptions opts;

  auto parse_override_args = [&]() -> int {
    for (const std::string& kv : override_args) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: override must be key=value, got '" << kv << "'\n";
        return kExitConfig;
      }
      try {
        cfg.overrides[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      } catch (const std::exception&) {
        std::cerr << "error: bad override value in '" << kv << "'\n";
        return kExitConfig;
      }
    }
    return kExitOk;
  };

  if (catalog_cmd->parsed()) {
    std::cout << catalog_json().dump(2) << "\n";
    return kExitOk;
  }

  if (rates_cmd->parsed()) {
    if (int rc = parse_override_args(); rc != kExitOk) return rc;
    if (int rc = apply_overrides(params, image, opts, cfg.overrides);
        rc != kExitOk) {
      return rc;
    }
    try {
      params.validate();
    } catch (const std::exception& e) {
      std::cerr << "error: invalid parameters: " << e.what() << "\n";
      return kExitConfig;
    }
    std::cout << rates_json(params).dump(2) << "\n";
    return kExitOk;
  }

  if (repro_cmd->parsed()) {
    std::vector<std::string> ids;
    if (target == "all") {
      for (const auto& info : scenario_catalog()) ids.push_back(info.id);
    } else if (is_scenario_id(target)) {
      ids.push_back(target);
    } else {
      std::cerr << "unknown target '" << target << "'. available targets:\n";
      for (const auto& info : scenario_catalog()) {
        std::cerr << "  " << info.id << "  (criterion " << info.criterion
                  << "): " << info.description << "\n";
      }
      return kExitConfig;
    }
    bool all_pass = true;
    for (const std::string& id : ids) {
      ScenarioResult r = run_scenario(id, repro_seed);
      std::cout << format_result(r) << "\n";
      all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : 1;
  }

  // run / sweep share the config plumbing
  if (int rc = parse_override_args(); rc != kExitOk) return rc;
  if (!config_path.empty()) {
    if (int rc = load_config_file(config_path, cfg); rc != kExitOk) return rc;
  }
  if (cfg.script_path.empty()) {
    std::cerr << "error: --script is required\n";
    return kExitConfig;
  }
  if (cfg.trials == 0) {
    std::cerr << "error: --trials must be >= 1\n";
    return kExitConfig;
  }
  if (!cfg.has_seed) {
    std::cerr << "error: --seed is required (reproducibility contract; no "
                 "wall-clock default)\n";
    return kExitConfig;
  }
  if (int rc = apply_overrides(params, image, opts, cfg.overrides);
      rc != kExitOk) {
    return rc;
  }
  try {
    params.validate();
    image.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: invalid parameters: " << e.what() << "\n";
    return kExitConfig;
  }

  if (run_cmd->parsed()) {
    RunOutput out;
    if (int rc = execute_run(cfg, params, image, opts, out); rc != kExitOk) {
      return rc;
    }
    if (int rc = write_outputs(cfg, out, params, image, opts); rc != kExitOk) {
      return rc;
    }
    std::cout << out.summary.dump(2) << "\n";
    return kExitOk;
  }

  if (sweep_cmd->parsed()) {
    if (sweep_values.empty()) {
      std::cerr << "error: --values must list at least one value\n";
      return kExitConfig;
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    std::ofstream agg(cfg.output_dir + "/sweep.csv");
    agg << "value,occupied_fraction,survival,mean_measure_occupied,"
           "retained_fraction_all,mean_measure_excised\n";
    for (double v : sweep_values) {
      PhysicsParams p2 = params;
      ImageParams img2 = image;
      RunOptions opts2 = opts;
      std::map<std::string, double> o2 = cfg.overrides;
      o2[sweep_key] = v;
      if (int rc = apply_overrides(p2, img2, opts2, o2); rc != kExitOk) {
        return rc;
      }
      RunConfig c2 = cfg;
      RunOutput out;
      if (int rc = execute_run(c2, p2, img2, opts2, out); rc != kExitOk) {
        return rc;
      }
      agg << v << "," << out.summary["occupied_fraction"] << ","
          << out.summary["survival"] << ","
          << out.summary["mean_measure_occupied"] << ",";
      if (out.summary.contains("retained_fraction_all_images")) {
        agg << out.summary["retained_fraction_all_images"] << ","
            << out.summary["mean_measure_excised"];
      } else {
        agg << ",";
      }
      agg << "\n";
    }
    std::cout << "wrote " << cfg.output_dir << "/sweep.csv\n";
    return kExitOk;
  }

  return kExitOk;
}
