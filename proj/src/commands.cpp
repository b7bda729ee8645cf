#include "prefsdm/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "prefsdm/kernels.hpp"
#include "prefsdm/mcmc.hpp"
#include "prefsdm/predict.hpp"
#include "prefsdm/simulate.hpp"

namespace prefsdm {

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string f;
  while (std::getline(ss, f, ','))
    if (!f.empty()) out.push_back(f);
  return out;
}

std::string require(const Config& cfg, const std::string& key) {
  if (!cfg.has(key)) throw ValidationError("missing required option: " + key);
  return cfg.get(key);
}

GridSpec grid_from_config(const Config& cfg) {
  GridSpec grid;
  grid.origin.x = cfg.get_double("grid.x0", 0.0);
  grid.origin.y = cfg.get_double("grid.y0", 0.0);
  grid.cell_w = cfg.get_double("grid.cell_w", 0.5);
  grid.cell_h = cfg.get_double("grid.cell_h", 0.5);
  grid.n_cols = static_cast<int>(cfg.get_long("grid.n_cols", 20));
  grid.n_rows = static_cast<int>(cfg.get_long("grid.n_rows", 20));
  grid.validate();
  return grid;
}

PriorSpec priors_from_config(const Config& cfg) {
  PriorSpec priors;
  priors.alpha_var = cfg.get_double("priors.alpha_var", priors.alpha_var);
  priors.beta_var = cfg.get_double("priors.beta_var", priors.beta_var);
  priors.delta_var = cfg.get_double("priors.delta_var", priors.delta_var);
  priors.delta_po_truncated = cfg.get_bool("priors.delta_po_truncated", true);
  priors.sigma2_shape = cfg.get_double("priors.sigma2_shape", priors.sigma2_shape);
  priors.sigma2_rate = cfg.get_double("priors.sigma2_rate", priors.sigma2_rate);
  priors.phi_lo = cfg.get_double("priors.phi_lo", priors.phi_lo);
  priors.phi_hi = cfg.get_double("priors.phi_hi", priors.phi_hi);
  return priors;
}

ChainConfig chain_from_config(const Config& cfg) {
  ChainConfig chain;
  chain.burn_in = cfg.get_long("chain.burn_in", chain.burn_in);
  chain.keep = cfg.get_long("chain.keep", chain.keep);
  chain.thin = static_cast<int>(cfg.get_long("chain.thin", chain.thin));
  chain.field_thin = static_cast<int>(cfg.get_long("chain.field_thin", chain.field_thin));
  chain.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 1));
  chain.n_chains = static_cast<int>(cfg.get_long("chains", 1));
  chain.threads = static_cast<int>(cfg.get_long("threads", 1));
  chain.adapt_window = cfg.get_long("chain.adapt_window", chain.adapt_window);
  return chain;
}

IntensityKind intensity_from_string(const std::string& s) {
  if (s == "i" || s == "nhpp") return IntensityKind::nhpp_i;
  if (s == "ii" || s == "lgcp") return IntensityKind::lgcp_ii;
  throw ValidationError("unknown intensity model '" + s + "' (expected i or ii)");
}

struct LoadedInputs {
  CovariateRaster raster;
  PresenceAbsenceDataset pa;
  std::optional<PresenceOnlyDataset> po;
  std::unique_ptr<DegradationLayers> layers;
  Config hashes;
};

LoadedInputs load_inputs(const Config& cfg, bool need_pa = true) {
  LoadedInputs in;
  const std::string raster_path = require(cfg, "raster");
  in.raster = read_raster_csv(raster_path);
  if (cfg.get_bool("standardize", true) && in.raster.n_cov() > 0)
    in.raster = standardize_covariates(in.raster);
  in.hashes.set("hash.raster", std::to_string(fnv1a_file(raster_path)));

  const double scale = cfg.get_double("coord_scale", 1.0);
  if (need_pa) {
    const std::string pa_path = require(cfg, "pa");
    IngestReport rep;
    in.pa = read_pa_csv(pa_path, in.raster.grid, &rep, scale);
    if (rep.dropped_out_of_region + rep.dropped_duplicate > 0)
      std::cerr << "note: dropped " << rep.dropped_out_of_region << " out-of-region and "
                << rep.dropped_duplicate << " duplicate presence/absence rows\n";
    in.hashes.set("hash.pa", std::to_string(fnv1a_file(pa_path)));
  }
  if (cfg.has("po")) {
    IngestReport rep;
    in.po = read_po_csv(cfg.get("po"), in.raster.grid, &rep, scale);
    if (rep.dropped_out_of_region + rep.dropped_duplicate > 0)
      std::cerr << "note: dropped " << rep.dropped_out_of_region << " out-of-region and "
                << rep.dropped_duplicate << " duplicate presence-only rows\n";
    in.hashes.set("hash.po", std::to_string(fnv1a_file(cfg.get("po"))));
  }

  // degradation: a file path, "effort" (u=1, p=1 on cells holding at least
  // one observed presence-only event), or "none"
  const std::string deg = cfg.get("degradation", in.po ? "effort" : "none");
  if (deg == "none") {
    in.layers = nullptr;
  } else if (deg == "effort") {
    if (!in.po) throw ValidationError("degradation=effort requires a presence-only dataset");
    const auto counts = counts_per_cell(in.po->events, in.raster.grid);
    in.layers = std::make_unique<DegradationLayers>(DegradationLayers::from_effort(counts));
  } else {
    in.layers = std::make_unique<DegradationLayers>(
        read_degradation_csv(deg, in.raster.grid.n_cells()));
    in.hashes.set("hash.degradation", std::to_string(fnv1a_file(deg)));
  }
  return in;
}

FitSpec fitspec_from_config(const Config& cfg) {
  FitSpec spec;
  spec.kind = parse_response_kind(require(cfg, "model"));
  spec.intensity_pa = intensity_from_string(cfg.get("intensity", cfg.get("intensity_pa", "ii")));
  spec.intensity_po = intensity_from_string(cfg.get("intensity_po", "ii"));
  spec.tau2 = cfg.get_double("tau2", 1.0);
  spec.k = static_cast<int>(cfg.get_long("k", 15));
  const std::string ordering = cfg.get("ordering", "lexicographic");
  if (ordering == "lexicographic") spec.ordering = OrderingRule::lexicographic;
  else if (ordering == "max-min" || ordering == "maxmin") spec.ordering = OrderingRule::max_min;
  else throw ValidationError("unknown ordering rule '" + ordering + "'");
  if (cfg.has("x_covariates")) spec.x_covariates = split_list(cfg.get("x_covariates"));
  if (cfg.has("w_covariates")) spec.w_covariates = split_list(cfg.get("w_covariates"));
  return spec;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const Config& cfg, const Config& hashes) {
  Config manifest;
  manifest.set("command", command);
  manifest.set("version", kVersion);
  manifest.set("kernels", kernels::lane_name(kernels::active_lane()));
  for (const auto& [k, v] : cfg.entries()) manifest.set("cfg." + k, v);
  for (const auto& [k, v] : hashes.entries()) manifest.set(k, v);
  manifest.write(join_path(out_dir, "run.manifest"));
}

void print_delta_summary(const PosteriorArchive& arch, std::ostream& os) {
  for (const char* name : {"delta_pa", "delta_po"}) {
    const auto it = std::find(arch.scalar_names.begin(), arch.scalar_names.end(), name);
    if (it == arch.scalar_names.end()) continue;
    const auto& draws = arch.scalar_draws[it - arch.scalar_names.begin()];
    std::vector<double> sorted(draws);
    std::sort(sorted.begin(), sorted.end());
    const auto q = [&](double f) {
      const double h = (sorted.size() - 1) * f;
      const std::size_t lo = static_cast<std::size_t>(h);
      const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
      return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
    };
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= draws.size();
    os << name << ": mean " << format_double(mean) << ", 95% interval ["
       << format_double(q(0.025)) << ", " << format_double(q(0.975)) << "]\n";
  }
}

void print_ess_report(const PosteriorArchive& arch, std::ostream& os) {
  os << "parameter ESS (gate: all > 100)\n";
  for (std::size_t m = 0; m < arch.scalar_names.size(); ++m)
    os << "  " << arch.scalar_names[m] << ": " << format_double(arch.ess[m])
       << (arch.ess[m] > 100.0 ? " (pass)" : " (FAIL)")
       << (arch.ess_degenerate[m] ? " [degenerate series]" : "") << "\n";
}

}  // namespace

void cmd_simulate(const Config& cfg) {
  const std::string out_dir = require(cfg, "out");
  ensure_directory(out_dir);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_long("seed", 1));

  ScenarioSpec spec;
  if (cfg.has("preset")) {
    const std::string preset = cfg.get("preset");
    if (preset == "preferential" || preset == "shared-process")
      spec = shared_process_preset();
    else
      throw ValidationError("unknown preset '" + preset + "'");
  }
  if (cfg.has("design")) spec.design = parse_design(cfg.get("design"));
  if (cfg.has("grid.n_cols") || cfg.has("grid.cell_w")) spec.grid = grid_from_config(cfg);
  spec.n_covariates = static_cast<int>(cfg.get_long("covariates", spec.n_covariates));
  spec.intensity_intercept = cfg.get_double("intercept", spec.intensity_intercept);
  spec.calibrate_intercept = cfg.get_bool("calibrate_intercept", spec.calibrate_intercept);
  spec.eta_params.sigma2 = cfg.get_double("sigma2_eta", spec.eta_params.sigma2);
  spec.eta_params.phi = cfg.get_double("phi_eta", spec.eta_params.phi);
  spec.delta_true = cfg.get_double("delta_true", spec.delta_true);
  if (cfg.has("response_kind")) spec.response_kind = parse_response_kind(cfg.get("response_kind"));
  if (cfg.has("alpha")) {
    spec.alpha_true.clear();
    for (const auto& v : split_list(cfg.get("alpha"))) spec.alpha_true.push_back(std::stod(v));
  } else if (spec.n_covariates + 1 != static_cast<int>(spec.alpha_true.size())) {
    spec.alpha_true.assign(spec.n_covariates + 1, 0.0);
  }
  spec.expected_sites = cfg.get_double("expected_sites", spec.expected_sites);
  spec.tau2 = cfg.get_double("tau2", spec.tau2);
  spec.omega_params.sigma2 = cfg.get_double("sigma2_omega", spec.omega_params.sigma2);
  spec.omega_params.phi = cfg.get_double("phi_omega", spec.omega_params.phi);
  spec.cluster_offspring_mean = cfg.get_double("cluster_offspring_mean",
                                               spec.cluster_offspring_mean);
  spec.cluster_sd = cfg.get_double("cluster_sd", spec.cluster_sd);
  spec.po_intercept = cfg.get_double("po_intercept", spec.po_intercept);
  spec.po_eta_params.sigma2 = cfg.get_double("po_sigma2_eta", spec.po_eta_params.sigma2);
  spec.po_eta_params.phi = cfg.get_double("po_phi_eta", spec.po_eta_params.phi);
  spec.delta_po_true = cfg.get_double("delta_po_true", spec.delta_po_true);
  spec.po_expected_events = cfg.get_double("po_expected_events", spec.po_expected_events);

  const auto result = simulate_scenario(spec, seed);
  write_raster_csv(join_path(out_dir, "raster.csv"), result.truth.raster);
  write_pa_csv(join_path(out_dir, "pa.csv"), result.pa);
  if (spec.with_po()) write_po_csv(join_path(out_dir, "po.csv"), result.po);
  write_truth_manifest(join_path(out_dir, "truth.manifest"), result.truth, seed, spec);
  write_run_manifest(out_dir, "simulate", cfg, Config{});
  std::cout << "simulated " << result.pa.sites.size() << " sites";
  if (spec.with_po()) std::cout << " and " << result.po.events.size() << " presence-only events";
  std::cout << " -> " << out_dir << "\n";
}

void cmd_fit(const Config& cfg) {
  const std::string out_dir = require(cfg, "out");
  const FitSpec spec = fitspec_from_config(cfg);
  const auto in = load_inputs(cfg);
  const PriorSpec priors = priors_from_config(cfg);
  const ChainConfig chain = chain_from_config(cfg);

  const auto archive = fit(spec, in.pa, in.po ? &*in.po : nullptr, in.raster, in.layers.get(),
                           priors, chain);
  ensure_directory(out_dir);
  save_archive(archive, out_dir);
  write_run_manifest(out_dir, "fit", cfg, in.hashes);

  std::cout << "model (" << archive.model_kind << "): " << archive.n_draws()
            << " kept draws across " << archive.n_chains << " chain(s)\n";
  print_delta_summary(archive, std::cout);
  if (cfg.get_bool("ess_report", false)) print_ess_report(archive, std::cout);
  std::cout << "ess_gate: " << (archive.ess_all_above_100 ? "pass" : "fail") << "\n";
}

void cmd_predict(const Config& cfg) {
  const std::string out_dir = require(cfg, "out");
  const std::string archive_dir = require(cfg, "archive");
  const auto archive = load_archive(archive_dir);

  CovariateRaster raster = read_raster_csv(require(cfg, "raster"));
  if (cfg.get_bool("standardize", true) && raster.n_cov() > 0)
    raster = standardize_covariates(raster);

  Rng rng(static_cast<std::uint64_t>(cfg.get_long("seed", 1)));
  const auto surface = predict_surface(archive, raster, rng);
  ensure_directory(out_dir);
  write_surface_csv(join_path(out_dir, "surface.csv"), surface);
  Config hashes;
  hashes.set("hash.raster", std::to_string(fnv1a_file(cfg.get("raster"))));
  write_run_manifest(out_dir, "predict", cfg, hashes);
  std::cout << "surface over " << surface.mean.size() << " cells -> " << out_dir << "\n";
}

void cmd_evaluate(const Config& cfg) {
  const std::string out_dir = require(cfg, "out");
  const auto in = load_inputs(cfg);
  const PriorSpec priors = priors_from_config(cfg);
  ChainConfig chain = chain_from_config(cfg);
  const double fraction = cfg.get_double("fraction", 0.2);
  const std::string rounding_s = cfg.get("rounding", "nearest");
  HoldoutRounding rounding = HoldoutRounding::nearest;
  if (rounding_s == "down") rounding = HoldoutRounding::down;
  else if (rounding_s == "up") rounding = HoldoutRounding::up;
  else if (rounding_s != "nearest")
    throw ValidationError("unknown rounding rule '" + rounding_s + "'");

  const auto models = split_list(require(cfg, "models"));
  if (models.empty()) throw ValidationError("no models to evaluate");

  const auto [train, test] =
      holdout_split(in.pa, fraction, static_cast<std::uint64_t>(cfg.get_long("seed", 1)),
                    rounding);
  std::vector<int> y_test;
  std::vector<Location> test_sites;
  for (const auto& s : test.sites) {
    y_test.push_back(s.y);
    test_sites.push_back(s.loc);
  }

  std::vector<std::pair<std::string, TjurResult>> results;
  for (const auto& model : models) {
    Config mcfg = cfg;
    mcfg.set("model", model);
    const FitSpec spec = fitspec_from_config(mcfg);
    const PresenceOnlyDataset* po =
        needs_po_data(spec.kind) ? (in.po ? &*in.po : nullptr) : nullptr;
    const DegradationLayers* layers = needs_po_data(spec.kind) ? in.layers.get() : nullptr;
    const auto archive = fit(spec, train, po, in.raster, layers, priors, chain);
    Rng rng(chain.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto p_draws = predict_p_draws(archive, in.raster, test_sites, rng);
    results.emplace_back(model, tjur_r2(p_draws, y_test));
  }
  const auto table = compare_models(std::move(results));
  ensure_directory(out_dir);
  write_tr_table(join_path(out_dir, "tr_table.csv"), table);
  write_run_manifest(out_dir, "evaluate", cfg, in.hashes);
  std::cout << "model,tr_mean,tr_lo,tr_hi\n";
  for (const auto& row : table.rows)
    std::cout << row.model << "," << format_double(row.tr.mean) << ","
              << format_double(row.tr.lo) << "," << format_double(row.tr.hi) << "\n";
}

// --------------------------------------------------------------- run_cli

namespace {

void add_common_flags(CLI::App* sub, std::vector<std::string>& sets, std::string& config_path) {
  sub->add_option("--config", config_path, "key=value config file ([section] headers allowed)");
  sub->add_option("--set", sets, "override any config key as key=value (repeatable)")
      ->take_all();
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "prefsdm: Bayesian presence/absence and presence-only fusion models\n"
      "with shared-process sampling-bias adjustment, NNGP-accelerated.\n"
      "Outputs use fixed filenames under --out: simulate -> pa.csv, po.csv,\n"
      "raster.csv, truth.manifest; fit -> archive files (alpha.csv, delta.csv,\n"
      "variance.csv, field_*.csv, sites.csv, ess.csv, acceptance.csv,\n"
      "archive.manifest) plus run.manifest; predict -> surface.csv;\n"
      "evaluate -> tr_table.csv. Exit codes: 0 ok, 2 validation, 3 numerical,\n"
      "4 io."};
  app.require_subcommand(1);

  struct SubSpec {
    std::string name, desc;
    void (*run)(const Config&);
    std::vector<std::pair<std::string, std::string>> opts;
  };
  const std::vector<SubSpec> subs = {
      {"simulate", "generate a synthetic dataset with known truth", &cmd_simulate,
       {{"--out", "out"}, {"--seed", "seed"}, {"--preset", "preset"}, {"--design", "design"},
        {"--delta-true", "delta_true"}, {"--expected-sites", "expected_sites"},
        {"--response-kind", "response_kind"}, {"--covariates", "covariates"}}},
      {"fit", "fit one model of the lattice by MCMC", &cmd_fit,
       {{"--out", "out"}, {"--seed", "seed"}, {"--pa", "pa"}, {"--po", "po"},
        {"--raster", "raster"}, {"--model", "model"}, {"--intensity", "intensity"},
        {"--degradation", "degradation"}, {"--burn-in", "chain.burn_in"},
        {"--keep", "chain.keep"}, {"--thin", "chain.thin"}, {"--field-thin", "chain.field_thin"},
        {"--chains", "chains"}, {"--threads", "threads"}, {"--k", "k"},
        {"--coord-scale", "coord_scale"}}},
      {"predict", "posterior presence-probability surface from an archive", &cmd_predict,
       {{"--out", "out"}, {"--seed", "seed"}, {"--archive", "archive"}, {"--raster", "raster"}}},
      {"evaluate", "holdout Tjur-R2 comparison across models", &cmd_evaluate,
       {{"--out", "out"}, {"--seed", "seed"}, {"--pa", "pa"}, {"--po", "po"},
        {"--raster", "raster"}, {"--models", "models"}, {"--fraction", "fraction"},
        {"--burn-in", "chain.burn_in"}, {"--keep", "chain.keep"}, {"--thin", "chain.thin"},
        {"--field-thin", "chain.field_thin"}, {"--chains", "chains"},
        {"--threads", "threads"}, {"--k", "k"}}},
  };

  struct SubState {
    std::vector<std::string> sets;
    std::string config_path;
    std::map<std::string, std::string> values;  // flag -> value as text
    void (*run)(const Config&) = nullptr;
    CLI::App* app = nullptr;
  };
  std::vector<std::unique_ptr<SubState>> states;

  for (const auto& sub : subs) {
    auto state = std::make_unique<SubState>();
    state->run = sub.run;
    CLI::App* s = app.add_subcommand(sub.name, sub.desc);
    state->app = s;
    add_common_flags(s, state->sets, state->config_path);
    for (const auto& [flag, key] : sub.opts) {
      auto& slot = state->values[key];
      s->add_option(flag, slot, key);
    }
    states.push_back(std::move(state));
  }
  bool ess_report = false;
  for (auto& st : states)
    if (st->app->get_name() == "fit")
      st->app->add_flag("--ess-report", ess_report, "print per-parameter ESS and the gate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (auto& st : states) {
      if (!st->app->parsed()) continue;
      Config cfg;
      if (!st->config_path.empty()) cfg = Config::from_file(st->config_path);
      for (const auto& [key, value] : st->values)
        if (!value.empty()) cfg.set(key, value);
      for (const auto& kv : st->sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw ValidationError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (ess_report && st->app->get_name() == "fit") cfg.set("ess_report", "true");
      st->run(cfg);
      return 0;
    }
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace prefsdm
