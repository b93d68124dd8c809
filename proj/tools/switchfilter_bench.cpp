// Batch driver for the switching-filter study. Verbs:
//
//   run        full (epsilon x seed) grid: per-model trace CSVs, the truth
//              path, calibration traces, kernel weights, and a long-format
//              error table for plotting
//   simulate   truth paths and observations only
//   calibrate  dynamic and static calibration parameter traces only
//   sweep-obs  posterior-error-vs-observation curves at frozen steps plus
//              their statistical averages over the predictive law of y_n
//   rmse       per-model RMSE summary table against the reference
//   density    prior-density comparison across the model structures and the
//              posterior mixture-vs-Gaussian diagnostic at a frozen step,
//              for observation noise R = 0.25E and R = 0.75E
//
// Every output is a deterministic function of (config, seed): numbers print
// with %.17g, the manifest carries no clock, and reruns produce byte-identical
// files. The (epsilon x seed) grid is processed as a parallel map over
// independent cells (capped by SWITCHFILTER_THREADS); each cell writes only
// into its own directory and the coordinator writes the shared tables and the
// manifest afterwards.
//
// Exit codes: 0 success, 1 command-line error, 2 config error, 3 runtime
// failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "switchfilter/experiment.hpp"
#include "switchfilter/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace switchfilter;

namespace {

// ----------------------------------------------------------------------------
// Formatting

// Full-precision decimal rendering; round-trips doubles exactly.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Short human-facing rendering for file and directory names.
std::string label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ----------------------------------------------------------------------------
// CSV emitters

std::string trace_csv(const experiment::ModelTrace& m) {
  std::string s =
      "n,prior_mean,prior_var,post_mean,post_var,"
      "rel_err_prior_mean,rel_err_prior_var,rel_err_post_mean,rel_err_post_var\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const FilterTraceRow& r = m.rows[i];
    s += std::to_string(r.step) + ',' + fmt(r.prior_mean) + ',' + fmt(r.prior_var) + ',' +
         fmt(r.post_mean) + ',' + fmt(r.post_var) + ',' + fmt(m.rel_prior_mean[i]) + ',' +
         fmt(m.rel_prior_var[i]) + ',' + fmt(m.rel_post_mean[i]) + ',' +
         fmt(m.rel_post_var[i]) + '\n';
  }
  return s;
}

std::string truth_csv(double obs_time, const std::vector<double>& u, const std::vector<int>& mode,
                      const std::vector<double>& y) {
  std::string s = "n,t,u,mode,y\n";
  for (std::size_t i = 0; i < u.size(); ++i)
    s += std::to_string(i + 1) + ',' + fmt((double)(i + 1) * obs_time) + ',' + fmt(u[i]) + ',' +
         std::to_string(mode[i]) + ',' + fmt(y[i]) + '\n';
  return s;
}

std::string weights_csv(const experiment::ModelTrace& m) {
  std::string s = "n,post_weight_plus\n";
  for (std::size_t i = 0; i < m.post_weight_plus.size(); ++i)
    s += std::to_string(i + 1) + ',' + fmt(m.post_weight_plus[i]) + '\n';
  return s;
}

std::string theta_dsm_csv(const std::vector<reduced::ThetaDSM>& trace, bool indexed) {
  std::string s = indexed ? "n,mu,nu,sigma\n" : "mu,nu,sigma\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (indexed) s += std::to_string(i + 1) + ',';
    s += fmt(trace[i].mu) + ',' + fmt(trace[i].nu) + ',' + fmt(trace[i].sigma) + '\n';
  }
  return s;
}

std::string theta_ddsm_csv(const std::vector<reduced::ThetaDDSM>& trace, bool indexed) {
  std::string s = indexed ? std::string("n,") : std::string();
  s += "rho_plus,mu_plus,nu_plus,sigma_plus,mu_minus,nu_minus,sigma_minus\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const reduced::ThetaDDSM& t = trace[i];
    if (indexed) s += std::to_string(i + 1) + ',';
    s += fmt(t.rho_plus) + ',' + fmt(t.plus.mu) + ',' + fmt(t.plus.nu) + ',' + fmt(t.plus.sigma) +
         ',' + fmt(t.minus.mu) + ',' + fmt(t.minus.nu) + ',' + fmt(t.minus.sigma) + '\n';
  }
  return s;
}

std::string sweep_csv(const std::vector<experiment::SweepPoint>& sweep) {
  std::string s = "y,rel_post_mean,rel_post_var\n";
  for (const auto& p : sweep)
    s += fmt(p.y) + ',' + fmt(p.rel_post_mean) + ',' + fmt(p.rel_post_var) + '\n';
  return s;
}

std::string density_csv(const experiment::DensityReport& rep) {
  std::string s = "u";
  for (const auto& [name, dens] : rep.prior_density) s += ',' + name;
  s += '\n';
  for (std::size_t k = 0; k < rep.grid.size(); ++k) {
    s += fmt(rep.grid[k]);
    for (const auto& [name, dens] : rep.prior_density) s += ',' + fmt(dens[k]);
    s += '\n';
  }
  return s;
}

// ----------------------------------------------------------------------------
// Grid runner

enum class Verb { run, simulate, calibrate, sweep_obs, rmse, density };

struct Cell {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

struct CellOutput {
  std::string dir;                 // cell directory, relative to the output root
  std::vector<std::string> files;  // emitted files, relative to the output root
  std::string long_rows;           // chunk of long.csv          (run)
  std::string averaged_rows;       // chunk of averaged.csv      (sweep-obs)
  std::string rmse_rows;           // chunk of rmse.csv          (rmse)
  std::string density_l1_rows;     // chunk of density_l1.csv    (density)
  int floor_rows = 0;              // steps with reference moments below the error floor
  std::string error;               // nonempty: the cell aborted with this diagnostic
};

// Steps whose reference moments sit below the relative-error floor; errors
// against them are floor-dominated and the manifest flags the cell.
int count_floor_rows(const experiment::ModelTrace& ref) {
  int count = 0;
  for (const FilterTraceRow& r : ref.rows)
    if (std::fabs(r.prior_mean) < 1e-12 || std::fabs(r.prior_var) < 1e-12 ||
        std::fabs(r.post_mean) < 1e-12 || std::fabs(r.post_var) < 1e-12)
      ++count;
  return count;
}

// Models in presentation order: reference first, then the roster as run.
std::vector<const experiment::ModelTrace*> all_traces(const experiment::CellResult& cr) {
  std::vector<const experiment::ModelTrace*> out;
  out.push_back(&cr.reference);
  for (const auto& m : cr.models) out.push_back(&m);
  return out;
}

void emit_theta_files(const experiment::CellResult& cr, const fs::path& root, CellOutput& res) {
  auto file = [&](const std::string& name, const std::string& content) {
    write_file(root / res.dir / name, content);
    res.files.push_back(res.dir + "/" + name);
  };
  file("theta_dsm_dynamic.csv", theta_dsm_csv(cr.trace("dsm_dynamic").theta_trace, true));
  file("theta_dsm_static.csv", theta_dsm_csv(cr.trace("dsm_static").theta_trace, false));
  file("theta_ddsm_dynamic.csv", theta_ddsm_csv(cr.trace("ddsm_dynamic").theta2_trace, true));
  file("theta_ddsm_static.csv", theta_ddsm_csv(cr.trace("ddsm_static").theta2_trace, false));
}

void process_cell(Verb verb, const experiment::ExperimentConfig& cfg, const Cell& cell,
                  const fs::path& root, const std::vector<int>& sweep_at, int density_at,
                  CellOutput& res) {
  auto file = [&](const std::string& name, const std::string& content) {
    write_file(root / res.dir / name, content);
    res.files.push_back(res.dir + "/" + name);
  };
  const std::string eps_s = fmt(cell.epsilon);
  const std::string seed_s = std::to_string(cell.seed);

  switch (verb) {
    case Verb::simulate: {
      const experiment::TruthCell truth = experiment::simulate_truth(cfg, cell.epsilon, cell.seed);
      file("truth.csv", truth_csv(cfg.obs_time, truth.truth_u, truth.truth_mode, truth.y));
      return;
    }
    case Verb::density: {
      for (double ratio : {0.25, 0.75}) {
        experiment::ExperimentConfig c = cfg;
        c.obs_noise_ratio = ratio;
        const experiment::CellResult cr = experiment::run_cell(c, cell.epsilon, cell.seed, true);
        const experiment::DensityReport rep = experiment::density_compare(cr, density_at);
        file("density_r" + label(ratio) + ".csv", density_csv(rep));
        const std::string prefix = eps_s + ',' + seed_s + ',' + fmt(ratio) + ',';
        for (const auto& [pair, v] : rep.l1)
          res.density_l1_rows += prefix + pair.first + ',' + pair.second + ',' + fmt(v) + '\n';
        res.density_l1_rows +=
            prefix + "ssm_mixture_posterior,moment_matched_gaussian," +
            fmt(rep.posterior_mixture_l1) + '\n';
      }
      return;
    }
    default:
      break;
  }

  const experiment::CellResult cr = experiment::run_cell(cfg, cell.epsilon, cell.seed, false);
  res.floor_rows = count_floor_rows(cr.reference);

  switch (verb) {
    case Verb::run: {
      file("truth.csv", truth_csv(cr.obs_time, cr.truth_u, cr.truth_mode, cr.y));
      for (const auto* m : all_traces(cr)) {
        file("trace_" + m->name + ".csv", trace_csv(*m));
        if (!m->post_weight_plus.empty())
          file("weights_" + m->name + ".csv", weights_csv(*m));
        for (std::size_t i = 0; i < m->rows.size(); ++i) {
          const std::string prefix =
              eps_s + ',' + seed_s + ',' + m->name + ',' + std::to_string(m->rows[i].step) + ',';
          res.long_rows += prefix + "post_mean," + fmt(m->rows[i].post_mean) + '\n';
          res.long_rows += prefix + "post_var," + fmt(m->rows[i].post_var) + '\n';
          res.long_rows += prefix + "rel_post_mean," + fmt(m->rel_post_mean[i]) + '\n';
          res.long_rows += prefix + "rel_post_var," + fmt(m->rel_post_var[i]) + '\n';
        }
      }
      emit_theta_files(cr, root, res);
      return;
    }
    case Verb::calibrate: {
      emit_theta_files(cr, root, res);
      return;
    }
    case Verb::sweep_obs: {
      for (int n : sweep_at) {
        for (const auto& m : cr.models) {
          file("sweep_n" + std::to_string(n) + "_" + m.name + ".csv",
               sweep_csv(experiment::obs_sweep(cr, m.name, n)));
          const experiment::ObsAveragedError avg =
              experiment::averaged_posterior_error(cr, m.name, n);
          res.averaged_rows += eps_s + ',' + seed_s + ',' + std::to_string(n) + ',' + m.name +
                               ',' + fmt(avg.mean_err) + ',' + fmt(avg.var_err) + ',' +
                               fmt(avg.combined) + '\n';
        }
      }
      return;
    }
    case Verb::rmse: {
      for (const auto& m : cr.models) {
        const experiment::RmseSummary rs = experiment::rmse_summary(cr, m.name);
        res.rmse_rows += eps_s + ',' + seed_s + ',' + m.name + ',' + fmt(rs.rmse_mean) + ',' +
                         fmt(rs.rmse_var) + ',' + fmt(rs.normalized) + ',' +
                         fmt(experiment::time_averaged_posterior_error(cr, m.name)) + '\n';
      }
      return;
    }
    default:
      return;
  }
}

const char* verb_name(Verb v) {
  switch (v) {
    case Verb::run: return "run";
    case Verb::simulate: return "simulate";
    case Verb::calibrate: return "calibrate";
    case Verb::sweep_obs: return "sweep-obs";
    case Verb::rmse: return "rmse";
    case Verb::density: return "density";
  }
  return "?";
}

bool has_cell_dir(Verb v) { return v != Verb::rmse; }

int run_grid(Verb verb, const experiment::ExperimentConfig& cfg, const fs::path& root,
             const std::vector<int>& sweep_at, int density_at) {
  std::vector<Cell> cells;
  for (double e : cfg.epsilons)
    for (std::uint64_t s : cfg.seeds) cells.push_back({e, s});

  fs::create_directories(root);
  std::vector<CellOutput> results(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!has_cell_dir(verb)) continue;
    results[i].dir = "eps" + label(cells[i].epsilon) + "_seed" + std::to_string(cells[i].seed);
    fs::create_directories(root / results[i].dir);
  }

  parallel_for((std::int64_t)cells.size(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      try {
        process_cell(verb, cfg, cells[i], root, sweep_at, density_at, results[i]);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      } catch (...) {
        results[i].error = "unknown failure";
      }
    }
  });

  // Shared tables, concatenated in grid order.
  std::vector<std::string> top_files;
  auto top = [&](const char* name, const std::string& header,
                 std::string CellOutput::*chunk) {
    std::string body;
    for (const auto& r : results) body += r.*chunk;
    if (body.empty()) return;
    write_file(root / name, header + body);
    top_files.push_back(name);
  };
  top("long.csv", "epsilon,seed,model,n,metric,value\n", &CellOutput::long_rows);
  top("averaged.csv", "epsilon,seed,n,model,mean_err,var_err,combined\n",
      &CellOutput::averaged_rows);
  top("rmse.csv", "epsilon,seed,model,rmse_mean,rmse_var,normalized,time_avg_err\n",
      &CellOutput::rmse_rows);
  top("density_l1.csv", "epsilon,seed,obs_ratio,model_a,model_b,l1\n",
      &CellOutput::density_l1_rows);

  ordered_json manifest;
  manifest["tool"] = "switchfilter_bench";
  manifest["version"] = experiment::kVersion;
  manifest["verb"] = verb_name(verb);
  manifest["config"] = cfg;
  if (verb == Verb::sweep_obs) manifest["sweep_steps"] = sweep_at;
  if (verb == Verb::density) {
    manifest["density_step"] = density_at;
    manifest["obs_ratios"] = {0.25, 0.75};
  }
  ordered_json cell_list = ordered_json::array();
  ordered_json warnings = ordered_json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    ordered_json entry;
    entry["epsilon"] = cells[i].epsilon;
    entry["seed"] = cells[i].seed;
    entry["reference"] =
        cfg.reference_mode(cells[i].epsilon) == ssm::SsmMode::gaussian ? "ssm_gaussian"
                                                                       : "ssm_mixture";
    if (has_cell_dir(verb)) {
      entry["dir"] = results[i].dir;
      std::sort(results[i].files.begin(), results[i].files.end());
      entry["files"] = results[i].files;
    }
    if (!results[i].error.empty()) entry["error"] = results[i].error;
    cell_list.push_back(std::move(entry));
    const std::string tag =
        "eps=" + label(cells[i].epsilon) + " seed=" + std::to_string(cells[i].seed);
    if (results[i].floor_rows > 0)
      warnings.push_back(tag + ": " + std::to_string(results[i].floor_rows) +
                         " step(s) with reference moments below 1e-12; relative errors there "
                         "are floor-dominated");
  }
  manifest["cells"] = std::move(cell_list);
  std::sort(top_files.begin(), top_files.end());
  manifest["outputs"] = top_files;
  manifest["warnings"] = warnings;
  write_file(root / "manifest.json", manifest.dump(2) + "\n");

  for (const auto& w : warnings)
    std::fprintf(stderr, "switchfilter_bench: warning: %s\n", w.get<std::string>().c_str());
  int failed = 0;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!results[i].error.empty()) {
      ++failed;
      std::fprintf(stderr, "switchfilter_bench: cell eps=%s seed=%s failed: %s\n",
                   label(cells[i].epsilon).c_str(), std::to_string(cells[i].seed).c_str(),
                   results[i].error.c_str());
    }
  if (failed > 0) {
    std::fprintf(stderr, "switchfilter_bench: %d of %zu cells failed\n", failed, cells.size());
    return 3;
  }
  return 0;
}

experiment::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  return j.get<experiment::ExperimentConfig>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switching-filter study driver: truth simulation, reference and reduced filters, "
               "error metrics, and plot-ready outputs"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string reference;
  std::vector<double> eps_override;
  std::vector<std::uint64_t> seed_override;
  int steps_override = -1;
  app.add_option("--config", config_path,
                 "JSON experiment config; defaults to the packaged study configuration");
  app.add_option("--epsilon", eps_override, "Comma-separated epsilon list overriding the config")
      ->delimiter(',');
  app.add_option("--steps", steps_override, "Number of observation steps");
  app.add_option("--seed", seed_override, "Truth-path seed(s), comma separated")->delimiter(',');
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--reference", reference, "Reference filter flavour")
      ->check(CLI::IsMember({"gaussian", "mixture", "auto"}));

  CLI::App* verb_run = app.add_subcommand(
      "run", "Full grid: per-model traces, truth, calibration, long-format errors");
  CLI::App* verb_sim = app.add_subcommand("simulate", "Truth paths and observations only");
  CLI::App* verb_cal = app.add_subcommand("calibrate", "Calibration parameter traces only");
  CLI::App* verb_sweep = app.add_subcommand(
      "sweep-obs", "Observation sweeps and statistical averages at frozen steps");
  std::vector<int> sweep_at{20, 40};
  verb_sweep->add_option("--at", sweep_at, "Steps to freeze")->delimiter(',')->capture_default_str();
  CLI::App* verb_rmse =
      app.add_subcommand("rmse", "Per-model RMSE summary against the reference");
  CLI::App* verb_density = app.add_subcommand(
      "density", "Prior-density comparison and posterior mixture diagnostics at a frozen step");
  int density_at = 10;
  verb_density->add_option("--at", density_at, "Step to freeze")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  Verb verb = Verb::run;
  if (app.got_subcommand(verb_sim)) verb = Verb::simulate;
  else if (app.got_subcommand(verb_cal)) verb = Verb::calibrate;
  else if (app.got_subcommand(verb_sweep)) verb = Verb::sweep_obs;
  else if (app.got_subcommand(verb_rmse)) verb = Verb::rmse;
  else if (app.got_subcommand(verb_density)) verb = Verb::density;
  else if (app.got_subcommand(verb_run)) verb = Verb::run;

  experiment::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    else cfg = experiment::section4_default();
    if (!eps_override.empty()) cfg.epsilons = eps_override;
    if (!seed_override.empty()) cfg.seeds = seed_override;
    if (steps_override >= 0) cfg.steps = steps_override;
    if (!reference.empty()) cfg.reference = reference;
    cfg.validate();
    if (verb == Verb::sweep_obs) {
      if (sweep_at.empty()) throw std::invalid_argument("sweep-obs: empty step list");
      for (int n : sweep_at)
        if (n < 1 || n > cfg.steps)
          throw std::invalid_argument("sweep-obs: step " + std::to_string(n) +
                                      " outside 1.." + std::to_string(cfg.steps));
    }
    if (verb == Verb::density && (density_at < 1 || density_at > cfg.steps))
      throw std::invalid_argument("density: step " + std::to_string(density_at) + " outside 1.." +
                                  std::to_string(cfg.steps));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "switchfilter_bench: config error: %s\n", e.what());
    return 2;
  }

  try {
    return run_grid(verb, cfg, fs::path(out_dir), sweep_at, density_at);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "switchfilter_bench: runtime error: %s\n", e.what());
    return 3;
  }
}
