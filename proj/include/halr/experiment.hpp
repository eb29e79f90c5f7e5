#pragma once

// Measurement loops for the time-dependent drivers: per-step timings,
// storage, rank and error rows, plus optional structure snapshots.

#include "halr/io.hpp"
#include "halr/pde.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace halr {

struct ExperimentConfig {
  std::string command = "burgers";  ///< burgers | allen-cahn
  Index n = 256;
  double dt = 5e-4;
  Index steps = 20;
  double coeff = 0.0;  ///< K (Burgers) or nu (Allen-Cahn); 0 selects the driver default
  Index maxrank = 50;
  double eps_rel = 1e-8;
  double eps_rel_step = 1e-5;
  double tol = 1e-5;
  Index n_min = 32;
  std::uint64_t seed = 1;
  std::string out;             ///< snapshot directory; empty disables snapshots
  Index snapshot_every = 0;    ///< 0: first and last state only (when out is set)
};

struct ReportRow {
  Index step = 0;
  double t = 0.0;
  double lyap_s = 0.0;
  double adapt_s = 0.0;
  double total_s = 0.0;
  double storage_mb = 0.0;
  Index halr_rank = 0;
  double error_l2 = std::numeric_limits<double>::quiet_NaN();  ///< NaN when no closed form exists
};

struct SimulationReport {
  ExperimentConfig config;
  double initial_storage_mb = 0.0;
  Index initial_rank = 0;
  double peak_storage_mb = 0.0;
  std::vector<ReportRow> rows;
  HalrMatrix final_state;
  std::vector<std::string> snapshots;  ///< paths of written HALR1 snapshot files
};

inline void write_snapshot(const std::string& dir, Index step, const HalrMatrix& u, std::vector<std::string>& paths) {
  std::filesystem::create_directories(dir);
  std::ostringstream stem;
  stem << "snapshot_" << std::setw(6) << std::setfill('0') << step;
  const std::string base = (std::filesystem::path(dir) / stem.str()).string();
  save_halr(base + ".halr", u);
  write_text(base + ".json", to_json(u).dump(1) + "\n");
  write_text(base + ".svg", render_svg(u));
  paths.push_back(base + ".halr");
}

/// Steps the configured PDE `config.steps` times.
inline SimulationReport run_simulation(const ExperimentConfig& cfg) {
  if (cfg.n < 4 || cfg.steps < 0 || !(cfg.dt >= 0) || cfg.maxrank < 1)
    raise(ErrorCode::InvalidArgument, "invalid experiment configuration");
  SimulationReport rep;
  rep.config = cfg;
  const bool snap = !cfg.out.empty();
  auto should_snap = [&](Index step) {
    if (!snap) return false;
    if (step == 0 || step == cfg.steps) return true;
    return cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0;
  };

  auto record = [&](const PdeState& s, const StepTiming& tm, double err) {
    const StorageReport sr = storage_report(s.U);
    ReportRow row{s.step, s.t, tm.lyap_s, tm.adapt_s, tm.total_s, sr.megabytes(), sr.halr_rank, err};
    rep.peak_storage_mb = std::max(rep.peak_storage_mb, row.storage_mb);
    rep.rows.push_back(row);
    if (should_snap(s.step)) write_snapshot(cfg.out, s.step, s.U, rep.snapshots);
  };
  auto start = [&](const PdeState& s) {
    const StorageReport sr = storage_report(s.U);
    rep.initial_storage_mb = sr.megabytes();
    rep.initial_rank = sr.halr_rank;
    rep.peak_storage_mb = rep.initial_storage_mb;
    if (should_snap(0)) write_snapshot(cfg.out, 0, s.U, rep.snapshots);
  };

  if (cfg.command == "burgers") {
    BurgersParams p;
    p.n = cfg.n;
    p.dt = cfg.dt;
    if (cfg.coeff > 0) p.K = cfg.coeff;
    p.maxrank = cfg.maxrank;
    p.eps_rel = cfg.eps_rel;
    p.eps_rel_step = cfg.eps_rel_step;
    p.tol = cfg.tol;
    p.n_min = cfg.n_min;
    const BurgersProblem prob(p);
    PdeState s = prob.initial_state();
    start(s);
    for (Index k = 0; k < cfg.steps; ++k) {
      StepTiming tm;
      s = burgers_step(prob, s, &tm);
      record(s, tm, burgers_error_l2(prob, to_dense(s.U), s.t));
    }
    rep.final_state = s.U;
  } else if (cfg.command == "allen-cahn") {
    AllenCahnParams p;
    p.n = cfg.n;
    p.dt = cfg.dt;
    if (cfg.coeff > 0) p.nu = cfg.coeff;
    p.maxrank = cfg.maxrank;
    p.eps_rel_step = cfg.eps_rel_step;
    p.tol = cfg.tol;
    p.n_min = cfg.n_min;
    p.seed = cfg.seed;
    const AllenCahnProblem prob(p);
    PdeState s = prob.initial_state(prob.random_initial());
    start(s);
    for (Index k = 0; k < cfg.steps; ++k) {
      StepTiming tm;
      s = allen_cahn_step(prob, s, &tm);
      record(s, tm, std::numeric_limits<double>::quiet_NaN());
    }
    rep.final_state = s.U;
  } else {
    raise(ErrorCode::InvalidArgument, "run_simulation: unknown command " + cfg.command);
  }
  return rep;
}

/// CSV with the columns step,t,T_lyap_s,T_adapt_s,T_total_s,storage_MB,halr_rank,error_l2.
inline void write_csv(std::ostream& os, const SimulationReport& rep) {
  os << "step,t,T_lyap_s,T_adapt_s,T_total_s,storage_MB,halr_rank,error_l2\n";
  os << std::setprecision(10);
  for (const auto& r : rep.rows) {
    os << r.step << ',' << r.t << ',' << r.lyap_s << ',' << r.adapt_s << ',' << r.total_s << ',' << r.storage_mb << ','
       << r.halr_rank << ',';
    if (std::isnan(r.error_l2))
      os << "nan";
    else
      os << r.error_l2;
    os << '\n';
  }
}

inline void write_csv(const std::string& path, const SimulationReport& rep) {
  std::ofstream os(path);
  if (!os) raise(ErrorCode::Io, "cannot open " + path);
  write_csv(os, rep);
  if (!os) raise(ErrorCode::Io, "write failed: " + path);
}

}  // namespace halr
