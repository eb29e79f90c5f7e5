// Command-line front end for HALR matrices, solvers and PDE runs.
//
// Exit codes: 0 success, 1 solver non-convergence or solver failure,
// 2 usage or input error. Tables go to stdout as TSV; diagnostics to stderr.

#include "halr/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace halr;

namespace {

struct Common {
  Index n = 256;
  double dt = 5e-4;
  Index maxrank = 50;
  double eps = 1e-8;
  double tol = 1e-5;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out = "halr_out";
  Index n_min = 0;  // 0: per-command default
  double coeff = 0.0;
};

constexpr int kExitSolver = 1;
constexpr int kExitUsage = 2;

Index n_min_or(const Common& c, Index fallback) { return c.n_min > 0 ? c.n_min : fallback; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::Io, "cannot create directory " + dir);
}

void write_artifacts(const std::string& dir, const std::string& stem, const HalrMatrix& a) {
  ensure_dir(dir);
  const std::string base = (fs::path(dir) / stem).string();
  save_halr(base + ".halr", a);
  write_text(base + ".json", to_json(a).dump(1) + "\n");
  write_text(base + ".svg", render_svg(a));
}

void print_storage_table(const std::string& name, const HalrMatrix& a, double rel_error) {
  const StorageReport r = storage_report(a);
  std::printf("name\trows\tcols\troot\tstorage_entries\tstorage_MB\tdense_leaves\tlow_rank_leaves\thalr_rank\trel_error\n");
  std::printf("%s\t%ld\t%ld\t%s\t%ld\t%.6f\t%ld\t%ld\t%ld\t%.3e\n", name.c_str(), static_cast<long>(a.rows()),
              static_cast<long>(a.cols()), to_string(a.kind()), static_cast<long>(r.entries), r.megabytes(),
              static_cast<long>(r.dense_leaves), static_cast<long>(r.low_rank_leaves), static_cast<long>(r.halr_rank),
              rel_error);
}

bool has_magic(const std::string& path, const char* magic) {
  std::ifstream is(path, std::ios::binary);
  char buf[8] = {};
  is.read(buf, 8);
  return is && std::memcmp(buf, magic, 8) == 0;
}

EntryOracle builtin_oracle(const std::string& name, const Common& c, double t_snap, double k_snap) {
  const Index n = c.n;
  const double dn = static_cast<double>(n);
  if (name == "burgers-snapshot") {
    const double h = 2.0 / (dn + 1.0);
    return EntryOracle::from_function(n, n, [=](Index i, Index j) {
      return burgers_exact(static_cast<double>(i + 1) * h, static_cast<double>(j + 1) * h, t_snap, k_snap);
    });
  }
  if (name == "gaussian") {
    return EntryOracle::from_function(n, n, [=](Index i, Index j) {
      const double d = (static_cast<double>(i) - static_cast<double>(j)) / dn;
      return std::exp(-d * d);
    });
  }
  if (name == "hilbert")
    return EntryOracle::from_function(n, n, [](Index i, Index j) { return 1.0 / static_cast<double>(i + j + 1); });
  if (name == "white-noise") {
    std::mt19937_64 gen(c.seed);
    std::normal_distribution<double> nd;
    Matrix w(n, n);
    for (Index k = 0; k < w.size(); ++k) w.data()[k] = nd(gen);
    return EntryOracle::from_matrix(w);
  }
  if (name == "rank-one") {
    return EntryOracle::from_function(n, n, [=](Index i, Index j) {
      return std::sin(3.0 * (static_cast<double>(i) + 1.0) / dn) * std::cos(2.0 * (static_cast<double>(j) + 1.0) / dn);
    });
  }
  if (name == "zero") return EntryOracle::from_function(n, n, [](Index, Index) { return 0.0; });
  raise(ErrorCode::InvalidArgument, "unknown builtin: " + name);
}

// ---- subcommands ------------------------------------------------------------

int cmd_approximate(const Common& c, const std::string& source, double t_snap, double k_snap) {
  HalrMatrix a;
  Matrix reference;
  std::string name = source;
  const Index n_min = n_min_or(c, 256);
  if (fs::exists(source)) {
    name = fs::path(source).stem().string();
    if (has_magic(source, "HALR1\0\0\0")) {
      reference = to_dense(load_halr(source));
    } else {
      reference = load_dense(source);
    }
    const EntryOracle o = EntryOracle::from_matrix(reference);
    a = halr_adaptive(o, relative_params(o, c.maxrank, c.eps, n_min));
  } else {
    const EntryOracle o = builtin_oracle(source, c, t_snap, k_snap);
    const double nrm = estimate_norm(o);
    a = nrm == 0.0 ? HalrMatrix::zero(c.n, c.n) : halr_adaptive(o, {c.maxrank, c.eps * nrm, n_min});
    if (c.n <= 4096) reference = o.dense();
  }
  double err = std::numeric_limits<double>::quiet_NaN();
  if (reference.size() > 0) {
    const double nr = reference.norm();
    err = (to_dense(a) - reference).norm() / (nr > 0 ? nr : 1.0);
  }
  write_artifacts(c.out, name, a);
  print_storage_table(name, a, err);
  return 0;
}

int cmd_refine(const Common& c, const std::string& file) {
  const HalrMatrix a = load_halr(file);
  const double nrm = norm2_estimate(a);
  const HalrMatrix r = refine_cluster(a, {c.maxrank, c.eps * nrm, n_min_or(c, 256)});
  const std::string name = fs::path(file).stem().string() + "_refined";
  write_artifacts(c.out, name, r);
  const Matrix da = to_dense(a);
  const double nd = da.norm();
  print_storage_table(name, r, (to_dense(r) - da).norm() / (nd > 0 ? nd : 1.0));
  return 0;
}

Banded1DOperator sylvester_operator(const std::string& kind, Index n, double dt, double coeff) {
  if (kind == "lyap-dirichlet")
    return Banded1DOperator::affine(0.5, -dt * coeff, Banded1DOperator::laplacian_dirichlet(n, 2.0 / static_cast<double>(n + 1)));
  if (kind == "lyap-neumann")
    return Banded1DOperator::affine(0.5, -dt * coeff, Banded1DOperator::laplacian_neumann(n, 1.0 / static_cast<double>(n)));
  raise(ErrorCode::InvalidArgument, "unknown operator: " + kind + " (lyap-dirichlet, lyap-neumann)");
}

int cmd_sylvester(const Common& c, bool n_given, const std::string& rhs_file, const std::string& op_a,
                  const std::string& op_b) {
  const HalrMatrix rhs = load_halr(rhs_file);
  const Index n = n_given ? c.n : rhs.rows();
  if (rhs.rows() != n || rhs.cols() != n)
    raise(ErrorCode::DimensionMismatch, "right-hand side is " + std::to_string(rhs.rows()) + "x" +
                                            std::to_string(rhs.cols()) + ", operators are " + std::to_string(n) + "x" +
                                            std::to_string(n));
  const double coeff = c.coeff > 0 ? c.coeff : 1.0;
  const OperatorView a(sylvester_operator(op_a, n, c.dt, coeff));
  const OperatorView b(sylvester_operator(op_b, n, c.dt, coeff));
  SolveStats st;
  Stopwatch w;
  const HalrMatrix x = dac_sylv(a, b, rhs, {c.tol, n_min_or(c, 256), 100}, &st);
  const double t_solve = w.seconds();
  const Matrix dc = to_dense(rhs);
  const double res = sylvester_residual(a, b, to_dense(x), dc);
  write_artifacts(c.out, fs::path(rhs_file).stem().string() + "_solution", x);
  std::printf("n\ttol\trel_residual\tT_solve_s\tkrylov_solves\tdense_solves\tmax_krylov_iterations\thalr_rank\tconverged\n");
  std::printf("%ld\t%.1e\t%.3e\t%.3f\t%ld\t%ld\t%ld\t%ld\t%d\n", static_cast<long>(n), c.tol, res, t_solve,
              static_cast<long>(st.krylov_solves), static_cast<long>(st.dense_solves),
              static_cast<long>(st.max_krylov_iterations), static_cast<long>(x.rank()), st.converged ? 1 : 0);
  return st.converged ? 0 : kExitSolver;
}

int cmd_run(const Common& c, const std::string& command, Index steps, double eps_step, Index snapshot_every) {
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.n = c.n;
  cfg.dt = c.dt;
  cfg.steps = steps;
  cfg.coeff = c.coeff;
  cfg.maxrank = c.maxrank;
  cfg.eps_rel = c.eps;
  cfg.eps_rel_step = eps_step;
  cfg.tol = c.tol;
  cfg.n_min = n_min_or(c, 32);
  cfg.seed = c.seed;
  cfg.out = c.out;
  cfg.snapshot_every = snapshot_every;
  const SimulationReport rep = run_simulation(cfg);
  ensure_dir(c.out);
  write_csv((fs::path(c.out) / (command + "_report.csv")).string(), rep);
  std::printf("step\tt\tT_lyap_s\tT_adapt_s\tT_total_s\tstorage_MB\thalr_rank\terror_l2\n");
  for (const auto& r : rep.rows)
    std::printf("%ld\t%.6g\t%.4f\t%.4f\t%.4f\t%.6f\t%ld\t%.6e\n", static_cast<long>(r.step), r.t, r.lyap_s, r.adapt_s,
                r.total_s, r.storage_mb, static_cast<long>(r.halr_rank), r.error_l2);
  std::fprintf(stderr, "initial storage %.6f MB, peak %.6f MB, seed %llu\n", rep.initial_storage_mb,
               rep.peak_storage_mb, static_cast<unsigned long long>(c.seed));
  return 0;
}

int cmd_helmholtz(const Common& c, double shift, bool check_residual) {
  HelmholtzParams p;
  p.n = c.n;
  p.tol = c.tol;
  p.maxrank = c.maxrank;
  p.shift = shift;
  p.n_min = n_min_or(c, 64);
  const HelmholtzProblem prob(p);
  const HelmholtzResult r = helmholtz_pgmres(prob);
  ensure_dir(c.out);
  {
    std::ofstream os(fs::path(c.out) / "helmholtz_history.csv");
    os << "iteration,relative_residual\n";
    for (std::size_t k = 0; k < r.residual_history.size(); ++k) os << k + 1 << ',' << r.residual_history[k] << '\n';
    if (!os) raise(ErrorCode::Io, "cannot write helmholtz_history.csv");
  }
  write_artifacts(c.out, "helmholtz_solution", r.X);
  const StorageReport sr = storage_report(r.X);
  const double dense_res = check_residual ? prob.dense_residual(to_dense(r.X)) : std::numeric_limits<double>::quiet_NaN();
  std::printf("n\titerations\tconverged\tfinal_residual\tstorage_MB\thalr_rank\tT_lyap_s\tT_adapt_s\tT_total_s\tdense_residual\n");
  std::printf("%ld\t%ld\t%d\t%.3e\t%.6f\t%ld\t%.3f\t%.3f\t%.3f\t%.3e\n", static_cast<long>(p.n),
              static_cast<long>(r.iterations), r.converged ? 1 : 0,
              r.residual_history.empty() ? 0.0 : r.residual_history.back(), sr.megabytes(),
              static_cast<long>(sr.halr_rank), r.lyap_s, r.adapt_s, r.total_s, dense_res);
  return r.converged ? 0 : kExitSolver;
}

int cmd_render(const std::string& dir) {
  if (!fs::is_directory(dir)) raise(ErrorCode::Io, "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".halr") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::printf("file\tleaves\thalr_rank\n");
  for (const auto& f : files) {
    const HalrMatrix a = load_halr(f.string());
    fs::path svg = f;
    svg.replace_extension(".svg");
    fs::path json = f;
    json.replace_extension(".json");
    write_text(svg.string(), render_svg(a));
    write_text(json.string(), to_json(a).dump(1) + "\n");
    std::printf("%s\t%ld\t%ld\n", f.filename().string().c_str(), static_cast<long>(a.cluster().leaf_count()),
                static_cast<long>(a.rank()));
  }
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::IncompatibleClusters:
    case ErrorCode::Io:
    case ErrorCode::TooLarge:
      return kExitUsage;
    default:
      return kExitSolver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HALR matrices: construction, Sylvester solvers and PDE drivers"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");

  Common c;
  app.add_option("--n", c.n, "grid size / matrix dimension")->check(CLI::PositiveNumber);
  app.add_option("--dt", c.dt, "time step")->check(CLI::NonNegativeNumber);
  app.add_option("--maxrank", c.maxrank, "maximum rank of low-rank blocks")->check(CLI::PositiveNumber);
  app.add_option("--eps", c.eps, "relative truncation threshold")->check(CLI::NonNegativeNumber);
  app.add_option("--tol", c.tol, "solver tolerance")->check(CLI::PositiveNumber);
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--threads", c.threads, "worker threads forwarded to Eigen")->check(CLI::PositiveNumber);
  app.add_option("--out", c.out, "output directory");
  app.add_option("--n-min", c.n_min, "smallest block that is split further")->check(CLI::NonNegativeNumber);
  app.add_option("--coeff", c.coeff, "diffusion K (burgers) or mobility nu (allen-cahn)")->check(CLI::NonNegativeNumber);

  std::string source;
  double t_snap = 1.0;
  double k_snap = 0.001;
  auto* approx = app.add_subcommand("approximate", "build an HALR matrix from a builtin or a matrix file");
  approx->add_option("source", source, "burgers-snapshot | gaussian | white-noise | hilbert | rank-one | zero | file")
      ->required();

  std::string refine_file;
  auto* refine = app.add_subcommand("refine", "re-adapt the cluster of an HALR1 file");
  refine->add_option("file", refine_file, "HALR1 file")->required();

  std::string rhs_file;
  std::string op_a = "lyap-dirichlet";
  std::string op_b = "lyap-dirichlet";
  auto* sylv = app.add_subcommand("sylvester", "solve A X + X B = C for an HALR1 right-hand side");
  sylv->add_option("rhs", rhs_file, "HALR1 right-hand side")->required();

  Index steps = 20;
  double eps_step = 1e-5;
  Index snapshot_every = 0;
  auto* burgers = app.add_subcommand("burgers", "Burgers' equation with IMEX Euler");
  auto* allen = app.add_subcommand("allen-cahn", "Allen-Cahn equation with IMEX Euler");

  double shift = 1.0;
  bool check_residual = false;
  auto* helm = app.add_subcommand("helmholtz", "Helmholtz problem with preconditioned GMRES");

  // Command-specific options live on the top-level app as well, so a flat
  // key=value config file can set any of them.
  app.add_option("--t", t_snap, "approximate: time of the Burgers snapshot");
  app.add_option("--K", k_snap, "approximate: diffusion of the Burgers snapshot")->check(CLI::PositiveNumber);
  app.add_option("--op-a", op_a, "sylvester: lyap-dirichlet | lyap-neumann");
  app.add_option("--op-b", op_b, "sylvester: lyap-dirichlet | lyap-neumann");
  app.add_option("--steps", steps, "burgers/allen-cahn: number of time steps")->check(CLI::NonNegativeNumber);
  app.add_option("--eps-step", eps_step, "burgers/allen-cahn: relative refinement threshold per step");
  app.add_option("--snapshot-every", snapshot_every, "burgers/allen-cahn: snapshot interval (0: first and last)");
  app.add_option("--shift", shift, "helmholtz: preconditioner shift");
  app.add_flag("--dense-residual", check_residual, "helmholtz: also report the densified residual");

  std::string render_dir;
  auto* render = app.add_subcommand("render", "regenerate SVG and JSON for every HALR1 file in a directory");
  render->add_option("dir", render_dir, "snapshot directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  Eigen::setNbThreads(c.threads);
  try {
    if (*approx) return cmd_approximate(c, source, t_snap, k_snap);
    if (*refine) return cmd_refine(c, refine_file);
    if (*sylv) return cmd_sylvester(c, app.count("--n") > 0, rhs_file, op_a, op_b);
    if (*burgers) return cmd_run(c, "burgers", steps, eps_step, snapshot_every);
    if (*allen) return cmd_run(c, "allen-cahn", steps, eps_step, snapshot_every);
    if (*helm) return cmd_helmholtz(c, shift, check_residual);
    if (*render) return cmd_render(render_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
  return kExitUsage;
}
