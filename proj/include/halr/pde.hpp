#pragma once

// PDE drivers on HALR matrices and dense spectral references.
//
// Grids: U(i, j) = u(x_i, y_j).
//   Burgers     (0,2)^2, Dirichlet, interior nodes x_i = (i+1) h, h = 2/(n+1).
//   Allen-Cahn  (0,1)^2, Neumann, cell centres x_i = (i+1/2) h, h = 1/n.
//   Helmholtz   (-1,1)^2, Neumann, cell centres x_i = -1 + (i+1/2) h, h = 2/n.

#include "halr/construct.hpp"
#include "halr/sylvester.hpp"

#include <fftw3.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace halr {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct StepTiming {
  double lyap_s = 0.0;
  double adapt_s = 0.0;
  double total_s = 0.0;
  SolveStats stats;
};

struct PdeState {
  HalrMatrix U;
  double t = 0.0;
  Index step = 0;
};

struct DenseState {
  Matrix U;
  double t = 0.0;
  Index step = 0;
};

// ---- Spectral Lyapunov solver (oracle) ------------------------------------

enum class SpectralKind { DirichletSine, NeumannCosine };

/// Solves (mu I + c L) X + X (mu I + c L) = R for the 1D Laplacian L of the
/// given kind by diagonalizing L with fast sine/cosine transforms.
class SpectralLyapunov {
 public:
  SpectralLyapunov(SpectralKind kind, Index n, double h) : kind_(kind), n_(n), h_(h) {}

  /// Eigenvalues of L in transform order.
  Vector eigenvalues() const {
    Vector lam(n_);
    const double pi = std::numbers::pi;
    for (Index k = 0; k < n_; ++k) {
      const double s = kind_ == SpectralKind::DirichletSine ? std::sin(pi * static_cast<double>(k + 1) / (2.0 * static_cast<double>(n_ + 1)))
                                                            : std::sin(pi * static_cast<double>(k) / (2.0 * static_cast<double>(n_)));
      lam(k) = -4.0 / (h_ * h_) * s * s;
    }
    return lam;
  }

  Matrix solve(const Matrix& r, double mu, double c) const {
    require_dims(r.rows() == n_ && r.cols() == n_, "SpectralLyapunov: rhs shape");
    Matrix coef = transform2(r, true);
    const Vector d = (mu + c * eigenvalues().array()).matrix();
    for (Index j = 0; j < n_; ++j)
      for (Index i = 0; i < n_; ++i) coef(i, j) /= d(i) + d(j);
    return transform2(coef, false);
  }

 private:
  /// Forward (analysis) or inverse (synthesis) transform along both axes.
  Matrix transform2(const Matrix& x, bool forward) const {
    Matrix y = transform_cols(x, forward);
    Matrix yt = y.transpose();
    return transform_cols(yt, forward).transpose();
  }

  Matrix transform_cols(const Matrix& x, bool forward) const {
    Matrix in = x;
    Matrix out(x.rows(), x.cols());
    const int n = static_cast<int>(n_);
    const int howmany = static_cast<int>(x.cols());
    fftw_r2r_kind k;
    double scale;
    if (kind_ == SpectralKind::DirichletSine) {
      k = FFTW_RODFT00;
      scale = 1.0 / std::sqrt(2.0 * static_cast<double>(n_ + 1));
    } else {
      k = forward ? FFTW_REDFT10 : FFTW_REDFT01;
      scale = forward ? 1.0 : 1.0 / (2.0 * static_cast<double>(n_));
    }
    fftw_plan plan = fftw_plan_many_r2r(1, &n, howmany, in.data(), nullptr, 1, n, out.data(), nullptr, 1, n, &k,
                                        FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    out *= scale;
    return out;
  }

  SpectralKind kind_;
  Index n_;
  double h_;
};

// ---- Burgers --------------------------------------------------------------

/// u(x, y, t) = 1 / (1 + exp((x + y - t) / (2K))).
inline double burgers_exact(double x, double y, double t, double k) {
  return 1.0 / (1.0 + std::exp((x + y - t) / (2.0 * k)));
}

struct BurgersParams {
  Index n = 256;
  double K = 0.01;
  double dt = 5e-4;
  Index maxrank = 50;
  double eps_rel = 1e-8;       ///< construction of the initial data
  double eps_rel_step = 1e-5;  ///< cluster refinement inside a step
  double tol = 1e-5;           ///< Lyapunov solve
  Index n_min = 32;
  Index sylv_n_min = 256;
  bool convection = true;
  /// Initial and boundary data; defaults to the closed-form solution.
  std::function<double(double, double, double)> data;
};

class BurgersProblem {
 public:
  explicit BurgersProblem(BurgersParams p) : p_(std::move(p)) {
    if (p_.n < 4 || !(p_.K > 0) || !(p_.dt >= 0)) raise(ErrorCode::InvalidArgument, "invalid Burgers parameters");
    if (!p_.data) {
      const double k = p_.K;
      p_.data = [k](double x, double y, double t) { return burgers_exact(x, y, t, k); };
    }
    h_ = 2.0 / static_cast<double>(p_.n + 1);
    lap_ = Banded1DOperator::laplacian_dirichlet(p_.n, h_);
    diff_ = Banded1DOperator::forward_difference(p_.n, h_);
    lyap_ = Banded1DOperator::affine(0.5, -p_.dt * p_.K, lap_);
  }

  const BurgersParams& params() const { return p_; }
  double h() const { return h_; }
  double x(Index i) const { return static_cast<double>(i + 1) * h_; }
  const Banded1DOperator& laplacian() const { return lap_; }
  const Banded1DOperator& lyapunov_operator() const { return lyap_; }

  EntryOracle oracle(double t) const {
    auto f = p_.data;
    const double h = h_;
    return EntryOracle::from_function(p_.n, p_.n, [f, h, t](Index i, Index j) {
      return f(static_cast<double>(i + 1) * h, static_cast<double>(j + 1) * h, t);
    });
  }

  Matrix sample(double t) const { return oracle(t).dense(); }

  PdeState initial_state() const {
    const EntryOracle o = oracle(0.0);
    return {halr_adaptive(o, relative_params(o, p_.maxrank, p_.eps_rel, p_.n_min)), 0.0, 0};
  }

  DenseState initial_dense() const { return {sample(0.0), 0.0, 0}; }

  /// Boundary trace u(x_j, 2, t) (equal to u(2, y_j, t) by symmetry of the data).
  Vector far_trace(double t) const {
    Vector v(p_.n);
    for (Index j = 0; j < p_.n; ++j) v(j) = p_.data(x(j), 2.0, t);
    return v;
  }
  Vector near_trace(double t) const {
    Vector w(p_.n);
    for (Index j = 0; j < p_.n; ++j) w(j) = p_.data(x(j), 0.0, t);
    return w;
  }

  /// Dirichlet contributions of the 5-point Laplacian, rank <= 4.
  FactoredLowRank boundary_term(double t) const {
    const Index n = p_.n;
    const Vector v = far_trace(t);
    const Vector w = near_trace(t);
    Matrix u = Matrix::Zero(n, 4);
    Matrix vv = Matrix::Zero(n, 4);
    const double s = 1.0 / (h_ * h_);
    u(0, 0) = s;
    vv.col(0) = w;
    u.col(1) = s * w;
    vv(0, 1) = 1.0;
    u(n - 1, 2) = s;
    vv.col(2) = v;
    u.col(3) = s * v;
    vv(n - 1, 3) = 1.0;
    return {std::move(u), std::move(vv)};
  }

  /// Upwind boundary closure of the forward differences, rank <= 2.
  FactoredLowRank convection_boundary(double t) const {
    const Index n = p_.n;
    const Vector v = far_trace(t);
    Matrix u = Matrix::Zero(n, 2);
    Matrix vv = Matrix::Zero(n, 2);
    u(n - 1, 0) = 1.0 / h_;
    vv.col(0) = v;
    u.col(1) = v / h_;
    vv(n - 1, 1) = 1.0;
    return {std::move(u), std::move(vv)};
  }

  /// Dense u_x + u_y with the same discretization as the structured step.
  Matrix dense_gradient_sum(const Matrix& u, double t) const {
    const OperatorView d(diff_);
    return d.apply(u) + d.apply(u.transpose()).transpose() + convection_boundary(t).to_dense();
  }

  /// HALR u_x + u_y; keeps the cluster of U.
  HalrMatrix gradient_sum(const HalrMatrix& u, double t) const {
    const OperatorView d(diff_);
    HalrMatrix g = add_exact(left_multiply(d, u), right_multiply_transpose(u, d));
    return add_exact(g, HalrMatrix::low_rank(convection_boundary(t)));
  }

 private:
  BurgersParams p_;
  double h_ = 0.0;
  Banded1DOperator lap_;
  Banded1DOperator diff_;
  Banded1DOperator lyap_;
};

/// One IMEX Euler step: R = U - dt U o (D U + U D^T + boundary) + dt K B,
/// assembled on the cluster of U, refined, then solved as a Lyapunov
/// equation with (1/2 I - dt K A_n) on both sides.
inline PdeState burgers_step(const BurgersProblem& prob, const PdeState& s, StepTiming* timing = nullptr) {
  const auto& p = prob.params();
  Stopwatch total;
  const double t_next = s.t + p.dt;
  HalrMatrix r = s.U;
  if (p.convection) {
    const HalrMatrix f = hadamard_exact(s.U, prob.gradient_sum(s.U, s.t));
    r = add_exact(r, scale(f, -p.dt));
  }
  FactoredLowRank b = prob.boundary_term(t_next);
  b.U *= p.dt * p.K;
  r = add_exact(r, HalrMatrix::low_rank(std::move(b)));
  Stopwatch adapt;
  const double nr = norm2_estimate(r);
  r = refine_cluster(r, {p.maxrank, p.eps_rel_step * nr, p.n_min});
  const double t_adapt = adapt.seconds();
  Stopwatch lyap;
  const OperatorView l(prob.lyapunov_operator());
  SolveStats stats;
  HalrMatrix x = dac_sylv(l, l, r, {p.tol, p.sylv_n_min, 100}, &stats);
  const double t_lyap = lyap.seconds();
  if (timing) {
    timing->lyap_s = t_lyap;
    timing->adapt_s = t_adapt;
    timing->total_s = total.seconds();
    timing->stats = stats;
  }
  return {std::move(x), t_next, s.step + 1};
}

/// Dense reference step with the same discretization, solved spectrally.
inline DenseState fft_reference_step(const BurgersProblem& prob, const DenseState& s) {
  const auto& p = prob.params();
  const double t_next = s.t + p.dt;
  Matrix r = s.U;
  if (p.convection) r.array() -= p.dt * s.U.array() * prob.dense_gradient_sum(s.U, s.t).array();
  r += p.dt * p.K * prob.boundary_term(t_next).to_dense();
  const SpectralLyapunov solver(SpectralKind::DirichletSine, p.n, prob.h());
  return {solver.solve(r, 0.5, -p.dt * p.K), t_next, s.step + 1};
}

/// Discrete l2 error h * ||U - u(., ., t)||_F against the closed form.
inline double burgers_error_l2(const BurgersProblem& prob, const Matrix& u, double t) {
  return prob.h() * (u - prob.sample(t)).norm();
}

// ---- Allen-Cahn -----------------------------------------------------------

struct AllenCahnParams {
  Index n = 256;
  double nu = 5e-5;
  double dt = 0.1;
  Index maxrank = 50;
  double eps_rel_step = 1e-5;
  double tol = 1e-5;
  Index n_min = 32;
  Index sylv_n_min = 256;
  std::uint64_t seed = 1;
};

class AllenCahnProblem {
 public:
  explicit AllenCahnProblem(AllenCahnParams p) : p_(p) {
    if (p_.n < 4 || !(p_.nu > 0) || !(p_.dt >= 0)) raise(ErrorCode::InvalidArgument, "invalid Allen-Cahn parameters");
    h_ = 1.0 / static_cast<double>(p_.n);
    lap_ = Banded1DOperator::laplacian_neumann(p_.n, h_);
    lyap_ = Banded1DOperator::affine(0.5, -p_.dt * p_.nu, lap_);
  }

  const AllenCahnParams& params() const { return p_; }
  double h() const { return h_; }
  const Banded1DOperator& lyapunov_operator() const { return lyap_; }

  /// Seeded N(1/2, 1) samples.
  Matrix random_initial() const {
    std::mt19937_64 gen(p_.seed);
    std::normal_distribution<double> nd(0.5, 1.0);
    Matrix u(p_.n, p_.n);
    for (Index j = 0; j < p_.n; ++j)
      for (Index i = 0; i < p_.n; ++i) u(i, j) = nd(gen);
    return u;
  }

  PdeState initial_state(const Matrix& u0) const {
    const EntryOracle o = EntryOracle::from_matrix(u0);
    return {halr_adaptive(o, relative_params(o, p_.maxrank, 1e-8, p_.n_min)), 0.0, 0};
  }

 private:
  AllenCahnParams p_;
  double h_ = 0.0;
  Banded1DOperator lap_;
  Banded1DOperator lyap_;
};

/// g(u) = u (u - 1/2) (1 - u).
inline double allen_cahn_g(double u) { return u * (u - 0.5) * (1.0 - u); }

/// R = U + dt g(U) with g = -U^3 + 3/2 U^2 - 1/2 U from two Hadamard
/// products, then refinement and a Lyapunov solve with (1/2 I - dt nu A_n).
inline PdeState allen_cahn_step(const AllenCahnProblem& prob, const PdeState& s, StepTiming* timing = nullptr) {
  const auto& p = prob.params();
  Stopwatch total;
  const double inner_eps = 0.1 * p.eps_rel_step;
  const HalrMatrix u2 = hadamard(s.U, s.U, inner_eps);
  const HalrMatrix u3 = hadamard(u2, s.U, inner_eps);
  // R = (1 - dt/2) U + 3/2 dt U^2 - dt U^3
  HalrMatrix r = add_exact(scale(s.U, 1.0 - 0.5 * p.dt), scale(u2, 1.5 * p.dt));
  r = add_exact(r, scale(u3, -p.dt));
  Stopwatch adapt;
  const double nr = norm2_estimate(r);
  r = refine_cluster(r, {p.maxrank, p.eps_rel_step * nr, p.n_min});
  const double t_adapt = adapt.seconds();
  Stopwatch lyap;
  const OperatorView l(prob.lyapunov_operator());
  SolveStats stats;
  HalrMatrix x = dac_sylv(l, l, r, {p.tol, p.sylv_n_min, 100}, &stats);
  const double t_lyap = lyap.seconds();
  if (timing) {
    timing->lyap_s = t_lyap;
    timing->adapt_s = t_adapt;
    timing->total_s = total.seconds();
    timing->stats = stats;
  }
  return {std::move(x), s.t + p.dt, s.step + 1};
}

inline DenseState fft_reference_step(const AllenCahnProblem& prob, const DenseState& s) {
  const auto& p = prob.params();
  Matrix r = s.U.unaryExpr([&](double u) { return u + p.dt * allen_cahn_g(u); });
  const SpectralLyapunov solver(SpectralKind::NeumannCosine, p.n, prob.h());
  return {solver.solve(r, 0.5, -p.dt * p.nu), s.t + p.dt, s.step + 1};
}

/// Fraction of entries within `band` of 0 or 1.
inline double phase_fraction(const Matrix& u, double band = 0.05) {
  Index c = 0;
  for (Index j = 0; j < u.cols(); ++j)
    for (Index i = 0; i < u.rows(); ++i)
      if (std::abs(u(i, j)) <= band || std::abs(u(i, j) - 1.0) <= band) ++c;
  return static_cast<double>(c) / static_cast<double>(u.size());
}

// ---- Helmholtz ------------------------------------------------------------

struct HelmholtzParams {
  Index n = 512;
  double tol = 1e-4;
  Index maxrank = 50;
  Index max_iterations = 100;
  double shift = 1.0;          ///< preconditioner P(X) = (A - shift/2 I) X + X (A - shift/2 I)
  double inner_tol = 1e-6;     ///< preconditioner solve accuracy, relative to the preconditioned scale
  double eps_rel_basis = 1e-6; ///< truncation of Krylov basis matrices
  double eps_rel_data = 1e-8;  ///< construction of k and f
  Index n_min = 64;
  Index sylv_n_min = 256;
  bool zero_wavenumber = false;  ///< k == 0 (the preconditioner is then exact when shift == 0)
  bool dirichlet = false;        ///< Dirichlet Laplacian instead of Neumann
};

inline double helmholtz_k(double x, double y) {
  return 2500.0 * std::exp(-50.0 * std::abs(x * x + (y + 1.0) * (y + 1.0) - 0.25));
}
inline double helmholtz_f(double x, double y) { return std::exp(-x * x - y * y) / 100.0; }

struct HelmholtzResult {
  HalrMatrix X;
  Index iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  ///< least-squares residual / ||B||_F per iteration
  double lyap_s = 0.0;
  double adapt_s = 0.0;
  double total_s = 0.0;
};

class HelmholtzProblem {
 public:
  explicit HelmholtzProblem(HelmholtzParams p) : p_(p) {
    if (p_.n < 4) raise(ErrorCode::InvalidArgument, "Helmholtz needs n >= 4");
    h_ = 2.0 / static_cast<double>(p_.n);
    lap_ = p_.dirichlet ? Banded1DOperator::laplacian_dirichlet(p_.n, h_) : Banded1DOperator::laplacian_neumann(p_.n, h_);
    prec_ = Banded1DOperator::affine(-0.5 * p_.shift, 1.0, lap_);
  }

  const HelmholtzParams& params() const { return p_; }
  double h() const { return h_; }
  double x(Index i) const { return -1.0 + (static_cast<double>(i) + 0.5) * h_; }
  const Banded1DOperator& laplacian() const { return lap_; }
  const Banded1DOperator& preconditioner() const { return prec_; }

  EntryOracle k_oracle() const {
    const bool zero = p_.zero_wavenumber;
    return field([zero](double x, double y) { return zero ? 0.0 : helmholtz_k(x, y); });
  }
  EntryOracle f_oracle() const { return field(helmholtz_f); }

  /// Upper bound on |k|.
  double k_max() const { return p_.zero_wavenumber ? 0.0 : 2500.0; }

  HalrMatrix build(const EntryOracle& o) const {
    const double nrm = estimate_norm(o);
    if (nrm == 0.0) return HalrMatrix::zero(o.rows(), o.cols());
    return halr_adaptive(o, {p_.maxrank, p_.eps_rel_data * nrm, p_.n_min});
  }

  /// ||A X + X A + K o X + F||_F / ||F||_F with dense data.
  double dense_residual(const Matrix& x) const {
    const OperatorView a(lap_);
    const Matrix k = k_oracle().dense();
    const Matrix f = f_oracle().dense();
    Matrix r = a.apply(x) + a.apply(x.transpose()).transpose() + f;
    r.array() += k.array() * x.array();
    return r.norm() / f.norm();
  }

 private:
  EntryOracle field(std::function<double(double, double)> g) const {
    const double h = h_;
    return EntryOracle::from_function(p_.n, p_.n, [g, h](Index i, Index j) {
      return g(-1.0 + (static_cast<double>(i) + 0.5) * h, -1.0 + (static_cast<double>(j) + 0.5) * h);
    });
  }

  HelmholtzParams p_;
  double h_ = 0.0;
  Banded1DOperator lap_;
  Banded1DOperator prec_;
};

/// Left-preconditioned GMRES on HALR matrices for A X + X A + K o X = -F
/// with the Lyapunov preconditioner. No restarts; the least-squares problem
/// is updated with Givens rotations.
///
/// Truncation tolerances are absolute and placed where they cannot be
/// amplified: operator images R are truncated at eps * lambda_min(P) so
/// their preconditioned error stays below eps, and the returned solution is
/// truncated at 0.1 * tol * ||F|| / ||L|| so the unpreconditioned residual
/// moves by at most a tenth of the target.
inline HelmholtzResult helmholtz_pgmres(const HelmholtzProblem& prob) {
  const auto& p = prob.params();
  Stopwatch total;
  HelmholtzResult out;
  const HalrMatrix kmat = prob.build(prob.k_oracle());
  const HalrMatrix fmat = prob.build(prob.f_oracle());
  const OperatorView a(prob.laplacian());
  const OperatorView pv(prob.preconditioner());
  const double lam0 = SpectralLyapunov(p.dirichlet ? SpectralKind::DirichletSine : SpectralKind::NeumannCosine, p.n,
                                       prob.h())
                          .eigenvalues()
                          .maxCoeff();
  const double prec_min = std::abs(2.0 * lam0 - p.shift);
  if (prec_min == 0.0) raise(ErrorCode::SingularShift, "preconditioner is singular; use a positive shift");
  const double l_norm = 2.0 * a.norm_bound() + prob.k_max();
  bool inner_ok = true;

  auto precondition = [&](const HalrMatrix& r, double abs_target) {
    Stopwatch w;
    SolveStats st;
    const double nr = frobenius_norm(r);
    HalrMatrix x = nr > 0 ? dac_sylv(pv, pv, r, {abs_target / nr, p.sylv_n_min, 100}, &st) : r;
    inner_ok = inner_ok && st.converged;
    out.lyap_s += w.seconds();
    return x;
  };
  auto truncate = [&](const HalrMatrix& x, double abs_tol) {
    Stopwatch w;
    HalrMatrix y = refine_cluster(x, {p.maxrank, abs_tol, p.n_min});
    out.adapt_s += w.seconds();
    return y;
  };

  const HalrMatrix b = precondition(scale(fmat, -1.0), p.inner_tol * frobenius_norm(fmat));
  const double beta = frobenius_norm(b);
  if (beta == 0.0) {
    out.X = HalrMatrix::zero(p.n, p.n);
    out.converged = true;
    out.total_s = total.seconds();
    return out;
  }
  const double basis_eps = p.eps_rel_basis;
  std::vector<HalrMatrix> basis{scale(b, 1.0 / beta)};
  const Index maxit = p.max_iterations;
  Matrix h = Matrix::Zero(maxit + 1, maxit);
  Vector cs = Vector::Zero(maxit);
  Vector sn = Vector::Zero(maxit);
  Vector g = Vector::Zero(maxit + 1);
  g(0) = beta;
  Index j = 0;
  for (; j < maxit;) {
    const HalrMatrix& uj = basis.back();
    HalrMatrix r = add_exact(left_multiply(a, uj), right_multiply(uj, a));
    r = add_exact(r, hadamard_exact(kmat, uj));
    r = truncate(r, basis_eps * prec_min);
    HalrMatrix w = precondition(r, p.inner_tol * prec_min);
    for (Index s = 0; s <= j; ++s) {
      const double hs = dot(w, basis[static_cast<std::size_t>(s)]);
      h(s, j) = hs;
      w = add_exact(w, scale(basis[static_cast<std::size_t>(s)], -hs));
    }
    w = truncate(w, basis_eps * frobenius_norm(w));
    const double hn = frobenius_norm(w);
    h(j + 1, j) = hn;
    for (Index s = 0; s < j; ++s) {
      const double t0 = cs(s) * h(s, j) + sn(s) * h(s + 1, j);
      h(s + 1, j) = -sn(s) * h(s, j) + cs(s) * h(s + 1, j);
      h(s, j) = t0;
    }
    const double rho = std::hypot(h(j, j), h(j + 1, j));
    cs(j) = rho > 0 ? h(j, j) / rho : 1.0;
    sn(j) = rho > 0 ? h(j + 1, j) / rho : 0.0;
    h(j, j) = rho;
    h(j + 1, j) = 0.0;
    g(j + 1) = -sn(j) * g(j);
    g(j) = cs(j) * g(j);
    ++j;
    const double res = std::abs(g(j)) / beta;
    out.residual_history.push_back(res);
    if (res < p.tol || hn == 0.0) {
      out.converged = true;
      break;
    }
    basis.push_back(scale(w, 1.0 / hn));
  }
  out.iterations = j;
  const Vector y = h.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
  HalrMatrix x = scale(basis[0], y(0));
  for (Index s = 1; s < j; ++s) x = add_exact(x, scale(basis[static_cast<std::size_t>(s)], y(s)));
  out.X = truncate(x, 0.1 * p.tol * frobenius_norm(fmat) / l_norm);
  out.converged = out.converged && inner_ok;
  out.total_s = total.seconds();
  return out;
}

}  // namespace halr
