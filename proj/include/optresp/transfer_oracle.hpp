#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "optresp/torus.hpp"

namespace optresp {

/// Uniform cell grid on T^d, d <= 2 in practice. Cell k has multi-index
/// (a_1, ..., a_d) in row-major order (last axis fastest); its center along
/// axis i is lower_i + (a_i + 1/2) h.
class Grid {
 public:
  Grid(Torus domain, int m_per_dim);

  const Torus& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  int m_per_dim() const { return m_per_dim_; }
  Eigen::Index size() const { return size_; }
  double cell_width() const { return domain_.period() / m_per_dim_; }
  double cell_volume() const { return cell_volume_; }
  /// Centers along one axis.
  const Eigen::VectorXd& axis(int i) const { return axes_[static_cast<std::size_t>(i)]; }
  Eigen::VectorXd center(Eigen::Index cell) const;
  Eigen::Index nearest_cell(const ConstVectorRef& x) const;
  /// values(k) = f(center(k)).
  Eigen::VectorXd sample(const Observable& f) const;

 private:
  Torus domain_;
  int m_per_dim_;
  Eigen::Index size_;
  double cell_volume_;
  std::vector<Eigen::VectorXd> axes_;
};

/// K(target, source) ~ p(x_source, y_target) * cell_volume, columns summing to 1.
struct KernelMatrix {
  Eigen::MatrixXd entries;
  double dt = 0.0;
  double delta = 0.0;
  double cell_volume = 1.0;
};

/// Cell values of a density; sum(values) * cell_volume = 1.
struct DensityVector {
  Eigen::VectorXd values;
  double cell_volume = 1.0;

  double mass() const { return values.sum() * cell_volume; }
};

/// Periodized normal density with standard deviation `s` on a circle of the
/// given period, evaluated at offset u.
double periodized_gaussian(double u, double s, double period);

/// One Euler step as a matrix: column j is the periodized Gaussian with mean
/// wrap(x_j + dt F(x_j)) and std sigma sqrt(dt), sampled at the cell centers,
/// times the cell volume and renormalized to sum 1.
KernelMatrix build_kernel_matrix(const SdeSystem& system, const Grid& grid, double dt);

/// Same with drift F + delta * eta.
KernelMatrix build_kernel_matrix(const SdeSystem& system, const VectorField& eta, double delta, const Grid& grid,
                                 double dt);

DensityVector apply_kernel(const KernelMatrix& kernel, const DensityVector& density);

/// Power iteration from `start` (uniform if empty) until successive iterates
/// differ by less than tol in L1.
DensityVector invariant_density(const KernelMatrix& kernel, double tol, int max_iterations = 1000000,
                                const Eigen::VectorXd& start = {});

struct SpectralDiagnostics {
  double lambda2_modulus = 0.0;
  double min_entry = 0.0;          // min K / cell_volume: lower bound c of the kernel
  double contraction_rho = 0.0;    // max ||K g||_1 / ||g||_1 over zero-average test vectors
  double contraction_bound = 0.0;  // 1 - c * volume
};

SpectralDiagnostics spectral_diagnostics(const KernelMatrix& kernel, std::uint64_t seed = 1);

struct ResolventResponse {
  double value = 0.0;
  double d_mass = 0.0;    // sum(D) * cell_volume before projection
  double residual = 0.0;  // ||(I - K) u - D||_inf / ||D||_inf
};

/// Reusable oracle: base kernel, invariant density and a factorization of the
/// resolvent on zero-average vectors.
class ResolventOracle {
 public:
  ResolventOracle(SdeSystem system, Grid grid, double dt, double density_tol = 1e-14);

  const KernelMatrix& kernel() const { return kernel_; }
  const DensityVector& density() const { return density_; }
  const Grid& grid() const { return grid_; }

  /// D = (K_{+delta} - K_{-delta}) f0 / (2 delta).
  Eigen::VectorXd density_derivative(const VectorField& eta, double fd_delta) const;

  /// <phi, (I - K)^{-1} D>. With horizon_steps > 0 the resolvent is replaced
  /// by the partial Neumann sum sum_{w<horizon} K^w, which is what a
  /// truncated ergodic estimator with that many lags converges to.
  ResolventResponse response(const VectorField& eta, const Observable& phi, double fd_delta,
                             std::int64_t horizon_steps = 0) const;

 private:
  SdeSystem system_;
  Grid grid_;
  double dt_;
  KernelMatrix kernel_;
  DensityVector density_;
  Eigen::PartialPivLU<Eigen::MatrixXd> resolvent_;
};

ResolventResponse response_resolvent(const SdeSystem& system, const VectorField& eta, const Observable& phi,
                                     const Grid& grid, double dt, double fd_delta);

struct ExpansionCheck {
  double slope = 0.0;
  bool exact_zero = false;  // eta = 0: every difference quotient vanishes
  std::vector<double> deltas;
  std::vector<double> errors;  // ||r^delta - r_ref||_2
};

/// One-step difference quotients r^delta = (K_delta p0 - K_0 p0) / delta
/// against their Richardson limit; the log-log slope of the error is 1 for a
/// first-order expansion.
ExpansionCheck first_order_expansion_check(const SdeSystem& system, const VectorField& eta, const DensityVector& p0,
                                           const Grid& grid, double dt, std::span<const double> deltas);

struct SmoothingCheck {
  double exponent = 0.0;
  std::vector<double> times;
  std::vector<double> norms;
};

/// Evolves a unit mass placed in one cell and fits log ||p(t)||_2 against
/// log t over the requested times that fall in the pre-equilibration window
/// [(2h / sigma)^2, (r / (2 sigma))^2]. Intended for driftless systems.
SmoothingCheck l2_smoothing_check(const SdeSystem& system, const Grid& grid, double dt,
                                  std::span<const double> times);

}  // namespace optresp
