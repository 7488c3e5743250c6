#include "optresp/transfer_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "optresp/random.hpp"

namespace optresp {

namespace {

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

KernelMatrix build_kernel(const SdeSystem& system, const VectorField& drift, double delta, const Grid& grid,
                          double dt)
{
  if (!(dt > 0.0)) throw std::invalid_argument("build_kernel_matrix: dt must be positive");
  if (grid.dim() != system.dim()) throw std::invalid_argument("build_kernel_matrix: grid/system dimension mismatch");
  const double s = system.sigma * std::sqrt(dt);
  const double h = grid.cell_width();
  if (s < 2.0 * h) {
    const int required = static_cast<int>(std::ceil(2.0 * grid.domain().period() / s));
    std::ostringstream msg;
    msg << "build_kernel_matrix: grid too coarse, sigma*sqrt(dt) = " << s << " spans fewer than 2 cells; need m_per_dim >= "
        << required;
    throw std::invalid_argument(msg.str());
  }
  const int d = grid.dim();
  const int m = grid.m_per_dim();
  const Eigen::Index cells = grid.size();
  const double period = grid.domain().period();

  KernelMatrix kernel;
  kernel.entries.resize(cells, cells);
  kernel.dt = dt;
  kernel.delta = delta;
  kernel.cell_volume = grid.cell_volume();

  Eigen::VectorXd x(d);
  Eigen::VectorXd f(d);
  Eigen::MatrixXd factors(m, d);
  for (Eigen::Index source = 0; source < cells; ++source) {
    x = grid.center(source);
    drift.eval_into(x, f);
    if (!f.allFinite()) throw std::runtime_error("build_kernel_matrix: non-finite drift at a cell center");
    Eigen::VectorXd mean = x + dt * f;
    wrap_in_place(mean, grid.domain());
    for (int i = 0; i < d; ++i) {
      for (int a = 0; a < m; ++a) factors(a, i) = periodized_gaussian(grid.axis(i)(a) - mean(i), s, period);
    }
    auto column = kernel.entries.col(source);
    for (Eigen::Index target = 0; target < cells; ++target) {
      double value = grid.cell_volume();
      Eigen::Index rest = target;
      for (int i = d - 1; i >= 0; --i) {
        value *= factors(rest % m, i);
        rest /= m;
      }
      column(target) = value;
    }
    column /= column.sum();
  }
  return kernel;
}

}  // namespace

Grid::Grid(Torus domain, int m_per_dim) : domain_(std::move(domain)), m_per_dim_(m_per_dim)
{
  if (m_per_dim < 8) throw std::invalid_argument("Grid: m_per_dim must be >= 8");
  size_ = 1;
  for (int i = 0; i < domain_.dim(); ++i) size_ *= m_per_dim;
  const double h = domain_.period() / m_per_dim;
  cell_volume_ = std::pow(h, domain_.dim());
  for (int i = 0; i < domain_.dim(); ++i) {
    Eigen::VectorXd axis(m_per_dim);
    for (int a = 0; a < m_per_dim; ++a) axis(a) = domain_.lower(i) + (a + 0.5) * h;
    axes_.push_back(std::move(axis));
  }
}

Eigen::VectorXd Grid::center(Eigen::Index cell) const
{
  Eigen::VectorXd x(dim());
  for (int i = dim() - 1; i >= 0; --i) {
    x(i) = axes_[static_cast<std::size_t>(i)](cell % m_per_dim_);
    cell /= m_per_dim_;
  }
  return x;
}

Eigen::Index Grid::nearest_cell(const ConstVectorRef& x) const
{
  const Eigen::VectorXd y = wrap_point(Eigen::VectorXd(x), domain_);
  Eigen::Index cell = 0;
  for (int i = 0; i < dim(); ++i) {
    auto a = static_cast<Eigen::Index>(std::floor((y(i) - domain_.lower(i)) / cell_width()));
    a = std::clamp<Eigen::Index>(a, 0, m_per_dim_ - 1);
    cell = cell * m_per_dim_ + a;
  }
  return cell;
}

Eigen::VectorXd Grid::sample(const Observable& f) const
{
  Eigen::VectorXd values(size_);
  for (Eigen::Index k = 0; k < size_; ++k) values(k) = f(center(k));
  return values;
}

double periodized_gaussian(double u, double s, double period)
{
  u -= period * std::round(u / period);
  // Images beyond |u + k L| > sqrt(80) s contribute less than exp(-40) each.
  const int images = static_cast<int>(std::ceil(0.5 + std::sqrt(80.0) * s / period));
  const double inv_two_var = 0.5 / (s * s);
  double sum = 0.0;
  for (int k = images; k >= 1; --k) {
    const double a = u + k * period;
    const double b = u - k * period;
    sum += std::exp(-a * a * inv_two_var) + std::exp(-b * b * inv_two_var);
  }
  sum += std::exp(-u * u * inv_two_var);
  return sum / (s * std::sqrt(2.0 * std::numbers::pi));
}

KernelMatrix build_kernel_matrix(const SdeSystem& system, const Grid& grid, double dt)
{
  return build_kernel(system, system.drift, 0.0, grid, dt);
}

KernelMatrix build_kernel_matrix(const SdeSystem& system, const VectorField& eta, double delta, const Grid& grid,
                                 double dt)
{
  return build_kernel(system, perturbed_field(system.drift, eta, delta), delta, grid, dt);
}

DensityVector apply_kernel(const KernelMatrix& kernel, const DensityVector& density)
{
  return {kernel.entries * density.values, density.cell_volume};
}

DensityVector invariant_density(const KernelMatrix& kernel, double tol, int max_iterations,
                                const Eigen::VectorXd& start)
{
  const Eigen::Index n = kernel.entries.rows();
  const double vol = kernel.cell_volume;
  Eigen::VectorXd f;
  if (start.size() == 0) {
    f = Eigen::VectorXd::Constant(n, 1.0 / (vol * static_cast<double>(n)));
  } else {
    if (start.size() != n || (start.array() < 0.0).any() || start.sum() <= 0.0) {
      throw std::invalid_argument("invariant_density: start must be a non-negative vector of matching size");
    }
    f = start / (start.sum() * vol);
  }
  Eigen::VectorXd next(n);
  double residual = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    next.noalias() = kernel.entries * f;
    next /= next.sum() * vol;
    residual = (next - f).lpNorm<1>() * vol;
    f.swap(next);
    if (residual < tol) return {f, vol};
  }
  std::ostringstream msg;
  msg << "invariant_density: no convergence after " << max_iterations << " iterations, L1 residual " << residual;
  throw std::runtime_error(msg.str());
}

SpectralDiagnostics spectral_diagnostics(const KernelMatrix& kernel, std::uint64_t seed)
{
  const Eigen::MatrixXd& k = kernel.entries;
  const Eigen::Index n = k.rows();
  SpectralDiagnostics out;
  out.min_entry = k.minCoeff() / kernel.cell_volume;
  out.contraction_bound = 1.0 - out.min_entry * kernel.cell_volume * static_cast<double>(n);

  // Second eigenvalue modulus: growth rate of ||K^t g|| on the zero-sum subspace.
  GaussianStream gaussian(seed);
  Eigen::VectorXd g(n);
  gaussian.fill(g);
  g.array() -= g.mean();
  g.normalize();
  Eigen::VectorXd next(n);
  std::vector<double> log_growth;
  double estimate = 0.0;
  constexpr int kChunk = 64;
  constexpr int kMaxIterations = 40000;
  for (int it = 1; it <= kMaxIterations; ++it) {
    next.noalias() = k * g;
    next.array() -= next.mean();
    const double norm = next.norm();
    if (norm == 0.0) {
      log_growth.assign(1, -std::numeric_limits<double>::infinity());
      break;
    }
    log_growth.push_back(std::log(norm));
    g = next / norm;
    if (it % kChunk == 0) {
      // Average over the second half smooths the oscillation of complex pairs.
      const std::size_t half = log_growth.size() / 2;
      double sum = 0.0;
      for (std::size_t i = half; i < log_growth.size(); ++i) sum += log_growth[i];
      const double updated = std::exp(sum / static_cast<double>(log_growth.size() - half));
      if (std::abs(updated - estimate) < 1e-9) {
        estimate = updated;
        break;
      }
      estimate = updated;
    }
  }
  out.lambda2_modulus = log_growth.size() == 1 && std::isinf(log_growth.front()) ? 0.0 : estimate;

  // Extreme points of the zero-average L1 ball are (e_i - e_j) / 2, so the
  // exact contraction is a max over column pairs; sample pairs on big grids.
  auto pair_ratio = [&](Eigen::Index i, Eigen::Index j) { return 0.5 * (k.col(i) - k.col(j)).lpNorm<1>(); };
  double rho = 0.0;
  if (n <= 512) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) rho = std::max(rho, pair_ratio(i, j));
    }
  } else {
    std::mt19937_64 engine(stream_seed(seed, 1));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (int s = 0; s < 20000; ++s) {
      const Eigen::Index i = pick(engine);
      const Eigen::Index j = pick(engine);
      if (i != j) rho = std::max(rho, pair_ratio(i, j));
    }
  }
  for (int s = 0; s < 32; ++s) {
    gaussian.fill(g);
    g.array() -= g.mean();
    rho = std::max(rho, (k * g).lpNorm<1>() / g.lpNorm<1>());
  }
  out.contraction_rho = rho;
  return out;
}

ResolventOracle::ResolventOracle(SdeSystem system, Grid grid, double dt, double density_tol)
    : system_(std::move(system)),
      grid_(std::move(grid)),
      dt_(dt),
      kernel_(build_kernel_matrix(system_, grid_, dt)),
      density_(invariant_density(kernel_, density_tol))
{
  const Eigen::Index n = grid_.size();
  // (I - K + f0 (vol 1)^T) is invertible and agrees with I - K on zero-average vectors.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - kernel_.entries;
  a += density_.values * Eigen::RowVectorXd::Constant(n, grid_.cell_volume());
  resolvent_.compute(a);
}

Eigen::VectorXd ResolventOracle::density_derivative(const VectorField& eta, double fd_delta) const
{
  if (!(fd_delta > 0.0)) throw std::invalid_argument("density_derivative: fd_delta must be positive");
  const KernelMatrix plus = build_kernel_matrix(system_, eta, fd_delta, grid_, dt_);
  const KernelMatrix minus = build_kernel_matrix(system_, eta, -fd_delta, grid_, dt_);
  return (plus.entries - minus.entries) * density_.values / (2.0 * fd_delta);
}

ResolventResponse ResolventOracle::response(const VectorField& eta, const Observable& phi, double fd_delta,
                                            std::int64_t horizon_steps) const
{
  const double vol = grid_.cell_volume();
  Eigen::VectorXd d = density_derivative(eta, fd_delta);
  ResolventResponse out;
  out.d_mass = d.sum() * vol;
  if (std::abs(out.d_mass) > 1e-10) {
    std::ostringstream msg;
    msg << "response_resolvent: derivative of the density has mass " << out.d_mass << ", expected 0";
    throw std::runtime_error(msg.str());
  }
  d.array() -= d.mean();
  const Eigen::VectorXd phi_values = grid_.sample(phi);
  const double d_scale = std::max(d.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min());

  Eigen::VectorXd u;
  if (horizon_steps > 0) {
    u = Eigen::VectorXd::Zero(d.size());
    Eigen::VectorXd term = d;
    for (std::int64_t w = 0; w < horizon_steps; ++w) {
      u += term;
      term = kernel_.entries * term;
    }
    out.residual = 0.0;
  } else {
    u = resolvent_.solve(d);
    u.array() -= u.mean();
    out.residual = (u - kernel_.entries * u - d).lpNorm<Eigen::Infinity>() / d_scale;
    if (d.lpNorm<Eigen::Infinity>() == 0.0) out.residual = (u - kernel_.entries * u).lpNorm<Eigen::Infinity>();
    if (out.residual > 1e-8) {
      std::ostringstream msg;
      msg << "response_resolvent: resolvent solve residual " << out.residual << " above tolerance 1e-8";
      throw std::runtime_error(msg.str());
    }
  }
  out.value = phi_values.dot(u) * vol;
  return out;
}

ResolventResponse response_resolvent(const SdeSystem& system, const VectorField& eta, const Observable& phi,
                                     const Grid& grid, double dt, double fd_delta)
{
  return ResolventOracle(system, grid, dt).response(eta, phi, fd_delta);
}

ExpansionCheck first_order_expansion_check(const SdeSystem& system, const VectorField& eta, const DensityVector& p0,
                                           const Grid& grid, double dt, std::span<const double> deltas)
{
  if (deltas.size() < 3) throw std::invalid_argument("first_order_expansion_check: need at least 3 deltas");
  for (std::size_t i = 1; i < deltas.size(); ++i) {
    if (!(deltas[i] < deltas[i - 1]) || !(deltas[i] > 0.0)) {
      throw std::invalid_argument("first_order_expansion_check: deltas must be positive and decreasing");
    }
  }
  if (p0.values.size() != grid.size()) throw std::invalid_argument("first_order_expansion_check: p0 size mismatch");
  const double vol = grid.cell_volume();
  const Eigen::VectorXd base = build_kernel_matrix(system, grid, dt).entries * p0.values;

  std::vector<Eigen::VectorXd> quotients;
  bool all_zero = true;
  for (double delta : deltas) {
    const Eigen::VectorXd moved = build_kernel_matrix(system, eta, delta, grid, dt).entries * p0.values;
    quotients.push_back((moved - base) / delta);
    all_zero = all_zero && quotients.back().isZero(0.0);
  }

  ExpansionCheck out;
  out.deltas.assign(deltas.begin(), deltas.end());
  if (all_zero) {
    out.exact_zero = true;
    out.slope = std::numeric_limits<double>::quiet_NaN();
    out.errors.assign(deltas.size(), 0.0);
    return out;
  }
  // Linear extrapolation to delta = 0 from the two smallest deltas.
  const std::size_t s = deltas.size() - 1;
  const std::size_t l = deltas.size() - 2;
  const Eigen::VectorXd limit =
      (deltas[l] * quotients[s] - deltas[s] * quotients[l]) / (deltas[l] - deltas[s]);
  for (const auto& q : quotients) out.errors.push_back(std::sqrt((q - limit).squaredNorm() * vol));
  for (std::size_t i = 1; i < out.errors.size(); ++i) {
    if (!(out.errors[i] < out.errors[i - 1])) {
      std::ostringstream msg;
      msg << "first_order_expansion_check: error ladder is not monotone at delta = " << deltas[i] << " ("
          << out.errors[i] << " >= " << out.errors[i - 1] << "); finite-difference noise floor reached";
      throw std::runtime_error(msg.str());
    }
  }
  out.slope = log_log_slope(out.deltas, out.errors);
  return out;
}

SmoothingCheck l2_smoothing_check(const SdeSystem& system, const Grid& grid, double dt,
                                  std::span<const double> times)
{
  const double h = grid.cell_width();
  const double t_min = std::pow(2.0 * h / system.sigma, 2);
  const double t_max = std::pow(grid.domain().radius() / (2.0 * system.sigma), 2);
  std::vector<std::int64_t> steps;
  SmoothingCheck out;
  for (double t : times) {
    if (t < t_min || t > t_max) continue;
    const double ratio = t / dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) continue;
    steps.push_back(static_cast<std::int64_t>(std::round(ratio)));
    out.times.push_back(t);
  }
  if (out.times.size() < 2) {
    std::ostringstream msg;
    msg << "l2_smoothing_check: fewer than 2 requested times are multiples of dt inside the window [" << t_min << ", "
        << t_max << "] for this grid";
    throw std::invalid_argument(msg.str());
  }
  const KernelMatrix kernel = build_kernel_matrix(system, grid, dt);
  DensityVector p{Eigen::VectorXd::Zero(grid.size()), grid.cell_volume()};
  p.values(grid.nearest_cell(grid.domain().centers())) = 1.0 / grid.cell_volume();

  std::int64_t done = 0;
  std::vector<std::size_t> order(steps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return steps[a] < steps[b]; });
  out.norms.assign(steps.size(), 0.0);
  for (std::size_t i : order) {
    for (; done < steps[i]; ++done) p = apply_kernel(kernel, p);
    out.norms[i] = std::sqrt(p.values.squaredNorm() * p.cell_volume);
  }
  out.exponent = log_log_slope(out.times, out.norms);
  return out;
}

}  // namespace optresp
