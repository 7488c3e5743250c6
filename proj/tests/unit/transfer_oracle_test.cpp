#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "optresp/transfer_oracle.hpp"

using namespace optresp;

namespace {

constexpr double kPi = std::numbers::pi;

Torus circle() { return Torus::cube(1, kPi, kPi); }

VectorField sine_field()
{
  return VectorField(1, [](const ConstVectorRef& x, VectorRef out) { out(0) = std::sin(x(0)); });
}

SdeSystem gradient_circle(double gamma)
{
  return SdeSystem(circle(), VectorField(1, [gamma](const ConstVectorRef& x, VectorRef out) {
                     out(0) = gamma * std::sin(x(0));
                   }),
                   1.0);
}

// Full and truncated responses of cos to gamma sin for the driftless Euler
// chain: lag w contributes -(dt/2) exp(-w dt/2).
double circle_response(double dt, std::int64_t window_steps)
{
  const double q = std::exp(-dt / 2.0);
  const double tail = window_steps > 0 ? 1.0 - std::pow(q, static_cast<double>(window_steps)) : 1.0;
  return -(dt / 2.0) * q * tail / (1.0 - q);
}

// L2 norm of the heat kernel with variance v on a circle of length L.
double periodized_heat_l2(double v, double length)
{
  double sum = 0.0;
  for (int k = -200; k <= 200; ++k) sum += std::exp(-std::pow(2.0 * kPi * k / length, 2) * v);
  return std::sqrt(sum / length);
}

}  // namespace

TEST(Grid, CentersAndLookup)
{
  const Grid grid(Torus::cube(2, 0.0, 1.0), 8);
  EXPECT_EQ(grid.size(), 64);
  EXPECT_DOUBLE_EQ(grid.cell_width(), 0.25);
  EXPECT_DOUBLE_EQ(grid.cell_volume(), 0.0625);
  const Eigen::VectorXd c = grid.center(9);  // (1, 1)
  EXPECT_DOUBLE_EQ(c(0), -0.625);
  EXPECT_DOUBLE_EQ(c(1), -0.625);
  EXPECT_EQ(grid.nearest_cell(c), 9);
  EXPECT_EQ(grid.nearest_cell(Eigen::Vector2d(0.375, 1.375)), 41);
  EXPECT_THROW(Grid(circle(), 4), std::invalid_argument);
}

TEST(PeriodizedGaussian, IntegratesToOne)
{
  for (double s : {0.05, 0.5, 3.0, 20.0}) {
    const int n = 4000;
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += periodized_gaussian(-kPi + (i + 0.5) * 2.0 * kPi / n, s, 2.0 * kPi);
    EXPECT_NEAR(total * 2.0 * kPi / n, 1.0, 1e-10) << s;
  }
}

TEST(KernelMatrix, DriftlessKernelIsTranslationInvariant)
{
  const Grid grid(circle(), 64);
  const KernelMatrix k = build_kernel_matrix(SdeSystem(circle(), zero_field(1), 1.0), grid, 0.1);
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) ASSERT_NEAR(k.entries(i, j), k.entries((i + 1) % 64, (j + 1) % 64), 1e-15);
  }
}

TEST(KernelMatrix, ColumnsSumToOne)
{
  const Grid grid(Torus::cube(2, kPi, kPi), 32);
  const SdeSystem system(Torus::cube(2, kPi, kPi), VectorField(2, [](const ConstVectorRef& x, VectorRef out) {
                           out(0) = 1.0 + std::sin(x(1) - x(0));
                           out(1) = 3.0 * std::cos(x(0));
                         }),
                         1.0);
  const KernelMatrix k = build_kernel_matrix(system, grid, 0.2);
  EXPECT_LT((k.entries.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_GT(k.entries.minCoeff(), 0.0);
}

TEST(KernelMatrix, WideNoiseGivesUniformColumns)
{
  const Grid grid(circle(), 32);
  const KernelMatrix k = build_kernel_matrix(SdeSystem(circle(), sine_field(), 10.0 * kPi), grid, 1.0);
  EXPECT_LT((k.entries.array() / grid.cell_volume() - 1.0 / (2.0 * kPi)).abs().maxCoeff(), 1e-6);
}

TEST(KernelMatrix, CoarseGridNamesRequiredResolution)
{
  const Grid grid(circle(), 16);
  try {
    build_kernel_matrix(SdeSystem(circle(), zero_field(1), 1.0), grid, 0.01);
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("m_per_dim >= 126"), std::string::npos) << e.what();
  }
}

TEST(InvariantDensity, DriftlessIsUniform)
{
  const Grid grid(Torus::cube(2, kPi, kPi), 20);
  const KernelMatrix k = build_kernel_matrix(SdeSystem(Torus::cube(2, kPi, kPi), zero_field(2), 1.0), grid, 0.5);
  Eigen::VectorXd start = Eigen::VectorXd::LinSpaced(grid.size(), 1.0, 2.0);
  const DensityVector p = invariant_density(k, 1e-13, 1000000, start);
  EXPECT_LT((p.values.array() - 1.0 / (4.0 * kPi * kPi)).abs().maxCoeff(), 1e-10);
  EXPECT_NEAR(p.mass(), 1.0, 1e-12);
}

TEST(InvariantDensity, GradientDriftGivesGibbsDensity)
{
  const double gamma = 0.5;
  const Grid grid(circle(), 256);
  const KernelMatrix k = build_kernel_matrix(gradient_circle(gamma), grid, 0.01);
  const DensityVector p = invariant_density(k, 1e-13);
  Eigen::VectorXd gibbs(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) gibbs(i) = std::exp(-2.0 * gamma * std::cos(grid.center(i)(0)));
  gibbs /= gibbs.sum() * grid.cell_volume();
  EXPECT_LT(((p.values - gibbs).array() / gibbs.array()).abs().maxCoeff(), 1e-2);
}

TEST(InvariantDensity, StartIndependent)
{
  const Grid grid(circle(), 64);
  const KernelMatrix k = build_kernel_matrix(gradient_circle(1.3), grid, 0.05);
  const DensityVector reference = invariant_density(k, 1e-14);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd start(grid.size());
    for (Eigen::Index i = 0; i < start.size(); ++i) start(i) = u(rng);
    const DensityVector p = invariant_density(k, 1e-14, 1000000, start);
    EXPECT_LT((p.values - reference.values).lpNorm<1>() * grid.cell_volume(), 1e-11);
  }
}

TEST(InvariantDensity, NonConvergenceReportsResidual)
{
  const Grid grid(circle(), 64);
  const KernelMatrix k = build_kernel_matrix(gradient_circle(1.0), grid, 0.05);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(grid.size());
  start(0) = 1.0;
  try {
    invariant_density(k, 1e-14, 2, start);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos) << e.what();
  }
}

TEST(SpectralDiagnostics, DriftlessCircle)
{
  const Grid grid(circle(), 64);
  const double dt = 0.5;
  const KernelMatrix k = build_kernel_matrix(SdeSystem(circle(), zero_field(1), 1.0), grid, dt);
  const SpectralDiagnostics s = spectral_diagnostics(k);
  EXPECT_NEAR(s.lambda2_modulus, std::exp(-dt / 2.0), 1e-3);
  EXPECT_GT(s.min_entry, 0.0);
  EXPECT_LT(s.contraction_rho, 1.0);
  EXPECT_LE(s.contraction_rho, s.contraction_bound + 1e-12);
}

TEST(SpectralDiagnostics, ContractionOnRandomZeroAverageVectors)
{
  const Grid grid(circle(), 48);
  const KernelMatrix k = build_kernel_matrix(gradient_circle(2.0), grid, 0.3);
  const SpectralDiagnostics s = spectral_diagnostics(k, 9);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd g(grid.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = n(rng);
    g.array() -= g.mean();
    EXPECT_LE((k.entries * g).lpNorm<1>(), s.contraction_rho * g.lpNorm<1>() * (1.0 + 1e-12));
  }
}

TEST(ResolventOracle, ConstantFieldOnDriftlessCircleHasNoResponse)
{
  const ResolventResponse r =
      response_resolvent(SdeSystem(circle(), zero_field(1), 1.0), constant_field(Eigen::VectorXd::Ones(1)),
                         [](const ConstVectorRef& x) { return std::cos(x(0)); }, Grid(circle(), 128), 0.05, 1e-3);
  EXPECT_LT(std::abs(r.value), 1e-6);
}

TEST(ResolventOracle, DriftlessCircleMatchesClosedForm)
{
  const double dt = 0.05;
  const ResolventOracle oracle(SdeSystem(circle(), zero_field(1), 1.0), Grid(circle(), 256), dt);
  const Observable phi = [](const ConstVectorRef& x) { return std::cos(x(0)); };
  const ResolventResponse r = oracle.response(sine_field(), phi, 1e-3);
  EXPECT_NEAR(r.value, -1.0, 0.02);
  EXPECT_NEAR(r.value, circle_response(dt, 0), 1e-5);
  EXPECT_LT(std::abs(r.d_mass), 1e-10);
  EXPECT_LT(r.residual, 1e-8);

  const ResolventResponse truncated = oracle.response(sine_field(), phi, 1e-3, 80);
  EXPECT_NEAR(truncated.value, circle_response(dt, 80), 1e-5);
}

TEST(ResolventOracle, DensityDerivativeHasZeroMass)
{
  const Torus square = Torus::cube(2, kPi, kPi);
  const SdeSystem system(square, VectorField(2, [](const ConstVectorRef& x, VectorRef out) {
                           out(0) = 1.0 + 0.5 * std::sin(x(1) - x(0));
                           out(1) = 1.5 + 0.5 * std::sin(x(0) - x(1));
                         }),
                         1.0);
  const ResolventOracle oracle(system, Grid(square, 40), 0.1);
  const VectorField eta(2, [](const ConstVectorRef& x, VectorRef out) {
    out(0) = std::cos(x(0) + 2.0 * x(1));
    out(1) = std::sin(3.0 * x(0));
  });
  EXPECT_LT(std::abs(oracle.density_derivative(eta, 1e-3).sum() * oracle.grid().cell_volume()), 1e-10);
}

TEST(ResolventOracle, StableUnderHalvingTheDifferenceStep)
{
  const ResolventOracle oracle(gradient_circle(0.8), Grid(circle(), 128), 0.05);
  const Observable phi = [](const ConstVectorRef& x) { return std::sin(2.0 * x(0)) + std::cos(x(0)); };
  const double a = oracle.response(sine_field(), phi, 1e-3).value;
  const double b = oracle.response(sine_field(), phi, 5e-4).value;
  EXPECT_LT(std::abs(a - b), 0.01 * std::abs(a));
}

TEST(FirstOrderExpansion, ZeroFieldIsExact)
{
  const Grid grid(circle(), 64);
  const SdeSystem system = gradient_circle(0.5);
  const DensityVector p0 = invariant_density(build_kernel_matrix(system, grid, 0.1), 1e-13);
  const std::vector<double> deltas{0.1, 0.05, 0.025};
  const ExpansionCheck check = first_order_expansion_check(system, zero_field(1), p0, grid, 0.1, deltas);
  EXPECT_TRUE(check.exact_zero);
}

TEST(FirstOrderExpansion, SlopeIsOneAndGridIndependent)
{
  const SdeSystem system = gradient_circle(0.5);
  const VectorField eta(1, [](const ConstVectorRef& x, VectorRef out) { out(0) = std::cos(x(0)) + 0.3; });
  const std::vector<double> deltas{0.2, 0.1, 0.05, 0.025, 0.0125};
  std::vector<double> slopes;
  for (int m : {64, 128}) {
    const Grid grid(circle(), m);
    const DensityVector p0 = invariant_density(build_kernel_matrix(system, grid, 0.1), 1e-13);
    const ExpansionCheck check = first_order_expansion_check(system, eta, p0, grid, 0.1, deltas);
    EXPECT_FALSE(check.exact_zero);
    EXPECT_NEAR(check.slope, 1.0, 0.15) << "m=" << m;
    slopes.push_back(check.slope);
  }
  EXPECT_NEAR(slopes[0], slopes[1], 0.05);
}

TEST(L2Smoothing, ExponentsAndHeatKernelNorms)
{
  const std::vector<double> times{0.05, 0.1, 0.2, 0.4};
  for (int d = 1; d <= 2; ++d) {
    const Torus domain = Torus::cube(d, kPi, kPi);
    const Grid grid(domain, d == 1 ? 256 : 64);
    const double dt = d == 1 ? 0.01 : 0.05;
    const SmoothingCheck check = l2_smoothing_check(SdeSystem(domain, zero_field(d), 1.0), grid, dt, times);
    EXPECT_NEAR(check.exponent, -d / 4.0, 0.05) << "d=" << d;
    for (std::size_t i = 0; i < check.times.size(); ++i) {
      const double expected = std::pow(periodized_heat_l2(check.times[i], 2.0 * kPi), d);
      EXPECT_NEAR(check.norms[i] / expected, 1.0, 0.03) << "d=" << d << " t=" << check.times[i];
    }
  }
}

TEST(L2Smoothing, EmptyWindowThrows)
{
  const Grid grid(circle(), 64);
  const std::vector<double> times{50.0, 100.0};
  EXPECT_THROW(l2_smoothing_check(SdeSystem(circle(), zero_field(1), 1.0), grid, 0.01, times),
               std::invalid_argument);
}
