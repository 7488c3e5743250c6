#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "optresp/fourier_basis.hpp"

using namespace optresp;

namespace {

constexpr double kPi = std::numbers::pi;

// Sum over every derivative tuple k in {1..d}^l, l = 0..p, of
// prod_i floor((n_{k_i} + 1) / 2)^2, enumerated one tuple at a time.
double brute_force_hp(const std::vector<int>& n, int p)
{
  const int d = static_cast<int>(n.size());
  double total = 0.0;
  for (int l = 0; l <= p; ++l) {
    std::vector<int> k(static_cast<std::size_t>(l), 0);
    while (true) {
      double term = 1.0;
      for (int ki : k) {
        const double f = (n[static_cast<std::size_t>(ki)] + 1) / 2;
        term *= f * f;
      }
      total += term;
      int pos = l - 1;
      while (pos >= 0 && ++k[static_cast<std::size_t>(pos)] == d) k[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
  }
  return total;
}

std::filesystem::path temp_path(const std::string& name)
{
  return std::filesystem::temp_directory_path() / ("optresp_fourier_" + name);
}

// Weighted H^p Gram matrix of the normalized basis, by uniform-grid quadrature
// (exact for trigonometric products of low degree). The l-th derivative
// layer carries weight (r / pi)^{2l}.
Eigen::MatrixXd quadrature_gram(const PerturbationSpace& space, int points, double amplitude_scale)
{
  const Torus& domain = space.domain();
  const int d = domain.dim();
  const int p = space.order();
  const double h = domain.period() / points;
  Eigen::Index grid_size = 1;
  for (int i = 0; i < d; ++i) grid_size *= points;
  const double weight_unit = std::pow(domain.radius() / kPi, 2.0);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(space.size(), space.size());

  for (int l = 0; l <= p; ++l) {
    std::vector<int> k(static_cast<std::size_t>(l), 0);
    while (true) {
      std::vector<int> order(static_cast<std::size_t>(d), 0);
      for (int ki : k) ++order[static_cast<std::size_t>(ki)];
      // rows: grid point x component
      Eigen::MatrixXd values = Eigen::MatrixXd::Zero(grid_size * d, space.size());
      for (int e = 0; e < space.size(); ++e) {
        const BasisElement& el = space.element(e);
        for (Eigen::Index g = 0; g < grid_size; ++g) {
          Eigen::Index rest = g;
          double product = 1.0;
          for (int i = d - 1; i >= 0; --i) {
            const double x = domain.lower(i) + (static_cast<double>(rest % points) + 0.5) * h;
            rest /= points;
            product *= amplitude_scale *
                       scalar_basis_derivative(el.index[i], order[static_cast<std::size_t>(i)], x,
                                               domain.center(i), domain.radius());
          }
          values(g * d + (el.component - 1), e) = product / el.norm_hp;
        }
      }
      gram += std::pow(weight_unit, l) * std::pow(h, d) * values.transpose() * values;
      int pos = l - 1;
      while (pos >= 0 && ++k[static_cast<std::size_t>(pos)] == d) k[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
  }
  return gram;
}

}  // namespace

TEST(EnumerateIndices, OneDimensional)
{
  const auto labels = enumerate_indices(1, 3);
  ASSERT_EQ(labels.size(), 3u);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(labels[static_cast<std::size_t>(m)].component, 1);
    EXPECT_EQ(labels[static_cast<std::size_t>(m)].index.n, std::vector<int>{m});
  }
}

TEST(EnumerateIndices, TwoDimensionalOrder)
{
  const auto labels = enumerate_indices(2, 2);
  const std::vector<std::pair<int, std::vector<int>>> expected = {
      {1, {0, 0}}, {1, {0, 1}}, {1, {1, 0}}, {1, {1, 1}}, {2, {0, 0}}, {2, {0, 1}}, {2, {1, 0}}, {2, {1, 1}}};
  ASSERT_EQ(labels.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(labels[i].component, expected[i].first);
    EXPECT_EQ(labels[i].index.n, expected[i].second);
  }
}

TEST(EnumerateIndices, CountAndUniqueness)
{
  for (int d = 1; d <= 3; ++d) {
    for (int n = 1; n <= 9; n += 4) {
      auto labels = enumerate_indices(d, n);
      EXPECT_EQ(static_cast<double>(labels.size()), d * std::pow(n, d));
      EXPECT_TRUE(std::is_sorted(labels.begin(), labels.end()));
      EXPECT_EQ(std::adjacent_find(labels.begin(), labels.end()), labels.end());
    }
  }
  EXPECT_EQ(enumerate_indices(3, 9).size(), 2187u);
}

TEST(ScalarBasis, Examples)
{
  EXPECT_NEAR(eval_scalar_basis(0, 1.0, kPi, kPi), 1.0 / std::sqrt(2.0 * kPi), 1e-15);
  EXPECT_NEAR(eval_scalar_basis(1, kPi, kPi, kPi), 0.0, 1e-15);
  EXPECT_NEAR(eval_scalar_basis(2, kPi, kPi, kPi), 1.0 / std::sqrt(kPi), 1e-15);
  EXPECT_NEAR(eval_scalar_basis(1, kPi + kPi / 2, kPi, kPi), 1.0 / std::sqrt(kPi), 1e-15);
  EXPECT_THROW(eval_scalar_basis(-1, 0.0, 0.0, 1.0), std::invalid_argument);
}

TEST(ScalarBasis, TableMatchesDirectEvaluation)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  Eigen::VectorXd table(22);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = u(rng);
    eval_scalar_basis_table(x, 0.0, 40.0, table);
    for (int m = 0; m < 22; ++m) ASSERT_NEAR(table(m), eval_scalar_basis(m, x, 0.0, 40.0), 1e-13);
  }
}

TEST(ScalarBasis, DerivativeMatchesFiniteDifference)
{
  const double h = 1e-5;
  for (int m = 0; m < 7; ++m) {
    for (int order = 0; order < 3; ++order) {
      const double x = 0.37 + m;
      const double fd = (scalar_basis_derivative(m, order, x + h, kPi, kPi) -
                         scalar_basis_derivative(m, order, x - h, kPi, kPi)) / (2.0 * h);
      EXPECT_NEAR(scalar_basis_derivative(m, order + 1, x, kPi, kPi), fd, 1e-7) << m << " " << order;
    }
  }
}

TEST(HpNorm, Examples)
{
  EXPECT_DOUBLE_EQ(hp_norm_sq(MultiIndex{{0, 0}}, 5), 1.0);
  EXPECT_DOUBLE_EQ(hp_norm_sq(MultiIndex{{1, 0}}, 5), 6.0);
  EXPECT_DOUBLE_EQ(hp_norm_sq(MultiIndex{{3}}, 2), 21.0);
  EXPECT_DOUBLE_EQ(hp_norm_sq(MultiIndex{{2, 2}}, 1), 3.0);
}

TEST(HpNorm, MatchesBruteForceTupleSum)
{
  for (int d = 1; d <= 3; ++d) {
    for (int cutoff = 1; cutoff <= 5; ++cutoff) {
      for (int p = 0; p <= 5; ++p) {
        for (const BasisLabel& label : enumerate_indices(d, cutoff)) {
          if (label.component != 1) break;
          const double expected = brute_force_hp(label.index.n, p);
          ASSERT_NEAR(hp_norm_sq(label.index, p), expected, 1e-12 * expected);
        }
      }
    }
  }
}

TEST(BasisElement, EvaluationExamples)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(2, kPi, kPi), 5, 3);
  const Eigen::Vector2d x(kPi + kPi / 2, kPi);
  const int e = space.find({1, MultiIndex{{1, 0}}});
  ASSERT_GE(e, 0);
  const Eigen::VectorXd value = space.field(e)(x);
  const double expected = (1.0 / std::sqrt(kPi)) * (1.0 / std::sqrt(2.0 * kPi)) / std::sqrt(6.0);
  EXPECT_NEAR(value(0), expected, 1e-15);
  EXPECT_EQ(value(1), 0.0);
  EXPECT_EQ(space.find({3, MultiIndex{{0, 0}}}), -1);
}

TEST(PerturbationSpace, PhaseOriginShiftsTheFactors)
{
  const Torus square = Torus::cube(2, kPi, kPi);
  const PerturbationSpace centered = PerturbationSpace::full_product(square, 5, 3);
  const PerturbationSpace zero = PerturbationSpace::full_product(square, 5, 3, Eigen::Vector2d::Zero());
  const int e = centered.find({1, MultiIndex{{1, 2}}});
  const Eigen::Vector2d x(kPi / 2, 0.3);
  const double expected = std::sin(x(0)) * std::cos(x(1)) / kPi / std::sqrt(hp_norm_sq(MultiIndex{{1, 2}}, 5));
  EXPECT_NEAR(zero.field(e)(x)(0), expected, 1e-15);
  // shifting by the radius flips every factor with odd frequency
  EXPECT_NEAR(centered.field(e)(x)(0), expected, 1e-15);
  const int odd = centered.find({2, MultiIndex{{1, 0}}});
  EXPECT_NEAR(centered.field(odd)(x)(1), -zero.field(odd)(x)(1), 1e-15);
  EXPECT_THROW(PerturbationSpace::full_product(square, 5, 3, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(PerturbationSpace, GramMatrixIsIdentity)
{
  for (int d = 1; d <= 2; ++d) {
    for (int cutoff : {3, 5}) {
      const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(d, 1.0, 2.5), 3, cutoff);
      const Eigen::MatrixXd gram = quadrature_gram(space, 16, 1.0);
      const double err = (gram - Eigen::MatrixXd::Identity(space.size(), space.size())).cwiseAbs().maxCoeff();
      EXPECT_LT(err, 1e-6) << "d=" << d << " N=" << cutoff;
    }
  }
}

// Rescaling every raw b_m by a common factor changes the raw field and its
// norm by the same constant, so B / ||B|| is unchanged.
TEST(PerturbationSpace, NormalizedElementIgnoresAmplitudeConvention)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(2, kPi, kPi), 2, 3);
  const Eigen::MatrixXd scaled = quadrature_gram(space, 16, std::sqrt(2.0));
  // the 2D product picks up the factor twice
  const Eigen::VectorXd norms = scaled.diagonal().cwiseSqrt();
  EXPECT_NEAR((norms.array() - 2.0).abs().maxCoeff(), 0.0, 1e-9);
  const Eigen::MatrixXd renormalized = norms.asDiagonal().inverse() * scaled * norms.asDiagonal().inverse();
  EXPECT_LT((renormalized - Eigen::MatrixXd::Identity(space.size(), space.size())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PerturbationSpace, CombinationMatchesElementSum)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(2, kPi, kPi), 5, 4);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd coeffs(space.size());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs(i) = u(rng);
  const VectorField combined = space.combination(coeffs);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d x(3.0 * u(rng) + kPi, 3.0 * u(rng) + kPi);
    Eigen::VectorXd direct = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < space.size(); ++i) direct += coeffs(i) * space.field(i)(x);
    EXPECT_LT((combined(x) - direct).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(AssembleOptimalPerturbation, Examples)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(1, kPi, kPi), 5, 2);
  RieszVector riesz{space.labels(), Eigen::Vector2d(3.0, 4.0)};
  OptimalPerturbation opt = assemble_optimal_perturbation(space, riesz);
  EXPECT_NEAR(opt.coefficients(0), 0.6, 1e-15);
  EXPECT_NEAR(opt.coefficients(1), 0.8, 1e-15);
  EXPECT_NEAR(opt.norm, 5.0, 1e-15);

  const PerturbationSpace single = PerturbationSpace::full_product(Torus::cube(1, kPi, kPi), 5, 1);
  opt = assemble_optimal_perturbation(single, RieszVector{single.labels(), Eigen::VectorXd::Constant(1, -2.0)});
  EXPECT_EQ(opt.coefficients(0), -1.0);
  EXPECT_EQ(opt.norm, 2.0);

  EXPECT_THROW(assemble_optimal_perturbation(space, RieszVector{space.labels(), Eigen::VectorXd::Zero(2)}),
               DegenerateResponse);
}

TEST(AssembleOptimalPerturbation, UnitNormAndScaleInvariance)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(2, kPi, kPi), 5, 5);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> log_scale(-20.0, 20.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd c(space.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = u(rng);
    const double t = std::exp(log_scale(rng));
    const OptimalPerturbation a = assemble_optimal_perturbation(space, {space.labels(), c});
    const OptimalPerturbation b = assemble_optimal_perturbation(space, {space.labels(), Eigen::VectorXd(t * c)});
    ASSERT_NEAR(space.norm(a.coefficients), 1.0, 1e-12);
    ASSERT_NEAR(space.norm(b.coefficients), 1.0, 1e-12);
    const Eigen::Vector2d x(u(rng) + kPi, u(rng) + kPi);
    const Eigen::VectorXd fa = a.field(x);
    const Eigen::VectorXd fb = b.field(x);
    ASSERT_LE((fa - fb).cwiseAbs().maxCoeff(), 1e-13 * (1.0 + fa.cwiseAbs().maxCoeff()));
  }
}

TEST(RieszCsv, RoundTripIsBitExact)
{
  const PerturbationSpace space = PerturbationSpace::full_product(Torus::cube(2, kPi, kPi), 5, 3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd c(space.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = u(rng) * std::pow(10.0, 30.0 * u(rng));
  c(0) = std::numeric_limits<double>::denorm_min();
  c(1) = -0.0;
  c(2) = std::numeric_limits<double>::max();
  const RieszVector riesz{space.labels(), c};
  const auto path = temp_path("roundtrip.csv");
  write_riesz_csv(riesz, path);
  const RieszVector back = read_riesz_csv(path);
  ASSERT_EQ(back.labels, riesz.labels);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.coefficients(i)), std::bit_cast<std::uint64_t>(c(i)));
  }
  std::filesystem::remove(path);
}

TEST(RieszCsv, EmptyAndSingleRow)
{
  const auto count_lines = [](const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    return n;
  };
  const auto path = temp_path("small.csv");
  write_riesz_csv(RieszVector{{}, Eigen::VectorXd()}, path);
  EXPECT_EQ(count_lines(path), 1);
  EXPECT_TRUE(read_riesz_csv(path).labels.empty());
  write_riesz_csv(RieszVector{{BasisLabel{2, MultiIndex{{1, 0}}}}, Eigen::VectorXd::Constant(1, 0.25)}, path);
  EXPECT_EQ(count_lines(path), 2);
  const RieszVector back = read_riesz_csv(path);
  ASSERT_EQ(back.labels.size(), 1u);
  EXPECT_EQ(back.labels[0].component, 2);
  EXPECT_EQ(back.coefficients(0), 0.25);
  std::filesystem::remove(path);
}
