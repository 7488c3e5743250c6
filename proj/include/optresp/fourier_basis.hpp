#pragma once

#include <cmath>
#include <compare>
#include <filesystem>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "optresp/torus.hpp"

namespace optresp {

/// Frequency index n = (n_1, ..., n_k) of a product of scalar basis functions.
struct MultiIndex {
  std::vector<int> n;

  int size() const { return static_cast<int>(n.size()); }
  int operator[](int i) const { return n[static_cast<std::size_t>(i)]; }
  auto operator<=>(const MultiIndex&) const = default;
};

/// (j, n): direction j (1-based) paired with a frequency multi-index.
struct BasisLabel {
  int component = 1;
  MultiIndex index;

  auto operator<=>(const BasisLabel&) const = default;
};

/// All (j, n) with j in 1..d and n in [0, N)^d, ordered by j first and then
/// row-major in n (last entry fastest). Exactly d * N^d labels.
std::vector<BasisLabel> enumerate_indices(int dim, int cutoff);

/// floor((m + 1) / 2): the integer frequency carried by b_m.
constexpr int basis_frequency(int m) { return (m + 1) / 2; }

/// Scalar trigonometric basis b_m on [c - r, c + r), unit L2 norm over a
/// period:
///   b_0 = 1 / sqrt(2 r),
///   b_m = sin(k pi (x - c) / r) / sqrt(r) for odd m,
///   b_m = cos(k pi (x - c) / r) / sqrt(r) for even m > 0,  k = floor((m+1)/2).
template <typename Scalar>
Scalar eval_scalar_basis(int m, Scalar x, Scalar c, Scalar r_box)
{
  if (m < 0) throw std::invalid_argument("eval_scalar_basis: m must be >= 0");
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (m == 0) return Scalar(1) / sqrt(Scalar(2) * r_box);
  const Scalar angle = Scalar(basis_frequency(m)) * Scalar(std::numbers::pi) / r_box * (x - c);
  const Scalar amplitude = Scalar(1) / sqrt(r_box);
  return (m % 2 == 1) ? amplitude * sin(angle) : amplitude * cos(angle);
}

/// Fills out(m) = b_m(x) for m = 0 .. out.size() - 1 using the angle-addition
/// recurrence; two transcendental calls per coordinate.
template <typename Derived>
void eval_scalar_basis_table(typename Derived::Scalar x, typename Derived::Scalar c,
                             typename Derived::Scalar r_box, Eigen::MatrixBase<Derived>& out)
{
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Eigen::Index count = out.size();
  if (count == 0) return;
  out(0) = Scalar(1) / sqrt(Scalar(2) * r_box);
  const Scalar amplitude = Scalar(1) / sqrt(r_box);
  const Scalar theta = Scalar(std::numbers::pi) / r_box * (x - c);
  const Scalar s1 = sin(theta);
  const Scalar c1 = cos(theta);
  Scalar s = s1;
  Scalar co = c1;
  for (Eigen::Index m = 1; m < count; m += 2) {
    out(m) = amplitude * s;
    if (m + 1 < count) out(m + 1) = amplitude * co;
    const Scalar next_s = s * c1 + co * s1;
    co = co * c1 - s * s1;
    s = next_s;
  }
}

/// k-th derivative of b_m at x.
double scalar_basis_derivative(int m, int order, double x, double c, double r_box);

/// Squared weighted H^p norm of a product basis function,
///   sum_{l=0}^{p} sum_{k in {1..d}^l} prod_i floor((n_{k_i} + 1) / 2)^2,
/// which collapses to sum_l S^l with S = sum_i floor((n_i + 1) / 2)^2.
double hp_norm_sq(const MultiIndex& index, int p);

/// One normalized element  B~ = direction * prod_k b_{n_k}(x_{coordinates[k]}) / norm_hp,
/// with the scalar factors phased at phase_origin (c in b_m).
///
/// For the full product space direction = e_j and coordinates = {0..d-1}; for
/// a reduced space the direction may span several components and the product
/// runs over a subset of coordinates.
struct BasisElement {
  int component = 1;
  MultiIndex index;
  double norm_hp = 1.0;
  int p = 0;
  Eigen::VectorXd direction;
  std::vector<int> coordinates;
  Torus domain;
  Eigen::VectorXd phase_origin;

  BasisLabel label() const { return {component, index}; }
};

Eigen::VectorXd eval_basis_field(const BasisElement& element, const ConstVectorRef& x);

/// Orthonormal family of vector fields, indexed in enumeration order.
/// Coordinates in this basis carry the Euclidean inner product.
class PerturbationSpace {
 public:
  enum class Kind { full_product, reduced };

  /// All B~^j_n, j = 1..d, n in [0, N)^d. An empty phase_origin means the
  /// domain centers.
  static PerturbationSpace full_product(const Torus& domain, int p, int cutoff,
                                        const Eigen::VectorXd& phase_origin = {});

  /// Fields g(x_{factor}) * sum_{c in active} e_c, with g in span{b_0..b_{N-1}}
  /// and ||eta|| = ||g||_{H^p(T^1)}.
  static PerturbationSpace reduced(const Torus& domain, std::vector<int> active_components, int factor_coordinate,
                                   int p, int cutoff, const Eigen::VectorXd& phase_origin = {});

  Kind kind() const { return kind_; }
  const Torus& domain() const { return domain_; }
  const Eigen::VectorXd& phase_origin() const { return phase_origin_; }
  int ambient_dim() const { return domain_.dim(); }
  int order() const { return p_; }
  int cutoff() const { return cutoff_; }
  int size() const { return static_cast<int>(elements_.size()); }
  /// Columns are the distinct direction vectors; element i uses column component - 1.
  const Eigen::MatrixXd& directions() const { return directions_; }
  const std::vector<int>& factor_coordinates() const { return factor_coordinates_; }
  /// Number of elements sharing one direction (N^k).
  int block_size() const;

  const BasisElement& element(int i) const { return elements_.at(static_cast<std::size_t>(i)); }
  const std::vector<BasisElement>& elements() const { return elements_; }
  std::vector<BasisLabel> labels() const;
  int find(const BasisLabel& label) const;

  /// The normalized field B~_i.
  VectorField field(int i) const;

  /// sum_i coefficients(i) * B~_i, evaluated through shared basis tables.
  VectorField combination(const Eigen::VectorXd& coefficients, std::string label = "combination") const;

  /// table(k, m) = b_m(x_{factor_coordinates[k]}).
  void fill_factor_table(const ConstVectorRef& x, Eigen::MatrixXd& table) const;

  /// Row-major tensor product of the table rows: N^k raw (unnormalized) scalar products.
  void fill_tensor_products(const Eigen::MatrixXd& table, Eigen::VectorXd& products) const;

  double inner_product(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(b); }
  double norm(const Eigen::VectorXd& a) const { return std::sqrt(inner_product(a, a)); }

 private:
  PerturbationSpace(Kind kind, Torus domain, int p, int cutoff)
      : kind_(kind), domain_(std::move(domain)), p_(p), cutoff_(cutoff)
  {
  }

  Kind kind_;
  Torus domain_;
  Eigen::VectorXd phase_origin_;
  int p_;
  int cutoff_;
  Eigen::MatrixXd directions_;
  std::vector<int> factor_coordinates_;
  std::vector<BasisElement> elements_;
};

/// Coefficients C^j_n of the Riesz representative v, in the labels' order.
struct RieszVector {
  std::vector<BasisLabel> labels;
  Eigen::VectorXd coefficients;
};

/// Raised when every coefficient is zero: the response functional vanishes on
/// the space and no optimizer exists.
class DegenerateResponse : public std::domain_error {
 public:
  DegenerateResponse() : std::domain_error("response functional vanishes on the space") {}
};

struct OptimalPerturbation {
  VectorField field;
  Eigen::VectorXd coefficients;  // C / ||v||, unit Euclidean norm
  double norm = 0.0;             // ||v|| = sqrt(sum C^2)
};

/// eta_opt = v / ||v|| for v = sum C_i B~_i.
OptimalPerturbation assemble_optimal_perturbation(const PerturbationSpace& space, const RieszVector& riesz);

/// CSV with header j,n_1..n_k,coefficient; one row per label.
void write_riesz_csv(const RieszVector& riesz, const std::filesystem::path& path);
RieszVector read_riesz_csv(const std::filesystem::path& path);

}  // namespace optresp
