#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "optresp/random.hpp"

namespace optresp {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Flat torus: coordinate i lives on [c_i - r, c_i + r) with period 2r.
template <typename Scalar>
class TorusDomain {
 public:
  TorusDomain(VectorX<Scalar> centers, Scalar radius)
      : centers_(std::move(centers)), radius_(radius)
  {
    if (centers_.size() < 1) throw std::invalid_argument("TorusDomain: dimension must be >= 1");
    if (!(radius_ > Scalar(0))) throw std::invalid_argument("TorusDomain: radius must be positive");
  }

  /// Same center on every axis.
  static TorusDomain cube(int dim, Scalar center, Scalar radius)
  {
    if (dim < 1) throw std::invalid_argument("TorusDomain: dimension must be >= 1");
    return TorusDomain(VectorX<Scalar>::Constant(dim, center), radius);
  }

  int dim() const { return static_cast<int>(centers_.size()); }
  const VectorX<Scalar>& centers() const { return centers_; }
  Scalar center(int i) const { return centers_(i); }
  Scalar radius() const { return radius_; }
  Scalar period() const { return Scalar(2) * radius_; }
  Scalar lower(int i) const { return centers_(i) - radius_; }
  Scalar volume() const { return std::pow(period(), Scalar(dim())); }

  bool contains(const Eigen::Ref<const VectorX<Scalar>>& x) const
  {
    for (int i = 0; i < dim(); ++i) {
      if (!(x(i) >= lower(i) && x(i) < lower(i) + period())) return false;
    }
    return true;
  }

 private:
  VectorX<Scalar> centers_;
  Scalar radius_;
};

using Torus = TorusDomain<double>;

/// Reduces a single coordinate into [lower, lower + period). Values already
/// inside are returned untouched so wrapping is idempotent bit-for-bit.
template <typename Scalar>
Scalar wrap_coordinate(Scalar x, Scalar lower, Scalar period)
{
  if (x >= lower && x < lower + period) return x;
  Scalar y = x - lower;
  y -= period * std::floor(y / period);
  if (y >= period || y < Scalar(0)) y = Scalar(0);
  return lower + y;
}

template <typename Derived>
void wrap_in_place(Eigen::MatrixBase<Derived>& x, const TorusDomain<typename Derived::Scalar>& domain)
{
  for (int i = 0; i < domain.dim(); ++i) {
    x(i) = wrap_coordinate(x(i), domain.lower(i), domain.period());
  }
}

template <typename Derived>
VectorX<typename Derived::Scalar> wrap_point(const Eigen::MatrixBase<Derived>& x,
                                             const TorusDomain<typename Derived::Scalar>& domain)
{
  if (x.size() != domain.dim()) throw std::invalid_argument("wrap_point: dimension mismatch");
  VectorX<typename Derived::Scalar> y = x;
  wrap_in_place(y, domain);
  return y;
}

using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

// Dynamic vector that stays on the stack up to 32 entries; scratch space for
// evaluators that must remain reentrant.
using ScratchVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 32, 1>;
using VectorRef = Eigen::Ref<Eigen::VectorXd>;

/// Scalar observable phi: T^d -> R.
using Observable = std::function<double(const ConstVectorRef&)>;

/// A vector field on T^d. The evaluator writes into a caller-provided buffer
/// so the inner simulation loops never allocate.
class VectorField {
 public:
  using Evaluator = std::function<void(const ConstVectorRef& x, VectorRef out)>;

  VectorField() = default;
  VectorField(int dim, Evaluator evaluator, std::string label = {})
      : dim_(dim), evaluator_(std::move(evaluator)), label_(std::move(label))
  {
  }

  int dim() const { return dim_; }
  const std::string& label() const { return label_; }
  explicit operator bool() const { return static_cast<bool>(evaluator_); }

  void eval_into(const ConstVectorRef& x, VectorRef out) const { evaluator_(x, out); }

  Eigen::VectorXd operator()(const ConstVectorRef& x) const
  {
    Eigen::VectorXd out(dim_);
    evaluator_(x, out);
    return out;
  }

 private:
  int dim_ = 0;
  Evaluator evaluator_;
  std::string label_;
};

VectorField zero_field(int dim);
VectorField constant_field(Eigen::VectorXd value, std::string label = "constant");

/// base + gamma * eta
VectorField perturbed_field(const VectorField& base, const VectorField& eta, double gamma);

/// sum_k weights[k] * fields[k]
VectorField linear_combination(std::vector<VectorField> fields, std::vector<double> weights,
                               std::string label = "combination");

/// dX = F(X) dt + sigma dW on a torus.
struct SdeSystem {
  SdeSystem(Torus domain_, VectorField drift_, double sigma_);

  Torus domain;
  VectorField drift;
  double sigma;

  int dim() const { return domain.dim(); }
  /// Same noise and domain, drift replaced by F + gamma * eta.
  SdeSystem perturbed(const VectorField& eta, double gamma) const;
};

/// Test-only switch: `deterministic` zeroes every noise draw.
enum class NoiseMode { stochastic, deterministic };

/// Euler-Maruyama chain X_{n+1} = wrap(X_n + h F(X_n) + sigma sqrt(h) xi_n).
class EulerMaruyamaChain {
 public:
  EulerMaruyamaChain(const SdeSystem& system, Eigen::VectorXd x0, double dt, std::uint64_t seed,
                     NoiseMode mode = NoiseMode::stochastic);

  const Eigen::VectorXd& state() const { return state_; }
  /// xi used by the most recent step().
  const Eigen::VectorXd& noise() const { return noise_; }
  double dt() const { return dt_; }

  void step();

 private:
  const SdeSystem* system_;
  double dt_;
  double noise_scale_;
  NoiseMode mode_;
  GaussianStream gaussian_;
  Eigen::VectorXd state_;
  Eigen::VectorXd noise_;
  Eigen::VectorXd drift_;
};

/// states.col(n) is X_n; increments.col(n) is the xi_n that moved X_n to X_{n+1}.
struct Trajectory {
  Eigen::MatrixXd states;
  Eigen::MatrixXd increments;
  double dt = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index length() const { return states.cols(); }
};

Trajectory simulate_em(const SdeSystem& system, const Eigen::VectorXd& x0, double dt, std::int64_t steps,
                       std::uint64_t seed, NoiseMode mode = NoiseMode::stochastic);

/// Mean of phi over states[burn_in:].
double ergodic_average(const Trajectory& trajectory, const Observable& phi, std::int64_t burn_in);

}  // namespace optresp
