#include "optresp/systems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace optresp {

Torus kuramoto_domain(int dim) { return Torus::cube(dim, std::numbers::pi, std::numbers::pi); }

VectorField kuramoto_drift(const KuramotoSpec& spec)
{
  const int d = spec.dim();
  if (d < 1) throw std::invalid_argument("kuramoto_drift: need at least one oscillator");
  // sum_j sin(x^j - x^i) = cos(x^i) S - sin(x^i) C with S = sum sin x^j, C = sum cos x^j.
  auto evaluator = [omegas = spec.omegas, d](const ConstVectorRef& x, VectorRef out) {
    const auto s = x.array().sin();
    const auto c = x.array().cos();
    const double sum_sin = s.sum();
    const double sum_cos = c.sum();
    out = omegas.array() + (c * sum_sin - s * sum_cos) / d;
  };
  return VectorField(d, std::move(evaluator), "kuramoto");
}

Observable kuramoto_observable(int dim)
{
  return [dim](const ConstVectorRef& x) { return x.array().sin().sum() / dim; };
}

Torus lorenz_domain(const LorenzCutoffSpec& spec) { return Torus(spec.center, spec.r_box); }

double cutoff_profile(double rho, const LorenzCutoffSpec& spec)
{
  if (rho <= spec.r_box - spec.r_bezel) return 1.0;
  if (rho <= spec.r_box) return (spec.r_box - rho) / spec.r_bezel;
  return 0.0;
}

VectorField lorenz_cutoff_drift(const LorenzCutoffSpec& spec)
{
  const Torus domain = lorenz_domain(spec);
  auto evaluator = [spec, domain](const ConstVectorRef& x_in, VectorRef out) {
    Eigen::Vector3d x = x_in;
    wrap_in_place(x, domain);
    // Points on the lower face sit at distance r from the center; the seam is
    // where the cutoff vanishes.
    const double rho = (x - spec.center).lpNorm<Eigen::Infinity>();
    const double b = cutoff_profile(rho, spec);
    out(0) = b * 10.0 * (x(1) - x(0));
    out(1) = b * (x(0) * (28.0 - x(2)) - x(1));
    out(2) = b * (x(0) * x(1) - 8.0 * x(2) / 3.0);
  };
  return VectorField(3, std::move(evaluator), "lorenz-cutoff");
}

Observable lorenz_observable(const LorenzCutoffSpec& spec)
{
  const double k = 2.0 * std::numbers::pi / (2.0 * spec.r_box);
  return [k](const ConstVectorRef& x) { return (k * x.array()).sin().sum(); };
}

PerturbationSpace reduced_space_basis(const ReducedSpaceSpec& spec, const Torus& domain, int cutoff,
                                      const Eigen::VectorXd& phase_origin)
{
  if (domain.dim() != spec.ambient_d) throw std::invalid_argument("reduced_space_basis: domain dimension mismatch");
  return PerturbationSpace::reduced(domain, spec.active_components, spec.factor_coordinate, spec.p, cutoff,
                                   phase_origin);
}

PerturbationSpace ExampleSystem::make_space(int p_override, int cutoff_override) const
{
  if (reduced) {
    ReducedSpaceSpec spec;
    spec.ambient_d = system.dim();
    spec.p = p_override;
    return reduced_space_basis(spec, system.domain, cutoff_override, basis_origin);
  }
  return PerturbationSpace::full_product(system.domain, p_override, cutoff_override, basis_origin);
}

const std::vector<std::string>& registered_system_ids()
{
  static const std::vector<std::string> ids{"kuramoto2", "kuramoto20-reduced", "lorenz-cutoff", "circle"};
  return ids;
}

ExampleSystem make_example_system(std::string_view id)
{
  // Every registered basis is phased at x = 0, not at the box center.
  const auto with_zero_origin = [](ExampleSystem ex) {
    ex.basis_origin = Eigen::VectorXd::Zero(ex.system.dim());
    return ex;
  };
  if (id == "kuramoto2") {
    KuramotoSpec spec{Eigen::Vector2d(1.0, 3.0)};
    return with_zero_origin({"kuramoto2", SdeSystem(kuramoto_domain(2), kuramoto_drift(spec), 1.0),
                             kuramoto_observable(2), false, 5, 11, 1e5, 4.0});
  }
  if (id == "kuramoto20-reduced") {
    KuramotoSpec spec{Eigen::VectorXd::LinSpaced(20, 1.0, 4.8)};
    return with_zero_origin({"kuramoto20-reduced", SdeSystem(kuramoto_domain(20), kuramoto_drift(spec), 1.0),
                             kuramoto_observable(20), true, 4, 22, 5e5, 6.0});
  }
  if (id == "lorenz-cutoff") {
    LorenzCutoffSpec spec;
    return with_zero_origin({"lorenz-cutoff", SdeSystem(lorenz_domain(spec), lorenz_cutoff_drift(spec), spec.sigma),
                             lorenz_observable(spec), false, 5, 9, 5e5, 4.0});
  }
  if (id == "circle") {
    // Driftless diffusion on the circle with phi = cos; its responses are known in closed form.
    return with_zero_origin({"circle", SdeSystem(kuramoto_domain(1), zero_field(1), 1.0),
                             [](const ConstVectorRef& x) { return std::cos(x(0)); }, false, 5, 11, 2e4, 4.0});
  }
  std::string known;
  for (const auto& k : registered_system_ids()) known += (known.empty() ? "" : ", ") + k;
  throw std::invalid_argument("unknown system id '" + std::string(id) + "'; registered ids: " + known);
}

}  // namespace optresp
