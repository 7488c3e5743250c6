#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "optresp/fourier_basis.hpp"
#include "optresp/torus.hpp"

namespace optresp {

/// Kuramoto oscillators on [0, 2 pi)^d:
///   F^i(x) = omega^i + (1/d) sum_j sin(x^j - x^i).
struct KuramotoSpec {
  Eigen::VectorXd omegas;

  int dim() const { return static_cast<int>(omegas.size()); }
};

Torus kuramoto_domain(int dim);
VectorField kuramoto_drift(const KuramotoSpec& spec);
/// phi(x) = (1/d) sum_i sin(x^i).
Observable kuramoto_observable(int dim);

/// Lorenz-63 multiplied by a piecewise-linear cutoff in the l-infinity
/// distance from `center`, on [-r, r)^2 x [0, 2r).
struct LorenzCutoffSpec {
  double r_box = 40.0;
  double r_bezel = 2.0;
  Eigen::Vector3d center{0.0, 0.0, 40.0};
  double sigma = 5.0;
};

Torus lorenz_domain(const LorenzCutoffSpec& spec);
double cutoff_profile(double rho, const LorenzCutoffSpec& spec);
VectorField lorenz_cutoff_drift(const LorenzCutoffSpec& spec);
/// phi(x) = sum_i sin(2 pi x^i / (2 r)).
Observable lorenz_observable(const LorenzCutoffSpec& spec);

/// Perturbations eta = (g(x^1), g(x^1), 0, ..., 0) normed by ||g||_{H^p(T^1)}.
struct ReducedSpaceSpec {
  int ambient_d = 20;
  std::vector<int> active_components{0, 1};
  int factor_coordinate = 0;
  int p = 4;
};

PerturbationSpace reduced_space_basis(const ReducedSpaceSpec& spec, const Torus& domain, int cutoff,
                                      const Eigen::VectorXd& phase_origin = {});

/// A benchmark problem with its reference run lengths.
struct ExampleSystem {
  std::string id;
  SdeSystem system;
  Observable observable;
  bool reduced = false;
  int p = 5;
  int cutoff = 11;
  double paper_total_time = 1e5;
  double decorrelation_time = 4.0;
  Eigen::VectorXd basis_origin;  // phase origin of the basis; empty: the domain centers

  PerturbationSpace make_space(int p_override, int cutoff_override) const;
  PerturbationSpace make_space() const { return make_space(p, cutoff); }
};

/// Registered ids, in a fixed order.
const std::vector<std::string>& registered_system_ids();

/// Throws std::invalid_argument listing the registered ids for an unknown id.
ExampleSystem make_example_system(std::string_view id);

}  // namespace optresp
