#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "optresp/fourier_basis.hpp"
#include "optresp/torus.hpp"

namespace optresp {

/// Run-length bookkeeping for the ergodic estimators. Times are physical;
/// step counts are round(time / dt) and must be integral.
struct KdConfig {
  double total_time = 1e5;          // sampled time summed over all chains
  double decorrelation_time = 4.0;  // W, horizon of the response sum
  double dt = 0.01;
  double burn_in_time = 100.0;      // discarded at the start of every chain
  std::uint64_t seed = 0;
  int n_chains = 1;
  int n_batches = 20;               // minimum number of batches for batch means
  int threads = 1;
  Eigen::VectorXd initial_state;    // empty: the domain centers

  void validate() const;
  std::int64_t window_steps() const;
  std::int64_t burn_in_steps() const;
  std::int64_t sample_steps_per_chain() const;
  int batches_per_chain() const;
};

struct ResponseEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
};

/// d/dgamma log p_gamma(X_n -> X_{n+1}) at gamma = 0 for the Euler chain:
/// eta(X_n) . xi_n * sqrt(dt) / sigma.
double score_weight(const ConstVectorRef& eta_at_x, const ConstVectorRef& xi, double dt, double sigma);

/// Kernel-differentiation (likelihood-ratio) estimate of R(phi, eta) for each field:
///
///   R(eta) ~ sum_{w=1}^{W} mean_n[ (phi(X_{n+w}) - phibar) * score_weight(eta(X_n), xi_n, dt, sigma) ].
///
/// All fields are evaluated on the same trajectories. Chain c uses
/// stream_seed(seed, c); results do not depend on config.threads.
std::vector<ResponseEstimate> estimate_responses(const SdeSystem& system, const Observable& phi,
                                                 std::span<const VectorField> fields, const KdConfig& config);

/// Same estimator for every element of `space`, using the product structure
/// of the basis (one factor table and one tensor product per step).
std::vector<ResponseEstimate> estimate_basis_responses(const SdeSystem& system, const Observable& phi,
                                                       const PerturbationSpace& space, const KdConfig& config);

struct SweepPoint {
  double gamma = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> batch_means;
};

/// Ergodic average of phi with batch-means error bars.
SweepPoint observable_average(const SdeSystem& system, const Observable& phi, const KdConfig& config);

/// mu^gamma(phi) for the drift F + gamma * eta at every gamma. Every gamma
/// reuses the same seeds (common random numbers).
std::vector<SweepPoint> sweep_observable(const SdeSystem& system, const VectorField& eta,
                                         std::span<const double> gammas, const Observable& phi,
                                         const KdConfig& config);

struct SlopeCheck {
  bool pass = false;
  double slope = 0.0;
  double slope_std_error = 0.0;
  double estimate = 0.0;
  double combined_std_error = 0.0;
  double deviation = 0.0;  // |slope - estimate|
  double threshold = 0.0;  // 3 * combined_std_error
};

/// Least-squares slope of mean vs gamma compared with a response estimate.
///
/// When every point carries the same number of batch means, the slope error
/// is the spread of per-batch slopes (this keeps the correlation introduced by
/// common random numbers); otherwise the point errors are propagated as if
/// independent.
SlopeCheck slope_match_check(std::span<const SweepPoint> sweep, const ResponseEstimate& estimate);

}  // namespace optresp
