#include "optresp/response.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace optresp {

namespace {

std::int64_t checked_steps(double time, double dt, const char* what)
{
  const double ratio = time / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
    std::ostringstream msg;
    msg << "KdConfig: " << what << " = " << time << " is not a whole number of steps of dt = " << dt;
    throw std::invalid_argument(msg.str());
  }
  return static_cast<std::int64_t>(rounded);
}

// Runs body(c) for c in [0, count) on up to `threads` workers and rethrows
// the first failure in chain order.
template <typename Body>
void for_each_chain(int count, int threads, Body&& body)
{
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto guarded = [&](int c) {
    try {
      body(c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const int workers = std::min(std::max(threads, 1), count);
  if (workers <= 1) {
    for (int c = 0; c < count; ++c) guarded(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < count; c = next++) guarded(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Eigen::VectorXd start_state(const SdeSystem& system, const KdConfig& config)
{
  if (config.initial_state.size() == 0) return system.domain.centers();
  if (config.initial_state.size() != system.dim()) throw std::invalid_argument("KdConfig: initial_state dimension mismatch");
  return config.initial_state;
}

int batch_of(std::int64_t n, std::int64_t samples, int batches)
{
  return static_cast<int>((n * batches) / samples);
}

// Per-chain sums. a(b, f) = sum score * window_sum, z(b, f) = sum score, both
// without the sqrt(dt)/sigma factor.
struct ChainSums {
  Eigen::MatrixXd a;
  Eigen::MatrixXd z;
  std::vector<std::int64_t> counts;
  double phi_sum = 0.0;
  std::int64_t phi_count = 0;
};

// Drives one chain and calls accumulate(batch, x_n, xi_n, window_sum) for every
// sampled n, where window_sum = sum_{w=1}^{W} phi(X_{n+w}).
template <typename Accumulate>
void run_response_chain(const SdeSystem& system, const Observable& phi, const KdConfig& config, int chain,
                        ChainSums& sums, Accumulate&& accumulate)
{
  const std::int64_t window = config.window_steps();
  const std::int64_t samples = config.sample_steps_per_chain();
  const int batches = config.batches_per_chain();
  const int d = system.dim();

  EulerMaruyamaChain em(system, start_state(system, config), config.dt,
                        stream_seed(config.seed, static_cast<std::uint64_t>(chain)));
  for (std::int64_t n = 0; n < config.burn_in_steps(); ++n) em.step();

  Eigen::MatrixXd state_ring(d, window);
  Eigen::MatrixXd noise_ring(d, window);
  std::vector<double> phi_ring(static_cast<std::size_t>(window));
  double window_sum = 0.0;

  const std::int64_t total = samples + window - 1;
  for (std::int64_t n = 0; n < total; ++n) {
    const Eigen::Index slot = static_cast<Eigen::Index>(n % window);
    if (n < samples) state_ring.col(slot) = em.state();
    em.step();
    if (n < samples) noise_ring.col(slot) = em.noise();

    const double value = phi(em.state());
    sums.phi_sum += value;
    ++sums.phi_count;
    phi_ring[static_cast<std::size_t>((n + 1) % window)] = value;
    window_sum += value;

    const std::int64_t m = n + 1 - window;
    if (m < 0) continue;
    const Eigen::Index used = static_cast<Eigen::Index>(m % window);
    const int batch = batch_of(m, samples, batches);
    accumulate(batch, state_ring.col(used), noise_ring.col(used), window_sum);
    ++sums.counts[static_cast<std::size_t>(batch)];
    window_sum -= phi_ring[static_cast<std::size_t>((m + 1) % window)];
  }
}

std::vector<ResponseEstimate> combine_chains(const std::vector<ChainSums>& chains, const KdConfig& config,
                                             double score_scale, const Eigen::VectorXd& field_scale)
{
  const Eigen::Index fields = field_scale.size();
  double phi_sum = 0.0;
  std::int64_t phi_count = 0;
  for (const auto& c : chains) {
    phi_sum += c.phi_sum;
    phi_count += c.phi_count;
  }
  const double phibar = phi_sum / static_cast<double>(phi_count);
  const double window = static_cast<double>(config.window_steps());

  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (!chains[c].a.allFinite() || !chains[c].z.allFinite()) {
      std::ostringstream msg;
      msg << "estimate_responses: non-finite partial sums in chain " << c;
      for (Eigen::Index b = 0; b < chains[c].a.rows(); ++b) {
        if (!chains[c].a.row(b).allFinite() || !chains[c].z.row(b).allFinite()) {
          msg << ", first bad batch " << b;
          break;
        }
      }
      throw std::runtime_error(msg.str());
    }
  }

  std::vector<ResponseEstimate> out(static_cast<std::size_t>(fields));
  for (Eigen::Index f = 0; f < fields; ++f) {
    const double scale = score_scale * field_scale(f);
    double a_total = 0.0;
    double z_total = 0.0;
    std::int64_t n_total = 0;
    std::vector<double> batch_values;
    for (const auto& c : chains) {
      for (Eigen::Index b = 0; b < c.a.rows(); ++b) {
        const auto count = c.counts[static_cast<std::size_t>(b)];
        if (count == 0) continue;
        a_total += c.a(b, f);
        z_total += c.z(b, f);
        n_total += count;
        batch_values.push_back((c.a(b, f) - phibar * window * c.z(b, f)) * scale / static_cast<double>(count));
      }
    }
    ResponseEstimate& e = out[static_cast<std::size_t>(f)];
    e.value = (a_total - phibar * window * z_total) * scale / static_cast<double>(n_total);
    e.n_samples = n_total;
    const double k = static_cast<double>(batch_values.size());
    double mean = 0.0;
    for (double v : batch_values) mean += v;
    mean /= k;
    double ss = 0.0;
    for (double v : batch_values) ss += (v - mean) * (v - mean);
    e.std_error = k > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  }
  return out;
}

}  // namespace

void KdConfig::validate() const
{
  if (!(dt > 0.0)) throw std::invalid_argument("KdConfig: dt must be positive");
  if (!(total_time > 0.0)) throw std::invalid_argument("KdConfig: total_time must be positive");
  if (!(decorrelation_time > 0.0)) throw std::invalid_argument("KdConfig: decorrelation_time must be positive");
  if (!(decorrelation_time < total_time)) throw std::invalid_argument("KdConfig: decorrelation_time must be < total_time");
  if (!(burn_in_time >= 0.0)) throw std::invalid_argument("KdConfig: burn_in_time must be >= 0");
  if (n_chains < 1) throw std::invalid_argument("KdConfig: n_chains must be >= 1");
  if (n_batches < 20) throw std::invalid_argument("KdConfig: n_batches must be >= 20");
  if (threads < 1) throw std::invalid_argument("KdConfig: threads must be >= 1");
  window_steps();
  burn_in_steps();
  sample_steps_per_chain();
}

std::int64_t KdConfig::window_steps() const { return checked_steps(decorrelation_time, dt, "decorrelation_time"); }

std::int64_t KdConfig::burn_in_steps() const { return checked_steps(burn_in_time, dt, "burn_in_time"); }

std::int64_t KdConfig::sample_steps_per_chain() const
{
  return checked_steps(total_time / n_chains, dt, "total_time / n_chains");
}

int KdConfig::batches_per_chain() const { return (n_batches + n_chains - 1) / n_chains; }

double score_weight(const ConstVectorRef& eta_at_x, const ConstVectorRef& xi, double dt, double sigma)
{
  return eta_at_x.dot(xi) * std::sqrt(dt) / sigma;
}

std::vector<ResponseEstimate> estimate_responses(const SdeSystem& system, const Observable& phi,
                                                 std::span<const VectorField> fields, const KdConfig& config)
{
  config.validate();
  if (fields.empty()) throw std::invalid_argument("estimate_responses: no fields");
  for (const auto& f : fields) {
    if (f.dim() != system.dim()) throw std::invalid_argument("estimate_responses: field dimension mismatch");
  }
  if (config.window_steps() >= config.sample_steps_per_chain()) {
    throw std::invalid_argument("estimate_responses: decorrelation window of " + std::to_string(config.window_steps()) +
                                " steps exceeds the " + std::to_string(config.sample_steps_per_chain()) +
                                " available steps per chain");
  }
  const auto k = static_cast<Eigen::Index>(fields.size());
  const int batches = config.batches_per_chain();
  std::vector<ChainSums> chains(static_cast<std::size_t>(config.n_chains));

  for_each_chain(config.n_chains, config.threads, [&](int c) {
    ChainSums& sums = chains[static_cast<std::size_t>(c)];
    sums.a = Eigen::MatrixXd::Zero(batches, k);
    sums.z = Eigen::MatrixXd::Zero(batches, k);
    sums.counts.assign(static_cast<std::size_t>(batches), 0);
    Eigen::VectorXd eta(system.dim());
    run_response_chain(system, phi, config, c, sums,
                       [&](int batch, const auto& x, const auto& xi, double window_sum) {
                         for (Eigen::Index f = 0; f < k; ++f) {
                           fields[static_cast<std::size_t>(f)].eval_into(x, eta);
                           const double s = eta.dot(xi);
                           sums.a(batch, f) += s * window_sum;
                           sums.z(batch, f) += s;
                         }
                       });
  });
  return combine_chains(chains, config, std::sqrt(config.dt) / system.sigma, Eigen::VectorXd::Ones(k));
}

std::vector<ResponseEstimate> estimate_basis_responses(const SdeSystem& system, const Observable& phi,
                                                       const PerturbationSpace& space, const KdConfig& config)
{
  config.validate();
  if (space.ambient_dim() != system.dim()) throw std::invalid_argument("estimate_basis_responses: dimension mismatch");
  if (config.window_steps() >= config.sample_steps_per_chain()) {
    throw std::invalid_argument("estimate_basis_responses: decorrelation window of " +
                                std::to_string(config.window_steps()) + " steps exceeds the " +
                                std::to_string(config.sample_steps_per_chain()) + " available steps per chain");
  }
  const Eigen::Index block = space.block_size();
  const Eigen::Index directions = space.directions().cols();
  const int batches = config.batches_per_chain();
  std::vector<ChainSums> chains(static_cast<std::size_t>(config.n_chains));

  for_each_chain(config.n_chains, config.threads, [&](int c) {
    ChainSums& sums = chains[static_cast<std::size_t>(c)];
    // Column layout: batch-major blocks of (block x directions), flattened per batch row.
    sums.a = Eigen::MatrixXd::Zero(batches, block * directions);
    sums.z = Eigen::MatrixXd::Zero(batches, block * directions);
    sums.counts.assign(static_cast<std::size_t>(batches), 0);
    Eigen::MatrixXd table;
    Eigen::VectorXd products;
    Eigen::VectorXd weights(directions);
    // Row-major ChainSums rows are not contiguous; accumulate per batch in a dense buffer.
    Eigen::MatrixXd a_batch = Eigen::MatrixXd::Zero(block, directions);
    Eigen::MatrixXd z_batch = Eigen::MatrixXd::Zero(block, directions);
    int current = 0;
    auto flush = [&](int batch) {
      sums.a.row(batch) = Eigen::Map<const Eigen::RowVectorXd>(a_batch.data(), a_batch.size());
      sums.z.row(batch) = Eigen::Map<const Eigen::RowVectorXd>(z_batch.data(), z_batch.size());
      a_batch.setZero();
      z_batch.setZero();
    };
    run_response_chain(system, phi, config, c, sums,
                       [&](int batch, const auto& x, const auto& xi, double window_sum) {
                         if (batch != current) {
                           flush(current);
                           current = batch;
                         }
                         space.fill_factor_table(x, table);
                         space.fill_tensor_products(table, products);
                         weights.noalias() = space.directions().transpose() * xi;
                         for (Eigen::Index dir = 0; dir < directions; ++dir) {
                           a_batch.col(dir) += (weights(dir) * window_sum) * products;
                           z_batch.col(dir) += weights(dir) * products;
                         }
                       });
    flush(current);
  });

  Eigen::VectorXd inverse_norms(space.size());
  for (int i = 0; i < space.size(); ++i) inverse_norms(i) = 1.0 / space.element(i).norm_hp;
  // Element i sits at flat column (i % block) + block * (i / block) = i.
  return combine_chains(chains, config, std::sqrt(config.dt) / system.sigma, inverse_norms);
}

SweepPoint observable_average(const SdeSystem& system, const Observable& phi, const KdConfig& config)
{
  config.validate();
  const std::int64_t samples = config.sample_steps_per_chain();
  const int batches = config.batches_per_chain();
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(config.n_chains));
  std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(config.n_chains));

  for_each_chain(config.n_chains, config.threads, [&](int c) {
    auto& s = sums[static_cast<std::size_t>(c)];
    auto& k = counts[static_cast<std::size_t>(c)];
    s.assign(static_cast<std::size_t>(batches), 0.0);
    k.assign(static_cast<std::size_t>(batches), 0);
    EulerMaruyamaChain em(system, start_state(system, config), config.dt,
                          stream_seed(config.seed, static_cast<std::uint64_t>(c)));
    for (std::int64_t n = 0; n < config.burn_in_steps(); ++n) em.step();
    for (std::int64_t n = 0; n < samples; ++n) {
      if (n > 0) em.step();
      const int b = batch_of(n, samples, batches);
      s[static_cast<std::size_t>(b)] += phi(em.state());
      ++k[static_cast<std::size_t>(b)];
    }
  });

  SweepPoint point;
  double total = 0.0;
  std::int64_t count = 0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    for (std::size_t b = 0; b < sums[c].size(); ++b) {
      if (counts[c][b] == 0) continue;
      total += sums[c][b];
      count += counts[c][b];
      point.batch_means.push_back(sums[c][b] / static_cast<double>(counts[c][b]));
    }
  }
  if (!std::isfinite(total)) throw std::runtime_error("observable_average: non-finite observable sum");
  point.mean = total / static_cast<double>(count);
  const double k = static_cast<double>(point.batch_means.size());
  double ss = 0.0;
  for (double v : point.batch_means) ss += (v - point.mean) * (v - point.mean);
  point.std_error = k > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  return point;
}

std::vector<SweepPoint> sweep_observable(const SdeSystem& system, const VectorField& eta,
                                         std::span<const double> gammas, const Observable& phi,
                                         const KdConfig& config)
{
  if (gammas.empty()) throw std::invalid_argument("sweep_observable: no gamma values");
  std::vector<SweepPoint> out;
  out.reserve(gammas.size());
  for (double gamma : gammas) {
    SweepPoint point = observable_average(system.perturbed(eta, gamma), phi, config);
    point.gamma = gamma;
    out.push_back(std::move(point));
  }
  return out;
}

namespace {

double ols_slope(std::span<const double> x, std::span<const double> y)
{
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

SlopeCheck slope_match_check(std::span<const SweepPoint> sweep, const ResponseEstimate& estimate)
{
  if (sweep.size() < 3) throw std::invalid_argument("slope_match_check: need at least 3 gamma values");
  std::vector<double> gammas;
  std::vector<double> means;
  for (const auto& p : sweep) {
    gammas.push_back(p.gamma);
    means.push_back(p.mean);
  }
  const auto [lo, hi] = std::minmax_element(gammas.begin(), gammas.end());
  if (*lo == *hi) throw std::invalid_argument("slope_match_check: degenerate fit, all gamma values are equal");
  if (*lo > 0.0 || *hi < 0.0) throw std::invalid_argument("slope_match_check: gamma values must span 0");

  SlopeCheck check;
  check.slope = ols_slope(gammas, means);
  check.estimate = estimate.value;

  const std::size_t batches = sweep.front().batch_means.size();
  const bool paired = batches >= 2 && std::all_of(sweep.begin(), sweep.end(), [&](const SweepPoint& p) {
                        return p.batch_means.size() == batches;
                      });
  if (paired) {
    std::vector<double> slopes;
    std::vector<double> column(sweep.size());
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < sweep.size(); ++i) column[i] = sweep[i].batch_means[b];
      slopes.push_back(ols_slope(gammas, column));
    }
    double mean = 0.0;
    for (double s : slopes) mean += s;
    mean /= static_cast<double>(slopes.size());
    double ss = 0.0;
    for (double s : slopes) ss += (s - mean) * (s - mean);
    const double k = static_cast<double>(slopes.size());
    check.slope_std_error = std::sqrt(ss / (k - 1.0) / k);
  } else {
    double mx = 0.0;
    for (double g : gammas) mx += g;
    mx /= static_cast<double>(gammas.size());
    double sxx = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const double dx = gammas[i] - mx;
      sxx += dx * dx;
      var += dx * dx * sweep[i].std_error * sweep[i].std_error;
    }
    check.slope_std_error = std::sqrt(var) / sxx;
  }
  check.combined_std_error = std::hypot(check.slope_std_error, estimate.std_error);
  check.deviation = std::abs(check.slope - check.estimate);
  check.threshold = 3.0 * check.combined_std_error;
  check.pass = check.deviation <= check.threshold;
  return check;
}

}  // namespace optresp
