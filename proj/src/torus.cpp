#include "optresp/torus.hpp"

#include <sstream>

namespace optresp {

namespace {

std::string describe_point(const Eigen::VectorXd& x)
{
  std::ostringstream out;
  out.precision(17);
  out << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? ", " : "") << x(i);
  out << ")";
  return out.str();
}

}  // namespace

VectorField zero_field(int dim)
{
  return VectorField(dim, [](const ConstVectorRef&, VectorRef out) { out.setZero(); }, "zero");
}

VectorField constant_field(Eigen::VectorXd value, std::string label)
{
  const int dim = static_cast<int>(value.size());
  return VectorField(dim, [value = std::move(value)](const ConstVectorRef&, VectorRef out) { out = value; },
                     std::move(label));
}

VectorField perturbed_field(const VectorField& base, const VectorField& eta, double gamma)
{
  if (base.dim() != eta.dim()) throw std::invalid_argument("perturbed_field: dimension mismatch");
  if (gamma == 0.0) return base;
  const int dim = base.dim();
  auto evaluator = [base, eta, gamma, dim](const ConstVectorRef& x, VectorRef out) {
    base.eval_into(x, out);
    if (dim <= 32) {
      ScratchVector buffer(dim);
      eta.eval_into(x, buffer);
      out += gamma * buffer;
    } else {
      Eigen::VectorXd buffer(dim);
      eta.eval_into(x, buffer);
      out += gamma * buffer;
    }
  };
  return VectorField(dim, std::move(evaluator), base.label() + "+gamma*" + eta.label());
}

VectorField linear_combination(std::vector<VectorField> fields, std::vector<double> weights, std::string label)
{
  if (fields.empty() || fields.size() != weights.size()) {
    throw std::invalid_argument("linear_combination: need one weight per field");
  }
  const int dim = fields.front().dim();
  for (const auto& f : fields) {
    if (f.dim() != dim) throw std::invalid_argument("linear_combination: dimension mismatch");
  }
  auto evaluator = [fields = std::move(fields), weights = std::move(weights), dim](const ConstVectorRef& x,
                                                                                  VectorRef out) {
    Eigen::VectorXd buffer(dim);
    out.setZero();
    for (std::size_t k = 0; k < fields.size(); ++k) {
      fields[k].eval_into(x, buffer);
      out += weights[k] * buffer;
    }
  };
  return VectorField(dim, std::move(evaluator), std::move(label));
}

SdeSystem::SdeSystem(Torus domain_, VectorField drift_, double sigma_)
    : domain(std::move(domain_)), drift(std::move(drift_)), sigma(sigma_)
{
  if (!(sigma > 0.0)) throw std::invalid_argument("SdeSystem: sigma must be positive");
  if (!drift) throw std::invalid_argument("SdeSystem: drift is empty");
  if (drift.dim() != domain.dim()) throw std::invalid_argument("SdeSystem: drift/domain dimension mismatch");
}

SdeSystem SdeSystem::perturbed(const VectorField& eta, double gamma) const
{
  return SdeSystem(domain, perturbed_field(drift, eta, gamma), sigma);
}

EulerMaruyamaChain::EulerMaruyamaChain(const SdeSystem& system, Eigen::VectorXd x0, double dt,
                                       std::uint64_t seed, NoiseMode mode)
    : system_(&system),
      dt_(dt),
      noise_scale_(system.sigma * std::sqrt(dt)),
      mode_(mode),
      gaussian_(seed),
      state_(std::move(x0)),
      noise_(Eigen::VectorXd::Zero(system.dim())),
      drift_(system.dim())
{
  if (!(dt > 0.0)) throw std::invalid_argument("EulerMaruyamaChain: dt must be positive");
  if (state_.size() != system.dim()) throw std::invalid_argument("EulerMaruyamaChain: x0 dimension mismatch");
  wrap_in_place(state_, system.domain);
}

void EulerMaruyamaChain::step()
{
  if (mode_ == NoiseMode::stochastic) gaussian_.fill(noise_);
  system_->drift.eval_into(state_, drift_);
  if (!drift_.allFinite()) {
    throw std::runtime_error("non-finite drift " + describe_point(drift_) + " at state " + describe_point(state_));
  }
  state_ += dt_ * drift_ + noise_scale_ * noise_;
  wrap_in_place(state_, system_->domain);
}

Trajectory simulate_em(const SdeSystem& system, const Eigen::VectorXd& x0, double dt, std::int64_t steps,
                       std::uint64_t seed, NoiseMode mode)
{
  if (steps < 1) throw std::invalid_argument("simulate_em: steps must be >= 1");
  EulerMaruyamaChain chain(system, x0, dt, seed, mode);
  Trajectory trajectory;
  trajectory.dt = dt;
  trajectory.seed = seed;
  trajectory.states.resize(system.dim(), steps + 1);
  trajectory.increments.resize(system.dim(), steps);
  trajectory.states.col(0) = chain.state();
  for (std::int64_t n = 0; n < steps; ++n) {
    chain.step();
    trajectory.increments.col(n) = chain.noise();
    trajectory.states.col(n + 1) = chain.state();
  }
  return trajectory;
}

double ergodic_average(const Trajectory& trajectory, const Observable& phi, std::int64_t burn_in)
{
  if (burn_in < 0 || burn_in >= trajectory.length()) {
    throw std::invalid_argument("ergodic_average: empty window after burn-in");
  }
  double sum = 0.0;
  for (Eigen::Index n = burn_in; n < trajectory.length(); ++n) sum += phi(trajectory.states.col(n));
  return sum / static_cast<double>(trajectory.length() - burn_in);
}

}  // namespace optresp
