#include "optresp/fourier_basis.hpp"

#include <algorithm>
#include <memory>

#include "optresp/csv.hpp"

namespace optresp {

namespace {

int int_pow(int base, int exponent)
{
  long long result = 1;
  for (int i = 0; i < exponent; ++i) {
    result *= base;
    if (result > (1LL << 30)) throw std::overflow_error("basis size overflows int");
  }
  return static_cast<int>(result);
}

// Row-major position of n inside [0, N)^k.
int flat_position(const MultiIndex& index, int cutoff)
{
  int flat = 0;
  for (int v : index.n) {
    if (v < 0 || v >= cutoff) return -1;
    flat = flat * cutoff + v;
  }
  return flat;
}

}  // namespace

std::vector<BasisLabel> enumerate_indices(int dim, int cutoff)
{
  if (dim < 1 || cutoff < 1) throw std::invalid_argument("enumerate_indices: need d >= 1 and N >= 1");
  const int block = int_pow(cutoff, dim);
  std::vector<BasisLabel> labels;
  labels.reserve(static_cast<std::size_t>(dim) * static_cast<std::size_t>(block));
  for (int j = 1; j <= dim; ++j) {
    MultiIndex index{std::vector<int>(static_cast<std::size_t>(dim), 0)};
    for (int flat = 0; flat < block; ++flat) {
      labels.push_back({j, index});
      for (int i = dim - 1; i >= 0; --i) {
        if (++index.n[static_cast<std::size_t>(i)] < cutoff) break;
        index.n[static_cast<std::size_t>(i)] = 0;
      }
    }
  }
  return labels;
}

double scalar_basis_derivative(int m, int order, double x, double c, double r_box)
{
  if (order < 0) throw std::invalid_argument("scalar_basis_derivative: order must be >= 0");
  if (m == 0) return order == 0 ? eval_scalar_basis(0, x, c, r_box) : 0.0;
  const double omega = basis_frequency(m) * std::numbers::pi / r_box;
  const double phase = omega * (x - c) + order * std::numbers::pi / 2.0;
  const double amplitude = std::pow(omega, order) / std::sqrt(r_box);
  return (m % 2 == 1) ? amplitude * std::sin(phase) : amplitude * std::cos(phase);
}

double hp_norm_sq(const MultiIndex& index, int p)
{
  if (p < 0) throw std::invalid_argument("hp_norm_sq: p must be >= 0");
  double s = 0.0;
  for (int m : index.n) {
    const double k = basis_frequency(m);
    s += k * k;
  }
  double total = 0.0;
  double term = 1.0;
  for (int l = 0; l <= p; ++l) {
    total += term;
    term *= s;
  }
  return total;
}

Eigen::VectorXd eval_basis_field(const BasisElement& element, const ConstVectorRef& x)
{
  double product = 1.0;
  for (std::size_t k = 0; k < element.coordinates.size(); ++k) {
    const int coord = element.coordinates[k];
    product *= eval_scalar_basis(element.index.n[k], x(coord), element.phase_origin(coord), element.domain.radius());
  }
  return element.direction * (product / element.norm_hp);
}

namespace {

Eigen::VectorXd resolve_origin(const Torus& domain, const Eigen::VectorXd& phase_origin)
{
  if (phase_origin.size() == 0) return domain.centers();
  if (phase_origin.size() != domain.dim()) throw std::invalid_argument("phase_origin: dimension mismatch");
  return phase_origin;
}

}  // namespace

PerturbationSpace PerturbationSpace::full_product(const Torus& domain, int p, int cutoff,
                                                  const Eigen::VectorXd& phase_origin)
{
  if (p < 0 || cutoff < 1) throw std::invalid_argument("full_product: need p >= 0 and N >= 1");
  const int d = domain.dim();
  PerturbationSpace space(Kind::full_product, domain, p, cutoff);
  space.phase_origin_ = resolve_origin(domain, phase_origin);
  space.directions_ = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < d; ++i) space.factor_coordinates_.push_back(i);
  for (auto& label : enumerate_indices(d, cutoff)) {
    BasisElement element{label.component,
                         label.index,
                         std::sqrt(hp_norm_sq(label.index, p)),
                         p,
                         space.directions_.col(label.component - 1),
                         space.factor_coordinates_,
                         domain,
                         space.phase_origin_};
    space.elements_.push_back(std::move(element));
  }
  return space;
}

PerturbationSpace PerturbationSpace::reduced(const Torus& domain, std::vector<int> active_components,
                                             int factor_coordinate, int p, int cutoff,
                                             const Eigen::VectorXd& phase_origin)
{
  if (p < 0 || cutoff < 1) throw std::invalid_argument("reduced: need p >= 0 and N >= 1");
  const int d = domain.dim();
  if (factor_coordinate < 0 || factor_coordinate >= d) throw std::invalid_argument("reduced: bad factor coordinate");
  if (active_components.empty()) throw std::invalid_argument("reduced: no active components");
  PerturbationSpace space(Kind::reduced, domain, p, cutoff);
  space.phase_origin_ = resolve_origin(domain, phase_origin);
  space.directions_ = Eigen::MatrixXd::Zero(d, 1);
  for (int c : active_components) {
    if (c < 0 || c >= d) throw std::invalid_argument("reduced: active component out of range");
    space.directions_(c, 0) = 1.0;
  }
  space.factor_coordinates_ = {factor_coordinate};
  for (int n = 0; n < cutoff; ++n) {
    MultiIndex index{{n}};
    BasisElement element{1, index, std::sqrt(hp_norm_sq(index, p)), p, space.directions_.col(0),
                         space.factor_coordinates_, domain, space.phase_origin_};
    space.elements_.push_back(std::move(element));
  }
  return space;
}

int PerturbationSpace::block_size() const
{
  return int_pow(cutoff_, static_cast<int>(factor_coordinates_.size()));
}

std::vector<BasisLabel> PerturbationSpace::labels() const
{
  std::vector<BasisLabel> out;
  out.reserve(elements_.size());
  for (const auto& e : elements_) out.push_back(e.label());
  return out;
}

int PerturbationSpace::find(const BasisLabel& label) const
{
  if (label.component < 1 || label.component > directions_.cols()) return -1;
  if (label.index.size() != static_cast<int>(factor_coordinates_.size())) return -1;
  const int flat = flat_position(label.index, cutoff_);
  if (flat < 0) return -1;
  return (label.component - 1) * block_size() + flat;
}

VectorField PerturbationSpace::field(int i) const
{
  const BasisElement& e = element(i);
  std::string label = "B" + std::to_string(e.component) + "_(";
  for (int k = 0; k < e.index.size(); ++k) label += (k ? "," : "") + std::to_string(e.index[k]);
  label += ")";
  return VectorField(
      ambient_dim(), [e](const ConstVectorRef& x, VectorRef out) { out = eval_basis_field(e, x); }, label);
}

void PerturbationSpace::fill_factor_table(const ConstVectorRef& x, Eigen::MatrixXd& table) const
{
  table.resize(static_cast<Eigen::Index>(factor_coordinates_.size()), cutoff_);
  for (std::size_t k = 0; k < factor_coordinates_.size(); ++k) {
    const int coord = factor_coordinates_[k];
    auto row = table.row(static_cast<Eigen::Index>(k));
    eval_scalar_basis_table(x(coord), phase_origin_(coord), domain_.radius(), row);
  }
}

void PerturbationSpace::fill_tensor_products(const Eigen::MatrixXd& table, Eigen::VectorXd& products) const
{
  const Eigen::Index n = table.cols();
  products.resize(block_size());
  Eigen::Index length = 1;
  products(0) = 1.0;
  for (Eigen::Index k = 0; k < table.rows(); ++k) {
    // Expand in place from the back so earlier entries are read before being overwritten.
    for (Eigen::Index i = length - 1; i >= 0; --i) {
      const double base = products(i);
      for (Eigen::Index m = n - 1; m >= 0; --m) products(i * n + m) = base * table(k, m);
    }
    length *= n;
  }
}

VectorField PerturbationSpace::combination(const Eigen::VectorXd& coefficients, std::string label) const
{
  if (coefficients.size() != size()) throw std::invalid_argument("combination: coefficient count mismatch");
  const Eigen::Index block = block_size();
  // weights(b, c): coefficient / norm for flat index b in direction c.
  Eigen::MatrixXd weights(block, directions_.cols());
  for (int i = 0; i < size(); ++i) {
    weights(i % block, i / block) = coefficients(i) / elements_[static_cast<std::size_t>(i)].norm_hp;
  }
  auto evaluator = [space = std::make_shared<const PerturbationSpace>(*this), weights](const ConstVectorRef& x,
                                                                                       VectorRef out) {
    thread_local Eigen::MatrixXd table;
    thread_local Eigen::VectorXd products;
    space->fill_factor_table(x, table);
    space->fill_tensor_products(table, products);
    out.noalias() = space->directions() * (weights.transpose() * products);
  };
  return VectorField(ambient_dim(), std::move(evaluator), std::move(label));
}

OptimalPerturbation assemble_optimal_perturbation(const PerturbationSpace& space, const RieszVector& riesz)
{
  if (riesz.coefficients.size() != space.size() || riesz.labels.size() != static_cast<std::size_t>(space.size())) {
    throw std::invalid_argument("assemble_optimal_perturbation: coefficient table does not match the space");
  }
  for (int i = 0; i < space.size(); ++i) {
    if (!(riesz.labels[static_cast<std::size_t>(i)] == space.element(i).label())) {
      throw std::invalid_argument("assemble_optimal_perturbation: label order differs from the space");
    }
  }
  if (!riesz.coefficients.allFinite()) throw std::invalid_argument("assemble_optimal_perturbation: non-finite coefficient");
  const double norm = space.norm(riesz.coefficients);
  if (norm == 0.0) throw DegenerateResponse();
  OptimalPerturbation result;
  result.norm = norm;
  result.coefficients = riesz.coefficients / norm;
  result.field = space.combination(result.coefficients, "eta_opt");
  return result;
}

void write_riesz_csv(const RieszVector& riesz, const std::filesystem::path& path)
{
  if (riesz.coefficients.size() != static_cast<Eigen::Index>(riesz.labels.size())) {
    throw std::invalid_argument("write_riesz_csv: label/coefficient count mismatch");
  }
  CsvTable table;
  const int k = riesz.labels.empty() ? 0 : riesz.labels.front().index.size();
  table.header.push_back("j");
  for (int i = 1; i <= k; ++i) table.header.push_back("n_" + std::to_string(i));
  table.header.push_back("coefficient");
  for (std::size_t r = 0; r < riesz.labels.size(); ++r) {
    const auto& label = riesz.labels[r];
    if (label.index.size() != k) throw std::invalid_argument("write_riesz_csv: ragged multi-indices");
    std::vector<std::string> row{std::to_string(label.component)};
    for (int v : label.index.n) row.push_back(std::to_string(v));
    row.push_back(format_real(riesz.coefficients(static_cast<Eigen::Index>(r))));
    table.add_row(std::move(row));
  }
  emit_csv(table, path);
}

RieszVector read_riesz_csv(const std::filesystem::path& path)
{
  const CsvTable table = read_csv(path);
  if (table.header.size() < 2 || table.header.front() != "j" || table.header.back() != "coefficient") {
    throw std::runtime_error("'" + path.string() + "' is not a coefficient table (expected j,n_1..n_k,coefficient)");
  }
  const std::size_t k = table.header.size() - 2;
  RieszVector riesz;
  riesz.coefficients.resize(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    BasisLabel label;
    label.component = std::stoi(row[0]);
    for (std::size_t i = 0; i < k; ++i) label.index.n.push_back(std::stoi(row[1 + i]));
    riesz.labels.push_back(std::move(label));
    riesz.coefficients(static_cast<Eigen::Index>(r)) = parse_real(row.back());
  }
  return riesz;
}

}  // namespace optresp
