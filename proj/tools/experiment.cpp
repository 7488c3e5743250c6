#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "optresp/csv.hpp"
#include "optresp/transfer_oracle.hpp"

namespace optresp {

namespace {

constexpr double kDeskDivisor = 5.0;

std::string label_text(const BasisLabel& label)
{
  std::string s = std::to_string(label.component) + ":";
  for (int i = 0; i < label.index.size(); ++i) s += (i ? "," : "") + std::to_string(label.index[i]);
  return s;
}

std::vector<std::string> label_cells(const BasisLabel& label)
{
  std::vector<std::string> cells{std::to_string(label.component)};
  for (int n : label.index.n) cells.push_back(std::to_string(n));
  return cells;
}

std::vector<std::string> label_header(const PerturbationSpace& space)
{
  std::vector<std::string> header{"j"};
  const int k = space.size() > 0 ? space.element(0).index.size() : 0;
  for (int i = 1; i <= k; ++i) header.push_back("n_" + std::to_string(i));
  return header;
}

void write_coefficients(const PerturbationSpace& space, const std::vector<ResponseEstimate>& estimates,
                        const std::filesystem::path& path)
{
  CsvTable table{label_header(space), {}};
  table.header.insert(table.header.end(), {"estimate", "std_error"});
  for (int i = 0; i < space.size(); ++i) {
    auto row = label_cells(space.element(i).label());
    row.push_back(format_real(estimates[static_cast<std::size_t>(i)].value));
    row.push_back(format_real(estimates[static_cast<std::size_t>(i)].std_error));
    table.add_row(std::move(row));
  }
  emit_csv(table, path);
}

void write_summary(const std::vector<std::pair<std::string, std::string>>& entries, const std::filesystem::path& path)
{
  CsvTable table{{"quantity", "value"}, {}};
  for (const auto& [k, v] : entries) table.add_row({k, v});
  emit_csv(table, path);
}

RieszVector riesz_from(const PerturbationSpace& space, const std::vector<ResponseEstimate>& estimates)
{
  RieszVector riesz{space.labels(), Eigen::VectorXd(space.size())};
  for (int i = 0; i < space.size(); ++i) riesz.coefficients(i) = estimates[static_cast<std::size_t>(i)].value;
  return riesz;
}

int argmax_abs(const Eigen::VectorXd& v)
{
  Eigen::Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  return static_cast<int>(i);
}

std::string toml_string(const std::string& s)
{
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

int auto_grid(const ExampleSystem& example, double oracle_dt)
{
  const double s = example.system.sigma * std::sqrt(oracle_dt);
  const int coarsest = static_cast<int>(std::ceil(2.0 * example.system.domain.period() / s));
  return std::max(coarsest, example.system.dim() == 1 ? 256 : 32);
}

struct Outputs {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> written;

  std::filesystem::path operator()(const std::string& name)
  {
    written.push_back(dir / name);
    return written.back();
  }
};

}  // namespace

std::string command_name(Command command)
{
  switch (command) {
    case Command::respond: return "respond";
    case Command::optimize: return "optimize";
    case Command::sweep: return "sweep";
    case Command::oracle: return "oracle";
    case Command::simulate: return "simulate";
  }
  return "respond";
}

Command parse_command(const std::string& name)
{
  for (Command c : {Command::respond, Command::optimize, Command::sweep, Command::oracle, Command::simulate}) {
    if (command_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown command '" + name + "'; expected respond, optimize, sweep, oracle or simulate");
}

BasisLabel parse_basis_label(const std::string& text)
{
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("field '" + text + "': expected eta_opt or j:n_1,...,n_k");
  }
  BasisLabel label;
  try {
    label.component = std::stoi(text.substr(0, colon));
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) label.index.n.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    throw std::invalid_argument("field '" + text + "': expected eta_opt or j:n_1,...,n_k");
  }
  return label;
}

ResolvedExperiment resolve_experiment(const ExperimentConfig& input)
{
  ExperimentConfig config = input;
  ExampleSystem example = make_example_system(config.system);
  if (config.scale != "desk" && config.scale != "paper") {
    throw std::invalid_argument("scale must be desk or paper, got '" + config.scale + "'");
  }
  if (config.p < 0) config.p = example.p;
  if (config.cutoff <= 0) config.cutoff = example.cutoff;
  if (config.total_time <= 0.0) {
    config.total_time = example.paper_total_time / (config.scale == "desk" ? kDeskDivisor : 1.0);
  }
  if (config.decorrelation_time <= 0.0) config.decorrelation_time = example.decorrelation_time;
  if (config.space == "auto") config.space = example.reduced ? "reduced" : "full";
  if (config.grid <= 0) config.grid = auto_grid(example, config.oracle_dt);
  if (config.orbit_stride < 1) throw std::invalid_argument("orbit_stride must be >= 1");

  PerturbationSpace space = [&] {
    if (config.space == "reduced") {
      ReducedSpaceSpec spec;
      spec.ambient_d = example.system.dim();
      spec.p = config.p;
      if (spec.ambient_d < 2) throw std::invalid_argument("space = reduced needs d >= 2");
      return reduced_space_basis(spec, example.system.domain, config.cutoff, example.basis_origin);
    }
    if (config.space != "full") throw std::invalid_argument("space must be auto, full or reduced");
    const double count = example.system.dim() * std::pow(config.cutoff, example.system.dim());
    if (count > 1e6) {
      throw std::invalid_argument("full product space would have " + format_real(count) +
                                  " elements; use space = reduced or a smaller cutoff");
    }
    return PerturbationSpace::full_product(example.system.domain, config.p, config.cutoff, example.basis_origin);
  }();

  KdConfig kd;
  kd.total_time = config.total_time;
  kd.decorrelation_time = config.decorrelation_time;
  kd.dt = config.dt;
  kd.burn_in_time = config.burn_in_time;
  kd.seed = config.seed;
  kd.n_chains = config.n_chains;
  kd.n_batches = config.n_batches;
  kd.threads = config.threads;
  kd.validate();
  return ResolvedExperiment{std::move(config), std::move(example), std::move(space), kd};
}

std::string to_toml(const ExperimentConfig& c, Command command)
{
  std::ostringstream s;
  s << "# optresp " << command_name(command) << "\n";
  s << "system = " << toml_string(c.system) << "\n";
  s << "space = " << toml_string(c.space) << "\n";
  s << "p = " << c.p << "\n";
  s << "cutoff = " << c.cutoff << "\n";
  s << "total_time = " << format_real(c.total_time) << "\n";
  s << "decorrelation_time = " << format_real(c.decorrelation_time) << "\n";
  s << "dt = " << format_real(c.dt) << "\n";
  s << "burn_in_time = " << format_real(c.burn_in_time) << "\n";
  s << "n_chains = " << c.n_chains << "\n";
  s << "n_batches = " << c.n_batches << "\n";
  s << "threads = " << c.threads << "\n";
  s << "seed = " << c.seed << "\n";
  s << "scale = " << toml_string(c.scale) << "\n";
  s << "gammas = [";
  for (std::size_t i = 0; i < c.gammas.size(); ++i) s << (i ? ", " : "") << format_real(c.gammas[i]);
  s << "]\n";
  s << "field = " << toml_string(c.field) << "\n";
  s << "grid = " << c.grid << "\n";
  s << "oracle_dt = " << format_real(c.oracle_dt) << "\n";
  s << "fd_delta = " << format_real(c.fd_delta) << "\n";
  s << "orbit_time = " << format_real(c.orbit_time) << "\n";
  s << "orbit_stride = " << c.orbit_stride << "\n";
  s << "out = " << toml_string(c.out) << "\n";
  return s.str();
}

namespace {

struct NamedField {
  VectorField field;
  std::string name;
};

NamedField select_field(const ResolvedExperiment& r, const std::vector<ResponseEstimate>* basis_estimates)
{
  if (r.config.field == "eta_opt") {
    if (basis_estimates == nullptr) throw std::logic_error("select_field: eta_opt needs basis estimates");
    const OptimalPerturbation opt = assemble_optimal_perturbation(r.space, riesz_from(r.space, *basis_estimates));
    return {opt.field, "eta_opt"};
  }
  const BasisLabel label = parse_basis_label(r.config.field);
  const int i = r.space.find(label);
  if (i < 0) throw std::invalid_argument("field '" + r.config.field + "' is not an element of the space");
  return {r.space.field(i), label_text(label)};
}

void run_optimize(const ResolvedExperiment& r, Outputs& out, bool with_optimum)
{
  const auto estimates = estimate_basis_responses(r.example.system, r.example.observable, r.space, r.kd);
  write_coefficients(r.space, estimates, out("coefficients.csv"));
  if (!with_optimum) return;
  const RieszVector riesz = riesz_from(r.space, estimates);
  const OptimalPerturbation opt = assemble_optimal_perturbation(r.space, riesz);
  write_riesz_csv(RieszVector{riesz.labels, opt.coefficients}, out("eta_opt.csv"));
  const int top = argmax_abs(opt.coefficients);
  write_summary({{"v_norm", format_real(opt.norm)},
                 {"eta_opt_norm", format_real(r.space.norm(opt.coefficients))},
                 {"argmax", label_text(riesz.labels[static_cast<std::size_t>(top)])},
                 {"argmax_coefficient", format_real(opt.coefficients(top))},
                 {"n_samples", std::to_string(estimates.front().n_samples)}},
                out("summary.csv"));
}

void run_sweep(const ResolvedExperiment& r, Outputs& out)
{
  std::vector<ResponseEstimate> basis;
  if (r.config.field == "eta_opt") basis = estimate_basis_responses(r.example.system, r.example.observable, r.space, r.kd);
  const NamedField named = select_field(r, basis.empty() ? nullptr : &basis);
  const auto estimate =
      estimate_responses(r.example.system, r.example.observable, std::vector<VectorField>{named.field}, r.kd).front();
  const auto sweep = sweep_observable(r.example.system, named.field, r.config.gammas, r.example.observable, r.kd);

  CsvTable table{{"gamma", "mean", "std_error"}, {}};
  for (const SweepPoint& p : sweep) table.add_row({format_real(p.gamma), format_real(p.mean), format_real(p.std_error)});
  emit_csv(table, out("sweep.csv"));

  std::vector<std::pair<std::string, std::string>> summary{{"field", named.name},
                                                           {"response", format_real(estimate.value)},
                                                           {"response_std_error", format_real(estimate.std_error)}};
  if (sweep.size() >= 3) {
    const SlopeCheck check = slope_match_check(sweep, estimate);
    summary.insert(summary.end(), {{"slope", format_real(check.slope)},
                                   {"slope_std_error", format_real(check.slope_std_error)},
                                   {"combined_std_error", format_real(check.combined_std_error)},
                                   {"deviation", format_real(check.deviation)},
                                   {"slope_matches", check.pass ? "true" : "false"}});
  }
  write_summary(summary, out("summary.csv"));
}

void run_oracle(const ResolvedExperiment& r, Outputs& out)
{
  const int d = r.example.system.dim();
  if (d > 2) {
    throw std::invalid_argument("oracle: unsupported dimension d = " + std::to_string(d) +
                                "; the transfer-operator oracle handles d <= 2");
  }
  const Grid grid(r.example.system.domain, r.config.grid);
  const double dt = r.config.oracle_dt;
  const ResolventOracle oracle(r.example.system, grid, dt);
  const SpectralDiagnostics spectral = spectral_diagnostics(oracle.kernel(), r.config.seed);

  std::vector<std::pair<std::string, std::string>> rows{
      {"grid_m", std::to_string(grid.m_per_dim())},
      {"dt", format_real(dt)},
      {"density_mass", format_real(oracle.density().mass())},
      {"lambda2_modulus", format_real(spectral.lambda2_modulus)},
      {"min_entry", format_real(spectral.min_entry)},
      {"contraction_rho", format_real(spectral.contraction_rho)},
      {"contraction_bound", format_real(spectral.contraction_bound)}};

  VectorField field;
  if (r.config.field == "eta_opt") {
    std::vector<ResponseEstimate> exact(static_cast<std::size_t>(r.space.size()));
    for (int i = 0; i < r.space.size(); ++i) {
      exact[static_cast<std::size_t>(i)].value =
          oracle.response(r.space.field(i), r.example.observable, r.config.fd_delta).value;
    }
    const RieszVector riesz = riesz_from(r.space, exact);
    write_riesz_csv(riesz, out("oracle_coefficients.csv"));
    const OptimalPerturbation opt = assemble_optimal_perturbation(r.space, riesz);
    field = opt.field;
    rows.emplace_back("v_norm", format_real(opt.norm));
  } else {
    field = select_field(r, nullptr).field;
  }
  const ResolventResponse response = oracle.response(field, r.example.observable, r.config.fd_delta);
  rows.insert(rows.end(), {{"field", r.config.field},
                           {"response", format_real(response.value)},
                           {"d_mass", format_real(response.d_mass)},
                           {"resolvent_residual", format_real(response.residual)}});

  const std::vector<double> deltas{0.2, 0.1, 0.05, 0.025, 0.0125};
  const ExpansionCheck expansion = first_order_expansion_check(r.example.system, field, oracle.density(), grid, dt, deltas);
  rows.emplace_back("expansion_slope", expansion.exact_zero ? "exact_zero" : format_real(expansion.slope));

  std::vector<double> times;
  for (int k = 1; k <= 1 << 14; k *= 2) times.push_back(k * dt);
  const SdeSystem driftless(r.example.system.domain, zero_field(d), r.example.system.sigma);
  try {
    rows.emplace_back("smoothing_exponent", format_real(l2_smoothing_check(driftless, grid, dt, times).exponent));
    rows.emplace_back("smoothing_exponent_expected", format_real(-d / 4.0));
  } catch (const std::invalid_argument& e) {
    std::cerr << "oracle: smoothing check skipped: " << e.what() << "\n";
  }
  write_summary(rows, out("oracle_report.csv"));
}

void run_simulate(const ResolvedExperiment& r, Outputs& out)
{
  const SdeSystem& system = r.example.system;
  const auto steps = static_cast<std::int64_t>(std::llround(r.config.orbit_time / r.config.dt));
  if (steps < 1) throw std::invalid_argument("orbit_time must cover at least one step");
  EulerMaruyamaChain chain(system, system.domain.centers(), r.config.dt, stream_seed(r.config.seed, 0));
  for (std::int64_t n = 0; n < r.kd.burn_in_steps(); ++n) chain.step();
  CsvTable table{{"t"}, {}};
  for (int i = 1; i <= system.dim(); ++i) table.header.push_back("x_" + std::to_string(i));
  for (std::int64_t n = 0; n <= steps; ++n) {
    if (n > 0) chain.step();
    if (n % r.config.orbit_stride != 0) continue;
    std::vector<std::string> row{format_real(static_cast<double>(n) * r.config.dt)};
    for (int i = 0; i < system.dim(); ++i) row.push_back(format_real(chain.state()(i)));
    table.add_row(std::move(row));
  }
  emit_csv(table, out("orbit.csv"));
}

}  // namespace

std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config, Command command)
{
  const ResolvedExperiment r = resolve_experiment(config);
  Outputs out{r.config.out, {}};
  std::filesystem::create_directories(out.dir);
  switch (command) {
    case Command::respond: run_optimize(r, out, false); break;
    case Command::optimize: run_optimize(r, out, true); break;
    case Command::sweep: run_sweep(r, out); break;
    case Command::oracle: run_oracle(r, out); break;
    case Command::simulate: run_simulate(r, out); break;
  }
  const auto meta = out("metadata.toml");
  std::ofstream file(meta, std::ios::binary);
  file << to_toml(r.config, command);
  if (!file) throw std::runtime_error("cannot write " + meta.string());
  return out.written;
}

namespace {

void add_options(CLI::App& app, ExperimentConfig& c)
{
  app.option_defaults()->always_capture_default();
  app.add_option("--system", c.system, "System id")->check(CLI::IsMember(registered_system_ids()));
  app.add_option("--space", c.space, "Perturbation space")->check(CLI::IsMember({"auto", "full", "reduced"}));
  app.add_option("--p", c.p, "Sobolev order (-1: system default)");
  app.add_option("--cutoff", c.cutoff, "Basis functions per coordinate, N (-1: system default)");
  app.add_option("--total_time", c.total_time, "Sampled time over all chains (<= 0: system default, /5 at desk scale)");
  app.add_option("--decorrelation_time", c.decorrelation_time, "Response horizon W (<= 0: system default)");
  app.add_option("--dt", c.dt, "Euler step");
  app.add_option("--burn_in_time", c.burn_in_time, "Burn-in per chain");
  app.add_option("--n_chains", c.n_chains, "Independent chains");
  app.add_option("--n_batches", c.n_batches, "Batches for batch-means errors (>= 20)");
  app.add_option("--threads", c.threads, "Worker threads");
  app.add_option("--seed", c.seed, "Master seed");
  app.add_option("--scale", c.scale, "Run length preset")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--gammas", c.gammas, "Perturbation amplitudes for sweep")->expected(1, -1);
  app.add_option("--field", c.field, "eta_opt or a basis label j:n_1,...,n_k");
  app.add_option("--grid", c.grid, "Oracle cells per axis (0: coarsest the kernel allows, at least 256 in 1D and 32 in 2D)");
  app.add_option("--oracle_dt", c.oracle_dt, "Oracle time step");
  app.add_option("--fd_delta", c.fd_delta, "Oracle finite-difference step");
  app.add_option("--orbit_time", c.orbit_time, "Orbit length for simulate");
  app.add_option("--orbit_stride", c.orbit_stride, "Steps between orbit samples");
  app.add_option("--out", c.out, "Output directory");
}

std::unique_ptr<CLI::App> make_app(ExperimentConfig& config)
{
  auto app = std::make_unique<CLI::App>("Optimal linear response of SDEs on the flat torus", "optresp");
  app->set_config("--config", "", "TOML configuration file; flags override its values");
  app->allow_config_extras(false);
  app->require_subcommand(1, 1);
  add_options(*app, config);
  app->add_subcommand("respond", "Estimate the response to every basis element")->fallthrough();
  app->add_subcommand("optimize", "Estimate responses and assemble the optimal perturbation")->fallthrough();
  app->add_subcommand("sweep", "Tabulate the perturbed average against gamma for one field")->fallthrough();
  app->add_subcommand("oracle", "Transfer-operator checks (d <= 2)")->fallthrough();
  app->add_subcommand("simulate", "Write a sample orbit")->fallthrough();
  return app;
}

}  // namespace

ParsedArguments parse_arguments(int argc, const char* const* argv)
{
  ParsedArguments parsed;
  auto app = make_app(parsed.config);
  app->parse(argc, argv);
  parsed.command = parse_command(app->get_subcommands().front()->get_name());
  return parsed;
}

int cli_main(int argc, const char* const* argv)
{
  ParsedArguments parsed;
  auto app = make_app(parsed.config);
  try {
    app->parse(argc, argv);
    parsed.command = parse_command(app->get_subcommands().front()->get_name());
  } catch (const CLI::ParseError& e) {
    return app->exit(e);
  }
  try {
    for (const auto& path : run_experiment(parsed.config, parsed.command)) std::cout << path.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "optresp: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace optresp
