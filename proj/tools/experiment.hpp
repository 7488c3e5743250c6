#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "optresp/response.hpp"
#include "optresp/systems.hpp"

namespace optresp {

enum class Command { respond, optimize, sweep, oracle, simulate };

/// Every experiment parameter. Negative or zero sentinels mean "use the
/// system's default" and are replaced by resolve_experiment.
struct ExperimentConfig {
  std::string system = "kuramoto2";
  std::string space = "auto";  // auto | full | reduced
  int p = -1;
  int cutoff = -1;

  double total_time = -1.0;  // <= 0: the system's reference length, divided by 5 at desk scale
  double decorrelation_time = -1.0;
  double dt = 0.01;
  double burn_in_time = 100.0;
  int n_chains = 1;
  int n_batches = 20;
  int threads = 1;
  std::uint64_t seed = 0;
  std::string scale = "desk";  // desk | paper

  std::vector<double> gammas{-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2};
  std::string field = "eta_opt";  // eta_opt, or a basis label "j:n_1,...,n_k"

  int grid = 0;  // cells per axis for the oracle; 0 picks one automatically
  double oracle_dt = 0.05;
  double fd_delta = 1e-3;

  double orbit_time = 100.0;
  int orbit_stride = 10;

  std::string out = "optresp_out";
};

std::string command_name(Command command);
Command parse_command(const std::string& name);

struct ResolvedExperiment {
  ExperimentConfig config;
  ExampleSystem example;
  PerturbationSpace space;
  KdConfig kd;
};

ResolvedExperiment resolve_experiment(const ExperimentConfig& config);

/// The resolved config as a file the CLI accepts through --config.
std::string to_toml(const ExperimentConfig& config, Command command);

/// Parses "j:n_1,...,n_k".
BasisLabel parse_basis_label(const std::string& text);

/// Runs one command and writes its artifacts plus metadata.toml into config.out.
/// Returns the list of files written.
std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config, Command command);

struct ParsedArguments {
  Command command = Command::respond;
  ExperimentConfig config;
};

/// Command-line parsing, including --config files. Throws CLI::ParseError
/// (help requests included).
ParsedArguments parse_arguments(int argc, const char* const* argv);

int cli_main(int argc, const char* const* argv);

}  // namespace optresp
