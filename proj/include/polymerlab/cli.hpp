#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "polymerlab/environment.hpp"
#include "polymerlab/exponent.hpp"
#include "polymerlab/kernel.hpp"
#include "polymerlab/verify.hpp"

namespace polymerlab::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Invalid configuration; `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Budget {
  double beta = 0.5;
  int paths = 2000;
  int replicas = 100;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int dimension = 1;
  double beta = 0.5;
  KernelSpec kernel{};
  Backend backend = Backend::grid;
  double grid_spacing = 0.0;    // 0: 1/(10 lambda)
  double grid_halfwidth = 0.0;  // 0: sized from the walk length
  std::vector<int> n_grid;
  std::vector<double> alphas;
  double alpha = 0.8;
  double nu = 0.75;
  int paths = 2000;
  int replicas = 100;
  int threads = 0;  // 0: POLYMERLAB_THREADS, else 1
  std::string output_dir;

  struct EnvCheck {
    int seeds = 10000;
    std::vector<std::pair<std::string, std::string>> pairs;
  } env_check;

  struct Lemma {
    int cases = 10;
    int max_atoms = 4;
    int mc_draws = 200000;
    int nodes_per_dim = 0;
  } lemma21, lemma22;

  struct Girsanov {
    int n = 20;
    std::vector<double> lambdas;
    GirsanovRoute route = GirsanovRoute::paired_shift;
    Budget budget;
  } girsanov;

  struct MeanControl {
    std::vector<int> n_grid;
    std::vector<double> betas;
    Budget budget;
  } meancontrol;

  struct Ball {
    std::vector<int> n_grid;
    std::vector<std::vector<int>> centers;
    KernelKind multi_kernel = KernelKind::product_exponential;
    Budget budget;
    int paths_exact = 200;
    int replicas_exact = 50;
  } ball;

  struct Concentration {
    std::vector<int> n_grid;
    std::vector<ConcentrationFunctional> functionals;
    Budget budget;
  } concentration;

  struct Increment {
    int n = 4;
    int j = 4;
    std::vector<int> i;
    int outer = 2000;
    int inner = 2000;
    int paths = 32;
    double beta = 0.5;
  } increment;

  struct XiScan {
    std::vector<ScanEvent> events;
    Budget budget;
  } xi_scan;

  struct FluctFit {
    int bootstrap = 500;
    Budget budget;
  } fluct_fit;

  // Fully resolved configuration, echoed into the manifest.
  nlohmann::json resolved;
};

// The embedded defaults. Section fields set to null inherit the top-level value.
nlohmann::json default_config();

// Overlays `user` on the defaults and validates; throws ConfigError.
RunConfig load_config(const nlohmann::json& user);

// Entry point of the command-line tool. Returns the process exit code:
// 0 all checks pass, 1 a bound check failed, 2 usage or configuration error,
// 3 runtime failure.
int run_cli(int argc, char** argv);

}  // namespace polymerlab::cli
