// Command-line driver for RWRE experiments.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rwre/error.hpp"
#include "rwre/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int threads_from_env() {
  const char* v = std::getenv("RWRE_LAB_THREADS");
  if (!v || !*v) return 1;
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used == std::string(v).size() && n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw rwre::Error(rwre::Errc::ConfigInvalid, std::string("RWRE_LAB_THREADS: not a positive integer: ") + v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiments for random walks in random environments"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> replicas;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool dump_paths = false;
  app.add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--replicas", replicas, "Override the replica count")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory (overrides config.output)");
  app.add_option("--threads", threads, "Worker threads (default: RWRE_LAB_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_flag("--dump-paths", dump_paths, "Write every walk as paths/replica_N.csv");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  rwre::ExperimentConfig config;
  rwre::RunOptions options;
  options.dump_paths = dump_paths;
  try {
    nlohmann::json j = rwre::to_json(rwre::load_config(config_path));
    if (seed) j["seed"] = *seed;
    if (replicas) j["replicas"] = *replicas;
    if (out_dir) j["output"] = *out_dir;
    config = rwre::parse_config(j);
    options.threads = threads ? *threads : threads_from_env();
  } catch (const rwre::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    const rwre::RunManifest m = rwre::run_experiment(config, options);
    std::cout << "config_hash " << m.config_hash << "  seed " << m.seed << "  threads " << m.threads
              << "  wall " << m.wall_time_s << " s\n";
    for (const auto& [name, pass] : m.criteria) std::cout << (pass ? "PASS  " : "FAIL  ") << name << "\n";
    std::cout << "outputs in " << config.output << "\n";
  } catch (const rwre::Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return e.code() == rwre::Errc::ConfigInvalid ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
