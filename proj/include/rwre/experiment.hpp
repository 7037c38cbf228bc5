#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"

namespace rwre {

enum class ExperimentKind { Lln, RegenTail, Kalikow, Moments, Diagnostics, IsingDemo };

std::string_view experiment_kind_name(ExperimentKind kind) noexcept;

/// A parsed and validated experiment description. Every field has a value
/// after parsing; `to_json` writes all of them, so the canonical form does not
/// depend on which defaults the input relied on.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Lln;
  nlohmann::json environment;
  std::vector<int> ell;
  double zeta = 0.0;
  double kappa = 0.0;
  std::vector<int> L{1};
  std::int64_t horizon = 0;
  std::int64_t replicas = 0;
  std::uint64_t seed = 0;
  std::int64_t survival_window = 1000;  // capped at horizon when not given
  double alpha = 2.0;
  double phi_C = 0.0;      // phi(L) = C exp(-gamma L / sqrt(2))
  double phi_gamma = 1.0;
  double delta = 0.0;
  std::string output = "rwre_out";

  int kalikow_radius = 1;
  std::vector<double> r_values{5.0, 10.0, 20.0};
  std::optional<double> lambda;  // diagnostics; lambda0(delta, |ell|) when absent
  int cs_resolution = 12;
  std::vector<int> snapshot_box;  // ising_demo; empty means no spin snapshot
};

/// Throws ConfigInvalid listing every offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical serialization (sorted keys, output path excluded), as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Environment with master seed 0; replicas reseed it.
EnvironmentModel build_environment(const nlohmann::json& spec);
Direction config_direction(const ExperimentConfig& config);

struct SummaryRow {
  std::string estimator;
  int L = 0;
  double value = 0.0;
  double se = 0.0;
  std::int64_t n = 0;
  double censor_rate = 0.0;
  std::int64_t horizon = 0;
};

inline constexpr const char* kSummaryHeader = "estimator,L,value,se,n,censor_rate,horizon";

/// Throws PreconditionFailed on empty input (no file is created) and IoError on
/// write failure. Files are written to a temporary name and renamed.
void emit_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
void emit_jsonl(const std::vector<nlohmann::json>& records, const std::filesystem::path& path);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct RunOptions {
  int threads = 1;
  bool dump_paths = false;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version;
  double wall_time_s = 0.0;
  int threads = 1;
  std::vector<std::pair<std::string, bool>> criteria;
  std::vector<std::string> files;

  bool all_passed() const;
  nlohmann::json to_json() const;
};

/// The JSON-lines record of one replica. Pure in (config, replica).
nlohmann::json replica_record(const ExperimentConfig& config, const EnvironmentModel& model,
                              std::int64_t replica);

struct Aggregate {
  nlohmann::json report;
  std::vector<SummaryRow> rows;
  std::vector<std::pair<std::string, bool>> criteria;
};

/// Single-threaded post-pass over replica records.
Aggregate aggregate(const ExperimentConfig& config, const EnvironmentModel& model,
                    const std::vector<nlohmann::json>& records);

/// Runs all replicas on a shared work queue, streams replicas.jsonl in replica
/// order, then writes summary.csv, report.json and manifest.json under
/// config.output. Throws ConfigInvalid, IoError.
RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace rwre
