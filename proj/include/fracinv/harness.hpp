#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracinv/data.hpp"
#include "fracinv/inverse.hpp"
#include "fracinv/presets.hpp"

namespace fracinv {

/// How gamma is chosen per noise level.
struct GammaSetting {
  enum class Kind { Table, Fixed, DeltaSquared } kind = Kind::Table;
  double value = 0;  // Fixed: gamma itself; DeltaSquared: the constant C in C * epsilon^2 (0 = preset's)

  static GammaSetting parse(const std::string& text);
  std::string describe() const;
  double resolve(const Preset& p, double epsilon) const;
};

/// Effective settings of one invocation after merging preset, config file and flags.
struct RunConfig {
  std::string mode = "experiment";
  std::string preset = "example1";
  std::vector<double> alphas;
  std::vector<double> epsilons;
  GammaSetting gamma;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::optional<int> M, N;  // override the preset grid rule
  std::optional<int> fine_M, fine_N;
  std::optional<double> T;
  int max_iters = 100;
  MetricConfig metric;
  bool metric_set = false;
  SpatialTransfer spatial = SpatialTransfer::Project;
  TimeTransfer temporal = TimeTransfer::Sample;
  bool transfer_set = false;
  std::vector<double> snapshot_times;
  std::string out_dir = "out";
  std::string table_path;  // rates mode input

  /// Reads a JSON object; unknown keys or wrong types throw std::invalid_argument.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;

  /// Preset with the overrides of this config applied; validates ranges.
  Preset resolved_preset() const;
  void validate() const;
};

/// One row of the reproduction table.
struct ExperimentRow {
  double alpha = 0;
  double epsilon = 0;
  double gamma = 0;
  std::uint64_t seed = 0;
  double e_q = 0;
  double e_u = 0;
  double delta = 0;
  int iterations = 0;
};

struct RateRow {
  double alpha = 0;
  std::string quantity;  // "e_q" or "e_u"
  double rate = 0;
  double intercept = 0;
  double residual = 0;
  int levels = 0;
};

/// Fine-grid solution at the true coefficient, reused across noise levels and seeds.
struct ReferenceSolution {
  FemSpace<double> space;
  CQScheme<double> scheme;
  Trajectory<double> trajectory;
};

ReferenceSolution make_reference(const Preset& p, double alpha);

struct SingleRun {
  ExperimentRow row;
  FemSpace<double> space;
  CQScheme<double> scheme;
  InversionResult<double> result;
  ObservationSet observations;
};

SingleRun run_single(const Preset& p, const ReferenceSolution& ref, double alpha, double epsilon, double gamma,
                     std::uint64_t seed);

/// Runs every (alpha, epsilon, seed) combination in order; `on_run` sees each finished run.
std::vector<ExperimentRow> run_experiment(const RunConfig& cfg,
                                          const std::function<void(const SingleRun&)>& on_run = {});

/// Median over seeds per (alpha, epsilon), then log-log fits against epsilon.
std::vector<RateRow> compute_rates(const std::vector<ExperimentRow>& rows);

/// Median over seeds of e_q (or e_u) for each (alpha, epsilon), in first-seen order.
std::vector<ExperimentRow> median_rows(const std::vector<ExperimentRow>& rows);

// CSV output: header row, 17 significant digits, rows in the given order.
std::string format_real(double v);
void write_table_csv(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows);
std::vector<ExperimentRow> read_table_csv(const std::filesystem::path& path);
void write_rates_csv(const std::filesystem::path& path, const std::vector<RateRow>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// q*, I_h q^dag and their difference at the levels closest to the requested times.
void write_snapshot_csv(const std::filesystem::path& path, const SingleRun& run, const Preset& p,
                        const std::vector<double>& times);

/// Nodal values of a trajectory (full node set) at the levels closest to the requested times.
void write_state_csv(const std::filesystem::path& path, const FemSpace<double>& space, const CQScheme<double>& scheme,
                     const Trajectory<double>& traj, const std::vector<double>& times);

std::string version_string();
void write_metadata(const std::filesystem::path& path, const RunConfig& cfg, const nlohmann::json& extra = {});

}  // namespace fracinv
