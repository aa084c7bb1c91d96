#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "turnpoint/diffusion.hpp"
#include "turnpoint/metrics.hpp"
#include "turnpoint/worldgen.hpp"

namespace turnpoint {

enum class SweepMode { step_switch, block_split, qualitative };

std::string_view to_string(SweepMode m);
std::optional<SweepMode> parse_sweep_mode(std::string_view s);

/// {0.0, 0.1, ..., 1.0}
std::vector<double> default_grid();

struct SweepConfig {
  SweepMode mode = SweepMode::step_switch;
  std::vector<double> grid = default_grid();
  /// "analytic" or a checkpoint path for the neural backend.
  std::string backend = "analytic";
  std::optional<std::filesystem::path> suite_path;
  std::uint64_t suite_seed = 0;
  std::vector<Category> categories;        // empty keeps every category
  std::optional<double> min_event_angle;   // radians
  int max_prompts = 0;                     // 0 keeps every matching prompt
  int repeats = 3;
  std::uint64_t base_seed = 0;
  SamplerConfig sampler;                   // per-run seeds replace sampler.seed
  WorldConfig world;
  std::filesystem::path out_dir;           // empty: nothing written
  int workers = 1;
  double turning_threshold = 0.9;
  bool write_report = true;

  bool uses_analytic_backend() const { return backend == "analytic"; }
  void validate() const;
};

/// Reads a sweep config object; unknown keys are rejected.
SweepConfig sweep_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SweepConfig& cfg);

struct RunRecord {
  std::string run_id;
  SweepMode mode = SweepMode::step_switch;
  Category category = Category::General;
  std::string prompt_id;
  View view = View::third;
  double x = 0.0;
  int setting = 0;  // 1-4 in qualitative mode, else 0
  std::uint64_t seed = 0;
  MetricsRecord metrics;
  double wall_time_ms = 0.0;
  std::string error;  // non-empty when the run failed

  bool ok() const { return error.empty(); }
};

/// FNV-1a 64 over "base_seed:prompt_id:x_index:repeat_index:setting_index".
std::uint64_t run_seed(std::uint64_t base_seed, std::string_view prompt_id, int x_index, int repeat_index,
                       int setting_index);

/// Prompts selected by the config's suite source and filters, in suite order.
std::vector<PromptRecord> select_prompts(const SweepConfig& cfg);

/// Runs every (prompt, x, repeat[, setting]) combination. Records come back
/// in enumeration order whatever the worker count; when out_dir is set,
/// runs.csv is streamed in that order as runs complete, failures go to
/// errors.csv, and (with write_report) the aggregate report is emitted.
std::vector<RunRecord> run_sweep(const SweepConfig& cfg);

/// One probed generation outside a sweep.
struct SingleRun {
  Trajectory trajectory;  // as sampled, in the record's view
  MetricsRecord metrics;  // measured in third-view coordinates
};

SingleRun run_single(const PromptRecord& rec, SweepMode mode, double x, int setting, const DenoiserBackend& backend,
                     const SamplerConfig& sampler);

inline constexpr std::string_view kRunsHeader =
    "run_id,mode,category,prompt_id,view,x,setting,seed,ta1,ta2,ta_mean,ic,bc,turning_frame,occupancy2,wall_time_ms";

std::string format_double(double v);
std::string runs_csv_row(const RunRecord& r);
void write_runs_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path);

inline constexpr const char* kMetricNames[] = {"ta1", "ta2", "ta_mean", "ic", "bc", "turning_frame", "occupancy2"};
inline constexpr std::size_t kMetricCount = 7;

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  int n = 0;
};

struct AggregateRow {
  SweepMode mode = SweepMode::step_switch;
  Category category = Category::General;
  double x = 0.0;
  int setting = 0;
  int n = 0;
  std::array<MetricStat, kMetricCount> stats;

  const MetricStat& stat(std::string_view metric) const;
};

/// Per (mode, category, x, setting) mean and population std of every metric
/// over successful runs, sorted by key. Independent of input order.
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

void write_aggregates_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);

}  // namespace turnpoint
