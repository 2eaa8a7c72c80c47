#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsesense/classify.hpp"
#include "sparsesense/matrixio.hpp"
#include "sparsesense/sparsesolve.hpp"
#include "sparsesense/synthetic.hpp"

namespace sparsesense {

enum class Strategy { learned_full, learned_subsampled, learned_randproj, random_pixels, full_pca };

const char* to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

struct DatasetRef {
  enum class Kind { synthetic, manifest, matrix };
  Kind kind = Kind::synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path manifest;
  std::filesystem::path matrix;  // n x m CSV
  std::filesystem::path labels;  // m class ids, one per line
  int height = 0;                // optional image shape for matrix datasets
  int width = 0;
};

struct LoadedDataset {
  DataMatrix data;  // uncentered
  int height = 0;
  int width = 0;
};

LoadedDataset load_dataset(const DatasetRef& ref);

struct ExperimentSpec {
  DatasetRef dataset;
  std::vector<int> r_values{20};
  std::vector<int> p_values;  // empty: n / 10
  std::vector<double> lambda_values{0.0};
  std::vector<Strategy> strategies{Strategy::learned_full, Strategy::random_pixels,
                                   Strategy::full_pca};
  std::vector<ClassifierRoute> routes{ClassifierRoute::retrained};
  int iterations = 100;
  double train_fraction = 0.9;
  std::uint64_t base_seed = 0;
  SolverKind solver = SolverKind::convex;
  int greedy_k = 0;
  double epsilon = 1e-10;
  int max_iter = 50000;  // ADMM iteration cap per solve
  bool sensor_maps = false;
  int jobs = 1;
};

void check_spec(const ExperimentSpec& spec);
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const nlohmann::json& j, ExperimentSpec defaults = {});

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};

/// Per class: shuffle, keep floor(fraction * N_j) (clamped to [1, N_j - 1]) for
/// training, the rest for testing. Both lists come back sorted.
SplitIndices stratified_split(std::span<const int> labels, int c, double train_fraction,
                              std::uint64_t seed);

struct CellKey {
  Strategy strategy = Strategy::learned_full;
  ClassifierRoute route = ClassifierRoute::retrained;
  int r = 0;
  int p = 0;  // 0 unless the strategy subsamples
  double lambda = 0.0;
};

struct CellStats {
  CellKey key;
  std::vector<double> accuracies;  // one per iteration
  std::vector<int> sensor_counts;  // one per iteration
  int nonconverged = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_sensors = 0.0;
  double median_sensors = 0.0;
  std::vector<long> sensor_map;  // per-pixel counts, when collected
};

struct ExperimentReport {
  ExperimentSpec spec;
  int n = 0;
  int m = 0;
  int c = 0;
  int height = 0;
  int width = 0;
  std::vector<CellStats> cells;
  double elapsed_seconds = 0.0;
  std::string timestamp;

  const CellStats* find(Strategy strategy, ClassifierRoute route, int r, int p = -1,
                        double lambda = -1.0) const;
};

using ProgressFn = std::function<void(int done, int total)>;

/// Repeated stratified train/test evaluation of every configured strategy.
///
/// Iteration i splits with seed base_seed + i and derives all of its other
/// randomness from that seed, so the report does not depend on the number of
/// worker threads or their scheduling.
ExperimentReport cross_validate(const ExperimentSpec& spec, const LoadedDataset& dataset,
                                const ProgressFn& progress = {});
ExperimentReport cross_validate(const ExperimentSpec& spec, const ProgressFn& progress = {});

/// Coupled-sensor learning across spec.lambda_values, scoring both the induced
/// and the retrained classifier routes.
ExperimentReport sweep_lambda(ExperimentSpec spec, const LoadedDataset& dataset,
                              const ProgressFn& progress = {});

/// Per-pixel selection counts for one pixel-selecting strategy over all iterations.
std::vector<long> sensor_ensemble(ExperimentSpec spec, const LoadedDataset& dataset,
                                  Strategy strategy, const ProgressFn& progress = {});

/// Deterministic report body; the "run_info" key holds the only
/// run-dependent values (timestamp, elapsed time).
nlohmann::json report_json(const ExperimentReport& report);
std::string report_json_text(const ExperimentReport& report, bool include_run_info = true);
std::string report_csv(const ExperimentReport& report);

/// report.json, cells.csv, one gnuplot .dat curve per (strategy, route, p, lambda),
/// and heatmap PGMs for collected sensor maps.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);

}  // namespace sparsesense
