#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eqt/config.hpp"
#include "eqt/experiments.hpp"

namespace eqt {

// ---------- in-memory datasets ----------

struct PathDataset {
  int d = 3, n_points = 10, levels = 3, degree = 5;
  std::vector<PathSample> samples;
};

struct StressDataset {
  int d = 3;
  double lambda = 1.0, mu = 1.0, eta = 0.2;
  std::vector<NeoHookeanSample> samples;
};

struct SparseDataset {
  int n = 100, d = 5;
  SparseScheme scheme = SparseScheme::BernoulliGaussian;
  CovarianceKind covariance = CovarianceKind::Identity;
  double eps = 0.25;
  std::vector<SparseVectorInstance> samples;
};

/// Per-sample substreams keyed by (seed, base + index); identical output
/// regardless of generation order.
PathDataset gen_path_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                             int count);
StressDataset gen_stress_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                                 int count);
SparseDataset gen_sparse_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                                 int count);

// ---------- dataset files: "EQD1" ----------
// magic "EQD1" | u32 experiment tag (1 paths, 2 stress, 3 sparse) | header |
// packed little-endian f64 records. Layouts documented in the README.

void write_path_dataset(const std::filesystem::path& file, const PathDataset& ds);
PathDataset read_path_dataset(const std::filesystem::path& file);
void write_stress_dataset(const std::filesystem::path& file, const StressDataset& ds);
StressDataset read_stress_dataset(const std::filesystem::path& file);
void write_sparse_dataset(const std::filesystem::path& file, const SparseDataset& ds);
SparseDataset read_sparse_dataset(const std::filesystem::path& file);

/// Tag of the dataset stored in a file (1, 2, or 3).
int dataset_tag(const std::filesystem::path& file);

// ---------- metrics ----------

struct MetricRow {
  long epoch;
  std::string split;  // train | val | test
  std::string metric; // loss | mse | alignment | ...
  double value;
};

void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricRow>& rows);

// ---------- experiment drivers ----------

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  double final_test_metric = 0.0;
  std::map<std::string, double> extra; ///< baseline numbers computed alongside
};

/// Generates the experiment's datasets to out_dir (train/val/test EQD1
/// files plus the resolved config).
std::vector<std::filesystem::path> gen_experiment(const Config& cfg,
                                                  const std::filesystem::path& out_dir);

/// Trains per the config, writes checkpoint + metrics CSV into out_dir, and
/// returns the final test metric (plus reference numbers in `extra`).
TrainResult train_experiment(const Config& cfg, const std::filesystem::path& out_dir);

/// Evaluates a checkpoint on a dataset file; returns the experiment metric
/// (signature loss, stress MSE, or mean alignment).
double eval_experiment(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset);

} // namespace eqt
