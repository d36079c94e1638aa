#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "svbnn/inference.hpp"
#include "svbnn/simdata.hpp"
#include "svbnn/trainer.hpp"

namespace svbnn {

enum class GeneratorKind { TeacherDense, TeacherSparse, SparseNonlinear, ToyLinear };

std::string to_string(GeneratorKind k);
GeneratorKind generator_kind_from_string(const std::string& s);
int default_input_dim(GeneratorKind k);

struct GeneratorSettings {
  GeneratorKind kind = GeneratorKind::TeacherSparse;
  Eigen::Index n = 500;
  Eigen::Index test_n = 0;  // 0 resolves to n
  double noise_std = 1.0;
  int p = 0;  // 0 resolves to the kind's dimension; only toy_linear may differ
  bool frozen_teacher = false;     // teacher_dense: reuse one teacher across replications
  std::uint64_t teacher_seed = 0;  // teacher draw seed when frozen

  int input_dim() const { return p > 0 ? p : default_input_dim(kind); }
  Eigen::Index resolved_test_n() const { return test_n > 0 ? test_n : n; }
  void validate() const;
};

struct PriorSettings {
  double sigma0_sq = 2.0;
  bool lambda_is_opt = true;
  double lambda = 0.0;  // explicit prior inclusion probability when not "opt"
  double delta = 0.1;

  void validate() const;
};

struct MetricsToggles {
  bool selection = true;
  bool coverage = false;
  bool hellinger = false;
  int hellinger_n = 2000;
};

struct CoverageSettings {
  std::vector<int> coords{1};  // 1-based input coordinates
  int grid = 200;
  int repeats = 10;
  int n_mc = 600;
  double level = 0.95;
  std::vector<double> base_point;  // empty resolves to the zero vector
};

struct ExperimentConfig {
  std::string name = "experiment";
  GeneratorSettings generator;
  Architecture fit;
  PriorSettings prior;
  TrainingConfig training;
  int replications = 5;
  std::uint64_t seed = 1;
  int posterior_samples = 30;  // H
  MetricsToggles metrics;
  CoverageSettings coverage;
  std::string output_dir = "out";

  void validate() const;
  double resolve_lambda(Eigen::Index n_train) const;

  // Strict parser: unknown keys, missing required fields, and type errors
  // are reported with the offending section and field named.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  // `resolved` adds the numeric lambda, the replication seed list, and the
  // filled-in defaults; that form is what resolved.json holds.
  nlohmann::json to_json(bool resolved = false) const;
};

struct ReplicationResult {
  int rep = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;
  double train_rmse = std::numeric_limits<double>::quiet_NaN();
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double sparsity = std::numeric_limits<double>::quiet_NaN();
  double fpr = std::numeric_limits<double>::quiet_NaN();
  double fnr = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> coverage;  // per configured coordinate
  double hellinger = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
  LossTrace trace;
};

struct ResultTable {
  std::vector<ReplicationResult> rows;
  std::vector<int> coverage_coords;  // configured coordinates, CSV column order
  bool has_hellinger = false;

  std::vector<std::string> metric_columns() const;
  double metric(const ReplicationResult& row, const std::string& name) const;
  // Mean and sample standard deviation over rows with status "ok"; sd is NaN
  // with fewer than two such rows.
  double mean_of(const std::string& name) const;
  double sd_of(const std::string& name) const;
};

std::uint64_t fnv1a_hash(const std::string& bytes);
std::string config_hash_hex(const ExperimentConfig& config);

// Runs one replication start to finish: data, training, posterior metrics.
// Deterministic given (config, rep).
ReplicationResult run_replication(const ExperimentConfig& config, int rep);

// Fans replications over `jobs` workers, stages per-replication outputs,
// merges results.csv / results.json / trace_<rep>.csv / resolved.json into
// out_dir. A replication failure becomes a marker row, not an abort.
ResultTable run_experiment(const ExperimentConfig& config,
                           const std::filesystem::path& out_dir, int jobs);

struct SweepPoint {
  double lambda = 0.0;
  double train_rmse_mean = 0.0;
  double train_rmse_sd = 0.0;
  double test_rmse_mean = 0.0;
  double test_rmse_sd = 0.0;
  double sparsity_mean = 0.0;
};

// Runs the experiment once per lambda (ascending) and writes sweep.csv.
std::vector<SweepPoint> sweep_lambda(const ExperimentConfig& config,
                                     std::vector<double> lambdas,
                                     const std::filesystem::path& out_dir, int jobs);

}  // namespace svbnn
