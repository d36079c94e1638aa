#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "svbnn/network.hpp"
#include "svbnn/random.hpp"

namespace svbnn {

enum class CovariateLaw { UniformPm1, StdNormal };

std::string to_string(CovariateLaw law);
CovariateLaw covariate_law_from_string(const std::string& s);

// Regression sample plus everything the diagnostics need: the true support
// when one exists, the noiseless target f0 for coverage and Hellinger
// studies, and the law the covariates were drawn from.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> true_support;               // 1-based input indices; empty if unknown.
  std::function<double(const Eigen::VectorXd&)> f0;  // null if unknown
  CovariateLaw law = CovariateLaw::UniformPm1;

  Eigen::Index n() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }
  void validate() const;
};

Eigen::VectorXd sample_covariates(CovariateLaw law, int p, RngStream& rng);

struct TeacherData {
  Dataset data;
  Architecture teacher_arch;
  Eigen::VectorXd teacher_theta;
};

// 20-6-6-1 sigmoid teacher, parameters uniform on (0,1) drawn from
// teacher_seed (defaults to the data seed), X uniform on [-1,1]^20,
// unit Gaussian noise.
TeacherData gen_teacher_dense(Eigen::Index n, std::uint64_t seed, double noise_std = 1.0,
                              std::uint64_t teacher_seed = 0, bool frozen_teacher = false);

// Fixed sparse teacher on inputs {1,2} embedded in p=100: a 100-2-2-1 tanh
// network whose only nonzero parameters sit on those two inputs. X uniform
// on [-1,1]^100, unit Gaussian noise.
TeacherData gen_teacher_sparse(Eigen::Index n, std::uint64_t seed, double noise_std = 1.0);

// The teacher parameter vector of gen_teacher_sparse, exposed for oracles.
Eigen::VectorXd sparse_teacher_theta();
Architecture sparse_teacher_arch();

// f0(x) = 7 x2 / (1 + x1^2) + 5 sin(x3 x4) + 2 x5 with 200 standard-normal
// covariates and unit Gaussian noise; support {1..5}.
Dataset gen_sparse_nonlinear(Eigen::Index n, std::uint64_t seed, double noise_std = 1.0);

struct LinearData {
  Dataset data;
  Eigen::VectorXd beta;
};

// y = X beta + eps with five nonzero coefficients: beta_50 = beta_100 =
// beta_150 = 10, beta_75 = beta_125 = -10 (1-based); standard-normal
// covariates.
LinearData gen_toy_linear(Eigen::Index n = 1000, int p = 200, std::uint64_t seed = 0,
                          double noise_std = 1.0);

// Seeded shuffle split; the first fraction goes to the first component.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double first_fraction,
                                          std::uint64_t seed);

// Header row x1..xp,y then one row per observation.
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace svbnn
