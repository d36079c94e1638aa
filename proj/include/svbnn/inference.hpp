#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "svbnn/network.hpp"
#include "svbnn/random.hpp"
#include "svbnn/simdata.hpp"
#include "svbnn/spikeslab.hpp"

namespace svbnn {

// One parameter draw from the fitted variational posterior: plain
// Bernoulli(phi) masks (no relaxation) and exact zeros where masked.
Eigen::VectorXd sample_posterior_theta(const VariationalParams& params, RngStream& rng);

struct PosteriorEnsemble {
  std::vector<Eigen::VectorXd> thetas;
};

PosteriorEnsemble draw_posterior_ensemble(const VariationalParams& params, int H,
                                          RngStream& rng);

// Posterior mean estimator: average of H forward passes at posterior draws.
Eigen::VectorXd posterior_mean_predict(const VariationalParams& params, const Architecture& arch,
                                       const Eigen::MatrixXd& X, int H, RngStream& rng);

// Mean inclusion probability over all parameters.
double sparsity_hat(const VariationalParams& params);

// 1-based input indices with at least one first-layer inclusion probability
// above the threshold.
std::vector<int> select_inputs(const VariationalParams& params, const Architecture& arch,
                               double threshold = 0.5);

struct SelectionReport {
  std::vector<int> selected;
  double fpr = 0.0;  // percent
  double fnr = 0.0;  // percent
};

SelectionReport fpr_fnr(const std::vector<int>& selected, const std::vector<int>& true_support,
                        int p);

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Equal-tailed credible interval of the response mean at x: empirical
// (alpha/2, 1-alpha/2) quantiles of n_mc sampled forward values.
Interval credible_interval(const VariationalParams& params, const Architecture& arch,
                           const Eigen::VectorXd& x, double level, int n_mc, RngStream& rng);

// For each listed coordinate (1-based), sweeps a grid of equidistant values
// over [-1, 1] substituted into base_point, builds credible intervals, and
// scores how often f0 falls inside; returns the percentage per coordinate
// averaged over grid points and repeats.
std::vector<double> coverage_experiment(const VariationalParams& params,
                                        const Architecture& arch,
                                        const std::function<double(const Eigen::VectorXd&)>& f0,
                                        const std::vector<int>& coords,
                                        const Eigen::VectorXd& base_point, int grid_size,
                                        double level, int n_mc, int repeats, RngStream& rng);

// Squared Hellinger distance estimate between the sampling distributions at
// theta and at the truth: E_X[1 - exp(-(f_theta(X) - f0(X))^2 / (8 sigma_eps^2))],
// with X drawn from the given covariate law.
double hellinger_sq_estimate(const Architecture& arch, const Eigen::VectorXd& theta,
                             const std::function<double(const Eigen::VectorXd&)>& f0,
                             double sigma_eps, int n_mc_x, CovariateLaw law, RngStream& rng);

// Posterior version: a fresh posterior draw of theta for every sampled x.
double hellinger_sq_estimate(const VariationalParams& params, const Architecture& arch,
                             const std::function<double(const Eigen::VectorXd&)>& f0,
                             double sigma_eps, int n_mc_x, CovariateLaw law, RngStream& rng);

}  // namespace svbnn
