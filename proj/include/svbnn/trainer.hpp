#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "svbnn/network.hpp"
#include "svbnn/random.hpp"
#include "svbnn/simdata.hpp"
#include "svbnn/spikeslab.hpp"

namespace svbnn {

enum class Optimizer { Sgd, Adam };
enum class Reparam { GumbelSoftmax, InverseCdf };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);
std::string to_string(Reparam r);
Reparam reparam_from_string(const std::string& s);

struct TrainingConfig {
  int minibatch = 128;
  int mc_samples = 1;        // K
  Temperature tau{0.5};
  double learning_rate = 5e-3;
  int epochs = 1000;
  Optimizer optimizer = Optimizer::Adam;
  double sigma_eps = 1.0;    // known observation-noise std
  std::uint64_t seed = 0;
  double init_phi = 0.99;
  double init_sigma_raw = -5.0;  // raw slab-scale init, sigma = softplus of it
  Reparam reparam = Reparam::GumbelSoftmax;
  double grad_clip = 10.0;   // global gradient-norm cap

  void validate(Eigen::Index n) const;
};

// sum_i [ -log(2 pi sigma_eps^2)/2 - (y_i - yhat_i)^2 / (2 sigma_eps^2) ]
double gaussian_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double sigma_eps);

// One iteration's Monte Carlo draws, row k holding the k-th sample. The
// Gumbel-softmax path consumes both matrices; the inverse-CDF path uses the
// uniforms only.
struct McDraws {
  Eigen::MatrixXd eps;  // K x T standard Gaussians
  Eigen::MatrixXd u;    // K x T uniforms in (0,1)
};

McDraws sample_draws(Eigen::Index T, int K, RngStream& rng);

struct ElboTerms {
  double total = 0.0;
  double recon = 0.0;  // -(n/m)(1/K) sum of minibatch log-likelihoods
  double kl = 0.0;
};

// Stochastic negative ELBO on one minibatch with the draws fixed by the
// caller. Hard mode assembles theta with exact zeros (the trace and every
// reported loss use it); soft mode exists for gradient checks against the
// surrogate that elbo_gradient differentiates.
ElboTerms negative_elbo(const VariationalParams& params, const SpikeSlabPrior& prior,
                        const Architecture& arch, const Eigen::MatrixXd& Xb,
                        const Eigen::VectorXd& yb, Eigen::Index n_total,
                        const TrainingConfig& config, const McDraws& draws,
                        AssembleMode mode = AssembleMode::Hard);

double negative_elbo_estimate(const VariationalParams& params, const SpikeSlabPrior& prior,
                              const Architecture& arch, const Eigen::MatrixXd& Xb,
                              const Eigen::VectorXd& yb, Eigen::Index n_total,
                              const TrainingConfig& config, RngStream& rng);

struct ElboGradient {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma_raw;
  Eigen::VectorXd phi_raw;

  double global_norm() const;
  // Returns the norm before clipping; scales all blocks when it exceeds cap.
  double clip(double cap);
};

// Exact gradient of the training surrogate at fixed draws. Under
// Gumbel-softmax reparameterization the surrogate is the soft-mode
// negative_elbo (straight-through: hard forward, soft backward); under
// inverse-CDF it is the piecewise-smooth hard objective itself.
ElboGradient elbo_gradient(const VariationalParams& params, const SpikeSlabPrior& prior,
                           const Architecture& arch, const Eigen::MatrixXd& Xb,
                           const Eigen::VectorXd& yb, Eigen::Index n_total,
                           const TrainingConfig& config, const McDraws& draws);

ElboGradient elbo_gradient_estimate(const VariationalParams& params, const SpikeSlabPrior& prior,
                                    const Architecture& arch, const Eigen::MatrixXd& Xb,
                                    const Eigen::VectorXd& yb, Eigen::Index n_total,
                                    const TrainingConfig& config, RngStream& rng);

// Inverse-CDF assembly of the full parameter vector from one row of uniforms,
// with the pathwise derivative of every coordinate.
struct InverseCdfBatch {
  Eigen::VectorXd theta;
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_sigma;
  Eigen::VectorXd d_phi;
};

InverseCdfBatch inverse_cdf_batch(const VariationalParams& params, const Eigen::VectorXd& u);

struct OptimizerState {
  Eigen::VectorXd m_mu, v_mu, m_sigma, v_sigma, m_phi, v_phi;
  long step = 0;

  static OptimizerState init(const TrainingConfig& config, Eigen::Index T);
};

void optimizer_step(OptimizerState& state, VariationalParams& params, const ElboGradient& grad,
                    const TrainingConfig& config);

struct EpochRecord {
  int epoch = 0;       // 1-based
  double elbo = 0.0;   // mean stochastic negative ELBO over the epoch
  double recon = 0.0;
  double kl = 0.0;
  double sparsity = 0.0;  // mean inclusion probability after the epoch
};

using LossTrace = std::vector<EpochRecord>;

struct FitResult {
  VariationalParams params;
  LossTrace trace;
};

VariationalParams init_params(const Architecture& arch, double init_phi, double init_sigma_raw,
                              RngStream& rng);

// Algorithm: per epoch, shuffle and walk the data in ceil(n/m) minibatches;
// per iteration draw fresh (eps, u), record the hard-mode loss, take one
// optimizer step along the surrogate gradient. Deterministic given
// config.seed.
FitResult train(const Dataset& data, const Architecture& arch, const SpikeSlabPrior& prior,
                const TrainingConfig& config);

}  // namespace svbnn
