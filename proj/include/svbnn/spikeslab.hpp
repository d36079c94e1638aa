#pragma once

#include <Eigen/Dense>

#include "svbnn/network.hpp"
#include "svbnn/random.hpp"

namespace svbnn {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Mixture prior on each network parameter: a point mass at zero with weight
// 1 - lambda and a centered Gaussian slab with variance sigma0_sq.
struct SpikeSlabPrior {
  double sigma0_sq = 2.0;
  double lambda = 0.5;

  void validate() const;
};

struct Temperature {
  double tau = 0.5;

  void validate() const;
};

// Mean-field variational family, one (mu, sigma', phi') triple per parameter.
// Raw coordinates are unconstrained; the transforms
//   sigma = log(1 + exp(sigma')),  phi = 1 / (1 + exp(phi'))
// keep the slab deviation positive and the inclusion probability in (0,1).
struct VariationalParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma_raw;
  Eigen::VectorXd phi_raw;

  Eigen::Index size() const { return mu.size(); }

  Eigen::VectorXd sigma() const;
  Eigen::VectorXd phi() const;
  // log phi and log(1 - phi) computed from the raw values; stable for phi
  // arbitrarily close to either end.
  Eigen::VectorXd log_phi() const;
  Eigen::VectorXd log1m_phi() const;

  static VariationalParams zeros(Eigen::Index T);
  void validate() const;
};

// One reparameterized draw of the whole parameter vector.
struct MaskedThetaSample {
  Eigen::VectorXd eps;         // standard Gaussian draws
  Eigen::VectorXd u;           // uniform (0,1) draws
  Eigen::VectorXd gamma_soft;  // relaxed mask in (0,1)
  Eigen::VectorXd gamma_hard;  // 0/1 mask, 1 exactly when gamma_soft > 0.5
  Eigen::VectorXd theta;       // hard assembly, exact zeros where masked
  Eigen::VectorXd theta_soft;  // relaxed assembly used in the backward pass
};

enum class AssembleMode { Hard, Soft };

// Prior inclusion probability from the sample size and the shape of the
// fitted network: log(lambda^-1) = log T + delta ((L+1) log N + log(sqrt(n) p)).
// Requires equal hidden widths N; natural logarithms throughout.
double lambda_opt(const Architecture& arch, Eigen::Index n, double delta = 0.1);

// Relaxed Bernoulli draw: gamma = logistic((logit(phi) + logit(u)) / tau).
// The logit argument is clamped to [-35, 35], which cannot move the draw
// across the 0.5 threshold.
double gumbel_softmax_sample(double phi, Temperature tau, double u);

struct MaskSample {
  Eigen::VectorXd u;
  Eigen::VectorXd gamma_soft;
  Eigen::VectorXd gamma_hard;
};

MaskSample sample_mask(const VariationalParams& params, Temperature tau, RngStream& rng);

// theta_i = mask_i * (mu_i + sigma_i eps_i); hard mode uses the 0/1 mask and
// produces exact zeros, soft mode uses the relaxed mask.
Eigen::VectorXd assemble_theta(const VariationalParams& params, const MaskSample& mask,
                               const Eigen::VectorXd& eps, AssembleMode mode);

MaskedThetaSample sample_masked_theta(const VariationalParams& params, Temperature tau,
                                      RngStream& rng);

// Generalized inverse of the mixture CDF
//   F(t) = (1 - phi) 1(t >= 0) + phi Phi((t - mu) / sigma):
// with a = phi Phi(-mu/sigma), u < a lands in the negative slab branch,
// u in [a, a + 1 - phi] on the atom at zero, and larger u in the positive
// branch.
double inverse_cdf_sample(double mu, double sigma, double phi, double u);

// Inverse-CDF draw together with its pathwise derivatives in (mu, sigma, phi)
// at fixed u; the atom region contributes exact zeros.
struct InverseCdfDraw {
  double theta = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
  double d_phi = 0.0;
};

InverseCdfDraw inverse_cdf_draw(double mu, double sigma, double phi, double u);

// KL(Bern(phi) || Bern(lambda)) with the 0 log 0 = 0 convention.
double kl_bernoulli(double phi, double lambda);

// KL(N(mu, sigma^2) || N(0, sigma0_sq)).
double kl_gaussian(double mu, double sigma, double sigma0_sq);

// Sum over parameters of kl_bernoulli(phi_i, lambda) plus
// phi_i * kl_gaussian(mu_i, sigma_i, sigma0_sq); evaluated from the raw
// coordinates so that phi close to 0 or 1 stays finite.
double kl_total(const VariationalParams& params, const SpikeSlabPrior& prior);

struct KlGradient {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma_raw;
  Eigen::VectorXd phi_raw;
};

// Closed-form gradient of kl_total with respect to the raw coordinates.
KlGradient kl_total_gradient(const VariationalParams& params, const SpikeSlabPrior& prior);

}  // namespace svbnn
