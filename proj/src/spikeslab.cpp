#include "svbnn/spikeslab.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "svbnn/normal.hpp"

namespace svbnn {

namespace {

constexpr double kLogitClamp = 35.0;

double clamp_logit(double z) {
  if (z > kLogitClamp) return kLogitClamp;
  if (z < -kLogitClamp) return -kLogitClamp;
  return z;
}

}  // namespace

void SpikeSlabPrior::validate() const {
  if (!(sigma0_sq > 0.0))
    throw std::invalid_argument("prior: sigma0_sq must be positive, got " +
                                std::to_string(sigma0_sq));
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("prior: lambda must lie strictly in (0,1), got " +
                                std::to_string(lambda));
}

void Temperature::validate() const {
  if (!(tau > 0.0))
    throw std::invalid_argument("temperature: tau must be positive, got " + std::to_string(tau));
}

Eigen::VectorXd VariationalParams::sigma() const {
  return sigma_raw.unaryExpr([](double x) { return softplus(x); });
}

Eigen::VectorXd VariationalParams::phi() const {
  return phi_raw.unaryExpr([](double x) { return logistic(-x); });
}

Eigen::VectorXd VariationalParams::log_phi() const {
  return phi_raw.unaryExpr([](double x) { return -softplus(x); });
}

Eigen::VectorXd VariationalParams::log1m_phi() const {
  return phi_raw.unaryExpr([](double x) { return -softplus(-x); });
}

VariationalParams VariationalParams::zeros(Eigen::Index T) {
  VariationalParams p;
  p.mu = Eigen::VectorXd::Zero(T);
  p.sigma_raw = Eigen::VectorXd::Zero(T);
  p.phi_raw = Eigen::VectorXd::Zero(T);
  return p;
}

void VariationalParams::validate() const {
  if (sigma_raw.size() != mu.size() || phi_raw.size() != mu.size())
    throw std::invalid_argument("variational params: mu, sigma_raw, phi_raw sizes differ");
  if (!mu.allFinite() || !sigma_raw.allFinite() || !phi_raw.allFinite())
    throw std::invalid_argument("variational params: non-finite entries");
}

double lambda_opt(const Architecture& arch, Eigen::Index n, double delta) {
  arch.validate();
  if (arch.depth() < 1)
    throw std::invalid_argument("lambda_opt: rule needs at least one hidden layer");
  const int N = arch.hidden.front();
  for (int w : arch.hidden)
    if (w != N)
      throw std::invalid_argument("lambda_opt: rule requires equal hidden widths");
  if (n < 1) throw std::invalid_argument("lambda_opt: sample size must be positive");
  if (!(delta > 0.0)) throw std::invalid_argument("lambda_opt: delta must be positive");

  const double T = static_cast<double>(param_count(arch));
  const double L = arch.depth();
  const double p = arch.input_dim;
  const double log_inv = std::log(T) + delta * ((L + 1.0) * std::log(static_cast<double>(N)) +
                                                0.5 * std::log(static_cast<double>(n)) +
                                                std::log(p));
  return std::exp(-log_inv);
}

double gumbel_softmax_sample(double phi, Temperature tau, double u) {
  tau.validate();
  if (!(phi > 0.0 && phi < 1.0))
    throw std::invalid_argument("gumbel_softmax_sample: phi must lie strictly in (0,1)");
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("gumbel_softmax_sample: u must lie strictly in (0,1)");
  const double eta = logit(phi) + logit(u);
  return logistic(clamp_logit(eta / tau.tau));
}

MaskSample sample_mask(const VariationalParams& params, Temperature tau, RngStream& rng) {
  params.validate();
  tau.validate();
  const Eigen::Index T = params.size();
  MaskSample s;
  s.u = rng.uniform_vector(T);
  s.gamma_soft.resize(T);
  s.gamma_hard.resize(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    // logit(phi_i) = -phi_raw_i; computing it from the raw value keeps the
    // logit exact even when phi_i is within machine epsilon of 0 or 1.
    const double eta = -params.phi_raw[i] + logit(s.u[i]);
    const double soft = logistic(clamp_logit(eta / tau.tau));
    s.gamma_soft[i] = soft;
    s.gamma_hard[i] = soft > 0.5 ? 1.0 : 0.0;
  }
  return s;
}

Eigen::VectorXd assemble_theta(const VariationalParams& params, const MaskSample& mask,
                               const Eigen::VectorXd& eps, AssembleMode mode) {
  const Eigen::Index T = params.size();
  if (eps.size() != T || mask.gamma_soft.size() != T || mask.gamma_hard.size() != T)
    throw std::invalid_argument("assemble_theta: vector lengths must all equal T");
  const Eigen::VectorXd slab = params.mu + params.sigma().cwiseProduct(eps);
  const Eigen::VectorXd& g = mode == AssembleMode::Hard ? mask.gamma_hard : mask.gamma_soft;
  return g.cwiseProduct(slab);
}

MaskedThetaSample sample_masked_theta(const VariationalParams& params, Temperature tau,
                                      RngStream& rng) {
  MaskedThetaSample s;
  MaskSample mask = sample_mask(params, tau, rng);
  s.eps = rng.gaussian_vector(params.size());
  s.theta = assemble_theta(params, mask, s.eps, AssembleMode::Hard);
  s.theta_soft = assemble_theta(params, mask, s.eps, AssembleMode::Soft);
  s.u = std::move(mask.u);
  s.gamma_soft = std::move(mask.gamma_soft);
  s.gamma_hard = std::move(mask.gamma_hard);
  return s;
}

double inverse_cdf_sample(double mu, double sigma, double phi, double u) {
  return inverse_cdf_draw(mu, sigma, phi, u).theta;
}

InverseCdfDraw inverse_cdf_draw(double mu, double sigma, double phi, double u) {
  if (!(sigma > 0.0)) throw std::invalid_argument("inverse_cdf_sample: sigma must be positive");
  if (!(phi >= 0.0 && phi <= 1.0))
    throw std::invalid_argument("inverse_cdf_sample: phi must lie in [0,1]");
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("inverse_cdf_sample: u must lie strictly in (0,1)");

  InverseCdfDraw d;
  if (phi <= 0.0) return d;  // pure spike: the atom carries all mass

  const double a = phi * norm_cdf(-mu / sigma);
  // Quantile arguments are kept strictly inside (0,1); draws can graze the
  // region borders through rounding.
  auto safe_v = [](double v) {
    const double lo = 1e-300, hi = 1.0 - 1e-16;
    return v < lo ? lo : (v > hi ? hi : v);
  };
  if (u < a) {
    const double v = safe_v(u / phi);
    const double q = norm_quantile(v);
    d.theta = sigma * q + mu;
    d.d_mu = 1.0;
    d.d_sigma = q;
    d.d_phi = -sigma * v / (phi * std::max(norm_pdf(q), 1e-300));
  } else if (u <= a + (1.0 - phi)) {
    // atom at zero: theta and all pathwise derivatives vanish
  } else {
    const double v = safe_v((u - (1.0 - phi)) / phi);
    const double q = norm_quantile(v);
    d.theta = sigma * q + mu;
    d.d_mu = 1.0;
    d.d_sigma = q;
    d.d_phi = sigma * (1.0 - u) / (phi * phi * std::max(norm_pdf(q), 1e-300));
  }
  return d;
}

double kl_bernoulli(double phi, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("kl_bernoulli: lambda must lie strictly in (0,1)");
  if (!(phi >= 0.0 && phi <= 1.0))
    throw std::invalid_argument("kl_bernoulli: phi must lie in [0,1]");
  double v = 0.0;
  if (phi > 0.0) v += phi * (std::log(phi) - std::log(lambda));
  if (phi < 1.0) v += (1.0 - phi) * (std::log1p(-phi) - std::log1p(-lambda));
  return v;
}

double kl_gaussian(double mu, double sigma, double sigma0_sq) {
  if (!(sigma > 0.0)) throw std::invalid_argument("kl_gaussian: sigma must be positive");
  if (!(sigma0_sq > 0.0))
    throw std::invalid_argument("kl_gaussian: sigma0_sq must be positive");
  return 0.5 * std::log(sigma0_sq) - std::log(sigma) +
         (sigma * sigma + mu * mu) / (2.0 * sigma0_sq) - 0.5;
}

double kl_total(const VariationalParams& params, const SpikeSlabPrior& prior) {
  params.validate();
  prior.validate();
  const double log_lambda = std::log(prior.lambda);
  const double log1m_lambda = std::log1p(-prior.lambda);
  double total = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double pr = params.phi_raw[i];
    const double phi = logistic(-pr);
    const double one_m_phi = logistic(pr);
    const double log_phi = -softplus(pr);
    const double log1m_phi = -softplus(-pr);
    const double sigma = softplus(params.sigma_raw[i]);
    total += phi * (log_phi - log_lambda) + one_m_phi * (log1m_phi - log1m_lambda) +
             phi * kl_gaussian(params.mu[i], sigma, prior.sigma0_sq);
  }
  return total;
}

KlGradient kl_total_gradient(const VariationalParams& params, const SpikeSlabPrior& prior) {
  params.validate();
  prior.validate();
  const Eigen::Index T = params.size();
  const double log_lambda = std::log(prior.lambda);
  const double log1m_lambda = std::log1p(-prior.lambda);
  KlGradient g;
  g.mu.resize(T);
  g.sigma_raw.resize(T);
  g.phi_raw.resize(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double pr = params.phi_raw[i];
    const double phi = logistic(-pr);
    const double one_m_phi = logistic(pr);
    const double log_phi = -softplus(pr);
    const double log1m_phi = -softplus(-pr);
    const double sr = params.sigma_raw[i];
    const double sigma = softplus(sr);
    const double mu = params.mu[i];

    g.mu[i] = phi * mu / prior.sigma0_sq;

    const double dkl_dsigma = phi * (-1.0 / sigma + sigma / prior.sigma0_sq);
    g.sigma_raw[i] = dkl_dsigma * logistic(sr);  // d sigma / d sigma' = logistic(sigma')

    const double dkl_dphi = (log_phi - log_lambda) - (log1m_phi - log1m_lambda) +
                            kl_gaussian(mu, sigma, prior.sigma0_sq);
    g.phi_raw[i] = dkl_dphi * (-phi * one_m_phi);  // d phi / d phi' = -phi (1 - phi)
  }
  return g;
}

}  // namespace svbnn
