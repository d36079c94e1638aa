#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <svbnn/normal.hpp>
#include <svbnn/random.hpp>
#include <svbnn/spikeslab.hpp>

#include <cmath>

using namespace svbnn;

namespace {

Architecture make_arch(int p, std::vector<int> hidden) {
  Architecture arch;
  arch.input_dim = p;
  arch.hidden = std::move(hidden);
  arch.activation = Activation::Tanh;
  return arch;
}

double inv_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("normal quantile reproduces reference values") {
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0));
  CHECK(norm_quantile(0.8) == doctest::Approx(0.8416212336).epsilon(1e-9));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.9599639845).epsilon(1e-9));
  CHECK(norm_quantile(0.9) == doctest::Approx(1.2815515655).epsilon(1e-9));
  CHECK(norm_quantile(0.01) == doctest::Approx(-2.3263478740).epsilon(1e-9));
  for (double p : {1e-12, 1e-6, 0.001, 0.1, 0.25, 0.5, 0.77, 0.999, 1 - 1e-9}) {
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(norm_quantile(p) == doctest::Approx(-norm_quantile(1 - p)).scale(1));
  }
  CHECK(std::isinf(norm_quantile(0.0)));
  CHECK(std::isinf(norm_quantile(1.0)));
  CHECK_THROWS_AS((void)norm_quantile(-0.1), std::domain_error);
}

TEST_CASE("prior inclusion rate matches worked shapes") {
  CHECK(std::abs(lambda_opt(make_arch(2, {2}), 100) - 0.07174) < 1e-4);
  CHECK(std::abs(lambda_opt(make_arch(20, {6, 6}), 3000) - 1.655e-3) < 1e-5);
  CHECK(std::abs(lambda_opt(make_arch(200, {7, 7, 7}), 3000) - 1.186e-4) < 1e-6);
}

TEST_CASE("prior inclusion rate shrinks with size and rejects bad shapes") {
  double small = lambda_opt(make_arch(20, {6, 6}), 3000);
  double big = lambda_opt(make_arch(200, {7, 7, 7}), 3000);
  CHECK(big < small);
  CHECK(lambda_opt(make_arch(2, {2}), 100) > lambda_opt(make_arch(2, {2}), 10000));
  CHECK_THROWS_AS((void)lambda_opt(make_arch(5, {3, 4}), 100), std::invalid_argument);
  CHECK_THROWS_AS((void)lambda_opt(make_arch(5, {}), 100), std::invalid_argument);
  CHECK_THROWS_AS((void)lambda_opt(make_arch(5, {3}), 0), std::invalid_argument);
}

TEST_CASE("relaxed mask closed form") {
  Temperature tau{0.5};
  CHECK(gumbel_softmax_sample(0.5, tau, 0.5) == doctest::Approx(0.5));
  CHECK(gumbel_softmax_sample(0.5, Temperature{0.1}, 0.5) == doctest::Approx(0.5));
  CHECK(gumbel_softmax_sample(0.9, tau, 0.5) == doctest::Approx(0.987805).epsilon(1e-5));
  // Monotone in both arguments.
  CHECK(gumbel_softmax_sample(0.4, tau, 0.3) < gumbel_softmax_sample(0.6, tau, 0.3));
  CHECK(gumbel_softmax_sample(0.4, tau, 0.3) < gumbel_softmax_sample(0.4, tau, 0.7));
  CHECK_THROWS_AS((void)gumbel_softmax_sample(0.0, tau, 0.5), std::invalid_argument);
  CHECK_THROWS_AS((void)gumbel_softmax_sample(0.5, tau, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)gumbel_softmax_sample(0.5, Temperature{0.0}, 0.5),
                  std::invalid_argument);
}

TEST_CASE("relaxed mask thresholds reproduce the inclusion rate") {
  RngStream rng(101);
  const int n = 100000;
  for (double phi : {0.1, 0.3, 0.7, 0.9}) {
    for (double t : {0.5, 0.1}) {
      int over = 0;
      RngStream local = rng.derived(static_cast<uint64_t>(phi * 100 + t * 1000));
      for (int i = 0; i < n; ++i)
        if (gumbel_softmax_sample(phi, Temperature{t}, local.uniform()) > 0.5) ++over;
      double frac = static_cast<double>(over) / n;
      double se = std::sqrt(phi * (1 - phi) / n);
      CHECK(std::abs(frac - phi) < 3 * se + 1e-12);
    }
  }
}

TEST_CASE("hard mask events coincide with the exact mixture event") {
  RngStream rng(55);
  VariationalParams params;
  const int t = 1000;
  params.mu = rng.gaussian_vector(t);
  params.sigma_raw = rng.uniform_vector(t, -3, 1);
  params.phi_raw = rng.uniform_vector(t, -4, 4);
  MaskSample mask = sample_mask(params, Temperature{0.5}, rng);
  Eigen::VectorXd phi = params.phi();
  for (int i = 0; i < t; ++i) {
    bool hard = mask.gamma_hard[i] > 0.5;
    bool exact = mask.u[i] > 1.0 - phi[i];
    CHECK(hard == exact);
    CHECK((mask.gamma_soft[i] > 0.5) == exact);
  }
}

TEST_CASE("low temperature drives the relaxation to the corners") {
  RngStream rng(77);
  const int n = 10000;
  int near_corner = 0;
  for (int i = 0; i < n; ++i) {
    double g = gumbel_softmax_sample(0.9, Temperature{0.01}, rng.uniform());
    if (std::min(g, 1.0 - g) < 0.01) ++near_corner;
  }
  CHECK(near_corner >= n * 99 / 100);
}

TEST_CASE("mask sampling is deterministic and calibrated") {
  VariationalParams params = VariationalParams::zeros(64);
  params.phi_raw.setConstant(-20.0);
  RngStream rng(5);
  MaskSample mask = sample_mask(params, Temperature{0.5}, rng);
  CHECK(mask.gamma_hard.minCoeff() == doctest::Approx(1.0));

  RngStream a(9), b(9);
  MaskSample ma = sample_mask(params, Temperature{0.5}, a);
  MaskSample mb = sample_mask(params, Temperature{0.5}, b);
  CHECK((ma.u - mb.u).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((ma.gamma_soft - mb.gamma_soft).lpNorm<Eigen::Infinity>() == 0.0);

  VariationalParams p7 = VariationalParams::zeros(100000);
  p7.phi_raw.setConstant(-logit(0.7));
  RngStream c(31);
  MaskSample mc = sample_mask(p7, Temperature{0.5}, c);
  CHECK(std::abs(mc.gamma_hard.mean() - 0.7) < 0.005);
}

TEST_CASE("assembled coordinates follow the mask") {
  VariationalParams params = VariationalParams::zeros(2);
  params.mu << 1.0, 1.0;
  params.sigma_raw.setConstant(inv_softplus(0.5));
  params.phi_raw.setZero();
  MaskSample mask;
  mask.u = Eigen::VectorXd::Constant(2, 0.5);
  mask.gamma_soft = Eigen::VectorXd::Constant(2, 0.8);
  mask.gamma_hard = Eigen::VectorXd::Zero(2);
  mask.gamma_hard[1] = 1.0;
  Eigen::VectorXd eps = Eigen::VectorXd::Constant(2, 2.0);
  Eigen::VectorXd hard = assemble_theta(params, mask, eps, AssembleMode::Hard);
  CHECK(hard[0] == doctest::Approx(0.0));
  CHECK(hard[1] == doctest::Approx(2.0));
  Eigen::VectorXd soft = assemble_theta(params, mask, eps, AssembleMode::Soft);
  CHECK(soft[0] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(soft[1] == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("quantile-function sampler hits the worked points") {
  CHECK(inverse_cdf_sample(0.0, 1.0, 1.0, 0.5) == doctest::Approx(0.0).scale(1));
  CHECK(inverse_cdf_sample(3.0, 2.0, 0.0, 0.3) == doctest::Approx(0.0));
  CHECK(inverse_cdf_sample(3.0, 2.0, 0.0, 0.9) == doctest::Approx(0.0));
  CHECK(inverse_cdf_sample(0.0, 1.0, 0.5, 0.9) ==
        doctest::Approx(0.841621).epsilon(1e-5));
}

TEST_CASE("quantile-function sampler reproduces the mixture law") {
  const double mu = 0.7, sigma = 0.8, phi = 0.35;
  RngStream rng(202);
  const int n = 100000;
  int zeros = 0;
  double sum = 0.0, sumsq = 0.0;
  int m = 0;
  for (int i = 0; i < n; ++i) {
    double x = inverse_cdf_sample(mu, sigma, phi, rng.uniform());
    if (x == 0.0) {
      ++zeros;
    } else {
      sum += x;
      sumsq += x * x;
      ++m;
    }
  }
  double atom = static_cast<double>(zeros) / n;
  double se_atom = std::sqrt(phi * (1 - phi) / n);
  CHECK(std::abs(atom - (1 - phi)) < 3 * se_atom);
  double mean = sum / m;
  double var = sumsq / m - mean * mean;
  CHECK(std::abs(mean - mu) < 3 * sigma / std::sqrt(static_cast<double>(m)));
  CHECK(std::abs(var - sigma * sigma) <
        3 * sigma * sigma * std::sqrt(2.0 / (m - 1)));
}

TEST_CASE("quantile-function pathwise derivatives match finite differences") {
  const double mu = 0.3, sigma = 0.8, phi = 0.6;
  const double h = 1e-6;
  for (double u : {0.05, 0.15, 0.88, 0.97}) {
    InverseCdfDraw d = inverse_cdf_draw(mu, sigma, phi, u);
    double fd_mu = (inverse_cdf_sample(mu + h, sigma, phi, u) -
                    inverse_cdf_sample(mu - h, sigma, phi, u)) / (2 * h);
    double fd_sigma = (inverse_cdf_sample(mu, sigma + h, phi, u) -
                       inverse_cdf_sample(mu, sigma - h, phi, u)) / (2 * h);
    double fd_phi = (inverse_cdf_sample(mu, sigma, phi + h, u) -
                     inverse_cdf_sample(mu, sigma, phi - h, u)) / (2 * h);
    if (d.theta == 0.0) {
      CHECK(d.d_mu == 0.0);
      CHECK(d.d_sigma == 0.0);
      CHECK(d.d_phi == 0.0);
      CHECK(fd_mu == doctest::Approx(0.0));
    } else {
      CHECK(d.d_mu == doctest::Approx(fd_mu).epsilon(1e-4));
      CHECK(d.d_sigma == doctest::Approx(fd_sigma).epsilon(1e-4));
      CHECK(d.d_phi == doctest::Approx(fd_phi).epsilon(1e-4));
    }
  }
}

TEST_CASE("inclusion divergence closed form") {
  CHECK(kl_bernoulli(0.3, 0.3) == doctest::Approx(0.0).scale(1));
  CHECK(kl_bernoulli(0.9, 0.1) == doctest::Approx(1.75778).epsilon(1e-5));
  CHECK(kl_bernoulli(1.0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  double tiny = kl_bernoulli(0.5, 1e-100);
  CHECK(std::isfinite(tiny));
  CHECK(tiny == doctest::Approx(0.5 * std::log(0.5 / 1e-100) +
                                0.5 * std::log(0.5 / (1 - 1e-100)))
                    .epsilon(1e-10));
  // Enumeration over the two outcomes.
  RngStream rng(303);
  for (int i = 0; i < 100; ++i) {
    double phi = rng.uniform(0.02, 0.98);
    double lam = rng.uniform(0.02, 0.98);
    double direct = phi * std::log(phi / lam) +
                    (1 - phi) * std::log((1 - phi) / (1 - lam));
    CHECK(kl_bernoulli(phi, lam) == doctest::Approx(direct).epsilon(1e-12));
  }
}

namespace {

// Trapezoid integral of q log(q/p) for q = N(mu, sigma^2), p = N(0, sigma0_sq).
double kl_gaussian_by_integration(double mu, double sigma, double sigma0_sq) {
  const double lo = mu - 15 * sigma, hi = mu + 15 * sigma;
  const int n = 40001;
  const double dx = (hi - lo) / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = lo + i * dx;
    double zq = (x - mu) / sigma;
    double logq = -0.5 * std::log(2 * M_PI) - std::log(sigma) - 0.5 * zq * zq;
    double logp = -0.5 * std::log(2 * M_PI * sigma0_sq) - x * x / (2 * sigma0_sq);
    double f = std::exp(logq) * (logq - logp);
    acc += (i == 0 || i == n - 1) ? 0.5 * f : f;
  }
  return acc * dx;
}

}  // namespace

TEST_CASE("slab divergence closed form and integration oracle") {
  CHECK(kl_gaussian(0.0, std::sqrt(2.0), 2.0) == doctest::Approx(0.0).scale(1));
  CHECK(kl_gaussian(1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_gaussian(0.0, 1.0, 2.0) == doctest::Approx(0.096574).epsilon(1e-5));
  RngStream rng(404);
  for (int i = 0; i < 20; ++i) {
    double mu = rng.uniform(-2, 2);
    double sigma = rng.uniform(0.3, 2.0);
    double s0 = rng.uniform(0.5, 4.0);
    CHECK(std::abs(kl_gaussian(mu, sigma, s0) -
                   kl_gaussian_by_integration(mu, sigma, s0)) < 1e-6);
  }
}

TEST_CASE("total divergence composes per coordinate") {
  SpikeSlabPrior prior;
  prior.sigma0_sq = 1.0;
  prior.lambda = 0.5;
  VariationalParams params = VariationalParams::zeros(1);
  params.mu << 1.0;
  params.sigma_raw << inv_softplus(1.0);
  params.phi_raw << -40.0;  // phi ~ 1
  CHECK(kl_total(params, prior) == doctest::Approx(1.193147).epsilon(1e-5));

  // Prior-matching parameters carry zero divergence.
  SpikeSlabPrior match;
  match.sigma0_sq = 2.0;
  match.lambda = 0.3;
  VariationalParams pm = VariationalParams::zeros(5);
  pm.sigma_raw.setConstant(inv_softplus(std::sqrt(2.0)));
  pm.phi_raw.setConstant(-logit(0.3));
  CHECK(kl_total(pm, match) == doctest::Approx(0.0).scale(1));
}

TEST_CASE("total divergence matches enumeration plus integration oracle") {
  RngStream rng(505);
  SpikeSlabPrior prior;
  prior.sigma0_sq = 1.7;
  prior.lambda = 0.22;
  const int t = 10;
  VariationalParams params;
  params.mu = rng.uniform_vector(t, -1.5, 1.5);
  params.sigma_raw = rng.uniform_vector(t, -1.5, 1.0);
  params.phi_raw = rng.uniform_vector(t, -2.0, 2.0);
  Eigen::VectorXd phi = params.phi();
  Eigen::VectorXd sigma = params.sigma();
  double oracle = 0.0;
  for (int i = 0; i < t; ++i) {
    oracle += phi[i] * std::log(phi[i] / prior.lambda) +
              (1 - phi[i]) * std::log((1 - phi[i]) / (1 - prior.lambda));
    oracle += phi[i] * kl_gaussian_by_integration(params.mu[i], sigma[i],
                                                  prior.sigma0_sq);
  }
  CHECK(std::abs(kl_total(params, prior) - oracle) < 1e-3);
}

TEST_CASE("total divergence matches a plain Monte Carlo estimate") {
  RngStream rng(606);
  SpikeSlabPrior prior;
  prior.sigma0_sq = 2.0;
  prior.lambda = 0.35;
  const int t = 10;
  VariationalParams params;
  params.mu = rng.uniform_vector(t, -1, 1);
  params.sigma_raw = rng.uniform_vector(t, -1, 1);
  params.phi_raw = rng.uniform_vector(t, -1.5, 1.5);
  Eigen::VectorXd phi = params.phi();
  Eigen::VectorXd sigma = params.sigma();
  Eigen::VectorXd klg(t);
  for (int i = 0; i < t; ++i)
    klg[i] = kl_gaussian(params.mu[i], sigma[i], prior.sigma0_sq);
  const int n = 1000000;
  double acc = 0.0, accsq = 0.0;
  for (int s = 0; s < n; ++s) {
    double v = 0.0;
    for (int i = 0; i < t; ++i) {
      bool on = rng.uniform() < phi[i];
      v += on ? std::log(phi[i] / prior.lambda) + klg[i]
              : std::log((1 - phi[i]) / (1 - prior.lambda));
    }
    acc += v;
    accsq += v * v;
  }
  double mc = acc / n;
  double se = std::sqrt((accsq / n - mc * mc) / n);
  CHECK(std::abs(kl_total(params, prior) - mc) < std::max(1e-3, 4 * se));
}

TEST_CASE("divergence gradient matches central differences") {
  RngStream rng(707);
  SpikeSlabPrior prior;
  prior.sigma0_sq = 1.3;
  prior.lambda = 0.15;
  const int t = 6;
  VariationalParams params;
  params.mu = rng.uniform_vector(t, -1.5, 1.5);
  params.sigma_raw = rng.uniform_vector(t, -1.0, 1.0);
  params.phi_raw = rng.uniform_vector(t, -2.0, 2.0);
  KlGradient grad = kl_total_gradient(params, prior);
  const double h = 1e-6;
  auto check_coord = [&](Eigen::VectorXd& v, int i, double analytic) {
    double keep = v[i];
    v[i] = keep + h;
    double up = kl_total(params, prior);
    v[i] = keep - h;
    double dn = kl_total(params, prior);
    v[i] = keep;
    double fd = (up - dn) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
    CHECK(std::abs(fd - analytic) / denom < 1e-6);
  };
  for (int i = 0; i < t; ++i) {
    check_coord(params.mu, i, grad.mu[i]);
    check_coord(params.sigma_raw, i, grad.sigma_raw[i]);
    check_coord(params.phi_raw, i, grad.phi_raw[i]);
  }
}

TEST_CASE("raw transforms stay finite at extreme settings") {
  VariationalParams params = VariationalParams::zeros(3);
  params.phi_raw << -700.0, 700.0, 0.0;
  Eigen::VectorXd phi = params.phi();
  CHECK(phi[0] == doctest::Approx(1.0));
  CHECK(phi[1] == doctest::Approx(0.0).scale(1));
  CHECK(phi[2] == doctest::Approx(0.5));
  CHECK(std::isfinite(params.log_phi()[1]));
  CHECK(std::isfinite(params.log1m_phi()[0]));
  SpikeSlabPrior prior;
  prior.lambda = 1e-100;
  CHECK(std::isfinite(kl_total(params, prior)));
}

TEST_CASE("configuration validation rejects bad values") {
  SpikeSlabPrior prior;
  prior.sigma0_sq = 0.0;
  CHECK_THROWS_AS(prior.validate(), std::invalid_argument);
  prior.sigma0_sq = 2.0;
  prior.lambda = 1.0;
  CHECK_THROWS_AS(prior.validate(), std::invalid_argument);
  Temperature tau{-1.0};
  CHECK_THROWS_AS(tau.validate(), std::invalid_argument);
}
