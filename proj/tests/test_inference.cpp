#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <svbnn/inference.hpp>
#include <svbnn/simdata.hpp>
#include <svbnn/spikeslab.hpp>

#include <cmath>
#include <vector>

using namespace svbnn;

namespace {

Architecture make_arch(int p, std::vector<int> hidden, Activation act) {
  Architecture arch;
  arch.input_dim = p;
  arch.hidden = std::move(hidden);
  arch.activation = act;
  return arch;
}

double inv_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("posterior draws honor inclusion and reproduce by seed") {
  VariationalParams params = VariationalParams::zeros(1000);
  params.mu.setConstant(2.0);
  params.sigma_raw.setConstant(-5.0);
  params.phi_raw.setConstant(-logit(0.3));
  RngStream a(4), b(4);
  Eigen::VectorXd ta = sample_posterior_theta(params, a);
  Eigen::VectorXd tb = sample_posterior_theta(params, b);
  CHECK((ta - tb).lpNorm<Eigen::Infinity>() == 0.0);
  int nonzero = 0;
  for (int i = 0; i < ta.size(); ++i)
    if (ta[i] != 0.0) ++nonzero;
  double frac = nonzero / 1000.0;
  CHECK(std::abs(frac - 0.3) < 3 * std::sqrt(0.3 * 0.7 / 1000.0));
  // Excluded coordinates are exact zeros, not small values.
  for (int i = 0; i < ta.size(); ++i)
    if (ta[i] != 0.0) CHECK(std::abs(ta[i]) > 0.1);
}

TEST_CASE("degenerate posterior predicts deterministically") {
  Architecture arch = make_arch(3, {4}, Activation::Tanh);
  ParameterLayout layout(arch);
  RngStream rng(8);
  VariationalParams params = VariationalParams::zeros(layout.size());
  params.mu = rng.gaussian_vector(layout.size());
  params.sigma_raw.setConstant(-40.0);
  params.phi_raw.setConstant(-40.0);
  Eigen::MatrixXd X(6, 3);
  for (int i = 0; i < 6; ++i) X.row(i) = rng.uniform_vector(3, -1, 1).transpose();
  RngStream prng(9);
  Eigen::VectorXd pred = posterior_mean_predict(params, arch, X, 30, prng);
  Eigen::VectorXd direct = forward(arch, params.mu, X);
  CHECK((pred - direct).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("single-sample prediction equals one forward pass") {
  Architecture arch = make_arch(2, {3}, Activation::Sigmoid);
  ParameterLayout layout(arch);
  RngStream rng(12);
  VariationalParams params;
  params.mu = rng.gaussian_vector(layout.size());
  params.sigma_raw = rng.uniform_vector(layout.size(), -2, 0);
  params.phi_raw = rng.uniform_vector(layout.size(), -1, 1);
  Eigen::MatrixXd X(4, 2);
  for (int i = 0; i < 4; ++i) X.row(i) = rng.uniform_vector(2, -1, 1).transpose();
  RngStream s1(77), s2(77);
  Eigen::VectorXd pred = posterior_mean_predict(params, arch, X, 1, s1);
  Eigen::VectorXd theta = sample_posterior_theta(params, s2);
  CHECK((pred - forward(arch, theta, X)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("prediction noise shrinks with the ensemble size") {
  Architecture arch = make_arch(5, {4}, Activation::Tanh);
  ParameterLayout layout(arch);
  RngStream rng(23);
  VariationalParams params;
  params.mu = rng.gaussian_vector(layout.size());
  params.sigma_raw = Eigen::VectorXd::Zero(layout.size());
  params.phi_raw = rng.uniform_vector(layout.size(), -1, 1);
  Eigen::MatrixXd X(1, 5);
  X.row(0) = rng.uniform_vector(5, -1, 1).transpose();
  auto spread = [&](int h, uint64_t tag) {
    std::vector<double> vals;
    for (int rep = 0; rep < 50; ++rep) {
      RngStream r(1000 + tag * 100 + rep);
      vals.push_back(posterior_mean_predict(params, arch, X, h, r)[0]);
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    return std::sqrt(var / (vals.size() - 1));
  };
  double sd10 = spread(10, 1);
  double sd100 = spread(100, 2);
  CHECK(sd100 < 0.5 * sd10);
}

TEST_CASE("sparsity summary averages inclusion probabilities") {
  VariationalParams params = VariationalParams::zeros(4);
  params.phi_raw << -logit(0.9), -logit(0.1), 0.0, 0.0;
  CHECK(sparsity_hat(params) == doctest::Approx(0.5).epsilon(1e-12));
  params.phi_raw.setConstant(40.0);
  CHECK(sparsity_hat(params) < 1e-10);
}

TEST_CASE("input selection keys on first-layer inclusion") {
  Architecture arch = make_arch(3, {2}, Activation::Tanh);
  ParameterLayout layout(arch);
  VariationalParams params = VariationalParams::zeros(layout.size());
  params.phi_raw.setConstant(40.0);  // phi ~ 0 everywhere
  CHECK(select_inputs(params, arch).empty());
  // Input 2 via one strong first-layer weight.
  params.phi_raw[layout.weight_index(1, 1, 0)] = -logit(0.9);
  // Input 3 stays out: phi exactly 0.5 does not cross the threshold.
  params.phi_raw[layout.weight_index(1, 2, 1)] = 0.0;
  // Later layers never matter.
  params.phi_raw[layout.weight_index(2, 0, 0)] = -logit(0.99);
  std::vector<int> sel = select_inputs(params, arch);
  CHECK(sel == std::vector<int>{2});
  params.phi_raw[layout.weight_index(1, 0, 1)] = -logit(0.7);
  sel = select_inputs(params, arch);
  CHECK(sel == std::vector<int>{1, 2});
}

TEST_CASE("selection error rates against the true support") {
  std::vector<int> truth{1, 2};
  SelectionReport r1 = fpr_fnr({1, 2}, truth, 10);
  CHECK(r1.fpr == doctest::Approx(0.0));
  CHECK(r1.fnr == doctest::Approx(0.0));
  SelectionReport r2 = fpr_fnr({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, truth, 10);
  CHECK(r2.fpr == doctest::Approx(100.0));
  CHECK(r2.fnr == doctest::Approx(0.0));
  SelectionReport r3 = fpr_fnr({}, truth, 10);
  CHECK(r3.fpr == doctest::Approx(0.0));
  CHECK(r3.fnr == doctest::Approx(100.0));
  SelectionReport r4 = fpr_fnr({2, 7}, truth, 10);
  CHECK(r4.fpr == doctest::Approx(100.0 / 8.0));
  CHECK(r4.fnr == doctest::Approx(50.0));
}

TEST_CASE("root mean squared error") {
  Eigen::VectorXd a(2), b(2);
  a << 3.0, 4.0;
  b << 0.0, 0.0;
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rmse(a, a) == doctest::Approx(0.0));
}

TEST_CASE("empirical quantiles interpolate order statistics") {
  std::vector<double> v{10, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(empirical_quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(empirical_quantile(v, 1.0) == doctest::Approx(10.0));
  CHECK(empirical_quantile(v, 0.5) == doctest::Approx(5.5));
  CHECK(empirical_quantile(v, 0.25) == doctest::Approx(3.25));
}

TEST_CASE("credible interval recovers normal quantiles") {
  Architecture arch = make_arch(1, {}, Activation::Tanh);
  VariationalParams params = VariationalParams::zeros(1);
  params.sigma_raw << inv_softplus(1.0);
  params.phi_raw << -40.0;
  Eigen::VectorXd x(1);
  x << 1.0;
  RngStream rng(66);
  Interval iv = credible_interval(params, arch, x, 0.95, 10000, rng);
  CHECK(std::abs(iv.lo - (-1.96)) < 0.15);
  CHECK(std::abs(iv.hi - 1.96) < 0.15);
}

TEST_CASE("degenerate posterior yields a point interval") {
  Architecture arch = make_arch(2, {2}, Activation::Tanh);
  ParameterLayout layout(arch);
  RngStream rng(3);
  VariationalParams params = VariationalParams::zeros(layout.size());
  params.mu = rng.gaussian_vector(layout.size());
  params.sigma_raw.setConstant(-40.0);
  params.phi_raw.setConstant(-40.0);
  Eigen::VectorXd x(2);
  x << 0.3, -0.2;
  RngStream r2(5);
  Interval iv = credible_interval(params, arch, x, 0.9, 100, r2);
  CHECK(std::abs(iv.hi - iv.lo) < 1e-6);
  CHECK(std::abs(iv.lo - forward_one(arch, params.mu, x)) < 1e-6);
}

TEST_CASE("zero level collapses to the median and levels nest") {
  Architecture arch = make_arch(1, {}, Activation::Tanh);
  VariationalParams params = VariationalParams::zeros(1);
  params.sigma_raw << inv_softplus(1.0);
  params.phi_raw << 0.0;
  Eigen::VectorXd x(1);
  x << 2.0;
  RngStream r0(31);
  Interval med = credible_interval(params, arch, x, 0.0, 501, r0);
  CHECK(med.lo == doctest::Approx(med.hi));
  RngStream s50(31), s90(31), s99(31);
  Interval i50 = credible_interval(params, arch, x, 0.5, 501, s50);
  Interval i90 = credible_interval(params, arch, x, 0.9, 501, s90);
  Interval i99 = credible_interval(params, arch, x, 0.99, 501, s99);
  CHECK(i99.lo <= i90.lo);
  CHECK(i90.lo <= i50.lo);
  CHECK(i50.lo <= i50.hi);
  CHECK(i50.hi <= i90.hi);
  CHECK(i90.hi <= i99.hi);
  CHECK_THROWS_AS(
      (void)credible_interval(params, arch, x, 1.0, 100, r0), std::invalid_argument);
}

TEST_CASE("coverage hits the trivial bounds") {
  Architecture arch = make_arch(2, {2}, Activation::Tanh);
  ParameterLayout layout(arch);
  VariationalParams params = VariationalParams::zeros(layout.size());
  params.sigma_raw.setConstant(-40.0);
  params.phi_raw.setConstant(-40.0);
  auto f0_far = [](const Eigen::VectorXd&) { return 5.0; };
  RngStream rng(41);
  std::vector<double> cov = coverage_experiment(params, arch, f0_far, {1},
                                                Eigen::VectorXd::Zero(2), 21,
                                                0.95, 50, 2, rng);
  REQUIRE(cov.size() == 1);
  CHECK(cov[0] == doctest::Approx(0.0));
  // Huge posterior spread swallows any finite truth.
  params.sigma_raw.setConstant(60.0);
  auto f0_zero = [](const Eigen::VectorXd&) { return 0.0; };
  RngStream rng2(42);
  std::vector<double> cov2 = coverage_experiment(params, arch, f0_zero, {1, 2},
                                                 Eigen::VectorXd::Zero(2), 21,
                                                 0.95, 50, 2, rng2);
  REQUIRE(cov2.size() == 2);
  CHECK(cov2[0] == doctest::Approx(100.0));
  CHECK(cov2[1] == doctest::Approx(100.0));
}

TEST_CASE("near-zero inclusion makes location and scale irrelevant") {
  Architecture arch = make_arch(2, {3}, Activation::Tanh);
  ParameterLayout layout(arch);
  VariationalParams a = VariationalParams::zeros(layout.size());
  a.mu.setConstant(5.0);
  a.sigma_raw.setConstant(2.0);
  a.phi_raw.setConstant(40.0);
  VariationalParams b = VariationalParams::zeros(layout.size());
  b.mu.setConstant(-3.0);
  b.sigma_raw.setConstant(-1.0);
  b.phi_raw.setConstant(40.0);
  Eigen::MatrixXd X(3, 2);
  X << 0.1, 0.2, -0.5, 0.7, 0.9, -0.9;
  RngStream ra(7), rb(7);
  Eigen::VectorXd pa = posterior_mean_predict(a, arch, X, 20, ra);
  Eigen::VectorXd pb = posterior_mean_predict(b, arch, X, 20, rb);
  CHECK((pa - pb).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("distribution distance vanishes for a perfect fit and caps at one") {
  TeacherData teacher = gen_teacher_sparse(40, 51);
  const Architecture& arch = teacher.teacher_arch;
  const Eigen::VectorXd& theta = teacher.teacher_theta;
  auto f_same = [&](const Eigen::VectorXd& x) { return forward_one(arch, theta, x); };
  RngStream r1(81);
  CHECK(hellinger_sq_estimate(arch, theta, f_same, 1.0, 200,
                              CovariateLaw::UniformPm1, r1) ==
        doctest::Approx(0.0).scale(1));
  auto f_shift = [&](const Eigen::VectorXd& x) {
    return forward_one(arch, theta, x) + 1.0;
  };
  RngStream r2(82);
  CHECK(hellinger_sq_estimate(arch, theta, f_shift, 1.0, 200,
                              CovariateLaw::UniformPm1, r2) ==
        doctest::Approx(1.0 - std::exp(-1.0 / 8.0)).epsilon(1e-12));
  auto f_far = [&](const Eigen::VectorXd& x) {
    return forward_one(arch, theta, x) + 1e6;
  };
  RngStream r3(83);
  double d = hellinger_sq_estimate(arch, theta, f_far, 1.0, 200,
                                   CovariateLaw::UniformPm1, r3);
  CHECK(d <= 1.0);
  CHECK(d > 0.999);
}

TEST_CASE("posterior distribution distance uses fresh draws per point") {
  TeacherData teacher = gen_teacher_sparse(30, 61);
  ParameterLayout layout(teacher.teacher_arch);
  VariationalParams params = VariationalParams::zeros(layout.size());
  params.mu = teacher.teacher_theta;
  params.sigma_raw.setConstant(-40.0);
  params.phi_raw.setConstant(-40.0);
  RngStream rng(71);
  double d = hellinger_sq_estimate(params, teacher.teacher_arch, teacher.data.f0,
                                   1.0, 200, CovariateLaw::UniformPm1, rng);
  CHECK(d == doctest::Approx(0.0).scale(1));
}
