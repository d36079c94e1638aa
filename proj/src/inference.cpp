#include "svbnn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svbnn {

Eigen::VectorXd sample_posterior_theta(const VariationalParams& params, RngStream& rng) {
  params.validate();
  const Eigen::Index T = params.size();
  Eigen::VectorXd theta(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double phi = logistic(-params.phi_raw[i]);
    const double u = rng.uniform();
    if (u < phi) {
      const double sigma = softplus(params.sigma_raw[i]);
      theta[i] = params.mu[i] + sigma * rng.gaussian();
    } else {
      theta[i] = 0.0;
    }
  }
  return theta;
}

PosteriorEnsemble draw_posterior_ensemble(const VariationalParams& params, int H,
                                          RngStream& rng) {
  if (H < 1) throw std::invalid_argument("draw_posterior_ensemble: H must be >= 1");
  PosteriorEnsemble ens;
  ens.thetas.reserve(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) ens.thetas.push_back(sample_posterior_theta(params, rng));
  return ens;
}

Eigen::VectorXd posterior_mean_predict(const VariationalParams& params, const Architecture& arch,
                                       const Eigen::MatrixXd& X, int H, RngStream& rng) {
  if (H < 1) throw std::invalid_argument("posterior_mean_predict: H must be >= 1");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(X.rows());
  for (int h = 0; h < H; ++h)
    sum += forward(arch, sample_posterior_theta(params, rng), X);
  return sum / static_cast<double>(H);
}

double sparsity_hat(const VariationalParams& params) {
  params.validate();
  return params.phi().mean();
}

std::vector<int> select_inputs(const VariationalParams& params, const Architecture& arch,
                               double threshold) {
  params.validate();
  const ParameterLayout layout(arch);
  if (params.size() != layout.size())
    throw std::invalid_argument("select_inputs: params do not match the architecture");
  const Eigen::VectorXd phi = params.phi();
  std::vector<int> selected;
  const int fan_out = arch.fan_out(1);
  for (int j = 0; j < arch.input_dim; ++j) {
    for (int k = 0; k < fan_out; ++k) {
      if (phi[layout.weight_index(1, j, k)] > threshold) {
        selected.push_back(j + 1);
        break;
      }
    }
  }
  return selected;
}

SelectionReport fpr_fnr(const std::vector<int>& selected, const std::vector<int>& true_support,
                        int p) {
  if (true_support.empty())
    throw std::invalid_argument("fpr_fnr: true support must be nonempty");
  if (p < static_cast<int>(true_support.size()))
    throw std::invalid_argument("fpr_fnr: p smaller than the true support");
  std::vector<int> sel = selected, truth = true_support;
  std::sort(sel.begin(), sel.end());
  std::sort(truth.begin(), truth.end());

  std::vector<int> false_pos, false_neg;
  std::set_difference(sel.begin(), sel.end(), truth.begin(), truth.end(),
                      std::back_inserter(false_pos));
  std::set_difference(truth.begin(), truth.end(), sel.begin(), sel.end(),
                      std::back_inserter(false_neg));

  SelectionReport report;
  report.selected = sel;
  const double denom_fp = static_cast<double>(p) - static_cast<double>(truth.size());
  report.fpr = denom_fp > 0.0 ? 100.0 * static_cast<double>(false_pos.size()) / denom_fp : 0.0;
  report.fnr = 100.0 * static_cast<double>(false_neg.size()) / static_cast<double>(truth.size());
  return report;
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw std::invalid_argument("rmse: lengths differ");
  if (y.size() == 0) throw std::invalid_argument("rmse: empty vectors");
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("empirical_quantile: q must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double w = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[lo + 1] * w;
}

Interval credible_interval(const VariationalParams& params, const Architecture& arch,
                           const Eigen::VectorXd& x, double level, int n_mc, RngStream& rng) {
  if (n_mc < 2) throw std::invalid_argument("credible_interval: n_mc must be >= 2");
  if (!(level >= 0.0 && level < 1.0))
    throw std::invalid_argument("credible_interval: level must lie in [0,1)");
  std::vector<double> means(static_cast<std::size_t>(n_mc));
  for (int h = 0; h < n_mc; ++h)
    means[static_cast<std::size_t>(h)] =
        forward_one(arch, sample_posterior_theta(params, rng), x);
  const double alpha = 1.0 - level;
  Interval iv;
  iv.lo = empirical_quantile(means, alpha / 2.0);
  iv.hi = empirical_quantile(std::move(means), 1.0 - alpha / 2.0);
  return iv;
}

std::vector<double> coverage_experiment(const VariationalParams& params,
                                        const Architecture& arch,
                                        const std::function<double(const Eigen::VectorXd&)>& f0,
                                        const std::vector<int>& coords,
                                        const Eigen::VectorXd& base_point, int grid_size,
                                        double level, int n_mc, int repeats, RngStream& rng) {
  if (!f0) throw std::invalid_argument("coverage_experiment: no f0 oracle for this dataset");
  if (grid_size < 2) throw std::invalid_argument("coverage_experiment: grid_size must be >= 2");
  if (repeats < 1) throw std::invalid_argument("coverage_experiment: repeats must be >= 1");
  if (n_mc < 2) throw std::invalid_argument("coverage_experiment: n_mc must be >= 2");
  if (base_point.size() != arch.input_dim)
    throw std::invalid_argument("coverage_experiment: base point size must equal input_dim");
  const double alpha = 1.0 - level;

  std::vector<double> coverage;
  coverage.reserve(coords.size());
  for (int coord : coords) {
    if (coord < 1 || coord > arch.input_dim)
      throw std::invalid_argument("coverage_experiment: coordinate " + std::to_string(coord) +
                                  " outside 1.." + std::to_string(arch.input_dim));
    Eigen::MatrixXd grid_points(grid_size, base_point.size());
    Eigen::VectorXd truth(grid_size);
    for (int g = 0; g < grid_size; ++g) {
      Eigen::VectorXd x = base_point;
      x[coord - 1] = -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(grid_size - 1);
      grid_points.row(g) = x.transpose();
      truth[g] = f0(x);
    }

    long covered = 0;
    Eigen::MatrixXd preds(n_mc, grid_size);
    std::vector<double> column(static_cast<std::size_t>(n_mc));
    for (int rep = 0; rep < repeats; ++rep) {
      for (int h = 0; h < n_mc; ++h)
        preds.row(h) = forward(arch, sample_posterior_theta(params, rng), grid_points);
      for (int g = 0; g < grid_size; ++g) {
        for (int h = 0; h < n_mc; ++h) column[static_cast<std::size_t>(h)] = preds(h, g);
        std::vector<double> sorted = column;
        const double lo = empirical_quantile(sorted, alpha / 2.0);
        const double hi = empirical_quantile(std::move(sorted), 1.0 - alpha / 2.0);
        if (truth[g] >= lo && truth[g] <= hi) ++covered;
      }
    }
    coverage.push_back(100.0 * static_cast<double>(covered) /
                       (static_cast<double>(grid_size) * static_cast<double>(repeats)));
  }
  return coverage;
}

double hellinger_sq_estimate(const Architecture& arch, const Eigen::VectorXd& theta,
                             const std::function<double(const Eigen::VectorXd&)>& f0,
                             double sigma_eps, int n_mc_x, CovariateLaw law, RngStream& rng) {
  if (!f0) throw std::invalid_argument("hellinger_sq_estimate: no f0 oracle");
  if (n_mc_x < 1) throw std::invalid_argument("hellinger_sq_estimate: n_mc_x must be >= 1");
  if (!(sigma_eps > 0.0))
    throw std::invalid_argument("hellinger_sq_estimate: sigma_eps must be positive");
  const double denom = 8.0 * sigma_eps * sigma_eps;
  double sum = 0.0;
  for (int i = 0; i < n_mc_x; ++i) {
    const Eigen::VectorXd x = sample_covariates(law, arch.input_dim, rng);
    const double gap = forward_one(arch, theta, x) - f0(x);
    sum += 1.0 - std::exp(-gap * gap / denom);
  }
  return sum / static_cast<double>(n_mc_x);
}

double hellinger_sq_estimate(const VariationalParams& params, const Architecture& arch,
                             const std::function<double(const Eigen::VectorXd&)>& f0,
                             double sigma_eps, int n_mc_x, CovariateLaw law, RngStream& rng) {
  if (!f0) throw std::invalid_argument("hellinger_sq_estimate: no f0 oracle");
  if (n_mc_x < 1) throw std::invalid_argument("hellinger_sq_estimate: n_mc_x must be >= 1");
  if (!(sigma_eps > 0.0))
    throw std::invalid_argument("hellinger_sq_estimate: sigma_eps must be positive");
  const double denom = 8.0 * sigma_eps * sigma_eps;
  double sum = 0.0;
  for (int i = 0; i < n_mc_x; ++i) {
    const Eigen::VectorXd x = sample_covariates(law, arch.input_dim, rng);
    const double gap = forward_one(arch, sample_posterior_theta(params, rng), x) - f0(x);
    sum += 1.0 - std::exp(-gap * gap / denom);
  }
  return sum / static_cast<double>(n_mc_x);
}

}  // namespace svbnn
