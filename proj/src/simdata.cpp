#include "svbnn/simdata.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace svbnn {

namespace {

// Substream tags; distinct per purpose so draws never overlap.
constexpr std::uint64_t kTagTeacher = 1;
constexpr std::uint64_t kTagX = 2;
constexpr std::uint64_t kTagNoise = 3;
constexpr std::uint64_t kTagSplit = 4;

Eigen::MatrixXd sample_design(CovariateLaw law, Eigen::Index n, int p, RngStream& rng) {
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j)
      X(i, j) = law == CovariateLaw::UniformPm1 ? rng.uniform(-1.0, 1.0) : rng.gaussian();
  }
  return X;
}

std::function<double(const Eigen::VectorXd&)> teacher_oracle(const Architecture& arch,
                                                             const Eigen::VectorXd& theta) {
  auto shared = std::make_shared<const Eigen::VectorXd>(theta);
  return [arch, shared](const Eigen::VectorXd& x) { return forward_one(arch, *shared, x); };
}

}  // namespace

std::string to_string(CovariateLaw law) {
  return law == CovariateLaw::UniformPm1 ? "uniform_pm1" : "std_normal";
}

CovariateLaw covariate_law_from_string(const std::string& s) {
  if (s == "uniform_pm1") return CovariateLaw::UniformPm1;
  if (s == "std_normal") return CovariateLaw::StdNormal;
  throw std::invalid_argument("unknown covariate law '" + s +
                              "' (expected uniform_pm1, std_normal)");
}

void Dataset::validate() const {
  if (X.rows() != y.size())
    throw std::invalid_argument("dataset: X has " + std::to_string(X.rows()) +
                                " rows but y has " + std::to_string(y.size()) + " entries");
  if (X.rows() < 1) throw std::invalid_argument("dataset: needs at least one observation");
}

Eigen::VectorXd sample_covariates(CovariateLaw law, int p, RngStream& rng) {
  Eigen::VectorXd x(p);
  for (int j = 0; j < p; ++j)
    x[j] = law == CovariateLaw::UniformPm1 ? rng.uniform(-1.0, 1.0) : rng.gaussian();
  return x;
}

TeacherData gen_teacher_dense(Eigen::Index n, std::uint64_t seed, double noise_std,
                              std::uint64_t teacher_seed, bool frozen_teacher) {
  if (n < 1) throw std::invalid_argument("gen_teacher_dense: n must be positive");
  TeacherData out;
  out.teacher_arch = Architecture{20, {6, 6}, Activation::Sigmoid};

  RngStream teacher_rng =
      RngStream(frozen_teacher ? teacher_seed : seed).derived(kTagTeacher);
  const Eigen::Index T = param_count(out.teacher_arch);
  out.teacher_theta = teacher_rng.uniform_vector(T, 0.0, 1.0);

  RngStream x_rng = RngStream(seed).derived(kTagX);
  RngStream noise_rng = RngStream(seed).derived(kTagNoise);
  out.data.X = sample_design(CovariateLaw::UniformPm1, n, 20, x_rng);
  out.data.y = forward(out.teacher_arch, out.teacher_theta, out.data.X) +
               noise_std * noise_rng.gaussian_vector(n);
  out.data.law = CovariateLaw::UniformPm1;
  out.data.f0 = teacher_oracle(out.teacher_arch, out.teacher_theta);
  return out;
}

Architecture sparse_teacher_arch() { return Architecture{100, {2, 2}, Activation::Tanh}; }

Eigen::VectorXd sparse_teacher_theta() {
  const Architecture arch = sparse_teacher_arch();
  const ParameterLayout layout(arch);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.size());
  // Only inputs 1 and 2 connect to the hidden units.
  theta[layout.weight_index(1, 0, 0)] = 2.5;
  theta[layout.weight_index(1, 0, 1)] = 2.5;
  theta[layout.weight_index(1, 1, 0)] = 1.5;
  theta[layout.weight_index(1, 1, 1)] = 1.5;
  theta[layout.weight_index(2, 0, 0)] = 2.5;
  theta[layout.weight_index(2, 0, 1)] = 2.5;
  theta[layout.weight_index(2, 1, 0)] = 1.5;
  theta[layout.weight_index(2, 1, 1)] = 1.5;
  theta[layout.weight_index(3, 0, 0)] = 3.0;
  theta[layout.weight_index(3, 1, 0)] = 2.0;
  theta[layout.bias_index(1, 0)] = 1.0;
  theta[layout.bias_index(1, 1)] = -1.0;
  theta[layout.bias_index(2, 0)] = 1.0;
  theta[layout.bias_index(2, 1)] = -1.0;
  theta[layout.bias_index(3, 0)] = 1.0;
  return theta;
}

TeacherData gen_teacher_sparse(Eigen::Index n, std::uint64_t seed, double noise_std) {
  if (n < 1) throw std::invalid_argument("gen_teacher_sparse: n must be positive");
  TeacherData out;
  out.teacher_arch = sparse_teacher_arch();
  out.teacher_theta = sparse_teacher_theta();

  RngStream x_rng = RngStream(seed).derived(kTagX);
  RngStream noise_rng = RngStream(seed).derived(kTagNoise);
  out.data.X = sample_design(CovariateLaw::UniformPm1, n, 100, x_rng);
  out.data.y = forward(out.teacher_arch, out.teacher_theta, out.data.X) +
               noise_std * noise_rng.gaussian_vector(n);
  out.data.law = CovariateLaw::UniformPm1;
  out.data.true_support = {1, 2};
  out.data.f0 = teacher_oracle(out.teacher_arch, out.teacher_theta);
  return out;
}

Dataset gen_sparse_nonlinear(Eigen::Index n, std::uint64_t seed, double noise_std) {
  if (n < 1) throw std::invalid_argument("gen_sparse_nonlinear: n must be positive");
  Dataset data;
  auto f0 = [](const Eigen::VectorXd& x) {
    return 7.0 * x[1] / (1.0 + x[0] * x[0]) + 5.0 * std::sin(x[2] * x[3]) + 2.0 * x[4];
  };

  RngStream x_rng = RngStream(seed).derived(kTagX);
  RngStream noise_rng = RngStream(seed).derived(kTagNoise);
  data.X = sample_design(CovariateLaw::StdNormal, n, 200, x_rng);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) data.y[i] = f0(data.X.row(i).transpose());
  data.y += noise_std * noise_rng.gaussian_vector(n);
  data.law = CovariateLaw::StdNormal;
  data.true_support = {1, 2, 3, 4, 5};
  data.f0 = f0;
  return data;
}

LinearData gen_toy_linear(Eigen::Index n, int p, std::uint64_t seed, double noise_std) {
  if (n < 1) throw std::invalid_argument("gen_toy_linear: n must be positive");
  if (p < 150) throw std::invalid_argument("gen_toy_linear: needs p >= 150 for the fixed support");
  LinearData out;
  out.beta = Eigen::VectorXd::Zero(p);
  out.beta[49] = 10.0;
  out.beta[74] = -10.0;
  out.beta[99] = 10.0;
  out.beta[124] = -10.0;
  out.beta[149] = 10.0;

  RngStream x_rng = RngStream(seed).derived(kTagX);
  RngStream noise_rng = RngStream(seed).derived(kTagNoise);
  out.data.X = sample_design(CovariateLaw::StdNormal, n, p, x_rng);
  out.data.y = out.data.X * out.beta + noise_std * noise_rng.gaussian_vector(n);
  out.data.law = CovariateLaw::StdNormal;
  out.data.true_support = {50, 75, 100, 125, 150};
  auto beta = std::make_shared<const Eigen::VectorXd>(out.beta);
  out.data.f0 = [beta](const Eigen::VectorXd& x) { return beta->dot(x); };
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double first_fraction,
                                          std::uint64_t seed) {
  data.validate();
  if (!(first_fraction > 0.0 && first_fraction < 1.0))
    throw std::invalid_argument("split_dataset: fraction must lie strictly in (0,1)");
  const Eigen::Index n = data.n();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  RngStream rng = RngStream(seed).derived(kTagSplit);
  rng.shuffle(order);

  const Eigen::Index k = static_cast<Eigen::Index>(std::llround(first_fraction * n));
  auto take = [&](Eigen::Index begin, Eigen::Index count) {
    Dataset part;
    part.X.resize(count, data.p());
    part.y.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      part.X.row(i) = data.X.row(order[static_cast<std::size_t>(begin + i)]);
      part.y[i] = data.y[order[static_cast<std::size_t>(begin + i)]];
    }
    part.true_support = data.true_support;
    part.f0 = data.f0;
    part.law = data.law;
    return part;
  };
  return {take(0, k), take(k, n - k)};
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  out.precision(17);
  for (int j = 1; j <= data.p(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.p(); ++j) out << data.X(i, j) << ',';
    out << data.y[i] << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path.string());
}

}  // namespace svbnn
