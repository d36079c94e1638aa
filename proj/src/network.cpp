#include "svbnn/network.hpp"

#include <cmath>
#include <stdexcept>

namespace svbnn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<const RowMajorMatrix>;
using WeightGradMap = Eigen::Map<RowMajorMatrix>;

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Relu:
      z = z.array().max(0.0);
      break;
    case Activation::Sigmoid:
      z = z.array().logistic();
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
  }
}

// Derivative from the pre- and post-activation values; relu'(0) = 0.
Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& pre,
                                      const Eigen::MatrixXd& act) {
  switch (a) {
    case Activation::Relu:
      return (pre.array() > 0.0).cast<double>();
    case Activation::Sigmoid:
      return (act.array() * (1.0 - act.array())).matrix();
    case Activation::Tanh:
      return (1.0 - act.array().square()).matrix();
  }
  throw std::logic_error("unknown activation");
}

void check_sizes(const Architecture& arch, const Eigen::VectorXd& theta,
                 const Eigen::MatrixXd& X, const char* where) {
  arch.validate();
  if (theta.size() != param_count(arch))
    throw std::invalid_argument(std::string(where) + ": theta has " +
                                std::to_string(theta.size()) + " entries, layout needs " +
                                std::to_string(param_count(arch)));
  if (X.cols() != arch.input_dim)
    throw std::invalid_argument(std::string(where) + ": X has " + std::to_string(X.cols()) +
                                " columns, architecture expects " +
                                std::to_string(arch.input_dim));
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "relu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu, sigmoid, tanh)");
}

int Architecture::fan_in(int l) const {
  return l == 1 ? input_dim : hidden[static_cast<std::size_t>(l) - 2];
}

int Architecture::fan_out(int l) const {
  return l <= depth() ? hidden[static_cast<std::size_t>(l) - 1] : 1;
}

void Architecture::validate() const {
  if (input_dim < 1)
    throw std::invalid_argument("architecture: input_dim must be positive, got " +
                                std::to_string(input_dim));
  for (int w : hidden)
    if (w < 1)
      throw std::invalid_argument("architecture: hidden widths must be positive, got " +
                                  std::to_string(w));
}

ParameterLayout::ParameterLayout(const Architecture& arch) : arch_(arch) {
  arch_.validate();
  const int n_layers = arch_.layers();
  weight_off_.resize(n_layers);
  bias_off_.resize(n_layers);
  Eigen::Index off = 0;
  for (int l = 1; l <= n_layers; ++l) {
    weight_off_[l - 1] = off;
    off += static_cast<Eigen::Index>(arch_.fan_in(l)) * arch_.fan_out(l);
    if (arch_.has_bias()) {
      bias_off_[l - 1] = off;
      off += arch_.fan_out(l);
    } else {
      bias_off_[l - 1] = -1;
    }
  }
  total_ = off;
}

Eigen::Index ParameterLayout::weight_index(int layer, int src, int dst) const {
  return weight_off_[layer - 1] +
         static_cast<Eigen::Index>(src) * arch_.fan_out(layer) + dst;
}

Eigen::Index ParameterLayout::bias_index(int layer, int dst) const {
  if (!arch_.has_bias()) throw std::logic_error("layout: linear map has no biases");
  return bias_off_[layer - 1] + dst;
}

ParameterSite ParameterLayout::site(Eigen::Index flat) const {
  if (flat < 0 || flat >= total_)
    throw std::out_of_range("layout: flat index " + std::to_string(flat) +
                            " outside [0, " + std::to_string(total_) + ")");
  for (int l = 1; l <= arch_.layers(); ++l) {
    const Eigen::Index w0 = weight_off_[l - 1];
    const Eigen::Index nw = static_cast<Eigen::Index>(arch_.fan_in(l)) * arch_.fan_out(l);
    if (flat < w0 + nw) {
      const Eigen::Index rel = flat - w0;
      const int fan_out = arch_.fan_out(l);
      return ParameterSite{l, false, static_cast<int>(rel / fan_out),
                           static_cast<int>(rel % fan_out)};
    }
    if (arch_.has_bias() && flat < bias_off_[l - 1] + arch_.fan_out(l))
      return ParameterSite{l, true, 0, static_cast<int>(flat - bias_off_[l - 1])};
  }
  throw std::logic_error("layout: unreachable flat index");
}

Eigen::Index param_count(const Architecture& arch) {
  return ParameterLayout(arch).size();
}

ForwardCache forward_cached(const Architecture& arch, const Eigen::VectorXd& theta,
                            const Eigen::MatrixXd& X) {
  check_sizes(arch, theta, X, "forward");
  const ParameterLayout layout(arch);
  const int L = arch.depth();

  ForwardCache cache;
  cache.pre.reserve(L);
  cache.act.reserve(L);

  if (L == 0) {
    WeightMap w(theta.data(), arch.input_dim, 1);
    cache.yhat = X * w;
    if (!cache.yhat.allFinite())
      throw std::runtime_error("forward: non-finite output in layer 1");
    return cache;
  }

  const Eigen::MatrixXd* h = &X;
  for (int l = 1; l <= L; ++l) {
    WeightMap w(theta.data() + layout.weight_offset(l), arch.fan_in(l), arch.fan_out(l));
    const auto b = theta.segment(layout.bias_offset(l), arch.fan_out(l));
    Eigen::MatrixXd z = (*h) * w;
    z.rowwise() -= b.transpose();
    if (!z.allFinite())
      throw std::runtime_error("forward: non-finite pre-activation in layer " +
                               std::to_string(l));
    cache.pre.push_back(z);
    apply_activation(arch.activation, z);
    cache.act.push_back(std::move(z));
    h = &cache.act.back();
  }

  const int out = L + 1;
  WeightMap w(theta.data() + layout.weight_offset(out), arch.fan_in(out), 1);
  const double b = theta[layout.bias_offset(out)];
  cache.yhat = ((*h) * w).col(0).array() + b;
  if (!cache.yhat.allFinite())
    throw std::runtime_error("forward: non-finite output in layer " + std::to_string(out));
  return cache;
}

Eigen::VectorXd forward(const Architecture& arch, const Eigen::VectorXd& theta,
                        const Eigen::MatrixXd& X) {
  return forward_cached(arch, theta, X).yhat;
}

double forward_one(const Architecture& arch, const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& x) {
  Eigen::MatrixXd X = x.transpose();
  return forward(arch, theta, X)[0];
}

Eigen::VectorXd output_gradient(const Architecture& arch, const Eigen::VectorXd& theta,
                                const ForwardCache& cache, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& coeff) {
  check_sizes(arch, theta, X, "output_gradient");
  if (coeff.size() != X.rows())
    throw std::invalid_argument("output_gradient: coeff size does not match rows of X");
  const ParameterLayout layout(arch);
  const int L = arch.depth();

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.size());

  if (L == 0) {
    WeightGradMap gw(grad.data(), arch.input_dim, 1);
    gw = X.transpose() * coeff;
    return grad;
  }

  // Output layer: yhat = act_L w + b, so the bias gradient enters with +1.
  const int out = L + 1;
  {
    WeightGradMap gw(grad.data() + layout.weight_offset(out), arch.fan_in(out), 1);
    gw = cache.act[L - 1].transpose() * coeff;
    grad[layout.bias_offset(out)] = coeff.sum();
  }

  WeightMap w_out(theta.data() + layout.weight_offset(out), arch.fan_in(out), 1);
  Eigen::MatrixXd dh = coeff * w_out.transpose();

  // Hidden layers: pre_l = h_{l-1} W_l - b_l, so bias gradients enter with -1.
  for (int l = L; l >= 1; --l) {
    const Eigen::MatrixXd dpre =
        dh.cwiseProduct(activation_derivative(arch.activation, cache.pre[l - 1], cache.act[l - 1]));
    const Eigen::MatrixXd& below = l == 1 ? X : cache.act[l - 2];
    WeightGradMap gw(grad.data() + layout.weight_offset(l), arch.fan_in(l), arch.fan_out(l));
    gw = below.transpose() * dpre;
    grad.segment(layout.bias_offset(l), arch.fan_out(l)) = -dpre.colwise().sum();
    if (l > 1) {
      WeightMap w(theta.data() + layout.weight_offset(l), arch.fan_in(l), arch.fan_out(l));
      dh = dpre * w.transpose();
    }
  }
  return grad;
}

Eigen::VectorXd loss_gradient(const Architecture& arch, const Eigen::VectorXd& theta,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double sigma_eps) {
  if (y.size() != X.rows())
    throw std::invalid_argument("loss_gradient: y size does not match rows of X");
  if (!(sigma_eps > 0.0))
    throw std::invalid_argument("loss_gradient: sigma_eps must be positive");
  const ForwardCache cache = forward_cached(arch, theta, X);
  const Eigen::VectorXd coeff = (cache.yhat - y) / (sigma_eps * sigma_eps);
  Eigen::VectorXd grad = output_gradient(arch, theta, cache, X, coeff);
  if (!grad.allFinite()) throw std::runtime_error("loss_gradient: non-finite gradient");
  return grad;
}

}  // namespace svbnn
