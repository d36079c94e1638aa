#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace svbnn {

enum class Activation { Relu, Sigmoid, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Scalar-output feedforward shape. `hidden` holds the hidden-layer widths;
// an empty `hidden` denotes the plain linear map x -> w.x with no bias, used
// by the linear-regression experiments. With hidden layers, every layer
// carries a bias: hidden biases are subtracted from the pre-activation and
// the output bias is added, matching the data-generating teachers.
struct Architecture {
  int input_dim = 1;
  std::vector<int> hidden;
  Activation activation = Activation::Relu;

  int depth() const { return static_cast<int>(hidden.size()); }

  // Number of weight layers (depth + 1, or 1 for the linear map).
  int layers() const { return hidden.empty() ? 1 : depth() + 1; }

  bool has_bias() const { return !hidden.empty(); }

  // Fan-in / fan-out of weight layer l, 1-based.
  int fan_in(int l) const;
  int fan_out(int l) const;

  // Throws std::invalid_argument on non-positive dimensions.
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Where a flat parameter index lands in the network.
struct ParameterSite {
  int layer = 0;  // 1-based weight layer
  bool is_bias = false;
  int src = 0;  // 0-based source unit; 0 for biases
  int dst = 0;  // 0-based destination unit
};

// Fixed bijection between flat parameter vectors and network sites. Each
// layer stores its weights source-major, then its bias. The first
// input_dim * hidden[0] entries are therefore the input-layer weights, with
// the fan-out of input j occupying a contiguous block; input-selection reads
// rely on that.
class ParameterLayout {
 public:
  explicit ParameterLayout(const Architecture& arch);

  Eigen::Index size() const { return total_; }
  const Architecture& arch() const { return arch_; }

  Eigen::Index weight_index(int layer, int src, int dst) const;
  Eigen::Index bias_index(int layer, int dst) const;
  ParameterSite site(Eigen::Index flat) const;

  Eigen::Index weight_offset(int layer) const { return weight_off_[layer - 1]; }
  // -1 when the layer has no bias.
  Eigen::Index bias_offset(int layer) const { return bias_off_[layer - 1]; }

 private:
  Architecture arch_;
  std::vector<Eigen::Index> weight_off_;
  std::vector<Eigen::Index> bias_off_;
  Eigen::Index total_ = 0;
};

Eigen::Index param_count(const Architecture& arch);

// Activations applied on every hidden unit and the left-over values of a
// cached forward pass; the trainer re-uses them for the backward sweep.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per hidden layer, n x width
  std::vector<Eigen::MatrixXd> act;   // post-activation per hidden layer
  Eigen::VectorXd yhat;               // network output per row of X
};

// Network output for each row of X. Throws std::runtime_error naming the
// first offending layer if any intermediate value is non-finite.
Eigen::VectorXd forward(const Architecture& arch, const Eigen::VectorXd& theta,
                        const Eigen::MatrixXd& X);

double forward_one(const Architecture& arch, const Eigen::VectorXd& theta,
                   const Eigen::VectorXd& x);

ForwardCache forward_cached(const Architecture& arch, const Eigen::VectorXd& theta,
                            const Eigen::MatrixXd& X);

// Gradient with respect to theta of sum_i coeff_i * yhat_i, reusing a cached
// forward pass. The relu derivative at exactly zero is taken to be zero.
Eigen::VectorXd output_gradient(const Architecture& arch, const Eigen::VectorXd& theta,
                                const ForwardCache& cache, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& coeff);

// Gradient of the Gaussian negative log-likelihood
//   sum_i (y_i - f_theta(x_i))^2 / (2 sigma_eps^2)
// with respect to theta.
Eigen::VectorXd loss_gradient(const Architecture& arch, const Eigen::VectorXd& theta,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double sigma_eps);

}  // namespace svbnn
