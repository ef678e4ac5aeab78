#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfinode/common.hpp"
#include "lfinode/trajectory.hpp"

namespace lfi {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully-connected network parameterizing a vector field on z = [x; u].
/// layer_dims = [d_x + d_u, hidden..., d_x]; the last layer is affine.
/// Normalization statistics of the training data travel with the weights:
/// the field is only meaningful in that normalized space.
struct MlpParams {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;  // weights[i]: layer_dims[i+1] x layer_dims[i]
  std::vector<Vector> biases;
  Activation activation = Activation::Tanh;
  NormStats norm;

  int n_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int state_dim() const { return output_dim(); }

  void validate() const;
};

/// Shape-congruent gradient (or moment) accumulator for MlpParams.
struct MlpGrad {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static MlpGrad zeros_like(const MlpParams& p);
  void set_zero();
  void add_scaled(const MlpGrad& other, double scale);
  double squared_norm() const;
  double norm() const { return std::sqrt(squared_norm()); }
};

/// Post-activation values recorded during one forward evaluation;
/// enough to run the exact reverse pass for both tanh and relu.
struct MlpTape {
  Vector z;                  // network input [x; u]
  std::vector<Vector> post;  // sigma(a_i) for hidden layers i = 1..n-1
};

/// Network output f_NN([x; u]). Records the tape when one is supplied.
Vector mlp_forward(const MlpParams& p, const Vector& x, const Vector& u, MlpTape* tape = nullptr);
Vector mlp_forward_z(const MlpParams& p, const Vector& z, MlpTape* tape = nullptr);

/// Exact d f_NN / d x via the layer chain rule (no finite differencing).
Matrix mlp_state_jacobian(const MlpParams& p, const Vector& x, const Vector& u);

/// Full input Jacobian d f_NN / d z (d_x x (d_x + d_u)).
Matrix mlp_input_jacobian_z(const MlpParams& p, const Vector& z);

/// Reverse-mode step for one recorded evaluation: accumulates d(upstream . f)/d theta
/// into grad and returns d(upstream . f)/d z.
Vector mlp_vjp(const MlpParams& p, const MlpTape& tape, const Vector& upstream, MlpGrad& grad);

struct JacLossGrad {
  double loss = 0.0;
  Matrix j_nn;
  MlpGrad grad;
};

/// L = |J_NN(x_ss, u) - J_ref|_F^2 and its exact parameter gradient,
/// differentiating through the activation-derivative diagonals (second
/// order in the network).
JacLossGrad jac_loss_and_grad(const MlpParams& p, const Vector& x_ss, const Vector& u,
                              const Matrix& j_ref);

/// Glorot-uniform weights, zero biases; deterministic per seed.
MlpParams init_mlp(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed);

// --- model file -------------------------------------------------------------

/// On-disk model: either a continuous-time field ("node") or a discrete
/// one-step map ("narx", with its training sample period).
struct ModelFile {
  enum class Kind { Node, Narx };
  Kind kind = Kind::Node;
  MlpParams params;
  double narx_dt = 0.0;
  nlohmann::json train_config_echo;
};

void save_model(const ModelFile& m, const std::filesystem::path& file);
ModelFile load_model(const std::filesystem::path& file);

}  // namespace lfi
