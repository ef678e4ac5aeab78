#include "lfinode/mlp.hpp"

#include <cmath>
#include <fstream>

#include "lfinode/json_io.hpp"

namespace lfi {

namespace {

double act(Activation a, double v) {
  return a == Activation::Tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}

/// sigma'(a) expressed through the stored post-activation s = sigma(a).
/// tanh: 1 - s^2; relu: step(s) (s > 0 iff a > 0 up to the measure-zero tie).
double act_deriv_from_post(Activation a, double s) {
  return a == Activation::Tanh ? 1.0 - s * s : (s > 0.0 ? 1.0 : 0.0);
}

/// sigma''(a) through s. tanh: -2 s (1 - s^2); relu: 0.
double act_second_from_post(Activation a, double s) {
  return a == Activation::Tanh ? -2.0 * s * (1.0 - s * s) : 0.0;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("activation", "unknown activation '" + name + "'");
}

void MlpParams::validate() const {
  if (layer_dims.size() < 2) throw DimensionError("mlp: need at least input and output dims");
  if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
    throw DimensionError("mlp: weight/bias count must be layer_dims.size() - 1");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != layer_dims[i + 1] || weights[i].cols() != layer_dims[i])
      throw DimensionError("mlp: weight shape mismatch at layer " + std::to_string(i));
    if (biases[i].size() != layer_dims[i + 1])
      throw DimensionError("mlp: bias shape mismatch at layer " + std::to_string(i));
    if (!all_finite(weights[i]) || !all_finite(biases[i]))
      throw DimensionError("mlp: non-finite parameters at layer " + std::to_string(i));
  }
}

MlpGrad MlpGrad::zeros_like(const MlpParams& p) {
  MlpGrad g;
  g.weights.reserve(p.weights.size());
  g.biases.reserve(p.biases.size());
  for (const auto& w : p.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : p.biases) g.biases.push_back(Vector::Zero(b.size()));
  return g;
}

void MlpGrad::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += scale * other.weights[i];
  for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += scale * other.biases[i];
}

double MlpGrad::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

Vector mlp_forward_z(const MlpParams& p, const Vector& z, MlpTape* tape) {
  if (z.size() != p.input_dim())
    throw DimensionError("mlp forward: expected input dim " + std::to_string(p.input_dim()) +
                         ", got " + std::to_string(z.size()));
  const int n = p.n_layers();
  if (tape) {
    tape->z = z;
    tape->post.assign(static_cast<std::size_t>(n > 0 ? n - 1 : 0), Vector());
  }
  Vector h = z;
  for (int i = 0; i < n; ++i) {
    Vector a = p.weights[i] * h + p.biases[i];
    if (i + 1 < n) {
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = act(p.activation, a(k));
      if (tape) tape->post[i] = a;
    }
    h = std::move(a);
  }
  return h;
}

Vector mlp_forward(const MlpParams& p, const Vector& x, const Vector& u, MlpTape* tape) {
  Vector z(x.size() + u.size());
  z << x, u;
  return mlp_forward_z(p, z, tape);
}

Matrix mlp_input_jacobian_z(const MlpParams& p, const Vector& z) {
  if (z.size() != p.input_dim()) throw DimensionError("mlp jacobian: input dim mismatch");
  const int n = p.n_layers();
  // Propagate P_i = d a_i / d z forward through the chain
  //   P_1 = W_1,  P_i = W_i diag(sigma'(a_{i-1})) P_{i-1}.
  Vector h = z;
  Matrix prop = p.weights[0];
  for (int i = 0; i < n - 1; ++i) {
    Vector a = p.weights[i] * h + p.biases[i];
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = act(p.activation, a(k));
    Matrix scaled = prop;
    for (Eigen::Index r = 0; r < scaled.rows(); ++r)
      scaled.row(r) *= act_deriv_from_post(p.activation, a(r));
    prop = p.weights[i + 1] * scaled;
    h = std::move(a);
  }
  return prop;
}

Matrix mlp_state_jacobian(const MlpParams& p, const Vector& x, const Vector& u) {
  Vector z(x.size() + u.size());
  z << x, u;
  const Matrix full = mlp_input_jacobian_z(p, z);
  return full.leftCols(x.size());
}

Vector mlp_vjp(const MlpParams& p, const MlpTape& tape, const Vector& upstream, MlpGrad& grad) {
  const int n = p.n_layers();
  if (upstream.size() != p.output_dim()) throw DimensionError("mlp vjp: upstream dim mismatch");

  // Output layer is affine: a_n = W_n s_{n-1} + b_n.
  Vector delta = upstream;
  for (int i = n - 1; i >= 0; --i) {
    const Vector& layer_in = (i == 0) ? tape.z : tape.post[i - 1];
    grad.weights[i].noalias() += delta * layer_in.transpose();
    grad.biases[i] += delta;
    Vector back = p.weights[i].transpose() * delta;
    if (i > 0) {
      const Vector& s = tape.post[i - 1];
      for (Eigen::Index k = 0; k < back.size(); ++k)
        back(k) *= act_deriv_from_post(p.activation, s(k));
    }
    delta = std::move(back);
  }
  return delta;  // d(upstream . f)/d z
}

JacLossGrad jac_loss_and_grad(const MlpParams& p, const Vector& x_ss, const Vector& u,
                              const Matrix& j_ref) {
  const int dx = p.state_dim();
  if (x_ss.size() + u.size() != p.input_dim())
    throw DimensionError("jac loss: state+input dims must match network input");
  if (j_ref.rows() != dx || j_ref.cols() != dx)
    throw DimensionError("jac loss: J_ref must be d_x x d_x");

  const int n = p.n_layers();
  Vector z(x_ss.size() + u.size());
  z << x_ss, u;

  // Forward pass, keeping post-activations s_i and the x-column Jacobian
  // chain P_i = d a_i / d x.
  std::vector<Vector> post(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  std::vector<Matrix> jac_chain(static_cast<std::size_t>(n));  // P_i, h_i x d_x
  Vector h = z;
  Matrix prop = p.weights[0].leftCols(dx);
  jac_chain[0] = prop;
  for (int i = 0; i < n - 1; ++i) {
    Vector a = p.weights[i] * h + p.biases[i];
    for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = act(p.activation, a(k));
    post[i] = a;
    Matrix scaled = jac_chain[i];
    for (Eigen::Index r = 0; r < scaled.rows(); ++r)
      scaled.row(r) *= act_deriv_from_post(p.activation, a(r));
    jac_chain[i + 1] = p.weights[i + 1] * scaled;
    h = std::move(a);
  }

  JacLossGrad out;
  out.j_nn = jac_chain[n - 1];
  const Matrix diff = out.j_nn - j_ref;
  out.loss = diff.squaredNorm();
  out.grad = MlpGrad::zeros_like(p);
  const Matrix g = 2.0 * diff;  // dL / dJ_NN

  // Suffix chain S_i = d f / d a_i = W_n D_{n-1} ... W_{i+1} D_i, S_n = I.
  std::vector<Matrix> suffix(static_cast<std::size_t>(n));
  suffix[n - 1] = Matrix::Identity(dx, dx);
  for (int i = n - 2; i >= 0; --i) {
    Matrix s = suffix[i + 1] * p.weights[i + 1];
    for (Eigen::Index c = 0; c < s.cols(); ++c)
      s.col(c) *= act_deriv_from_post(p.activation, post[i](c));
    suffix[i] = std::move(s);
  }

  // Explicit terms: J depends on W_i through the product chain. With
  // Q_i = D_{i-1} P_{i-1} (Q_1 = x-column selector), dL/dW_i += S_i^T G Q_i^T.
  for (int i = 0; i < n; ++i) {
    const Matrix sg = suffix[i].transpose() * g;  // h_i x d_x
    if (i == 0) {
      out.grad.weights[0].leftCols(dx) += sg;
    } else {
      Matrix q = jac_chain[i - 1];  // P_{i-1}
      for (Eigen::Index r = 0; r < q.rows(); ++r)
        q.row(r) *= act_deriv_from_post(p.activation, post[i - 1](r));
      out.grad.weights[i].noalias() += sg * q.transpose();
    }
  }

  // Implicit terms: J depends on theta through the pre-activations inside
  // each D_i. Inject v_i[j] = sigma''(a_i[j]) * (A_i[:,j]^T G P_i[j,:]^T)
  // with A_i = S_{i+1} W_{i+1}, then run standard backprop on the a_i chain.
  if (n >= 2) {
    std::vector<Vector> inject(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n - 1; ++i) {
      const Matrix a_i = suffix[i + 1] * p.weights[i + 1];  // d_x x h_i
      const Matrix gp = g * jac_chain[i].transpose();       // d_x x h_i
      Vector v(a_i.cols());
      for (Eigen::Index j = 0; j < v.size(); ++j)
        v(j) = act_second_from_post(p.activation, post[i](j)) * a_i.col(j).dot(gp.col(j));
      inject[i] = std::move(v);
    }
    Vector delta = inject[n - 2];
    for (int i = n - 2; i >= 0; --i) {
      const Vector& layer_in = (i == 0) ? z : post[i - 1];
      out.grad.weights[i].noalias() += delta * layer_in.transpose();
      out.grad.biases[i] += delta;
      if (i > 0) {
        Vector back = p.weights[i].transpose() * delta;
        for (Eigen::Index k = 0; k < back.size(); ++k)
          back(k) *= act_deriv_from_post(p.activation, post[i - 1](k));
        delta = inject[i - 1] + back;
      }
    }
  }
  return out;
}

MlpParams init_mlp(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw DimensionError("init_mlp: need at least two layer dims");
  for (int d : layer_dims)
    if (d <= 0) throw DimensionError("init_mlp: layer dims must be positive");

  MlpParams p;
  p.layer_dims = layer_dims;
  p.activation = activation;
  Rng rng = Rng::derive(seed, 0x6d6c7069ULL);
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    const int fan_in = layer_dims[i];
    const int fan_out = layer_dims[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector::Zero(fan_out));
  }
  // Identity normalization placeholder; training replaces it with the
  // statistics of the data the model is fitted to.
  const int dx = layer_dims.back();
  const int du = layer_dims.front() - dx;
  p.norm.state_mean = Vector::Zero(dx);
  p.norm.state_std = Vector::Ones(dx);
  p.norm.input_mean = Vector::Zero(du);
  p.norm.input_std = Vector::Ones(du);
  return p;
}

// --- model file -------------------------------------------------------------

void save_model(const ModelFile& m, const std::filesystem::path& file) {
  m.params.validate();
  nlohmann::json j;
  j["kind"] = m.kind == ModelFile::Kind::Node ? "node" : "narx";
  if (m.kind == ModelFile::Kind::Narx) j["narx_dt"] = m.narx_dt;
  j["layer_dims"] = m.params.layer_dims;
  j["activation"] = to_string(m.params.activation);
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : m.params.weights) weights.push_back(matrix_to_json(w));
  j["weights"] = std::move(weights);
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& b : m.params.biases) biases.push_back(vector_to_json(b));
  j["biases"] = std::move(biases);
  j["norm"] = norm_stats_to_json(m.params.norm);
  j["train_config_echo"] = m.train_config_echo;

  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + file.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed to write model file: " + file.string());
}

ModelFile load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open model file: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file: invalid JSON in " + file.string() + ": " + e.what());
  }

  ModelFile m;
  const std::string kind = j.value("kind", "node");
  if (kind == "node") {
    m.kind = ModelFile::Kind::Node;
  } else if (kind == "narx") {
    m.kind = ModelFile::Kind::Narx;
    if (!j.contains("narx_dt")) throw FormatError("model file: narx model missing narx_dt");
    m.narx_dt = j.at("narx_dt").get<double>();
  } else {
    throw FormatError("model file: unknown kind '" + kind + "'");
  }

  for (const char* key : {"layer_dims", "activation", "weights", "biases"})
    if (!j.contains(key)) throw FormatError(std::string("model file: missing field '") + key + "'");
  if (!j.contains("norm") || j.at("norm").is_null())
    throw FormatError("model file: missing norm stats; predictions are undefined without them");

  m.params.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  m.params.activation = activation_from_string(j.at("activation").get<std::string>());
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() + 1 != m.params.layer_dims.size() || biases.size() != weights.size())
    throw FormatError("model file: layer count mismatch between dims and weights");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Matrix w = matrix_from_json(weights[i], "weights[" + std::to_string(i) + "]");
    if (w.rows() != m.params.layer_dims[i + 1] || w.cols() != m.params.layer_dims[i])
      throw FormatError("model file: weight shape mismatch at layer " + std::to_string(i));
    m.params.weights.push_back(std::move(w));
    Vector b = vector_from_json(biases[i], "biases[" + std::to_string(i) + "]");
    if (b.size() != m.params.layer_dims[i + 1])
      throw FormatError("model file: bias shape mismatch at layer " + std::to_string(i));
    m.params.biases.push_back(std::move(b));
  }
  m.params.norm = norm_stats_from_json(j.at("norm"));
  if (m.params.norm.state_mean.size() != m.params.output_dim())
    throw FormatError("model file: norm stats state dim mismatch");
  if (m.params.norm.input_mean.size() != m.params.input_dim() - m.params.output_dim())
    throw FormatError("model file: norm stats input dim mismatch");
  if (j.contains("train_config_echo")) m.train_config_echo = j.at("train_config_echo");
  m.params.validate();
  return m;
}

}  // namespace lfi
