#include "lfinode/json_io.hpp"

namespace lfi {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw FormatError(what + " must be a 2-d array");
  const auto rows = j.size();
  const auto cols = j.front().size();
  if (cols == 0) throw FormatError(what + " must not have empty rows");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw FormatError(what + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError(what + " must be an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

nlohmann::json complex_to_json(const std::complex<double>& z) {
  return nlohmann::json{{"re", z.real()}, {"im", z.imag()}};
}

nlohmann::json jacobian_estimate_to_json(const JacobianEstimate& est) {
  return nlohmann::json{{"j_ref", matrix_to_json(est.j_ref)},
                        {"n_samples", est.n_samples},
                        {"cond", est.cond},
                        {"delta_x_norm", est.delta_x_norm},
                        {"lsq_residual", est.lsq_residual}};
}

nlohmann::json noise_bound_to_json(const NoiseBound& nb) {
  return nlohmann::json{{"sigma_x", nb.sigma_x},
                        {"sigma_xdot", nb.sigma_xdot},
                        {"jstar_norm", nb.jstar_norm},
                        {"bound", nb.bound}};
}

nlohmann::json eigen_report_to_json(const EigenReport& rep) {
  nlohmann::json eigs = nlohmann::json::array();
  for (const auto& e : rep.eigenvalues) eigs.push_back(complex_to_json(e));
  return nlohmann::json{{"eigenvalues", std::move(eigs)},
                        {"max_real", rep.max_real},
                        {"verdict", to_string(rep.verdict)},
                        {"source", to_string(rep.source)}};
}

nlohmann::json eig_error_to_json(const EigError& err) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [est, ref] : err.pairs)
    pairs.push_back(nlohmann::json{{"estimate", complex_to_json(est)}, {"reference", complex_to_json(ref)}});
  nlohmann::json unmatched_est = nlohmann::json::array();
  for (const auto& e : err.unmatched_estimated) unmatched_est.push_back(complex_to_json(e));
  nlohmann::json unmatched_ref = nlohmann::json::array();
  for (const auto& e : err.unmatched_reference) unmatched_ref.push_back(complex_to_json(e));
  return nlohmann::json{{"pairs", std::move(pairs)},
                        {"mae", err.mae},
                        {"unmatched_estimated", std::move(unmatched_est)},
                        {"unmatched_reference", std::move(unmatched_ref)}};
}

}  // namespace lfi
