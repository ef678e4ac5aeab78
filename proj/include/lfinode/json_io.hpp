#pragma once

#include <complex>
#include <string>

#include <nlohmann/json.hpp>

#include "lfinode/common.hpp"
#include "lfinode/jacest.hpp"
#include "lfinode/stability.hpp"

namespace lfi {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json complex_to_json(const std::complex<double>& z);

nlohmann::json jacobian_estimate_to_json(const JacobianEstimate& est);
nlohmann::json noise_bound_to_json(const NoiseBound& nb);
nlohmann::json eigen_report_to_json(const EigenReport& rep);
nlohmann::json eig_error_to_json(const EigError& err);

}  // namespace lfi
