#pragma once

/**
 * @file least_squares.hpp
 * @brief Damped Gauss-Newton (Levenberg-Marquardt) solver for weighted residual problems.
 *
 * The Jacobian is taken by central finite differences unless the problem
 * supplies one. Covariance is the inverse of J^T J at the optimum, optionally
 * scaled by the reduced chi-square when residuals are not already weighted by
 * known standard deviations.
 */

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nvtherm::estimation {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ResidualFunction = std::function<Vector(const Vector&)>;
using JacobianFunction = std::function<Matrix(const Vector&)>;

struct SolverTolerances {
    double step = 1e-10;       // relative parameter step
    double gradient = 1e-12;   // gradient norm relative to the initial one
    double cost = 1e-15;       // relative cost decrease over an accepted step
    int max_iterations = 200;
};

struct FitProblem {
    ResidualFunction residuals;
    Vector initial;
    std::vector<std::string> names;
    std::optional<Vector> lower;
    std::optional<Vector> upper;
    JacobianFunction jacobian;  // optional analytic Jacobian
    SolverTolerances tolerances;
    /// Scale the covariance by chi2 / (m - n). Off when residuals carry known sigmas.
    bool scale_covariance = true;
};

struct FitResult {
    Vector parameters;
    Matrix covariance;
    double residual_norm = 0.0;   // ||r|| at the optimum
    double chi_square = 0.0;      // ||r||^2
    int degrees_of_freedom = 0;
    int iterations = 0;
    bool converged = false;
    bool singular = false;        // normal matrix rank deficient; covariance is a pseudo-inverse
    std::string message;

    double sigma(Eigen::Index i) const;
};

/// Central-difference Jacobian with per-parameter step max(1e-6 |p|, 1e-12).
Matrix finite_difference_jacobian(const ResidualFunction& residuals, const Vector& parameters);

FitResult least_squares_solve(const FitProblem& problem);

}  // namespace nvtherm::estimation
