#include "nvtherm/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nvtherm::estimation {

namespace {

constexpr double kInitialDamping = 1e-3;
constexpr double kMaxDamping = 1e20;

Vector clamp(const FitProblem& problem, Vector p) {
    if (problem.lower) p = p.cwiseMax(*problem.lower);
    if (problem.upper) p = p.cwiseMin(*problem.upper);
    return p;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

void validate(const FitProblem& problem) {
    if (!problem.residuals) {
        throw std::invalid_argument("fit problem has no residual function");
    }
    const auto n = problem.initial.size();
    if (n == 0) {
        throw std::invalid_argument("fit problem has no parameters");
    }
    if (!all_finite(problem.initial)) {
        throw std::invalid_argument("fit problem initial values must be finite");
    }
    if (!problem.names.empty() && static_cast<Eigen::Index>(problem.names.size()) != n) {
        throw std::invalid_argument("fit problem parameter names do not match parameter count");
    }
    if ((problem.lower && problem.lower->size() != n) || (problem.upper && problem.upper->size() != n)) {
        throw std::invalid_argument("fit problem bounds do not match parameter count");
    }
    if (problem.lower && problem.upper && ((*problem.lower).array() > (*problem.upper).array()).any()) {
        throw std::invalid_argument("fit problem lower bound exceeds upper bound");
    }
    if (problem.tolerances.max_iterations < 1) {
        throw std::invalid_argument("fit problem needs at least one iteration");
    }
}

Matrix jacobian_at(const FitProblem& problem, const Vector& p) {
    if (problem.jacobian) return problem.jacobian(p);
    return finite_difference_jacobian(problem.residuals, p);
}

struct Covariance {
    Matrix matrix;
    bool singular = false;
};

Covariance invert_normal_matrix(const Matrix& normal) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(normal);
    const Vector values = eig.eigenvalues();
    const double largest = values.cwiseAbs().maxCoeff();
    const double cutoff = largest * static_cast<double>(normal.rows()) * std::numeric_limits<double>::epsilon();
    Covariance out;
    Vector inverse_values(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) > cutoff && largest > 0.0) {
            inverse_values(i) = 1.0 / values(i);
        } else {
            inverse_values(i) = 0.0;
            out.singular = true;
        }
    }
    out.matrix = eig.eigenvectors() * inverse_values.asDiagonal() * eig.eigenvectors().transpose();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    return out;
}

}  // namespace

double FitResult::sigma(Eigen::Index i) const {
    return std::sqrt(std::max(0.0, covariance(i, i)));
}

Matrix finite_difference_jacobian(const ResidualFunction& residuals, const Vector& parameters) {
    const Vector r0 = residuals(parameters);
    Matrix jac(r0.size(), parameters.size());
    Vector p = parameters;
    for (Eigen::Index j = 0; j < parameters.size(); ++j) {
        const double h = std::max(1e-6 * std::abs(parameters(j)), 1e-12);
        p(j) = parameters(j) + h;
        const Vector forward = residuals(p);
        p(j) = parameters(j) - h;
        const Vector backward = residuals(p);
        p(j) = parameters(j);
        jac.col(j) = (forward - backward) / (2.0 * h);
    }
    return jac;
}

FitResult least_squares_solve(const FitProblem& problem) {
    validate(problem);
    const auto n = problem.initial.size();
    const auto& tol = problem.tolerances;

    Vector p = clamp(problem, problem.initial);
    Vector r = problem.residuals(p);
    if (!all_finite(r)) {
        throw std::invalid_argument("fit problem residuals are not finite at the initial values");
    }
    if (r.size() < n) {
        throw std::invalid_argument("fit problem has fewer residuals than parameters");
    }
    double cost = r.squaredNorm();

    Matrix jac = jacobian_at(problem, p);
    Vector grad = jac.transpose() * r;
    const double initial_grad = grad.norm();

    FitResult result;
    result.degrees_of_freedom = static_cast<int>(r.size() - n);
    double damping = kInitialDamping;
    int iter = 0;
    bool converged = initial_grad == 0.0;
    std::string message = converged ? "zero gradient at start" : "";

    while (!converged && iter < tol.max_iterations) {
        ++iter;
        const Matrix normal = jac.transpose() * jac;
        Vector scale = normal.diagonal();
        const double floor = std::max(scale.maxCoeff(), 1.0) * 1e-30;
        scale = scale.cwiseMax(floor);

        Matrix damped = normal;
        damped.diagonal() += damping * scale;
        const Vector delta = damped.ldlt().solve(-grad);

        bool accepted = false;
        Vector p_new = p;
        Vector r_new;
        double cost_new = std::numeric_limits<double>::infinity();
        if (all_finite(delta)) {
            p_new = clamp(problem, p + delta);
            try {
                r_new = problem.residuals(p_new);
                if (all_finite(r_new)) cost_new = r_new.squaredNorm();
            } catch (const std::exception&) {
                // A trial point outside the model's domain counts as a failed step.
            }
            accepted = cost_new < cost;
        }
        const Vector step = p_new - p;
        const bool tiny_step = step.norm() <= tol.step * (p.norm() + tol.step);

        if (accepted) {
            const double decrease = cost - cost_new;
            p = p_new;
            r = r_new;
            cost = cost_new;
            damping = std::max(damping / 10.0, 1e-15);
            jac = jacobian_at(problem, p);
            grad = jac.transpose() * r;
            if (tiny_step) {
                converged = true;
                message = "relative step below tolerance";
            } else if (grad.norm() <= tol.gradient * initial_grad) {
                converged = true;
                message = "gradient below tolerance";
            } else if (decrease <= tol.cost * cost_new) {
                converged = true;
                message = "cost decrease below tolerance";
            }
        } else {
            if (tiny_step && all_finite(delta)) {
                converged = true;
                message = "no further decrease at step resolution";
            } else {
                damping *= 10.0;
                if (damping > kMaxDamping) {
                    message = "damping overflow";
                    break;
                }
            }
        }
    }
    if (!converged && message.empty()) {
        std::ostringstream msg;
        msg << "maximum iterations (" << tol.max_iterations << ") reached";
        message = msg.str();
    }

    result.parameters = p;
    result.chi_square = cost;
    result.residual_norm = std::sqrt(cost);
    result.iterations = iter;
    result.converged = converged;
    result.message = message;

    auto cov = invert_normal_matrix(jac.transpose() * jac);
    result.singular = cov.singular;
    if (problem.scale_covariance && result.degrees_of_freedom > 0) {
        cov.matrix *= cost / result.degrees_of_freedom;
    }
    result.covariance = std::move(cov.matrix);
    return result;
}

}  // namespace nvtherm::estimation
