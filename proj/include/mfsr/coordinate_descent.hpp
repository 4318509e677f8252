#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "mfsr/lasso.hpp"

namespace mfsr {

/// Cyclic coordinate descent on 1/2 ||D a - s||^2 + eta ||a||_1, run until
/// the largest coefficient change in a sweep drops below tol. Independent of
/// the homotopy solver; used to cross-check it.
inline SparseCode coordinate_descent_oracle(const Eigen::MatrixXd& d, const Eigen::VectorXd& s,
                                            double eta, double tol, int max_sweeps = 1000000) {
    if (s.size() != d.rows()) {
        throw std::invalid_argument("coordinate_descent_oracle: signal length " +
                                    std::to_string(s.size()) + " vs dim " +
                                    std::to_string(d.rows()));
    }
    const Eigen::Index k = d.cols();
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd residual = s;
    const Eigen::VectorXd norms = d.colwise().squaredNorm().transpose();
    SparseCode code;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double biggest = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (norms[j] == 0.0) continue;
            const double rho = d.col(j).dot(residual) + norms[j] * alpha[j];
            const double next = soft_threshold(rho, eta) / norms[j];
            const double delta = next - alpha[j];
            if (delta != 0.0) {
                residual -= delta * d.col(j);
                alpha[j] = next;
                biggest = std::max(biggest, std::abs(delta));
            }
        }
        code.steps = sweep + 1;
        if (biggest < tol) break;
    }
    code.coefficients = alpha;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (alpha[j] != 0.0) code.active_set.push_back(static_cast<int>(j));
    }
    code.objective = lasso_objective(d, s, eta, alpha);
    return code;
}

}  // namespace mfsr
