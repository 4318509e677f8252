#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfsr/image.hpp"

namespace mfsr {

/// Solution of  min_a  1/2 ||D a - s||^2 + eta ||a||_1.
struct SparseCode {
    Eigen::VectorXd coefficients;
    std::vector<int> active_set;  // indices with nonzero coefficients, ascending
    double objective = 0.0;
    int steps = 0;                // homotopy breakpoints visited
    std::vector<double> path;     // penalty level at each breakpoint, if recorded
};

inline double lasso_objective(const Eigen::MatrixXd& d, const Eigen::VectorXd& s, double eta,
                              const Eigen::VectorXd& alpha) {
    return 0.5 * (d * alpha - s).squaredNorm() + eta * alpha.lpNorm<1>();
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

/// Largest KKT violation, relative to max(1, ||D^T s||_inf):
/// active j need d_j^T r = eta sign(a_j); inactive j need |d_j^T r| <= eta.
inline double kkt_violation(const Eigen::MatrixXd& d, const Eigen::VectorXd& s, double eta,
                            const Eigen::VectorXd& alpha) {
    const Eigen::VectorXd corr = d.transpose() * (s - d * alpha);
    const double scale = std::max(1.0, (d.transpose() * s).lpNorm<Eigen::Infinity>());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < corr.size(); ++j) {
        double v;
        if (alpha[j] != 0.0) {
            v = std::abs(corr[j] - eta * (alpha[j] > 0 ? 1.0 : -1.0));
        } else {
            v = std::max(0.0, std::abs(corr[j]) - eta);
        }
        worst = std::max(worst, v);
    }
    return worst / scale;
}

namespace detail {

/// Lower-triangular factor of the active Gram block with column append and
/// symmetric row/column deletion.
class ActiveCholesky {
public:
    explicit ActiveCholesky(int capacity) : l_(capacity, capacity) {}

    int size() const noexcept { return n_; }

    /// Appends an atom given its Gram entries against the current active set
    /// (cross) and itself (diag). Returns false if it is numerically dependent.
    bool append(const Eigen::VectorXd& cross, double diag) {
        Eigen::VectorXd v(n_);
        if (n_ > 0) {
            v = l_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solve(cross);
        }
        const double pivot = diag - (n_ > 0 ? v.squaredNorm() : 0.0);
        if (!(pivot > 1e-12 * std::max(diag, 1e-300))) return false;
        if (n_ > 0) {
            l_.row(n_).head(n_) = v.transpose();
        }
        l_(n_, n_) = std::sqrt(pivot);
        for (int c = n_ + 1; c < l_.cols(); ++c) l_(n_, c) = 0.0;
        ++n_;
        return true;
    }

    void remove(int k) {
        // Drop row k, then rotate columns back to lower-triangular form.
        for (int r = k; r + 1 < n_; ++r) l_.row(r).head(n_) = l_.row(r + 1).head(n_);
        const int m = n_ - 1;
        for (int i = k; i < m; ++i) {
            const double a = l_(i, i);
            const double b = l_(i, i + 1);
            const double r = std::hypot(a, b);
            if (r == 0.0) continue;
            const double c = a / r;
            const double s = b / r;
            for (int p = i; p < m; ++p) {
                const double x = l_(p, i);
                const double y = l_(p, i + 1);
                l_(p, i) = c * x + s * y;
                l_(p, i + 1) = -s * x + c * y;
            }
        }
        for (int p = 0; p < m; ++p) l_(p, m) = 0.0;
        n_ = m;
    }

    void rebuild(const Eigen::MatrixXd& gram_block) {
        n_ = static_cast<int>(gram_block.rows());
        Eigen::LLT<Eigen::MatrixXd> llt(gram_block);
        l_.topLeftCorner(n_, n_) = llt.matrixL();
    }

    double condition_estimate() const {
        if (n_ == 0) return 1.0;
        const auto diag = l_.diagonal().head(n_).cwiseAbs();
        const double lo = diag.minCoeff();
        if (lo == 0.0) return std::numeric_limits<double>::infinity();
        const double ratio = diag.maxCoeff() / lo;
        return ratio * ratio;
    }

    /// Solves (L L^T) x = b.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        const auto lower = l_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
        Eigen::VectorXd y = lower.solve(b);
        return lower.transpose().solve(y);
    }

private:
    Eigen::MatrixXd l_;
    int n_ = 0;
};

}  // namespace detail

/// Optional precomputed D^T D, shared when many signals are coded against
/// one dictionary.
struct LassoOptions {
    const Eigen::MatrixXd* gram = nullptr;
    int max_steps = -1;  // default 4 K
    bool record_path = false;
};

/// LARS-Lasso homotopy. Follows the piecewise-linear solution path from
/// lambda = ||D^T s||_inf down to eta, adding atoms when their correlation
/// reaches the current level and removing atoms whose coefficient crosses
/// zero. Atoms are used as given (no normalization).
inline SparseCode lars_lasso(const Eigen::MatrixXd& d, const Eigen::VectorXd& s, double eta,
                             const LassoOptions& opts = {}) {
    if (!(eta >= 0.0)) throw std::invalid_argument("lars_lasso: eta must be >= 0");
    if (s.size() != d.rows()) {
        throw std::invalid_argument("lars_lasso: signal length " + std::to_string(s.size()) +
                                    " does not match dictionary dim " +
                                    std::to_string(d.rows()));
    }
    const int k_atoms = static_cast<int>(d.cols());
    const int dim = static_cast<int>(d.rows());
    const int max_steps = opts.max_steps > 0 ? opts.max_steps : 4 * std::max(k_atoms, 1);

    SparseCode code;
    code.coefficients = Eigen::VectorXd::Zero(k_atoms);
    if (k_atoms == 0) {
        code.objective = 0.5 * s.squaredNorm();
        return code;
    }

    const Eigen::VectorXd dts = d.transpose() * s;
    double lambda = dts.lpNorm<Eigen::Infinity>();
    if (opts.record_path) code.path.push_back(lambda);
    if (lambda <= eta) {
        code.objective = 0.5 * s.squaredNorm();
        return code;
    }

    std::vector<Eigen::VectorXd> gram_cache(static_cast<std::size_t>(opts.gram ? 0 : k_atoms));
    auto gram_col = [&](int j) -> Eigen::Ref<const Eigen::VectorXd> {
        if (opts.gram) return Eigen::Ref<const Eigen::VectorXd>(opts.gram->col(j));
        auto& col = gram_cache[static_cast<std::size_t>(j)];
        if (col.size() == 0) col = d.transpose() * d.col(j);
        return Eigen::Ref<const Eigen::VectorXd>(col);
    };

    std::vector<int> active;       // in insertion order, matches Cholesky rows
    std::vector<double> sign;
    std::vector<char> is_active(static_cast<std::size_t>(k_atoms), 0);
    std::vector<char> blocked(static_cast<std::size_t>(k_atoms), 0);
    detail::ActiveCholesky chol(std::min(k_atoms, dim));
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k_atoms);
    Eigen::VectorXd corr = dts;

    auto try_add = [&](int j) {
        const auto g = gram_col(j);
        Eigen::VectorXd cross(static_cast<Eigen::Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) cross[a] = g[active[a]];
        if (static_cast<int>(active.size()) >= dim || !chol.append(cross, g[j])) {
            blocked[j] = 1;
            return;
        }
        active.push_back(j);
        sign.push_back(corr[j] >= 0 ? 1.0 : -1.0);
        is_active[j] = 1;
    };

    // first atom: largest correlation, lowest index on ties
    {
        int best = 0;
        for (int j = 1; j < k_atoms; ++j) {
            if (std::abs(dts[j]) > std::abs(dts[best])) best = j;
        }
        try_add(best);
    }

    int just_dropped = -1;
    for (int step = 0;; ++step) {
        if (step >= max_steps) {
            throw std::runtime_error(
                "lars_lasso: exceeded " + std::to_string(max_steps) +
                " steps; last objective " + std::to_string(lasso_objective(d, s, eta, alpha)));
        }
        code.steps = step + 1;
        if (active.empty()) break;

        if (chol.condition_estimate() > 1e8) {
            Eigen::MatrixXd block(active.size(), active.size());
            for (std::size_t a = 0; a < active.size(); ++a) {
                const auto g = gram_col(active[a]);
                for (std::size_t b = 0; b < active.size(); ++b) block(b, a) = g[active[b]];
            }
            chol.rebuild(block);
        }

        Eigen::VectorXd sgn(static_cast<Eigen::Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) sgn[a] = sign[a];
        const Eigen::VectorXd w = chol.solve(sgn);

        // a = G[:, A] w : rate at which each correlation decreases per unit step
        Eigen::VectorXd rate = Eigen::VectorXd::Zero(k_atoms);
        for (std::size_t a = 0; a < active.size(); ++a) rate += w[a] * gram_col(active[a]);

        double gamma = lambda - eta;
        int event = -1;  // atom index
        bool event_is_drop = false;

        const double tiny = 1e-14 * std::max(1.0, lambda);
        for (int j = 0; j < k_atoms; ++j) {
            if (is_active[j] || blocked[j] || j == just_dropped) continue;
            const double up = 1.0 - rate[j];
            if (up > 1e-12) {
                const double g = std::max(lambda - corr[j], 0.0) / up;
                if (g < gamma) {
                    gamma = g;
                    event = j;
                    event_is_drop = false;
                }
            }
            const double down = 1.0 + rate[j];
            if (down > 1e-12) {
                const double g = std::max(lambda + corr[j], 0.0) / down;
                if (g < gamma) {
                    gamma = g;
                    event = j;
                    event_is_drop = false;
                }
            }
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            const int j = active[a];
            if (w[a] == 0.0) continue;
            const double g = -alpha[j] / w[a];
            if (g > tiny && g < gamma) {
                gamma = g;
                event = j;
                event_is_drop = true;
            }
        }

        for (std::size_t a = 0; a < active.size(); ++a) alpha[active[a]] += gamma * w[a];
        lambda -= gamma;
        if (opts.record_path) code.path.push_back(lambda);

        // exact correlations from the residual keep drift out of the path
        corr = dts;
        for (std::size_t a = 0; a < active.size(); ++a) {
            corr -= alpha[active[a]] * gram_col(active[a]);
        }

        if (event < 0) break;  // reached eta
        just_dropped = -1;
        if (event_is_drop) {
            const auto it = std::find(active.begin(), active.end(), event);
            const int pos = static_cast<int>(it - active.begin());
            alpha[event] = 0.0;
            chol.remove(pos);
            active.erase(it);
            sign.erase(sign.begin() + pos);
            is_active[event] = 0;
            just_dropped = event;
            std::fill(blocked.begin(), blocked.end(), 0);
            corr = dts;
            for (int j : active) corr -= alpha[j] * gram_col(j);
        } else {
            try_add(event);
        }
        if (lambda <= eta) break;
    }

    code.coefficients = alpha;
    for (int j = 0; j < k_atoms; ++j) {
        if (alpha[j] != 0.0) code.active_set.push_back(j);
    }
    code.objective = lasso_objective(d, s, eta, alpha);
    return code;
}

inline SparseCode lars_lasso(const Dictionary& d, const Eigen::VectorXd& s, double eta,
                             const LassoOptions& opts = {}) {
    return lars_lasso(d.atoms(), s, eta, opts);
}

}  // namespace mfsr
