#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfsr/degrade.hpp"
#include "mfsr/image.hpp"
#include "mfsr/lasso.hpp"
#include "mfsr/parallel.hpp"

namespace mfsr {

inline constexpr double kMinPatchVariance = 1e-4;

/// Random side x side windows (uniform image, then uniform location), mean
/// removed, one per column. Windows with variance below 1e-4 are redrawn.
inline Eigen::MatrixXd sample_patches(const std::vector<Image>& images, int patch_side, int count,
                                      std::uint64_t rng_seed) {
    if (images.empty()) throw std::invalid_argument("sample_patches: no training images");
    if (patch_side < 1 || count < 0) throw std::invalid_argument("sample_patches: bad arguments");
    for (const auto& img : images) {
        if (patch_side > img.height() || patch_side > img.width()) {
            throw std::invalid_argument("sample_patches: patch side " + std::to_string(patch_side) +
                                        " exceeds a training image (" +
                                        std::to_string(img.height()) + "x" +
                                        std::to_string(img.width()) + ")");
        }
    }
    const int dim = patch_side * patch_side;
    Eigen::MatrixXd out(dim, count);
    Rng rng(rng_seed);
    const std::uint64_t max_attempts = 100ull * static_cast<std::uint64_t>(std::max(count, 1));
    std::uint64_t attempts = 0;
    Eigen::VectorXd v(dim);
    for (int n = 0; n < count;) {
        if (attempts++ >= max_attempts) {
            throw std::runtime_error("sample_patches: only " + std::to_string(n) + " of " +
                                     std::to_string(count) + " patches found after " +
                                     std::to_string(max_attempts) +
                                     " draws (training images too flat)");
        }
        const Image& img = images[rng.below(images.size())];
        const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - patch_side + 1)));
        const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - patch_side + 1)));
        for (int i = 0; i < patch_side; ++i)
            for (int j = 0; j < patch_side; ++j) v[i * patch_side + j] = img(r + i, c + j);
        const double mean = v.mean();
        v.array() -= mean;
        const double var = v.squaredNorm() / dim;
        if (var < kMinPatchVariance) continue;
        out.col(n++) = v;
    }
    return out;
}

struct DictLearnOptions {
    int threads = 1;
    std::vector<double>* objective_history = nullptr;  // filled with iterations + 1 values
};

namespace detail {

struct SparseColumn {
    std::vector<int> index;
    std::vector<double> value;
};

/// Codes every column of P against D; returns the total objective.
inline double code_all(const Eigen::MatrixXd& d, const Eigen::MatrixXd& patches, double eta,
                       int threads, std::vector<SparseColumn>& codes) {
    const Eigen::MatrixXd gram = d.transpose() * d;
    LassoOptions opts;
    opts.gram = &gram;
    codes.assign(static_cast<std::size_t>(patches.cols()), {});
    std::vector<double> obj(static_cast<std::size_t>(patches.cols()), 0.0);
    parallel_for(static_cast<int>(patches.cols()), threads, [&](int i) {
        const Eigen::VectorXd s = patches.col(i);
        const SparseCode code = lars_lasso(d, s, eta, opts);
        auto& sc = codes[static_cast<std::size_t>(i)];
        for (int j : code.active_set) {
            sc.index.push_back(j);
            sc.value.push_back(code.coefficients[j]);
        }
        obj[static_cast<std::size_t>(i)] = code.objective;
    });
    double total = 0.0;
    for (double o : obj) total += o;  // index order, independent of scheduling
    return total;
}

/// Indices of the `count` patches with the largest reconstruction error
/// (ties to the lower index).
inline std::vector<int> worst_patches(const Eigen::MatrixXd& d, const Eigen::MatrixXd& patches,
                                      const std::vector<SparseColumn>& codes, std::size_t count) {
    const int n = static_cast<int>(patches.cols());
    std::vector<double> err(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd r = patches.col(i);
        const auto& sc = codes[static_cast<std::size_t>(i)];
        for (std::size_t a = 0; a < sc.index.size(); ++a) r -= sc.value[a] * d.col(sc.index[a]);
        err[static_cast<std::size_t>(i)] = r.squaredNorm();
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(count, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](int a, int b) { return err[a] > err[b] || (err[a] == err[b] && a < b); });
    order.resize(take);
    return order;
}

/// For each atom pair with |<d_i, d_j>| above the threshold, the member
/// used by fewer patches (higher index on ties).
inline std::vector<int> redundant_atoms(const Eigen::MatrixXd& d,
                                        const std::vector<SparseColumn>& codes, double threshold) {
    const int k = static_cast<int>(d.cols());
    std::vector<int> usage(static_cast<std::size_t>(k), 0);
    for (const auto& sc : codes)
        for (int j : sc.index) ++usage[j];
    const Eigen::MatrixXd g = d.transpose() * d;
    std::vector<char> mark(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            if (mark[i] || mark[j] || std::abs(g(i, j)) <= threshold) continue;
            mark[usage[j] <= usage[i] ? j : i] = 1;
        }
    }
    std::vector<int> out;
    for (int j = 0; j < k; ++j)
        if (mark[j]) out.push_back(j);
    return out;
}

}  // namespace detail

inline constexpr double kRedundantAtomCorrelation = 0.99;

/// Alternates LARS-Lasso coding of all patches with a projected
/// block-coordinate update of the atoms (||d_j|| <= 1). After each update,
/// atoms are rescaled to unit norm with the matching code rows shrunk,
/// and unused atoms are replaced by the worst-reconstructed patch. Atoms
/// that nearly duplicate another are swapped the same way when that lowers
/// the objective.
inline Dictionary learn_dictionary(const Eigen::MatrixXd& patches, int k_atoms, double eta,
                                   int iterations, std::uint64_t rng_seed,
                                   const DictLearnOptions& opts = {}) {
    if (k_atoms < 1) throw std::invalid_argument("learn_dictionary: k_atoms must be >= 1");
    if (patches.cols() < k_atoms) {
        throw std::invalid_argument("learn_dictionary: " + std::to_string(patches.cols()) +
                                    " patches cannot seed " + std::to_string(k_atoms) + " atoms");
    }
    if (iterations < 0) throw std::invalid_argument("learn_dictionary: negative iterations");
    const int dim = static_cast<int>(patches.rows());
    const int n = static_cast<int>(patches.cols());

    // initialization: k distinct random training patches, normalized
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(rng_seed);
    for (int i = 0; i < k_atoms; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[i], order[j]);
    }
    Eigen::MatrixXd d(dim, k_atoms);
    for (int k = 0; k < k_atoms; ++k) {
        d.col(k) = patches.col(order[k]);
        const double nrm = d.col(k).norm();
        if (nrm > 0.0) {
            d.col(k) /= nrm;
        } else {
            d.col(k).setZero();
            d(k % dim, k) = 1.0;
        }
    }
    if (opts.objective_history) opts.objective_history->clear();
    if (iterations == 0) return Dictionary(std::move(d));

    std::vector<detail::SparseColumn> codes;
    double obj = detail::code_all(d, patches, eta, opts.threads, codes);
    if (opts.objective_history) opts.objective_history->push_back(obj);

    for (int it = 0; it < iterations; ++it) {
        // sufficient statistics A A^T and P A^T
        Eigen::MatrixXd aat = Eigen::MatrixXd::Zero(k_atoms, k_atoms);
        Eigen::MatrixXd pat = Eigen::MatrixXd::Zero(dim, k_atoms);
        for (int i = 0; i < n; ++i) {
            const auto& sc = codes[static_cast<std::size_t>(i)];
            for (std::size_t a = 0; a < sc.index.size(); ++a) {
                pat.col(sc.index[a]) += sc.value[a] * patches.col(i);
                for (std::size_t b = 0; b < sc.index.size(); ++b) {
                    aat(sc.index[a], sc.index[b]) += sc.value[a] * sc.value[b];
                }
            }
        }

        // one sweep of exact per-atom minimization, projected on the unit ball
        for (int j = 0; j < k_atoms; ++j) {
            const double ajj = aat(j, j);
            if (ajj <= 0.0) continue;
            Eigen::VectorXd u = d.col(j) + (pat.col(j) - d * aat.col(j)) / ajj;
            const double nrm = u.norm();
            if (nrm > 1.0) u /= nrm;
            d.col(j) = u;
        }

        // unit norm: D A is unchanged when row j of A is scaled by ||d_j||
        std::vector<double> row_scale(static_cast<std::size_t>(k_atoms), 1.0);
        for (int j = 0; j < k_atoms; ++j) {
            const double nrm = d.col(j).norm();
            if (aat(j, j) <= 0.0 || nrm == 0.0) continue;
            d.col(j) /= nrm;
            row_scale[j] = nrm;
        }
        for (auto& sc : codes) {
            for (std::size_t a = 0; a < sc.index.size(); ++a) sc.value[a] *= row_scale[sc.index[a]];
        }

        // unused atoms take the worst-reconstructed patches
        std::vector<int> dead;
        for (int j = 0; j < k_atoms; ++j) {
            if (aat(j, j) <= 0.0) dead.push_back(j);
        }
        if (!dead.empty()) {
            const auto worst = detail::worst_patches(d, patches, codes, dead.size());
            for (std::size_t q = 0; q < worst.size(); ++q) {
                const double nrm = patches.col(worst[q]).norm();
                if (nrm > 0.0) d.col(dead[q]) = patches.col(worst[q]) / nrm;
            }
        }

        obj = detail::code_all(d, patches, eta, opts.threads, codes);

        // near-duplicate atoms: trial swap for the worst-reconstructed
        // patches, kept only if the re-coded objective drops
        const auto redundant = detail::redundant_atoms(d, codes, kRedundantAtomCorrelation);
        if (!redundant.empty()) {
            const auto worst = detail::worst_patches(d, patches, codes, redundant.size());
            Eigen::MatrixXd trial = d;
            for (std::size_t q = 0; q < worst.size(); ++q) {
                const double nrm = patches.col(worst[q]).norm();
                if (nrm > 0.0) trial.col(redundant[q]) = patches.col(worst[q]) / nrm;
            }
            std::vector<detail::SparseColumn> trial_codes;
            const double trial_obj = detail::code_all(trial, patches, eta, opts.threads, trial_codes);
            if (trial_obj < obj) {
                d = std::move(trial);
                codes = std::move(trial_codes);
                obj = trial_obj;
            }
        }
        if (opts.objective_history) opts.objective_history->push_back(obj);
    }
    return Dictionary(std::move(d));
}

}  // namespace mfsr
