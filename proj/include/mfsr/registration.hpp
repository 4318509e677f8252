#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsr/image.hpp"
#include "mfsr/parallel.hpp"

namespace mfsr {

/// Cosine similarity a.b / (|a| |b|). Zero-norm inputs score 0. With
/// mean_removed both vectors are centred first (normalized cross-correlation).
inline double similarity(std::span<const double> a, std::span<const double> b,
                         bool mean_removed = false) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("similarity: patch sizes differ (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    double ma = 0.0;
    double mb = 0.0;
    if (mean_removed && !a.empty()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            ma += a[i];
            mb += b[i];
        }
        ma /= static_cast<double>(a.size());
        mb /= static_cast<double>(b.size());
    }
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i] - ma;
        const double y = b[i] - mb;
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline double similarity(const Patch& a, const Patch& b, bool mean_removed = false) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::invalid_argument("similarity: patch shapes differ");
    }
    return similarity(a.data, b.data, mean_removed);
}

struct IntegerMatch {
    int dx = 0;  // displacement convention of Displacement
    int dy = 0;
    double score = 0.0;
};

struct RegistrationOptions {
    int radius = 5;              // LR pixels
    double delta = 0.0;          // acceptance threshold on the score
    bool mean_removed = false;   // match centred patches instead of raw luminance
    int block_margin = 0;        // grow the matched block by this many LR pixels per side
    int refine_levels = 3;       // sub-pixel fits at spacing 1, 1/2, 1/4, ...
    int threads = 1;
};

namespace detail {

/// Similarity between the target patch and the aux block that would map onto
/// it under displacement (dx, dy), i.e. the block at origin - d (clamped).
inline double displaced_score(const Patch& target, const Image& aux, int dx, int dy,
                              bool mean_removed, std::vector<double>& scratch) {
    scratch.resize(target.data.size());
    std::size_t k = 0;
    for (int r = 0; r < target.rows; ++r) {
        for (int c = 0; c < target.cols; ++c) {
            scratch[k++] = aux.clamped(target.row + r - dy, target.col + c - dx);
        }
    }
    return similarity(target.data, scratch, mean_removed);
}

}  // namespace detail

/// Exhaustive scan of integer displacements in [-radius, radius]^2. Ties go to
/// the smallest |d|, then smallest dy, then smallest dx.
inline IntegerMatch integer_search(const Patch& target, const Image& aux, int radius,
                                   bool mean_removed = false) {
    if (target.rows > aux.height() || target.cols > aux.width()) {
        throw std::invalid_argument("integer_search: patch larger than auxiliary frame");
    }
    if (radius < 0) throw std::invalid_argument("integer_search: negative radius");
    std::vector<double> scratch;
    IntegerMatch best{0, 0, -2.0};
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double s = detail::displaced_score(target, aux, dx, dy, mean_removed, scratch);
            bool take = s > best.score;
            if (!take && s == best.score) {
                const int n_new = dx * dx + dy * dy;
                const int n_old = best.dx * best.dx + best.dy * best.dy;
                take = n_new < n_old || (n_new == n_old && (dy < best.dy ||
                                                            (dy == best.dy && dx < best.dx)));
            }
            if (take) best = {dx, dy, s};
        }
    }
    return best;
}

namespace detail {

inline double catmull_rom(double t) {
    t = std::abs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

/// Score at a fractional displacement; the aux block is resampled with a
/// separable Catmull-Rom kernel (replicate borders).
inline double fractional_score(const Patch& target, const Image& aux, double dx, double dy,
                               bool mean_removed, std::vector<double>& scratch) {
    const double fx = std::floor(dx);
    const double fy = std::floor(dy);
    if (fx == dx && fy == dy) {
        return displaced_score(target, aux, static_cast<int>(dx), static_cast<int>(dy),
                               mean_removed, scratch);
    }
    // sample position for target (r, c) is (r - dy, c - dx)
    const int ix = static_cast<int>(fx);
    const int iy = static_cast<int>(fy);
    const double tx = dx - fx;  // sample = c - ix - tx = (c - ix - 1) + (1 - tx)
    const double ty = dy - fy;
    double wx[4];
    double wy[4];
    for (int k = 0; k < 4; ++k) {
        wx[k] = catmull_rom((1.0 - tx) - (k - 1));
        wy[k] = catmull_rom((1.0 - ty) - (k - 1));
    }
    scratch.resize(target.data.size());
    std::size_t n = 0;
    for (int r = 0; r < target.rows; ++r) {
        const int br = target.row + r - iy - 1;
        for (int c = 0; c < target.cols; ++c) {
            const int bc = target.col + c - ix - 1;
            double acc = 0.0;
            for (int a = 0; a < 4; ++a) {
                double row = 0.0;
                for (int b = 0; b < 4; ++b) row += wx[b] * aux.clamped(br + a - 1, bc + b - 1);
                acc += wy[a] * row;
            }
            scratch[n++] = acc;
        }
    }
    return similarity(target.data, scratch, mean_removed);
}

/// Stationary point of the quadratic through a 3x3 grid of scores with
/// spacing 1, clamped to [-0.5, 0.5]; false when the fit is not concave.
inline bool quadratic_peak(const double s[3][3], double& ox, double& oy) {
    const double gx = 0.5 * (s[1][2] - s[1][0]);
    const double gy = 0.5 * (s[2][1] - s[0][1]);
    const double hxx = s[1][2] - 2.0 * s[1][1] + s[1][0];
    const double hyy = s[2][1] - 2.0 * s[1][1] + s[0][1];
    const double hxy = 0.25 * (s[2][2] - s[2][0] - s[0][2] + s[0][0]);
    const double det = hxx * hyy - hxy * hxy;
    if (!(hxx < 0.0) || !(hyy < 0.0) || !(det > 0.0)) return false;
    ox = std::clamp((-gx * hyy + gy * hxy) / det, -0.5, 0.5);
    oy = std::clamp((-gy * hxx + gx * hxy) / det, -0.5, 0.5);
    return true;
}

}  // namespace detail

/// Sub-pixel estimate around the integer peak. Each level fits a quadratic
/// surface to a 3x3 grid of scores (spacing 1, then 1/2, 1/4, ...) around the
/// current estimate and moves to its stationary point, at most half a grid
/// step per axis. Fractional scores resample the aux frame with a cubic
/// kernel. Falls back to the previous estimate when a fit is not concave.
/// The result stays within half a pixel of the integer peak.
inline Displacement subpixel_refine(const Patch& target, const Image& aux, const IntegerMatch& peak,
                                    bool mean_removed = false, int radius = -1, int levels = 3) {
    std::vector<double> scratch;
    Displacement out{static_cast<double>(peak.dx), static_cast<double>(peak.dy), peak.score};
    double h = 1.0;
    for (int level = 0; level < levels; ++level, h *= 0.5) {
        double s[3][3];
        for (int j = -1; j <= 1; ++j) {
            for (int i = -1; i <= 1; ++i) {
                s[j + 1][i + 1] = detail::fractional_score(target, aux, out.dx + i * h,
                                                           out.dy + j * h, mean_removed, scratch);
            }
        }
        double ox = 0.0;
        double oy = 0.0;
        if (!detail::quadratic_peak(s, ox, oy)) break;
        out.dx = std::clamp(out.dx + h * ox, peak.dx - 0.5, peak.dx + 0.5);
        out.dy = std::clamp(out.dy + h * oy, peak.dy - 0.5, peak.dy + 0.5);
    }
    if (radius >= 0) {
        out.dx = std::clamp(out.dx, -static_cast<double>(radius), static_cast<double>(radius));
        out.dy = std::clamp(out.dy, -static_cast<double>(radius), static_cast<double>(radius));
    }
    return out;
}

struct MatchResult {
    int frame_index = 0;  // 0 is the target
    Displacement displacement;
    bool accepted = false;
};

/// Top-left origins of side x side windows stepped by `step`, with a final
/// window flush against the far border.
struct PatchGrid {
    int side = 5;
    int step = 2;

    std::vector<int> positions(int extent) const {
        if (side > extent) {
            throw std::invalid_argument("PatchGrid: patch side " + std::to_string(side) +
                                        " exceeds extent " + std::to_string(extent));
        }
        if (step < 1) throw std::invalid_argument("PatchGrid: step must be >= 1");
        std::vector<int> out;
        for (int p = 0; p + side <= extent; p += step) out.push_back(p);
        if (out.back() + side < extent) out.push_back(extent - side);
        return out;
    }

    struct Origin {
        int row;
        int col;
    };
    std::vector<Origin> origins(int height, int width) const {
        std::vector<Origin> out;
        for (int r : positions(height))
            for (int c : positions(width)) out.push_back({r, c});
        return out;
    }
};

inline MatchResult match_patch(const Patch& target_patch, const Image& aux, int frame_index,
                               const RegistrationOptions& opts) {
    const IntegerMatch peak = integer_search(target_patch, aux, opts.radius, opts.mean_removed);
    const Displacement d = subpixel_refine(target_patch, aux, peak, opts.mean_removed, opts.radius,
                                           opts.refine_levels);
    return {frame_index, d, d.score >= opts.delta};
}

/// For every grid patch of the target: element 0 is the target itself
/// (always accepted, zero displacement), then one result per auxiliary frame.
inline std::vector<std::vector<MatchResult>> match_frames(const Image& target,
                                                          std::span<const Image> auxiliaries,
                                                          const PatchGrid& grid,
                                                          const RegistrationOptions& opts) {
    for (const auto& a : auxiliaries) {
        if (a.height() != target.height() || a.width() != target.width()) {
            throw std::invalid_argument("match_frames: all frames must share the target size");
        }
    }
    const auto origins = grid.origins(target.height(), target.width());
    std::vector<std::vector<MatchResult>> out(origins.size());
    parallel_for(static_cast<int>(origins.size()), opts.threads, [&](int p) {
        const int r0 = std::max(0, origins[p].row - opts.block_margin);
        const int c0 = std::max(0, origins[p].col - opts.block_margin);
        const int r1 = std::min(target.height(), origins[p].row + grid.side + opts.block_margin);
        const int c1 = std::min(target.width(), origins[p].col + grid.side + opts.block_margin);
        const Patch tp = extract_patch(target, r0, c0, r1 - r0, c1 - c0);
        auto& row = out[static_cast<std::size_t>(p)];
        row.push_back({0, {0.0, 0.0, 1.0}, true});
        for (std::size_t j = 0; j < auxiliaries.size(); ++j) {
            row.push_back(match_patch(tp, auxiliaries[j], static_cast<int>(j) + 1, opts));
        }
    });
    return out;
}

}  // namespace mfsr
