#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfsr/degrade.hpp"
#include "mfsr/image.hpp"
#include "mfsr/lasso.hpp"
#include "mfsr/linear_operator.hpp"
#include "mfsr/parallel.hpp"
#include "mfsr/registration.hpp"

namespace mfsr {

// Defaults follow the still-image parameter table: eta 0.05, 15x15 HR
// patches, LR overlap 3, delta 0, c 1e-4, nu 1e-3.
struct SRConfig {
    int scale = 3;
    int hr_patch_side = 15;
    int lr_overlap = 3;
    bool overlap_in_hr_pixels = false;  // interpret lr_overlap in HR pixels instead
    double eta = 0.05;
    double intensity_scale = 10.0;  // coding sees intensities divided by this
    double delta = 0.0;
    double bp_c = 0.0001;
    double bp_nu = 0.001;
    int bp_iterations = 100;
    double bp_tolerance = 1e-8;
    int blur_side = 9;
    double blur_sigma = 1.0;
    int search_radius = 5;
    int match_margin = 4;
    bool mean_removed_matching = false;
    int threads = 1;

    int lr_patch_side() const { return hr_patch_side / scale; }

    /// Penalty on raw pixel values equivalent to eta on intensities / intensity_scale.
    double effective_eta() const { return eta * intensity_scale; }

    int lr_step() const {
        const int overlap = overlap_in_hr_pixels ? lr_overlap / scale : lr_overlap;
        return lr_patch_side() - overlap;
    }

    Kernel kernel() const {
        return blur_sigma > 0.0 ? gaussian_kernel(blur_side, blur_sigma) : identity_kernel();
    }

    void validate() const {
        if (scale < 1) throw std::invalid_argument("SRConfig: scale must be >= 1");
        if (hr_patch_side % scale != 0) {
            throw std::invalid_argument("SRConfig: hr_patch_side must be divisible by scale");
        }
        if (lr_step() < 1 || lr_step() > lr_patch_side()) {
            throw std::invalid_argument("SRConfig: overlap must be smaller than the LR patch side");
        }
        if (!(eta >= 0.0)) throw std::invalid_argument("SRConfig: eta must be >= 0");
        if (!(intensity_scale > 0.0)) {
            throw std::invalid_argument("SRConfig: intensity_scale must be > 0");
        }
        if (!(bp_nu > 0.0) || !(bp_c >= 0.0)) {
            throw std::invalid_argument("SRConfig: back-projection needs nu > 0 and c >= 0");
        }
    }
};

/// Rectangle of LR pixels kept from one frame for one target patch.
struct FrameClip {
    int frame_index = 0;
    Displacement displacement;
    int row0 = 0;  // first retained LR row / col of the frame
    int col0 = 0;
    int rows = 0;
    int cols = 0;

    int size() const { return rows * cols; }
};

struct PatchPlan {
    int lr_row = 0;
    int lr_col = 0;
    int hr_row = 0;
    int hr_col = 0;
    int hr_side = 0;
    std::vector<FrameClip> frames;  // frames[0] is the target

    int stacked_dim() const {
        int n = 0;
        for (const auto& f : frames) n += f.size();
        return n;
    }
};

/// Retains the LR pixels of a frame whose sampling positions, mapped into the
/// target HR grid through the displacement, land in [hr_row, hr_row + side -
/// scale] (the LR footprint of the patch shrunk by half an LR pixel per side).
inline FrameClip build_clip_spec(const Displacement& d, int hr_row, int hr_col, int hr_side,
                                 int scale, int lr_height, int lr_width, int frame_index = 0) {
    constexpr double eps = 1e-9;
    const double lo_r = static_cast<double>(hr_row) / scale - d.dy;
    const double hi_r = static_cast<double>(hr_row + hr_side - scale) / scale - d.dy;
    const double lo_c = static_cast<double>(hr_col) / scale - d.dx;
    const double hi_c = static_cast<double>(hr_col + hr_side - scale) / scale - d.dx;
    const int r0 = std::max(0, static_cast<int>(std::ceil(lo_r - eps)));
    const int r1 = std::min(lr_height - 1, static_cast<int>(std::floor(hi_r + eps)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(lo_c - eps)));
    const int c1 = std::min(lr_width - 1, static_cast<int>(std::floor(hi_c + eps)));
    FrameClip clip;
    clip.frame_index = frame_index;
    clip.displacement = d;
    clip.row0 = r0;
    clip.col0 = c0;
    clip.rows = std::max(0, r1 - r0 + 1);
    clip.cols = std::max(0, c1 - c0 + 1);
    if (clip.rows == 0 || clip.cols == 0) clip.rows = clip.cols = 0;
    return clip;
}

/// Assembles a plan from per-frame match results (element 0 = target).
/// Rejected frames and frames whose clip is empty are left out.
inline PatchPlan make_plan(int lr_row, int lr_col, std::span<const MatchResult> matches,
                           const SRConfig& cfg, int lr_height, int lr_width) {
    PatchPlan plan;
    plan.lr_row = lr_row;
    plan.lr_col = lr_col;
    plan.hr_row = lr_row * cfg.scale;
    plan.hr_col = lr_col * cfg.scale;
    plan.hr_side = cfg.hr_patch_side;
    for (const auto& m : matches) {
        if (!m.accepted && m.frame_index != 0) continue;
        const Displacement d = m.frame_index == 0 ? Displacement{0.0, 0.0, 1.0} : m.displacement;
        FrameClip clip = build_clip_spec(d, plan.hr_row, plan.hr_col, plan.hr_side, cfg.scale,
                                         lr_height, lr_width, m.frame_index);
        if (clip.size() == 0) continue;
        plan.frames.push_back(clip);
    }
    if (plan.frames.empty() || plan.frames.front().frame_index != 0) {
        throw std::logic_error("make_plan: target frame missing from plan");
    }
    return plan;
}

/// y~ : the clipped LR pixels of every planned frame, concatenated.
inline Eigen::VectorXd build_stacked_observation(const PatchPlan& plan,
                                                 std::span<const Image> frames) {
    Eigen::VectorXd y(plan.stacked_dim());
    Eigen::Index k = 0;
    for (const auto& f : plan.frames) {
        if (f.size() == 0) {
            throw std::invalid_argument("build_stacked_observation: plan holds an empty clip");
        }
        if (f.frame_index < 0 || f.frame_index >= static_cast<int>(frames.size())) {
            throw std::out_of_range("build_stacked_observation: frame index out of range");
        }
        const Image& img = frames[static_cast<std::size_t>(f.frame_index)];
        if (f.row0 < 0 || f.col0 < 0 || f.row0 + f.rows > img.height() ||
            f.col0 + f.cols > img.width()) {
            throw std::out_of_range("build_stacked_observation: clip outside frame " +
                                    std::to_string(f.frame_index));
        }
        for (int r = 0; r < f.rows; ++r)
            for (int c = 0; c < f.cols; ++c) y[k++] = img(f.row0 + r, f.col0 + c);
    }
    return y;
}

/// Working canvas for degrading one HR patch into one frame: the patch is
/// embedded at (margin, margin) of a zero canvas whose origin is aligned to
/// the LR grid.
struct AtomCanvas {
    int margin = 0;
    int side = 0;

    static AtomCanvas for_clip(const FrameClip& clip, int hr_side, int scale, const Kernel& k) {
        const double shift = scale * std::max(std::abs(clip.displacement.dx),
                                              std::abs(clip.displacement.dy));
        const int need = k.half() + static_cast<int>(std::ceil(shift)) + 1;
        AtomCanvas c;
        c.margin = (need + scale - 1) / scale * scale;
        c.side = hr_side + 2 * c.margin;
        return c;
    }
};

/// The chain C_j S H W_j R for one frame of a plan, in composed form.
inline LinearOperator frame_degradation_operator(const PatchPlan& plan, const FrameClip& clip,
                                                 const Kernel& kernel, int scale) {
    const AtomCanvas canvas = AtomCanvas::for_clip(clip, plan.hr_side, scale, kernel);
    const int lr_side = canvas.side / scale;
    const int lr_origin_r = (plan.hr_row - canvas.margin) / scale;
    const int lr_origin_c = (plan.hr_col - canvas.margin) / scale;
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(clip.size()));
    for (int r = 0; r < clip.rows; ++r) {
        for (int c = 0; c < clip.cols; ++c) {
            const int lr = clip.row0 + r - lr_origin_r;
            const int lc = clip.col0 + c - lr_origin_c;
            if (lr < 0 || lc < 0 || lr >= lr_side || lc >= lr_side) {
                throw std::logic_error("frame_degradation_operator: canvas too small for clip");
            }
            keep.push_back(lr * lr_side + lc);
        }
    }
    const WarpSpec warp{scale * clip.displacement.dx, scale * clip.displacement.dy};
    return compose({
        selection_operator(keep, lr_side * lr_side),
        downsample_operator(scale, canvas.side, canvas.side),
        blur_operator(kernel, canvas.side, canvas.side),
        warp_operator(warp, canvas.side, canvas.side),
        embed_operator(plan.hr_side, canvas.margin, canvas.margin, canvas.side, canvas.side),
    });
}

/// D~_l = [C_j S H W_j R D_h]_j stacked over the plan's frames. Atom norms
/// are left as the degradation makes them.
inline Eigen::MatrixXd build_stacked_dictionary(const PatchPlan& plan, const Dictionary& d_h,
                                                const Kernel& kernel, int scale) {
    if (d_h.dim() != plan.hr_side * plan.hr_side) {
        throw std::invalid_argument("build_stacked_dictionary: HR dictionary dim " +
                                    std::to_string(d_h.dim()) + " does not match patch side " +
                                    std::to_string(plan.hr_side));
    }
    Eigen::MatrixXd out(plan.stacked_dim(), d_h.count());
    Eigen::Index row = 0;
    for (const auto& clip : plan.frames) {
        const Eigen::MatrixXd op =
            frame_degradation_operator(plan, clip, kernel, scale).materialize().to_dense();
        out.middleRows(row, op.rows()).noalias() = op * d_h.atoms();
        row += op.rows();
    }
    return out;
}

/// Mean-removed sparse coding of y~ against D~_l, mapped back through D_h.
inline Eigen::VectorXd reconstruct_patch(const Eigen::VectorXd& stacked_obs,
                                         const Eigen::MatrixXd& stacked_dict, const Dictionary& d_h,
                                         double eta, const LassoOptions& opts = {}) {
    const double mean = stacked_obs.mean();
    const Eigen::VectorXd centred = stacked_obs.array() - mean;
    const SparseCode code = lars_lasso(stacked_dict, centred, eta, opts);
    Eigen::VectorXd x = d_h.atoms() * code.coefficients;
    x.array() += mean;
    return x;
}

// ---------------------------------------------------------------------------
// Fusion

inline std::vector<double> hann_window(int side) {
    std::vector<double> w(static_cast<std::size_t>(side), 1.0);
    if (side == 1) return w;
    for (int i = 0; i < side; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (side - 1));
    }
    return w;
}

inline constexpr double kHannFloor = 1e-6;

/// Weighted average of overlapping patches under a separable Hann window,
/// each 2-D weight floored at 1e-6.
inline Image fuse_patches(std::span<const Patch> patches, int height, int width) {
    Image acc(height, width);
    Image weight(height, width);
    for (const auto& p : patches) {
        if (p.row < 0 || p.col < 0 || p.row + p.rows > height || p.col + p.cols > width) {
            throw std::out_of_range("fuse_patches: patch outside output bounds");
        }
        const auto wr = hann_window(p.rows);
        const auto wc = hann_window(p.cols);
        for (int r = 0; r < p.rows; ++r) {
            for (int c = 0; c < p.cols; ++c) {
                const double w = std::max(wr[r] * wc[c], kHannFloor);
                acc(p.row + r, p.col + c) += w * p(r, c);
                weight(p.row + r, p.col + c) += w;
            }
        }
    }
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (weight(r, c) == 0.0) {
                throw std::invalid_argument("fuse_patches: pixel (" + std::to_string(r) + "," +
                                            std::to_string(c) + ") not covered by any patch");
            }
            acc(r, c) /= weight(r, c);
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Back-projection

/// S H X evaluated only at the sampled positions (same sums as
/// downsample(blur(X))).
inline Image blur_downsample(const Image& x, const Kernel& k, int scale) {
    if (x.height() % scale != 0 || x.width() % scale != 0) {
        throw std::invalid_argument("blur_downsample: image not divisible by scale");
    }
    const int h = k.half();
    Image out(x.height() / scale, x.width() / scale);
    for (int m = 0; m < out.height(); ++m) {
        for (int n = 0; n < out.width(); ++n) {
            const int r = scale * m;
            const int c = scale * n;
            double acc = 0.0;
            for (int i = 0; i < k.side; ++i)
                for (int j = 0; j < k.side; ++j) acc += k(i, j) * x.clamped(r - (i - h), c - (j - h));
            out(m, n) = acc;
        }
    }
    return out;
}

struct BackProjectionStats {
    std::vector<double> objective;  // entry 0 is the starting objective
    int halvings = 0;
    int iterations = 0;
};

/// ||S H X - Y||^2 + c ||X - X0||^2
inline double back_projection_objective(const Image& x, const Image& x0, const Image& y,
                                        const Kernel& k, int scale, double c) {
    const Image lr = blur_downsample(x, k, scale);
    double fit = 0.0;
    for (std::size_t i = 0; i < lr.size(); ++i) {
        const double d = lr.values()[i] - y.values()[i];
        fit += d * d;
    }
    double prox = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.values()[i] - x0.values()[i];
        prox += d * d;
    }
    return fit + c * prox;
}

/// Gradient iteration X <- X - nu [H^T S^T (S H X - Y) + c (X - X0)] from X0.
/// A step that raises the objective is retried with nu halved, and the
/// smaller nu is kept. Stops early once the improvement drops below tol.
inline Image back_project(const Image& x0, const Image& y, const Kernel& k, int scale, double c,
                          double nu, int iterations, double tol = 1e-8,
                          BackProjectionStats* stats = nullptr) {
    if (x0.height() != y.height() * scale || x0.width() != y.width() * scale) {
        throw std::invalid_argument("back_project: HR estimate and LR target sizes disagree");
    }
    Image x = x0;
    double obj = back_projection_objective(x, x0, y, k, scale, c);
    BackProjectionStats local;
    local.objective.push_back(obj);
    for (int it = 0; it < iterations; ++it) {
        Image residual = blur_downsample(x, k, scale);
        for (std::size_t i = 0; i < residual.size(); ++i) residual.values()[i] -= y.values()[i];
        const Image grad_fit = blur_adjoint(upsample_zero(residual, scale), k);
        Image next(x.height(), x.width());
        double next_obj = 0.0;
        for (int attempt = 0;; ++attempt) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double g = grad_fit.values()[i] + c * (x.values()[i] - x0.values()[i]);
                next.values()[i] = x.values()[i] - nu * g;
            }
            next_obj = back_projection_objective(next, x0, y, k, scale, c);
            if (next_obj <= obj || attempt >= 60) break;
            nu *= 0.5;
            ++local.halvings;
        }
        local.iterations = it + 1;
        if (next_obj > obj) break;  // no descent even at a tiny step
        const double gain = obj - next_obj;
        x = std::move(next);
        obj = next_obj;
        local.objective.push_back(obj);
        if (gain < tol) break;
    }
    if (stats) *stats = std::move(local);
    return x;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct SRResult {
    Image hr;
    Image pre_back_projection;
    std::vector<PatchPlan> plans;
    BackProjectionStats back_projection;
};

namespace detail {

inline Image finish_pipeline(std::vector<Patch>& patches, const Image& target,
                             const SRConfig& cfg, const Kernel& k, SRResult& result) {
    result.pre_back_projection =
        fuse_patches(patches, target.height() * cfg.scale, target.width() * cfg.scale);
    return back_project(result.pre_back_projection, target, k, cfg.scale, cfg.bp_c, cfg.bp_nu,
                        cfg.bp_iterations, cfg.bp_tolerance, &result.back_projection);
}

inline Patch to_hr_patch(const PatchPlan& plan, const Eigen::VectorXd& x) {
    return Patch{plan.hr_row, plan.hr_col, plan.hr_side, plan.hr_side,
                 std::vector<double>(x.data(), x.data() + x.size())};
}

}  // namespace detail

/// Multi-frame reconstruction from per-patch match results
/// (matches[p][0] is the target). Every patch gets its own stacked
/// dictionary.
inline SRResult super_resolve_with_matches(std::span<const Image> frames,
                                           const std::vector<std::vector<MatchResult>>& matches,
                                           const SRConfig& cfg, const Dictionary& d_h) {
    cfg.validate();
    const Image& target = frames.front();
    const Kernel k = cfg.kernel();
    const PatchGrid grid{cfg.lr_patch_side(), cfg.lr_step()};
    const auto origins = grid.origins(target.height(), target.width());
    if (matches.size() != origins.size()) {
        throw std::invalid_argument("super_resolve: match table does not cover the patch grid");
    }
    SRResult result;
    result.plans.resize(origins.size());
    std::vector<Patch> patches(origins.size());
    parallel_for(static_cast<int>(origins.size()), cfg.threads, [&](int p) {
        PatchPlan plan = make_plan(origins[p].row, origins[p].col, matches[p], cfg,
                                   target.height(), target.width());
        const Eigen::MatrixXd dict = build_stacked_dictionary(plan, d_h, k, cfg.scale);
        const Eigen::VectorXd obs = build_stacked_observation(plan, frames);
        patches[p] = detail::to_hr_patch(plan, reconstruct_patch(obs, dict, d_h, cfg.effective_eta()));
        result.plans[p] = std::move(plan);
    });
    result.hr = detail::finish_pipeline(patches, target, cfg, k, result);
    return result;
}

/// Dedicated single-frame path: one LR dictionary D_l = S H R D_h shared by
/// every patch, with its Gram matrix precomputed.
inline SRResult super_resolve_single(const Image& target, const SRConfig& cfg,
                                     const Dictionary& d_h) {
    cfg.validate();
    const Kernel k = cfg.kernel();
    const PatchGrid grid{cfg.lr_patch_side(), cfg.lr_step()};
    const auto origins = grid.origins(target.height(), target.width());
    const MatchResult self{0, {0.0, 0.0, 1.0}, true};
    const PatchPlan first = make_plan(origins[0].row, origins[0].col, std::span(&self, 1), cfg,
                                      target.height(), target.width());
    const Eigen::MatrixXd d_l = build_stacked_dictionary(first, d_h, k, cfg.scale);
    // column-wise, so every entry rounds exactly as the solver's lazy Gram
    Eigen::MatrixXd gram(d_l.cols(), d_l.cols());
    for (Eigen::Index j = 0; j < d_l.cols(); ++j) gram.col(j) = d_l.transpose() * d_l.col(j);
    LassoOptions opts;
    opts.gram = &gram;
    const std::span<const Image> frames(&target, 1);

    SRResult result;
    result.plans.resize(origins.size());
    std::vector<Patch> patches(origins.size());
    parallel_for(static_cast<int>(origins.size()), cfg.threads, [&](int p) {
        PatchPlan plan = make_plan(origins[p].row, origins[p].col, std::span(&self, 1), cfg,
                                   target.height(), target.width());
        const Eigen::VectorXd obs = build_stacked_observation(plan, frames);
        patches[p] = detail::to_hr_patch(plan, reconstruct_patch(obs, d_l, d_h, cfg.effective_eta(), opts));
        result.plans[p] = std::move(plan);
    });
    result.hr = detail::finish_pipeline(patches, target, cfg, k, result);
    return result;
}

/// Match table that applies the same known displacement to every patch.
inline std::vector<std::vector<MatchResult>> oracle_matches(
    std::span<const Displacement> per_frame, const SRConfig& cfg, int lr_height, int lr_width) {
    const PatchGrid grid{cfg.lr_patch_side(), cfg.lr_step()};
    const auto origins = grid.origins(lr_height, lr_width);
    std::vector<MatchResult> row;
    row.push_back({0, {0.0, 0.0, 1.0}, true});
    for (std::size_t j = 1; j < per_frame.size(); ++j) {
        Displacement d = per_frame[j];
        d.score = 1.0;
        row.push_back({static_cast<int>(j), d, true});
    }
    return std::vector<std::vector<MatchResult>>(origins.size(), row);
}

inline std::vector<std::vector<MatchResult>> register_frames(std::span<const Image> frames,
                                                             const SRConfig& cfg) {
    RegistrationOptions opts;
    opts.radius = cfg.search_radius;
    opts.delta = cfg.delta;
    opts.mean_removed = cfg.mean_removed_matching;
    opts.block_margin = cfg.match_margin;
    opts.threads = cfg.threads;
    const PatchGrid grid{cfg.lr_patch_side(), cfg.lr_step()};
    return match_frames(frames.front(), frames.subspan(1), grid, opts);
}

/// Frame 0 is the target. With one frame the registration is skipped and
/// every plan holds the target alone. When `known` is given (one entry per
/// frame, entry 0 ignored) those displacements replace registration.
inline SRResult super_resolve(std::span<const Image> frames, const SRConfig& cfg,
                              const Dictionary& d_h,
                              std::optional<std::span<const Displacement>> known = std::nullopt) {
    if (frames.empty()) throw std::invalid_argument("super_resolve: no frames");
    for (const auto& f : frames) {
        if (f.height() != frames.front().height() || f.width() != frames.front().width()) {
            throw std::invalid_argument("super_resolve: frames differ in size");
        }
    }
    cfg.validate();
    const Image& target = frames.front();
    if (frames.size() == 1) {
        const std::vector<Displacement> none{Displacement{0.0, 0.0, 1.0}};
        return super_resolve_with_matches(
            frames, oracle_matches(none, cfg, target.height(), target.width()), cfg, d_h);
    }
    if (known) {
        if (known->size() != frames.size()) {
            throw std::invalid_argument("super_resolve: need one known displacement per frame");
        }
        return super_resolve_with_matches(
            frames, oracle_matches(*known, cfg, target.height(), target.width()), cfg, d_h);
    }
    return super_resolve_with_matches(frames, register_frames(frames, cfg), cfg, d_h);
}

}  // namespace mfsr
