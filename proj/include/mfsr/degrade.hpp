#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsr/image.hpp"
#include "mfsr/linear_operator.hpp"

namespace mfsr {

/// Translation in HR pixels. Integer and fractional parts are kept alongside
/// the total so bilinear weights come straight from the decomposition.
struct WarpSpec {
    double shift_x = 0.0;
    double shift_y = 0.0;

    int whole_x() const { return static_cast<int>(std::floor(shift_x)); }
    int whole_y() const { return static_cast<int>(std::floor(shift_y)); }
    double frac_x() const { return shift_x - std::floor(shift_x); }
    double frac_y() const { return shift_y - std::floor(shift_y); }
};

// ---------------------------------------------------------------------------
// Random numbers. mt19937_64 is fully specified by the standard; the
// distributions below are written out so sequences do not depend on the
// standard library implementation.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Blur H

inline Kernel gaussian_kernel(int side, double sigma) {
    if (side < 1 || side % 2 == 0) {
        throw std::invalid_argument("gaussian_kernel: side must be odd and >= 1, got " +
                                    std::to_string(side));
    }
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    }
    Kernel k{side, std::vector<double>(static_cast<std::size_t>(side) * side)};
    const int c = side / 2;
    double sum = 0.0;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            const double r2 = static_cast<double>((i - c) * (i - c) + (j - c) * (j - c));
            const double v = std::exp(-r2 / (2.0 * sigma * sigma));
            k.taps[static_cast<std::size_t>(i) * side + j] = v;
            sum += v;
        }
    }
    for (double& t : k.taps) t /= sum;
    return k;
}

inline Kernel identity_kernel() { return Kernel{1, {1.0}}; }

/// 2-D convolution with replicate boundary; output has the input size.
inline Image blur(const Image& img, const Kernel& k) {
    if (k.side > img.height() || k.side > img.width()) {
        throw std::invalid_argument("blur: kernel " + std::to_string(k.side) +
                                    " larger than image " + std::to_string(img.height()) +
                                    "x" + std::to_string(img.width()));
    }
    const int h = k.half();
    Image out(img.height(), img.width());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double acc = 0.0;
            for (int i = 0; i < k.side; ++i) {
                for (int j = 0; j < k.side; ++j) {
                    acc += k(i, j) * img.clamped(r - (i - h), c - (j - h));
                }
            }
            out(r, c) = acc;
        }
    }
    return out;
}

/// Exact adjoint of blur(): scatters each pixel through the flipped kernel,
/// folding the replicated border contributions back onto the edge pixels.
/// On the interior this is correlation with the flipped kernel.
inline Image blur_adjoint(const Image& img, const Kernel& k) {
    const int h = k.half();
    const int rows = img.height();
    const int cols = img.width();
    Image out(rows, cols);
    auto clamp = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double v = img(r, c);
            if (v == 0.0) continue;
            for (int i = 0; i < k.side; ++i) {
                const int rr = clamp(r - (i - h), rows);
                for (int j = 0; j < k.side; ++j) {
                    out(rr, clamp(c - (j - h), cols)) += k(i, j) * v;
                }
            }
        }
    }
    return out;
}

/// Blur on a rows x cols grid as an explicit operator (replicate boundary).
inline LinearOperator blur_operator(const Kernel& k, int rows, int cols) {
    const int h = k.half();
    SparseMatrix m(rows * cols, rows * cols);
    std::vector<double> row(static_cast<std::size_t>(rows) * cols, 0.0);
    std::vector<char> used(row.size(), 0);
    std::vector<int> touched;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            touched.clear();
            for (int i = 0; i < k.side; ++i) {
                const int rr = std::clamp(r - (i - h), 0, rows - 1);
                for (int j = 0; j < k.side; ++j) {
                    const int cc = std::clamp(c - (j - h), 0, cols - 1);
                    const int idx = rr * cols + cc;
                    if (!used[idx]) {
                        used[idx] = 1;
                        touched.push_back(idx);
                    }
                    row[idx] += k(i, j);
                }
            }
            std::sort(touched.begin(), touched.end());
            for (int idx : touched) {
                m.push(idx, row[idx]);
                row[idx] = 0.0;
                used[idx] = 0;
            }
            m.finish_row();
        }
    }
    return LinearOperator(std::move(m));
}

// ---------------------------------------------------------------------------
// Warp W

/// output[m, n] = input sampled at (m + shift_y, n + shift_x), bilinear,
/// replicate outside the grid.
inline Image warp_bilinear(const Image& img, const WarpSpec& spec) {
    const int wx = spec.whole_x();
    const int wy = spec.whole_y();
    const double vx = spec.frac_x();
    const double vy = spec.frac_y();
    Image out(img.height(), img.width());
    for (int m = 0; m < img.height(); ++m) {
        for (int n = 0; n < img.width(); ++n) {
            const int u1 = m + wy;
            const int u2 = n + wx;
            const double top = (1.0 - vx) * img.clamped(u1, u2) + vx * img.clamped(u1, u2 + 1);
            const double bot = (1.0 - vx) * img.clamped(u1 + 1, u2) + vx * img.clamped(u1 + 1, u2 + 1);
            out(m, n) = (1.0 - vy) * top + vy * bot;
        }
    }
    return out;
}

/// Pixel-level translation W_[dx,dy] as a selection matrix (replicate).
inline SparseMatrix integer_shift_matrix(int dx, int dy, int rows, int cols) {
    SparseMatrix m(rows * cols, rows * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int rr = std::clamp(r + dy, 0, rows - 1);
            const int cc = std::clamp(c + dx, 0, cols - 1);
            m.push(rr * cols + cc, 1.0);
            m.finish_row();
        }
    }
    return m;
}

/// Sub-pixel translation as the weighted sum of the four neighbouring
/// integer-shift matrices. Duplicate columns (from clamping) are merged.
inline LinearOperator warp_operator(const WarpSpec& spec, int rows, int cols) {
    const int wx = spec.whole_x();
    const int wy = spec.whole_y();
    const double vx = spec.frac_x();
    const double vy = spec.frac_y();
    const SparseMatrix parts[4] = {
        integer_shift_matrix(wx, wy, rows, cols),
        integer_shift_matrix(wx + 1, wy, rows, cols),
        integer_shift_matrix(wx, wy + 1, rows, cols),
        integer_shift_matrix(wx + 1, wy + 1, rows, cols),
    };
    const double weights[4] = {(1.0 - vx) * (1.0 - vy), vx * (1.0 - vy), (1.0 - vx) * vy,
                               vx * vy};
    SparseMatrix m(rows * cols, rows * cols);
    for (int r = 0; r < rows * cols; ++r) {
        int cols_seen[4];
        double vals[4];
        int n = 0;
        for (int p = 0; p < 4; ++p) {
            if (weights[p] == 0.0) continue;
            const int c = parts[p].row_cols(r)[0];
            int slot = 0;
            while (slot < n && cols_seen[slot] != c) ++slot;
            if (slot == n) {
                cols_seen[n] = c;
                vals[n] = 0.0;
                ++n;
            }
            vals[slot] += weights[p];
        }
        // sort the (at most four) entries by column
        for (int a = 1; a < n; ++a) {
            for (int b = a; b > 0 && cols_seen[b - 1] > cols_seen[b]; --b) {
                std::swap(cols_seen[b - 1], cols_seen[b]);
                std::swap(vals[b - 1], vals[b]);
            }
        }
        for (int a = 0; a < n; ++a) m.push(cols_seen[a], vals[a]);
        m.finish_row();
    }
    return LinearOperator(std::move(m));
}

// ---------------------------------------------------------------------------
// Down-sampling S

inline Image downsample(const Image& img, int scale) {
    if (scale < 1) throw std::invalid_argument("downsample: scale must be >= 1");
    if (img.height() % scale != 0 || img.width() % scale != 0) {
        throw std::invalid_argument("downsample: " + std::to_string(img.height()) + "x" +
                                    std::to_string(img.width()) +
                                    " not divisible by scale " + std::to_string(scale));
    }
    Image out(img.height() / scale, img.width() / scale);
    for (int m = 0; m < out.height(); ++m) {
        for (int n = 0; n < out.width(); ++n) out(m, n) = img(scale * m, scale * n);
    }
    return out;
}

/// Transpose of downsample(): zero insertion.
inline Image upsample_zero(const Image& img, int scale) {
    Image out(img.height() * scale, img.width() * scale);
    for (int m = 0; m < img.height(); ++m) {
        for (int n = 0; n < img.width(); ++n) out(scale * m, scale * n) = img(m, n);
    }
    return out;
}

inline LinearOperator downsample_operator(int scale, int rows, int cols) {
    if (rows % scale != 0 || cols % scale != 0) {
        throw std::invalid_argument("downsample_operator: grid not divisible by scale");
    }
    SparseMatrix m((rows / scale) * (cols / scale), rows * cols);
    for (int r = 0; r < rows / scale; ++r) {
        for (int c = 0; c < cols / scale; ++c) {
            m.push(scale * r * cols + scale * c, 1.0);
            m.finish_row();
        }
    }
    return LinearOperator(std::move(m));
}

/// Places a side x side patch at (row, col) of a zero canvas.
inline LinearOperator embed_operator(int side, int row, int col, int canvas_rows,
                                     int canvas_cols) {
    if (row < 0 || col < 0 || row + side > canvas_rows || col + side > canvas_cols) {
        throw std::invalid_argument("embed_operator: patch does not fit the canvas");
    }
    SparseMatrix m(canvas_rows * canvas_cols, side * side);
    for (int r = 0; r < canvas_rows; ++r) {
        for (int c = 0; c < canvas_cols; ++c) {
            const int pr = r - row;
            const int pc = c - col;
            if (pr >= 0 && pr < side && pc >= 0 && pc < side) m.push(pr * side + pc, 1.0);
            m.finish_row();
        }
    }
    return LinearOperator(std::move(m));
}

// ---------------------------------------------------------------------------
// Synthetic observations

struct Observation {
    Image frame;   // noisy LR frame
    Image clean;   // same frame before noise
    WarpSpec shift;  // ground-truth HR shift used to generate it
};

/// Drops trailing rows/cols so both sides are multiples of scale.
inline Image crop_to_multiple(const Image& img, int scale) {
    const int h = img.height() / scale * scale;
    const int w = img.width() / scale * scale;
    if (h == img.height() && w == img.width()) return img;
    Image out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) out(r, c) = img(r, c);
    }
    return out;
}

/// Frame 0 is the target (zero shift). Frames 1.. draw shifts uniformly from
/// [-shift_range, shift_range]^2 HR pixels. Shift draws use a stream seeded
/// by rng_seed; noise for frame j uses its own stream seeded by rng_seed+1+j.
inline std::vector<Observation> generate_observations(const Image& hr,
                                                      const DegradationModel& model,
                                                      int n_frames, double shift_range) {
    model.validate();
    if (n_frames < 1) throw std::invalid_argument("generate_observations: n_frames must be >= 1");
    if (hr.height() < model.scale || hr.width() < model.scale ||
        hr.height() < model.blur.side || hr.width() < model.blur.side) {
        throw std::invalid_argument("generate_observations: HR image too small for the model");
    }
    const Image base = crop_to_multiple(hr, model.scale);
    Rng shift_rng(model.rng_seed);
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(n_frames));
    for (int j = 0; j < n_frames; ++j) {
        WarpSpec spec;
        if (j > 0) {
            spec.shift_x = shift_rng.uniform(-shift_range, shift_range);
            spec.shift_y = shift_rng.uniform(-shift_range, shift_range);
        }
        Image clean = downsample(blur(warp_bilinear(base, spec), model.blur), model.scale);
        Image noisy = clean;
        if (model.noise_sigma > 0.0) {
            Rng noise_rng(model.rng_seed + 1 + static_cast<std::uint64_t>(j));
            for (double& v : noisy.values()) v += model.noise_sigma * noise_rng.normal();
        }
        out.push_back({std::move(noisy), std::move(clean), spec});
    }
    return out;
}

/// 10 log10(sum clean^2 / sum (noisy - clean)^2).
inline double frame_snr_db(const Image& clean, const Image& noisy) {
    double signal = 0.0;
    double noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = noisy.values()[i] - clean.values()[i];
        signal += clean.values()[i] * clean.values()[i];
        noise += d * d;
    }
    return 10.0 * std::log10(signal / noise);
}

}  // namespace mfsr
