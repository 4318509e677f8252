#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mfsr {

/// 2-D luminance grid stored row-major. Values are real-valued; the
/// nominal range is [0, 255] but intermediate results may leave it.
class Image {
public:
    Image() = default;

    Image(int height, int width, double fill = 0.0)
        : height_(height), width_(width),
          data_(checked_size(height, width), fill) {}

    Image(int height, int width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != checked_size(height, width)) {
            throw std::invalid_argument(
                "Image: data length " + std::to_string(data_.size()) +
                " does not match " + std::to_string(height) + "x" +
                std::to_string(width));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("Image: non-finite pixel value");
            }
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int r, int c) { return data_[index(r, c)]; }
    double operator()(int r, int c) const { return data_[index(r, c)]; }

    /// Replicate (edge-clamp) access.
    double clamped(int r, int c) const {
        r = r < 0 ? 0 : (r >= height_ ? height_ - 1 : r);
        c = c < 0 ? 0 : (c >= width_ ? width_ - 1 : c);
        return data_[index(r, c)];
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& vector() const noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    static std::size_t checked_size(int height, int width) {
        if (height < 0 || width < 0) {
            throw std::invalid_argument("Image: negative dimension");
        }
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }

    std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Rectangular window copied out of a parent image.
struct Patch {
    int row = 0;  // origin in the parent image
    int col = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows * cols

    double operator()(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
};

inline Patch extract_patch(const Image& img, int row, int col, int rows, int cols) {
    if (rows <= 0 || cols <= 0 || row < 0 || col < 0 ||
        row + rows > img.height() || col + cols > img.width()) {
        throw std::out_of_range(
            "extract_patch: window (" + std::to_string(row) + "," +
            std::to_string(col) + ") " + std::to_string(rows) + "x" +
            std::to_string(cols) + " outside " + std::to_string(img.height()) +
            "x" + std::to_string(img.width()) + " image");
    }
    Patch p{row, col, rows, cols, {}};
    p.data.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) p.data.push_back(img(row + r, col + c));
    }
    return p;
}

/// Sub-pixel translation of an auxiliary frame relative to the target, in
/// LR pixels: aux[q] ~ target[q + (dy, dx)].
struct Displacement {
    double dx = 0.0;
    double dy = 0.0;
    double score = 0.0;  // similarity at the integer peak, in [0, 1]
};

/// Set of K atoms of common dimension, one per column.
class Dictionary {
public:
    Dictionary() = default;
    explicit Dictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {
        if (!atoms_.allFinite()) {
            throw std::invalid_argument("Dictionary: non-finite atom entry");
        }
    }

    int dim() const noexcept { return static_cast<int>(atoms_.rows()); }
    int count() const noexcept { return static_cast<int>(atoms_.cols()); }
    const Eigen::MatrixXd& atoms() const noexcept { return atoms_; }
    auto atom(int k) const { return atoms_.col(k); }

private:
    Eigen::MatrixXd atoms_;
};

/// Square blur kernel with odd side, row-major taps summing to one.
struct Kernel {
    int side = 1;
    std::vector<double> taps{1.0};

    int half() const noexcept { return side / 2; }
    double operator()(int i, int j) const {
        return taps[static_cast<std::size_t>(i) * side + j];
    }
};

inline void validate_kernel(const Kernel& k) {
    if (k.side < 1 || k.side % 2 == 0) {
        throw std::invalid_argument("kernel side must be odd and >= 1, got " +
                                    std::to_string(k.side));
    }
    if (k.taps.size() != static_cast<std::size_t>(k.side) * k.side) {
        throw std::invalid_argument("kernel tap count does not match side");
    }
    double sum = 0.0;
    for (double t : k.taps) sum += t;
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("kernel taps must sum to 1, got " +
                                    std::to_string(sum));
    }
}

/// Observation model Y = S H W X + noise.
struct DegradationModel {
    int scale = 3;
    Kernel blur;
    double noise_sigma = 0.0;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (scale < 1) throw std::invalid_argument("scale must be >= 1");
        if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
        validate_kernel(blur);
    }
};

}  // namespace mfsr
