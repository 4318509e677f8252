#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsr/degrade.hpp"
#include "mfsr/image.hpp"
#include "mfsr/pipeline.hpp"

namespace mfsr {

/// Returned for identical images.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

inline double psnr(const Image& reference, const Image& candidate) {
    if (reference.height() != candidate.height() || reference.width() != candidate.width()) {
        throw std::invalid_argument("psnr: size mismatch (" + std::to_string(reference.height()) +
                                    "x" + std::to_string(reference.width()) + " vs " +
                                    std::to_string(candidate.height()) + "x" +
                                    std::to_string(candidate.width()) + ")");
    }
    if (reference.empty()) throw std::invalid_argument("psnr: empty images");
    double sse = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference.values()[i] - candidate.values()[i];
        sse += d * d;
    }
    if (sse == 0.0) return kInfinitePsnr;
    const double mse = sse / static_cast<double>(reference.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline Image crop(const Image& img, int margin) {
    Image out(img.height() - 2 * margin, img.width() - 2 * margin);
    for (int r = 0; r < out.height(); ++r)
        for (int c = 0; c < out.width(); ++c) out(r, c) = img(r + margin, c + margin);
    return out;
}

/// PSNR over the interior left after removing `margin` pixels on every side.
inline double psnr_cropped(const Image& reference, const Image& candidate, int margin) {
    if (margin < 0 || 2 * margin >= reference.height() || 2 * margin >= reference.width()) {
        throw std::invalid_argument("psnr_cropped: margin " + std::to_string(margin) +
                                    " too large for " + std::to_string(reference.height()) + "x" +
                                    std::to_string(reference.width()));
    }
    if (reference.height() != candidate.height() || reference.width() != candidate.width()) {
        throw std::invalid_argument("psnr_cropped: size mismatch");
    }
    return psnr(crop(reference, margin), crop(candidate, margin));
}

/// Catmull-Rom weight (a = -0.5).
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

/// Separable cubic interpolation; output (scale*m, scale*n) sits on input
/// (m, n). Borders are replicated.
inline Image bicubic_upscale(const Image& img, int scale) {
    if (scale < 1) throw std::invalid_argument("bicubic_upscale: scale must be >= 1");
    if (scale == 1) return img;
    // taps for each output phase
    std::vector<std::array<double, 4>> taps(static_cast<std::size_t>(scale));
    for (int p = 0; p < scale; ++p) {
        const double f = static_cast<double>(p) / scale;
        for (int t = 0; t < 4; ++t) taps[p][t] = cubic_weight(f - (t - 1));
    }
    const int h = img.height();
    const int w = img.width();
    Image rows(h, w * scale);
    for (int r = 0; r < h; ++r) {
        for (int x = 0; x < w * scale; ++x) {
            const int base = x / scale;
            const auto& k = taps[x % scale];
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) acc += k[t] * img.clamped(r, base + t - 1);
            rows(r, x) = acc;
        }
    }
    Image out(h * scale, w * scale);
    for (int y = 0; y < h * scale; ++y) {
        const int base = y / scale;
        const auto& k = taps[y % scale];
        for (int x = 0; x < w * scale; ++x) {
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) acc += k[t] * rows.clamped(base + t - 1, x);
            out(y, x) = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment harness

enum class Mode { bicubic, sf, mf_estimated, mf_oracle };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::bicubic: return "bicubic";
        case Mode::sf: return "sf";
        case Mode::mf_estimated: return "mf_estimated";
        case Mode::mf_oracle: return "mf_oracle";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::bicubic, Mode::sf, Mode::mf_estimated, Mode::mf_oracle}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown mode '" + s +
                                "' (expected bicubic, sf, mf_estimated or mf_oracle)");
}

struct NamedImage {
    std::string name;
    Image image;
};

struct ExperimentSetup {
    DegradationModel model;  // rng_seed is replaced by each seed
    SRConfig config;
    int frames = 5;
    double shift_range = 5.0;  // HR pixels
    int margin = 3;
    std::vector<std::uint64_t> seeds;
    std::vector<Mode> modes;
};

struct ExperimentRow {
    std::string image;
    std::uint64_t seed = 0;
    Mode mode = Mode::bicubic;
    double psnr_db = 0.0;
    double frame_snr_db = 0.0;  // mean over the generated frames
};

struct ModeSummary {
    std::string image;  // "all" for the pooled row
    Mode mode = Mode::bicubic;
    int count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
};

inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct ExperimentReport {
    std::vector<ExperimentRow> rows;

    /// Per image and mode, then pooled over images ("all").
    std::vector<ModeSummary> summary() const {
        std::vector<std::string> names;
        std::vector<Mode> modes;
        for (const auto& r : rows) {
            if (std::find(names.begin(), names.end(), r.image) == names.end()) names.push_back(r.image);
            if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
        }
        names.push_back("all");
        std::vector<ModeSummary> out;
        for (const auto& name : names) {
            for (Mode m : modes) {
                std::vector<double> v;
                for (const auto& r : rows) {
                    if (r.mode == m && (name == "all" || r.image == name)) v.push_back(r.psnr_db);
                }
                if (v.empty()) continue;
                ModeSummary s{name, m, static_cast<int>(v.size()), 0.0, 0.0};
                for (double x : v) s.mean += x;
                s.mean /= static_cast<double>(v.size());
                if (v.size() > 1) {
                    double ss = 0.0;
                    for (double x : v) ss += (x - s.mean) * (x - s.mean);
                    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
                }
                out.push_back(s);
            }
        }
        return out;
    }

    std::optional<double> mean(const std::string& image, Mode m) const {
        for (const auto& s : summary()) {
            if (s.image == image && s.mode == m) return s.mean;
        }
        return std::nullopt;
    }

    std::string csv() const {
        std::ostringstream os;
        os << "image,seed,mode,psnr_db\n";
        for (const auto& r : rows) {
            os << r.image << ',' << r.seed << ',' << to_string(r.mode) << ','
               << format_double(r.psnr_db) << '\n';
        }
        return os.str();
    }

    std::string text() const {
        std::ostringstream os;
        os << "# PSNR (dB) on the interior after a 3-pixel border crop; bicubic = Catmull-Rom a=-0.5\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-16s %-14s %6s %10s %8s\n", "image", "mode", "n",
                      "mean", "std");
        os << line;
        for (const auto& s : summary()) {
            std::snprintf(line, sizeof line, "%-16s %-14s %6d %10.4f %8.4f\n", s.image.c_str(),
                          to_string(s.mode).c_str(), s.count, s.mean, s.stddev);
            os << line;
        }
        return os.str();
    }
};

/// Ground-truth displacements (LR units) of generated observations.
inline std::vector<Displacement> true_displacements(const std::vector<Observation>& obs,
                                                    int scale) {
    std::vector<Displacement> out;
    for (const auto& o : obs) {
        out.push_back({o.shift.shift_x / scale, o.shift.shift_y / scale, 1.0});
    }
    return out;
}

/// For every image and seed: synthesize frames with that seed, run each mode
/// and score it against the HR image.
inline ExperimentReport run_experiment(const std::vector<NamedImage>& images,
                                       const ExperimentSetup& setup, const Dictionary* d_h) {
    if (setup.modes.empty()) throw std::invalid_argument("run_experiment: no modes");
    if (setup.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
    for (Mode m : setup.modes) {
        if (m != Mode::bicubic && d_h == nullptr) {
            throw std::invalid_argument("run_experiment: mode " + to_string(m) +
                                        " needs a trained dictionary");
        }
    }
    ExperimentReport report;
    for (const auto& named : images) {
        const Image hr = crop_to_multiple(named.image, setup.model.scale);
        for (std::uint64_t seed : setup.seeds) {
            DegradationModel model = setup.model;
            model.rng_seed = seed;
            const auto obs = generate_observations(hr, model, setup.frames, setup.shift_range);
            std::vector<Image> frames;
            double snr = 0.0;
            for (const auto& o : obs) {
                frames.push_back(o.frame);
                snr += frame_snr_db(o.clean, o.frame);
            }
            snr /= static_cast<double>(obs.size());
            const auto truth = true_displacements(obs, model.scale);
            for (Mode m : setup.modes) {
                Image out;
                switch (m) {
                    case Mode::bicubic: out = bicubic_upscale(frames.front(), model.scale); break;
                    case Mode::sf: out = super_resolve_single(frames.front(), setup.config, *d_h).hr; break;
                    case Mode::mf_estimated: out = super_resolve(frames, setup.config, *d_h).hr; break;
                    case Mode::mf_oracle:
                        out = super_resolve(frames, setup.config, *d_h,
                                            std::span<const Displacement>(truth)).hr;
                        break;
                }
                report.rows.push_back(
                    {named.name, seed, m, psnr_cropped(hr, out, setup.margin), snr});
            }
        }
    }
    return report;
}

}  // namespace mfsr
