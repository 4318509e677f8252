#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsr/eval.hpp"
#include "mfsr/pipeline.hpp"

namespace mfsr {

/// One line of a shift table. `patch` is empty for global rows ("*"),
/// which apply to every patch.
struct ShiftRow {
    std::optional<int> patch;
    int frame = 0;
    double dx = 0.0;
    double dy = 0.0;
    double score = 1.0;
    bool accepted = true;
};

inline constexpr const char* kShiftTableHeader = "# patch frame dx dy score accepted";

inline std::string format_shift_table(const std::vector<ShiftRow>& rows) {
    std::ostringstream os;
    os << kShiftTableHeader << '\n';
    for (const auto& r : rows) {
        os << (r.patch ? std::to_string(*r.patch) : std::string("*")) << ' ' << r.frame << ' '
           << format_double(r.dx) << ' ' << format_double(r.dy) << ' ' << format_double(r.score)
           << ' ' << (r.accepted ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::vector<ShiftRow> parse_shift_table(std::istream& in, const std::string& origin) {
    std::vector<ShiftRow> rows;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream is(line);
        std::string patch;
        if (!(is >> patch)) continue;
        ShiftRow r;
        int accepted = 1;
        std::string extra;
        const auto where = origin + ":" + std::to_string(number);
        if (!(is >> r.frame >> r.dx >> r.dy >> r.score >> accepted) || (is >> extra)) {
            throw std::runtime_error(where + ": expected 'patch frame dx dy score accepted'");
        }
        if (patch != "*") {
            try {
                std::size_t used = 0;
                r.patch = std::stoi(patch, &used);
                if (used != patch.size() || *r.patch < 0) throw std::invalid_argument(patch);
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": bad patch index '" + patch + "'");
            }
        }
        if (r.frame < 0 || (accepted != 0 && accepted != 1)) {
            throw std::runtime_error(where + ": bad frame index or accepted flag");
        }
        r.accepted = accepted == 1;
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<ShiftRow> read_shift_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open shift table '" + path + "'");
    return parse_shift_table(in, path);
}

/// Per-patch match lists for `n_frames` frames over `n_patches` grid
/// positions. Global rows fill every patch; per-patch rows override them.
/// Frame 0 is always the target with zero displacement. Every auxiliary
/// frame must be covered for every patch.
inline std::vector<std::vector<MatchResult>> matches_from_table(const std::vector<ShiftRow>& rows,
                                                                int n_patches, int n_frames) {
    std::vector<std::vector<std::optional<MatchResult>>> grid(
        static_cast<std::size_t>(n_patches),
        std::vector<std::optional<MatchResult>>(static_cast<std::size_t>(n_frames)));
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& r : rows) {
            if (r.patch.has_value() != (pass == 1)) continue;
            if (r.frame >= n_frames) {
                throw std::runtime_error("shift table names frame " + std::to_string(r.frame) +
                                         " but only " + std::to_string(n_frames) + " frames were given");
            }
            if (r.patch && *r.patch >= n_patches) {
                throw std::runtime_error("shift table names patch " + std::to_string(*r.patch) +
                                         " but the grid has " + std::to_string(n_patches));
            }
            const MatchResult m{r.frame, {r.dx, r.dy, r.score}, r.accepted};
            if (r.patch) {
                grid[*r.patch][r.frame] = m;
            } else {
                for (auto& p : grid) p[r.frame] = m;
            }
        }
    }
    std::vector<std::vector<MatchResult>> out(static_cast<std::size_t>(n_patches));
    for (int p = 0; p < n_patches; ++p) {
        out[p].push_back({0, {0.0, 0.0, 1.0}, true});
        for (int j = 1; j < n_frames; ++j) {
            if (!grid[p][j]) {
                throw std::runtime_error("shift table has no entry for patch " + std::to_string(p) +
                                         ", frame " + std::to_string(j));
            }
            out[p].push_back(*grid[p][j]);
        }
    }
    return out;
}

}  // namespace mfsr
