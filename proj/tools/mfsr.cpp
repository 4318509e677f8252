// mfsr: degrade / train / register / sr / eval front end.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mfsr/config.hpp"
#include "mfsr/dictlearn.hpp"
#include "mfsr/eval.hpp"
#include "mfsr/imageio.hpp"
#include "mfsr/manifest.hpp"
#include "mfsr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mfsr;

namespace {

// Bad input detected after flag parsing; maps to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

int clamp_threads(int t) {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (t < 1) throw UsageError("--threads must be >= 1");
    return std::min(t, hw);
}

std::vector<Image> read_frames(const std::vector<std::string>& paths) {
    std::vector<Image> frames;
    for (const auto& p : paths) frames.push_back(read_image(p));
    return frames;
}

// ------------------------------------------------------------------ degrade

struct DegradeArgs {
    std::string hr;
    int frames = 5;
    int scale = 3;
    double sigma_blur = 1.0;
    int blur_side = 9;
    double sigma_noise = 1.4142135623730951;
    double shift_range = 5.0;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string format = "png";
};

int run_degrade(const DegradeArgs& a) {
    DegradationModel model;
    model.scale = a.scale;
    model.blur = gaussian_kernel(a.blur_side, a.sigma_blur);
    model.noise_sigma = a.sigma_noise;
    model.rng_seed = a.seed;
    const Image hr = crop_to_multiple(read_image(a.hr), a.scale);
    const auto obs = generate_observations(hr, model, a.frames, a.shift_range);
    fs::create_directories(a.out_dir);
    std::vector<ShiftRow> rows;
    double snr = 0.0;
    for (std::size_t j = 0; j < obs.size(); ++j) {
        const fs::path path = fs::path(a.out_dir) / ("frame_" + std::to_string(j) + "." + a.format);
        write_image(obs[j].frame, path);
        rows.push_back({std::nullopt, static_cast<int>(j), obs[j].shift.shift_x / a.scale,
                        obs[j].shift.shift_y / a.scale, 1.0, true});
        snr += frame_snr_db(obs[j].clean, obs[j].frame);
    }
    write_image(hr, fs::path(a.out_dir) / ("hr." + a.format));
    write_text((fs::path(a.out_dir) / "shifts.txt").string(),
               "# LR-pixel displacements: frame j content at q matches frame 0 at q + d\n" +
                   format_shift_table(rows));
    std::cerr << "degrade: " << obs.size() << " frames of " << obs.front().frame.height() << "x"
              << obs.front().frame.width() << ", mean SNR " << snr / obs.size() << " dB\n";
    return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
    std::string corpus;
    int atoms = 512;
    int patch = 15;
    double eta = 0.05;
    int iters = 10;
    int patches = 20000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
};

int run_train(const TrainArgs& a) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.corpus)) {
        const std::string ext = detail::lower_extension(e.path());
        if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("--corpus " + a.corpus + " holds no .pgm or .png images");
    std::vector<Image> images;
    for (const auto& f : files) images.push_back(read_image(f));
    const Eigen::MatrixXd p = sample_patches(images, a.patch, a.patches, a.seed) / 255.0;
    std::vector<double> hist;
    DictLearnOptions opts;
    opts.threads = clamp_threads(a.threads);
    opts.objective_history = &hist;
    const Dictionary d = learn_dictionary(p, a.atoms, a.eta, a.iters, a.seed + 1, opts);
    write_dictionary(d, a.out);
    for (std::size_t t = 0; t < hist.size(); ++t) {
        std::cerr << "train: iteration " << t << " objective " << format_double(hist[t]) << '\n';
    }
    std::cerr << "train: " << files.size() << " images, " << a.patches << " patches, "
              << d.count() << " atoms of " << a.patch << "x" << a.patch << " -> " << a.out << '\n';
    return 0;
}

// ----------------------------------------------------------------- register

struct RegisterArgs {
    std::string target;
    std::vector<std::string> aux;
    int radius = 5;
    double delta = 0.0;
    int margin = 4;
    bool mean_removed = false;
    int threads = 1;
    std::string out;
};

int run_register(const RegisterArgs& a) {
    std::vector<std::string> paths{a.target};
    paths.insert(paths.end(), a.aux.begin(), a.aux.end());
    const auto frames = read_frames(paths);
    SRConfig cfg;
    cfg.search_radius = a.radius;
    cfg.delta = a.delta;
    cfg.match_margin = a.margin;
    cfg.mean_removed_matching = a.mean_removed;
    cfg.threads = clamp_threads(a.threads);
    const auto matches = register_frames(frames, cfg);
    std::vector<ShiftRow> rows;
    for (std::size_t p = 0; p < matches.size(); ++p) {
        for (std::size_t j = 1; j < matches[p].size(); ++j) {
            const auto& m = matches[p][j];
            rows.push_back({static_cast<int>(p), m.frame_index, m.displacement.dx, m.displacement.dy,
                            m.displacement.score, m.accepted});
        }
    }
    const std::string table = format_shift_table(rows);
    if (a.out.empty()) {
        std::cout << table;
    } else {
        write_text(a.out, table);
    }
    return 0;
}

// ----------------------------------------------------------------------- sr

struct SrArgs {
    std::vector<std::string> frames;
    std::string dict;
    std::string config;
    std::string oracle_shifts;
    std::string out;
    std::string dump_pre_bp;
    int threads = 1;
    double eta = 0.0;
    double delta = 0.0;
    int bp_iterations = 0;
    bool bicubic = false;
    CLI::Option* eta_opt = nullptr;
    CLI::Option* delta_opt = nullptr;
    CLI::Option* bp_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

SRConfig load_sr_config(const std::string& path) {
    SRConfig cfg;
    if (path.empty()) return cfg;
    const Config c = Config::load(path);
    c.require_known(sr_config_keys());
    apply_config(c, cfg);
    return cfg;
}

int run_sr(const SrArgs& a) {
    SRConfig cfg = load_sr_config(a.config);
    if (a.threads_opt->count()) cfg.threads = a.threads;
    cfg.threads = clamp_threads(cfg.threads);
    if (a.eta_opt->count()) cfg.eta = a.eta;
    if (a.delta_opt->count()) cfg.delta = a.delta;
    if (a.bp_opt->count()) cfg.bp_iterations = a.bp_iterations;
    cfg.validate();

    const ColorImage target = read_color_image(a.frames.front());
    if (a.bicubic) {
        ColorImage out{bicubic_upscale(target.y, cfg.scale), std::nullopt, std::nullopt};
        if (target.is_color()) {
            out.cb = bicubic_upscale(*target.cb, cfg.scale);
            out.cr = bicubic_upscale(*target.cr, cfg.scale);
        }
        write_color_image(out, a.out);
        return 0;
    }
    if (a.dict.empty()) throw UsageError("sr needs --dict (or --bicubic)");
    std::vector<Image> frames{target.y};
    for (std::size_t j = 1; j < a.frames.size(); ++j) frames.push_back(read_image(a.frames[j]));
    const Dictionary d_h = read_dictionary(a.dict);

    SRResult result;
    if (!a.oracle_shifts.empty()) {
        const auto rows = read_shift_table(a.oracle_shifts);
        const PatchGrid grid{cfg.lr_patch_side(), cfg.lr_step()};
        const int n_patches = static_cast<int>(grid.origins(target.y.height(), target.y.width()).size());
        const auto matches = matches_from_table(rows, n_patches, static_cast<int>(frames.size()));
        result = super_resolve_with_matches(frames, matches, cfg, d_h);
    } else if (frames.size() == 1) {
        result = super_resolve_single(frames.front(), cfg, d_h);
    } else {
        result = super_resolve(frames, cfg, d_h);
    }

    if (!a.dump_pre_bp.empty()) write_image(result.pre_back_projection, a.dump_pre_bp);
    if (target.is_color()) {
        ColorImage out{result.hr, bicubic_upscale(*target.cb, cfg.scale),
                       bicubic_upscale(*target.cr, cfg.scale)};
        write_color_image(out, a.out);
    } else {
        write_image(result.hr, a.out);
    }
    std::size_t used = 0;
    for (const auto& p : result.plans) used += p.frames.size();
    std::cerr << "sr: " << frames.size() << " frame(s), " << result.plans.size() << " patches, "
              << static_cast<double>(used) / static_cast<double>(result.plans.size())
              << " frames per patch, back-projection " << result.back_projection.iterations
              << " iterations -> " << a.out << '\n';
    return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
    std::string ref;
    std::string cand;
    int margin = 3;
};

int run_eval(const EvalArgs& a) {
    if (a.ref.empty() || a.cand.empty()) throw UsageError("eval needs --ref and --cand");
    const double v = psnr_cropped(read_image(a.ref), read_image(a.cand), a.margin);
    if (std::isinf(v)) {
        std::cout << "inf\n";
    } else {
        std::printf("%.4f\n", v);
    }
    return 0;
}

struct ExperimentArgs {
    std::string config;
    std::string csv;
    std::string report;
    int threads = 1;
    int seeds = 0;
    CLI::Option* threads_opt = nullptr;
    CLI::Option* seeds_opt = nullptr;
};

int run_experiment_cmd(const ExperimentArgs& a) {
    const Config c = Config::load(a.config);
    std::set<std::string> known = sr_config_keys();
    for (const char* k : {"images", "dict", "seeds", "first_seed", "modes", "frames", "shift_range",
                          "noise_sigma", "eval_margin", "csv", "report"}) {
        known.insert(k);
    }
    c.require_known(known);
    const fs::path base = fs::path(a.config).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    ExperimentSetup setup;
    apply_config(c, setup.config);
    if (a.threads_opt->count()) setup.config.threads = a.threads;
    setup.config.threads = clamp_threads(setup.config.threads);
    setup.config.validate();
    setup.model.scale = setup.config.scale;
    setup.model.blur = setup.config.kernel();
    setup.model.noise_sigma = c.get("noise_sigma", 1.4142135623730951);
    setup.frames = c.get("frames", setup.frames);
    setup.shift_range = c.get("shift_range", setup.shift_range);
    setup.margin = c.get("eval_margin", setup.margin);
    const int n_seeds = a.seeds_opt->count() ? a.seeds : c.get("seeds", 10);
    const int first = c.get("first_seed", 1);
    if (n_seeds < 1) throw UsageError("seeds must be >= 1");
    for (int s = 0; s < n_seeds; ++s) setup.seeds.push_back(static_cast<std::uint64_t>(first + s));
    auto modes = c.list("modes");
    if (modes.empty()) modes = {"bicubic", "sf", "mf_estimated", "mf_oracle"};
    for (const auto& m : modes) {
        try {
            setup.modes.push_back(parse_mode(m));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const auto images = c.list("images");
    if (images.empty()) throw UsageError(a.config + ": 'images' lists no files");
    std::vector<NamedImage> named;
    for (const auto& p : images) {
        const fs::path path = resolve(p);
        if (!fs::exists(path)) throw UsageError("image not found: " + path.string());
        named.push_back({path.stem().string(), read_image(path)});
    }
    const bool learned = std::any_of(setup.modes.begin(), setup.modes.end(), [](Mode m) { return m != Mode::bicubic; });
    if (learned && !c.has("dict")) throw UsageError(a.config + ": modes other than bicubic need 'dict'");
    std::optional<Dictionary> dict;
    if (c.has("dict")) dict = read_dictionary(resolve(c.get("dict", std::string{})));

    const ExperimentReport report = run_experiment(named, setup, dict ? &*dict : nullptr);
    const std::string csv_path = !a.csv.empty() ? a.csv
                                 : c.has("csv") ? resolve(c.get("csv", std::string{})).string()
                                                : std::string{};
    const std::string report_path = !a.report.empty() ? a.report
                                    : c.has("report") ? resolve(c.get("report", std::string{})).string()
                                                      : std::string{};
    if (!csv_path.empty()) write_text(csv_path, report.csv());
    if (!report_path.empty()) write_text(report_path, report.text());
    std::cout << report.text();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-frame sparse-coding super-resolution"};
    app.require_subcommand(1);

    DegradeArgs dg;
    auto* degrade = app.add_subcommand("degrade", "synthesize shifted, blurred, noisy LR frames");
    degrade->add_option("--hr", dg.hr, "HR image (PGM/PNG)")->required()->check(CLI::ExistingFile);
    degrade->add_option("--frames", dg.frames, "number of frames")->capture_default_str();
    degrade->add_option("--scale", dg.scale, "downsampling factor")->capture_default_str();
    degrade->add_option("--sigma-blur", dg.sigma_blur, "Gaussian blur sigma")->capture_default_str();
    degrade->add_option("--blur-side", dg.blur_side, "blur kernel side (odd)")->capture_default_str();
    degrade->add_option("--sigma-noise", dg.sigma_noise, "noise standard deviation")->capture_default_str();
    degrade->add_option("--shift-range", dg.shift_range, "max |shift| in HR pixels")->capture_default_str();
    degrade->add_option("--seed", dg.seed, "random seed")->capture_default_str();
    degrade->add_option("--out-dir", dg.out_dir, "output directory")->required();
    degrade->add_option("--format", dg.format, "frame file type")
        ->check(CLI::IsMember({"png", "pgm"}))
        ->capture_default_str();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "learn an HR patch dictionary");
    train->add_option("--corpus", tr.corpus, "directory of training images")->required()->check(CLI::ExistingDirectory);
    train->add_option("--atoms", tr.atoms, "dictionary size")->capture_default_str();
    train->add_option("--patch", tr.patch, "patch side")->capture_default_str();
    train->add_option("--eta", tr.eta, "l1 weight on unit-range patches")->capture_default_str();
    train->add_option("--iters", tr.iters, "alternations")->capture_default_str();
    train->add_option("--patches", tr.patches, "training patches sampled")->capture_default_str();
    train->add_option("--seed", tr.seed, "random seed")->capture_default_str();
    train->add_option("--threads", tr.threads, "worker cap")->capture_default_str();
    train->add_option("--out", tr.out, "dictionary file")->required();

    RegisterArgs rg;
    auto* reg = app.add_subcommand("register", "sub-pixel block matching against the target");
    reg->add_option("--target", rg.target, "target frame")->required()->check(CLI::ExistingFile);
    reg->add_option("--aux", rg.aux, "auxiliary frames")->required()->check(CLI::ExistingFile);
    reg->add_option("--radius", rg.radius, "integer search radius (LR px)")->capture_default_str();
    reg->add_option("--delta", rg.delta, "acceptance threshold on similarity")->capture_default_str();
    reg->add_option("--margin", rg.margin, "block dilation around each patch")->capture_default_str();
    reg->add_flag("--mean-removed", rg.mean_removed, "zero-mean similarity");
    reg->add_option("--threads", rg.threads, "worker cap")->capture_default_str();
    reg->add_option("--out", rg.out, "output table (default: stdout)");

    SrArgs sr;
    auto* srcmd = app.add_subcommand("sr", "super-resolve the first frame");
    srcmd->add_option("--frames", sr.frames, "target frame, then auxiliaries")->required()->check(CLI::ExistingFile);
    srcmd->add_option("--dict", sr.dict, "HR dictionary file")->check(CLI::ExistingFile);
    srcmd->add_option("--config", sr.config, "key = value settings")->check(CLI::ExistingFile);
    srcmd->add_option("--oracle-shifts", sr.oracle_shifts, "shift table replacing registration")
        ->check(CLI::ExistingFile);
    srcmd->add_option("--out", sr.out, "HR output image")->required();
    srcmd->add_option("--dump-pre-bp", sr.dump_pre_bp, "also write the estimate before back-projection");
    srcmd->add_flag("--bicubic", sr.bicubic, "Catmull-Rom upscale of the target only (baseline)");
    sr.threads_opt = srcmd->add_option("--threads", sr.threads, "worker cap");
    sr.eta_opt = srcmd->add_option("--eta", sr.eta, "sparsity weight");
    sr.delta_opt = srcmd->add_option("--delta", sr.delta, "registration acceptance threshold");
    sr.bp_opt = srcmd->add_option("--bp-iterations", sr.bp_iterations, "back-projection iterations");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "PSNR after a border crop, or a full experiment");
    eval->add_option("--ref", ev.ref, "reference image")->check(CLI::ExistingFile);
    eval->add_option("--cand", ev.cand, "candidate image")->check(CLI::ExistingFile);
    eval->add_option("--margin", ev.margin, "border crop")->capture_default_str();
    ExperimentArgs ex;
    auto* experiment = eval->add_subcommand("experiment", "multi-seed comparison of modes");
    experiment->add_option("--config", ex.config, "experiment settings")->required()->check(CLI::ExistingFile);
    experiment->add_option("--csv", ex.csv, "per-seed rows (overrides config)");
    experiment->add_option("--report", ex.report, "summary text (overrides config)");
    ex.threads_opt = experiment->add_option("--threads", ex.threads, "worker cap");
    ex.seeds_opt = experiment->add_option("--seeds", ex.seeds, "number of seeds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*degrade) return run_degrade(dg);
        if (*train) return run_train(tr);
        if (*reg) return run_register(rg);
        if (*srcmd) return run_sr(sr);
        if (*experiment) return run_experiment_cmd(ex);
        if (*eval) return run_eval(ev);
    } catch (const UsageError& e) {
        std::cerr << "mfsr: " << e.what() << '\n';
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "mfsr: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "mfsr: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
