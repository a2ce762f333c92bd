#include "derain/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "derain/checkpoint.hpp"
#include "derain/data.hpp"
#include "derain/errors.hpp"
#include "derain/generator.hpp"
#include "derain/image_io.hpp"
#include "derain/metrics.hpp"
#include "derain/training.hpp"

namespace derain::cli {

namespace fs = std::filesystem;

ImageTensor pad_to_multiple(const ImageTensor& image, int multiple) {
    const int h = image.height();
    const int w = image.width();
    const int ph = (h + multiple - 1) / multiple * multiple;
    const int pw = (w + multiple - 1) / multiple * multiple;
    if (ph == h && pw == w) return image;
    if (ph - h >= h || pw - w >= w) throw StructuralError("image too small to reflect-pad");
    Tensor t(Shape{1, image.channels(), ph, pw});
    auto reflect = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) t.at(0, c, y, x) = image.at(c, reflect(y, h), reflect(x, w));
    return ImageTensor(std::move(t));
}

ImageTensor crop_top_left(const ImageTensor& image, int height, int width) {
    if (height > image.height() || width > image.width()) throw StructuralError("crop larger than image");
    Tensor t(Shape{1, image.channels(), height, width});
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) t.at(0, c, y, x) = image.at(c, y, x);
    return ImageTensor(std::move(t));
}

namespace {

// Final-iteration decomposition of one image, padding when asked.
IterationTrace decompose_image(const Generator& g, const ImageTensor& image, bool pad) {
    const int f = GeneratorConfig::downsampling_factor;
    if (!pad) return run_generator(g, image);
    IterationTrace padded = run_generator(g, pad_to_multiple(image, f));
    const int h = image.height();
    const int w = image.width();
    IterationTrace out;
    for (auto& t : padded.triples) {
        DecompositionTriple c{crop_top_left(t.background, h, w), crop_top_left(t.raindrop, h, w),
                              TransparencyMask(crop_top_left(ImageTensor(t.mask.tensor()), h, w).tensor())};
        out.reconstructions.push_back(compose(c));
        out.triples.push_back(std::move(c));
    }
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

struct TrainArgs {
    std::string config;
    std::string rainy;
    std::string clean;
    std::string out;
    std::string resume;
    std::map<std::string, std::string> overrides;
    std::map<std::string, CLI::Option*> override_opts;
};

int cmd_train(TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config, cfg);
    for (auto& [key, opt] : a.override_opts) {
        if (opt->count() > 0) set_config_value(cfg, key, a.overrides[key]);
    }
    if (const char* env = std::getenv(kDeterministicEnv)) {
        const std::string v(env);
        if (v == "1") cfg.deterministic = true;
        if (v == "0") cfg.deterministic = false;
    }
    cfg.validate();
    for (const auto& dir : {a.rainy, a.clean}) {
        if (!fs::is_directory(dir)) throw StructuralError("image directory " + dir + " does not exist");
    }
    std::optional<fs::path> resume_from;
    if (!a.resume.empty()) resume_from = fs::path(a.resume);
    ensure_dir(a.out);
    {
        std::ofstream cfg_out(fs::path(a.out) / "config.txt");
        cfg_out << format_config(cfg);
    }
    const fs::path final_path = fit(cfg, a.rainy, a.clean, a.out, resume_from);
    std::cout << "final checkpoint: " << final_path.string() << "\n";
    return kOk;
}

struct InferArgs {
    std::string checkpoint;
    std::string input;
    std::string out;
    bool pad = false;
};

int cmd_infer(const InferArgs& a) {
    const Generator g = load_generator(fs::path(a.checkpoint));
    if (!fs::is_directory(a.input)) throw StructuralError("input directory " + a.input + " does not exist");
    const auto images = list_images(a.input);
    if (images.empty()) throw StructuralError("no images found in " + a.input);
    ensure_dir(a.out);
    for (const auto& p : images) {
        const ImageTensor img = load_image(p, g.config().channels);
        const IterationTrace t = decompose_image(g, img, a.pad);
        save_image(fs::path(a.out) / p.filename(), t.triples.back().background);
    }
    std::cout << "wrote " << images.size() << " backgrounds to " << a.out << "\n";
    return kOk;
}

struct DecomposeArgs {
    std::string checkpoint;
    std::string image;
    std::string out;
    bool pad = false;
};

int cmd_decompose(const DecomposeArgs& a) {
    const Generator g = load_generator(fs::path(a.checkpoint));
    if (!fs::is_regular_file(a.image)) throw StructuralError("image " + a.image + " does not exist");
    const ImageTensor img = load_image(a.image, g.config().channels);
    const IterationTrace t = decompose_image(g, img, a.pad);
    ensure_dir(a.out);
    const std::string stem = fs::path(a.image).stem().string();
    const fs::path out(a.out);
    for (std::size_t i = 0; i < t.triples.size(); ++i) {
        const std::string suffix = "_iter" + std::to_string(i + 1) + ".png";
        save_image(out / (stem + "_background" + suffix), t.triples[i].background);
        save_image(out / (stem + "_raindrop" + suffix), t.triples[i].raindrop);
        save_image(out / (stem + "_mask" + suffix), mask_heatmap(t.triples[i].mask));
        save_image(out / (stem + "_reconstruction" + suffix), t.reconstructions[i]);
    }
    save_image(out / "mask_colorbar.png", heatmap_colorbar());
    std::cout << "wrote " << t.triples.size() << " iterations to " << a.out << "\n";
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string layout = "flat";
    std::string report;
    std::string save;
    bool pad = false;
};

int cmd_eval(const EvalArgs& a) {
    const Generator g = load_generator(fs::path(a.checkpoint));
    const DatasetManifest m = build_manifest(a.data, parse_layout(a.layout), Pairing::paired, false);
    if (!a.save.empty()) ensure_dir(a.save);
    std::ofstream report(a.report);
    if (!report) throw IoError("cannot write report " + a.report);
    report << "filename\tpsnr\tssim\n" << std::fixed << std::setprecision(4);
    std::vector<ImageTensor> outputs;
    std::vector<ImageTensor> truths;
    for (std::size_t i = 0; i < m.rainy_paths.size(); ++i) {
        const ImageTensor rainy = load_image(m.rainy_paths[i], g.config().channels);
        ImageTensor truth = load_image(m.clean_paths[i], g.config().channels);
        ImageTensor bg = decompose_image(g, rainy, a.pad).triples.back().background;
        if (!(bg.tensor().shape() == truth.tensor().shape())) {
            throw StructuralError("ground truth " + m.clean_paths[i].string() + " does not match its rainy image size");
        }
        if (!a.save.empty()) save_image(fs::path(a.save) / m.rainy_paths[i].filename(), bg);
        report << m.rainy_paths[i].filename().string() << '\t' << psnr(bg, truth) << '\t' << ssim(bg, truth) << '\n';
        outputs.push_back(std::move(bg));
        truths.push_back(std::move(truth));
    }
    const MetricReport r = evaluate_pairs(outputs, truths);
    report << "mean\t" << r.psnr_db << '\t' << r.ssim << '\n';
    std::cout << std::fixed << std::setprecision(4) << "pairs " << r.count << "  PSNR " << r.psnr_db << " dB  SSIM "
              << r.ssim << "\n";
    return kOk;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
    const auto samples = synthesize(spec);
    const fs::path out(out_dir);
    for (const char* sub : {"rain", "clean", "raindrop", "mask"}) ensure_dir(out / sub);
    std::ofstream manifest(out / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (out / "manifest.txt").string());
    manifest << "# rainy\tbackground\traindrop\tmask\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::ostringstream name;
        name << std::setw(4) << std::setfill('0') << i << ".png";
        const std::string n = name.str();
        save_image(out / "rain" / n, samples[i].rainy);
        save_image(out / "clean" / n, samples[i].truth.background);
        save_image(out / "raindrop" / n, samples[i].truth.raindrop);
        save_mask(out / "mask" / n, samples[i].truth.mask);
        manifest << "rain/" << n << "\tclean/" << n << "\traindrop/" << n << "\tmask/" << n << "\n";
    }
    std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
    return kOk;
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"Unsupervised raindrop removal by layer decomposition", "derain"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train on unpaired rainy/clean image directories");
    t->add_option("--config", train.config, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
    t->add_option("--rainy", train.rainy, "Directory of rainy images")->required();
    t->add_option("--clean", train.clean, "Directory of clean images")->required();
    t->add_option("--out", train.out, "Output directory for checkpoints and metrics")->required();
    t->add_option("--resume", train.resume, "Checkpoint to resume from");
    const TrainConfig defaults;
    for (const auto& key : config_keys()) {
        train.override_opts[key] =
            t->add_option("--" + key, train.overrides[key], config_help(key))->default_str(get_config_value(defaults, key));
    }

    InferArgs infer;
    auto* i = app.add_subcommand("infer", "Write the final background for every image in a directory");
    i->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    i->add_option("--input", infer.input, "Directory of rainy images")->required();
    i->add_option("--out", infer.out, "Output directory")->required();
    i->add_flag("--pad", infer.pad, "Reflect-pad to a multiple of 4 and crop back")->default_str("false");

    DecomposeArgs dec;
    auto* d = app.add_subcommand("decompose", "Write per-iteration backgrounds, raindrop layers, mask heatmaps");
    d->add_option("--checkpoint", dec.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    d->add_option("--image", dec.image, "Rainy image")->required();
    d->add_option("--out", dec.out, "Output directory")->required();
    d->add_flag("--pad", dec.pad, "Reflect-pad to a multiple of 4 and crop back")->default_str("false");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "PSNR/SSIM of inferred backgrounds against paired ground truth");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "Paired test set root")->required();
    e->add_option("--layout", ev.layout, "Directory layout: flat, nus, rainds")->capture_default_str();
    e->add_option("--report", ev.report, "Tab-separated report path")->required();
    e->add_option("--save", ev.save, "Also write the backgrounds here");
    e->add_flag("--pad", ev.pad, "Reflect-pad to a multiple of 4 and crop back")->default_str("false");

    SyntheticSpec spec;
    std::string synth_out;
    auto* s = app.add_subcommand("synth", "Generate a synthetic raindrop corpus with ground truth");
    s->add_option("--out", synth_out, "Output directory")->required();
    s->add_option("--count", spec.count, "Number of samples")->capture_default_str();
    s->add_option("--size", spec.size, "Square image size")->capture_default_str();
    s->add_option("--channels", spec.channels, "1 or 3")->capture_default_str();
    s->add_option("--min-drops", spec.min_drops, "Fewest drops per image")->capture_default_str();
    s->add_option("--max-drops", spec.max_drops, "Most drops per image")->capture_default_str();
    s->add_option("--min-radius", spec.min_radius, "Smallest drop radius in pixels")->capture_default_str();
    s->add_option("--max-radius", spec.max_radius, "Largest drop radius in pixels")->capture_default_str();
    s->add_option("--feather", spec.feather, "Mask feather width in pixels")->capture_default_str();
    s->add_option("--blur", spec.blur_radius, "Raindrop-layer box blur radius")->capture_default_str();
    s->add_option("--seed", spec.seed, "Random seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*t) return cmd_train(train);
        if (*i) return cmd_infer(infer);
        if (*d) return cmd_decompose(dec);
        if (*e) return cmd_eval(ev);
        if (*s) return cmd_synth(spec, synth_out);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const NumericError& err) {
        std::cerr << "numeric abort: " << err.what() << "\n";
        return kNumericAbort;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage = args;
    storage.insert(storage.begin(), "derain");
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace derain::cli
