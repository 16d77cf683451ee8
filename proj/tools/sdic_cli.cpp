// Command-line front end: data generation, training, inversion, editing,
// evaluation, ablation, gradient checks and plots.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "sdic/config.hpp"
#include "sdic/editing.hpp"
#include "sdic/errors.hpp"
#include "sdic/evalsuite.hpp"
#include "sdic/image_io.hpp"
#include "sdic/losses.hpp"
#include "sdic/pipeline.hpp"
#include "sdic/tensor_io.hpp"
#include "sdic/toygen.hpp"
#include "sdic/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdic;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kBadInput = 2, kCheckFailed = 3 };

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

std::vector<fs::path> list_pngs(const fs::path& input) {
    std::vector<fs::path> out;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input)) {
            if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(input);
    }
    if (out.empty()) throw IoError("no PNG images in " + input.string());
    return out;
}

torch::Tensor load_images(const std::vector<fs::path>& files, int64_t size) {
    std::vector<torch::Tensor> images;
    for (const auto& f : files) {
        auto img = io::read_png(f);
        expect_shape(img, {3, size, size}, f.string());
        images.push_back(img);
    }
    return torch::stack(images);
}

// Single input file -> single output file; directory -> directory of same names.
void write_outputs(const std::vector<fs::path>& inputs, const fs::path& input, const fs::path& out,
                   const torch::Tensor& images) {
    if (!fs::is_directory(input)) {
        io::write_png(out, images[0]);
        return;
    }
    fs::create_directories(out);
    for (std::size_t i = 0; i < inputs.size(); ++i) io::write_png(out / inputs[i].filename(), images[static_cast<int64_t>(i)]);
}

std::string zero_pad(int64_t i) {
    std::ostringstream s;
    s << std::setw(5) << std::setfill('0') << i;
    return s.str();
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"Discrepancy-compensated GAN inversion and editing on a toy generator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string checkpoint_path;
    std::string encoder_path;
    std::string input;
    std::string log_path;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Render synthetic images (with sprite overlays unless --clean)");
    int64_t gen_count = 16;
    std::optional<uint64_t> gen_seed;
    std::string gen_split = "train";
    bool gen_clean = false;
    gen->add_option("--config", config_path, "INI configuration");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of images")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Data seed (overrides [data] seed)");
    gen->add_option("--split", gen_split, "train or heldout")->check(CLI::IsMember({"train", "heldout"}));
    gen->add_flag("--clean", gen_clean, "Skip sprite overlays");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Train the inversion encoder on clean generator samples");
    pre->add_option("--config", config_path, "INI configuration");
    pre->add_option("--out", out, "Checkpoint directory")->required();
    pre->add_option("--log", log_path, "CSV loss log");

    // train
    auto* train = app.add_subcommand("train", "Train the discrepancy networks with the encoder frozen");
    std::string variant_name;
    std::optional<int64_t> layer;
    std::optional<int64_t> steps;
    train->add_option("--config", config_path, "INI configuration");
    train->add_option("--encoder", encoder_path, "Pretrained encoder checkpoint")->required();
    train->add_option("--out", out, "Checkpoint directory")->required();
    train->add_option("--variant", variant_name, "full, no-att or no-sc")->check(CLI::IsMember({"full", "no-att", "no-sc"}));
    train->add_option("--layer", layer, "Injection layer");
    train->add_option("--steps", steps, "Training steps");
    train->add_option("--log", log_path, "CSV loss log");

    // invert
    auto* inv = app.add_subcommand("invert", "Reconstruct images with discrepancy compensation");
    std::string dump_discrepancy;
    std::string dump_artifacts;
    inv->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
    inv->add_option("--input", input, "PNG file or directory")->required();
    inv->add_option("--out", out, "Output PNG file or directory")->required();
    inv->add_option("--dump-discrepancy", dump_discrepancy, "Write the discrepancy maps as NTF");
    inv->add_option("--dump-artifacts", dump_artifacts, "Write codes, maps and discrepancy as NTF files");

    // edit
    auto* ed = app.add_subcommand("edit", "Edit images along a latent direction");
    std::string direction_path;
    double alpha = 0;
    ed->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
    ed->add_option("--input", input, "PNG file or directory")->required();
    ed->add_option("--out", out, "Output PNG file or directory")->required();
    ed->add_option("--direction", direction_path, "Direction NTF file")->required();
    ed->add_option("--alpha", alpha, "Edit strength")->required();

    // directions
    auto* dirs = app.add_subcommand("directions", "Discover latent editing directions");
    std::string method = "hyperplane";
    int64_t dir_count = 2048;
    int64_t dir_k = 4;
    int64_t factor = 0;
    dirs->add_option("--config", config_path, "INI configuration");
    dirs->add_option("--method", method, "pca or hyperplane")->check(CLI::IsMember({"pca", "hyperplane"}));
    dirs->add_option("--out", out, "Output NTF (hyperplane) or directory (pca)")->required();
    dirs->add_option("--count", dir_count, "Corpus size")->check(CLI::PositiveNumber);
    dirs->add_option("--k", dir_k, "Number of principal directions")->check(CLI::PositiveNumber);
    dirs->add_option("--factor", factor, "Latent factor labelling the hyperplane classes");

    // eval
    auto* ev = app.add_subcommand("eval", "Score SDIC and the encoder-only baseline on the held-out split");
    std::optional<int64_t> eval_count;
    bool eval_no_time = false;
    ev->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
    ev->add_option("--out", out, "CSV report")->required();
    ev->add_option("--count", eval_count, "Number of held-out images");
    ev->add_flag("--no-time", eval_no_time, "Write 0 in the wall-time column");

    // ablate
    auto* abl = app.add_subcommand("ablate", "Variant and injection-layer ablations");
    std::string cache_dir;
    abl->add_option("--config", config_path, "INI configuration");
    abl->add_option("--encoder", encoder_path, "Pretrained encoder checkpoint")->required();
    abl->add_option("--cache", cache_dir, "Checkpoint cache directory")->required();
    abl->add_option("--out", out, "CSV report")->required();

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the joint-loss gradients");
    std::optional<double> tol;
    int precision_bits = 64;
    int64_t coords = 10;
    std::string gc_variant = "full";
    gc->add_option("--tol", tol, "Relative tolerance");
    gc->add_option("--precision", precision_bits, "64 or 32")->check(CLI::IsMember({32, 64}));
    gc->add_option("--coords", coords, "Coordinates per parameter group")->check(CLI::PositiveNumber);
    gc->add_option("--variant", gc_variant, "full, no-att or no-sc")->check(CLI::IsMember({"full", "no-att", "no-sc"}));

    // plot
    auto* plot = app.add_subcommand("plot", "Contact sheet: original, baseline, SDIC and optional edit per row");
    plot->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
    plot->add_option("--input", input, "PNG file or directory")->required();
    plot->add_option("--out", out, "Output PNG")->required();
    plot->add_option("--direction", direction_path, "Direction NTF file");
    plot->add_option("--alpha", alpha, "Edit strength");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) {
            auto config = load_config(config_path);
            if (gen_seed) config.data.seed = *gen_seed;
            config.validate();
            ToyGenerator generator(config.model);
            const auto split = gen_split == "train" ? Split::kTrain : Split::kHeldout;
            auto data = make_dataset(generator, config.data, split, !gen_clean, gen_count);
            fs::create_directories(out);
            for (int64_t i = 0; i < gen_count; ++i) io::write_png(fs::path(out) / ("img_" + zero_pad(i) + ".png"), data.images[i]);
            io::write_ntf(fs::path(out) / "z.ntf", data.z);
            std::cout << "wrote " << gen_count << " images to " << out << "\n";
        } else if (pre->parsed()) {
            auto config = load_config(config_path);
            std::ofstream log;
            TrainObserver obs;
            obs.progress = &std::cerr;
            if (!log_path.empty()) {
                log = open_out(log_path);
                obs.csv = &log;
            }
            auto ckpt = pretrain_encoder(config, obs);
            save_checkpoint(out, ckpt);
            std::cout << "encoder checkpoint written to " << out << "\n";
        } else if (train->parsed()) {
            auto config = load_config(config_path);
            if (!variant_name.empty()) config.train.variant = parse_variant(variant_name);
            if (layer) config.model.injection_layer = *layer;
            if (steps) config.train.steps = *steps;
            config.validate();
            auto encoder = load_checkpoint(encoder_path);
            std::ofstream log;
            TrainObserver obs;
            obs.progress = &std::cerr;
            if (!log_path.empty()) {
                log = open_out(log_path);
                obs.csv = &log;
            }
            auto ckpt = train_sdic(config, encoder, obs);
            save_checkpoint(out, ckpt);
            std::cout << "checkpoint written to " << out << "\n";
        } else if (inv->parsed()) {
            auto models = load_models(load_checkpoint(checkpoint_path));
            const auto files = list_pngs(input);
            auto images = load_images(files, models.config.image_size);
            torch::NoGradGuard guard;
            auto result = invert(models, images);
            write_outputs(files, input, out, result.image);
            const auto& a = result.artifacts;
            if (!dump_discrepancy.empty()) io::write_ntf(dump_discrepancy, a.discrepancy);
            if (!dump_artifacts.empty()) {
                io::write_tensor_dir(dump_artifacts, {{"w", a.w},
                                                      {"w_enhanced", a.w_enhanced},
                                                      {"gamma", a.affine.gamma},
                                                      {"theta", a.affine.theta},
                                                      {"discrepancy", a.discrepancy},
                                                      {"map", a.map},
                                                      {"map_enhanced", a.map_enhanced},
                                                      {"initial_reconstruction", a.initial_reconstruction}});
            }
        } else if (ed->parsed()) {
            auto models = load_models(load_checkpoint(checkpoint_path));
            const auto direction = load_direction(direction_path);
            const auto files = list_pngs(input);
            auto images = load_images(files, models.config.image_size);
            torch::NoGradGuard guard;
            write_outputs(files, input, out, edit(models, images, direction, alpha));
        } else if (dirs->parsed()) {
            auto config = load_config(config_path);
            SdicModels models(config.model, config.train.variant);
            auto corpus = factor_corpus(models, config.data, dir_count, factor);
            if (method == "hyperplane") {
                auto dir = hyperplane_direction(corpus.codes, corpus.labels);
                dir.label = "z" + std::to_string(factor) + "-hyperplane";
                save_direction(out, dir);
                std::cout << "wrote " << out << "\n";
            } else {
                fs::create_directories(out);
                auto pcs = pca_directions(corpus.codes, dir_k);
                auto summary = open_out(fs::path(out) / "variance.csv");
                summary << "index,variance,ratio\n";
                for (std::size_t i = 0; i < pcs.size(); ++i) {
                    save_direction(fs::path(out) / ("pca" + std::to_string(i) + ".ntf"), pcs[i].direction);
                    summary << i << "," << pcs[i].variance << "," << pcs[i].variance_ratio << "\n";
                }
                std::cout << "wrote " << pcs.size() << " directions to " << out << "\n";
            }
        } else if (ev->parsed()) {
            auto ckpt = load_checkpoint(checkpoint_path);
            auto models = load_models(ckpt);
            FeatureNet net(ckpt.config.model);
            auto heldout = make_dataset(models.generator, ckpt.config.data, Split::kHeldout, true, eval_count).images;
            auto report = evaluate(models, net, heldout);
            if (eval_no_time) report.sdic.wall_time_s = report.baseline.wall_time_s = 0;
            auto f = open_out(out);
            f << report.csv();
            std::cout << report.csv();
        } else if (abl->parsed()) {
            auto config = load_config(config_path);
            auto encoder = load_checkpoint(encoder_path);
            TrainObserver obs;
            obs.progress = &std::cerr;
            auto report = ablation_suite(config, encoder, cache_dir, obs);
            auto f = open_out(out);
            f << report.csv();
            std::cout << report.csv() << "variant ordering " << (report.variant_order_ok ? "holds" : "VIOLATED") << "\n"
                      << "layer ordering " << (report.layer_order_ok ? "holds" : "VIOLATED") << "\n";
            if (!report.passed()) throw CheckFailure("ablation ordering violated");
        } else if (gc->parsed()) {
            auto options = GradCheckOptions::for_precision(precision_bits == 64 ? Precision::kDouble : Precision::kFloat);
            if (tol) options.tolerance = *tol;
            options.coordinates = coords;
            auto report = grad_check(options, parse_variant(gc_variant));
            std::cout << report.table();
            if (!report.passed()) {
                for (const auto& g : report.groups) {
                    if (!g.passed) std::cerr << "gradient mismatch in group " << g.group << "\n";
                }
                throw CheckFailure("gradient check failed");
            }
        } else if (plot->parsed()) {
            auto models = load_models(load_checkpoint(checkpoint_path));
            const auto files = list_pngs(input);
            auto images = load_images(files, models.config.image_size);
            std::optional<EditDirection> direction;
            if (!direction_path.empty()) direction = load_direction(direction_path);
            torch::NoGradGuard guard;
            auto result = invert(models, images);
            std::vector<torch::Tensor> tiles;
            for (int64_t i = 0; i < images.size(0); ++i) {
                tiles.push_back(images[i]);
                tiles.push_back(result.artifacts.initial_reconstruction[i]);
                tiles.push_back(result.image[i]);
            }
            int64_t columns = 3;
            if (direction) {
                auto edited = edit_from(models, result, *direction, alpha);
                std::vector<torch::Tensor> with_edit;
                for (int64_t i = 0; i < images.size(0); ++i) {
                    for (int64_t k = 0; k < 3; ++k) with_edit.push_back(tiles[static_cast<std::size_t>(3 * i + k)]);
                    with_edit.push_back(edited[i]);
                }
                tiles = std::move(with_edit);
                columns = 4;
            }
            io::write_png(out, io::contact_sheet(tiles, columns));
        }
    } catch (const CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const std::logic_error& e) {
        // ShapeError and ConfigError derive from invalid_argument (a logic_error).
        if (dynamic_cast<const std::invalid_argument*>(&e)) {
            std::cerr << "bad input: " << e.what() << "\n";
            return kBadInput;
        }
        std::cerr << "assertion failed: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const IoError& e) {
        std::cerr << "bad input: " << e.what() << "\n";
        return kBadInput;
    } catch (const c10::Error& e) {
        std::cerr << "bad input: " << e.what_without_backtrace() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    }
    return kOk;
}
