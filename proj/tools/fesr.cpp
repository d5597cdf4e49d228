// Command-line front end. Exit codes: 0 ok, 1 other failure, 2 config, 3 data, 4 divergence.

#include "fesr/datasets.hpp"
#include "fesr/evaluation.hpp"
#include "fesr/image_io.hpp"
#include "fesr/plots.hpp"
#include "fesr/toyfaces.hpp"
#include "fesr/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#ifndef FESR_GIT_DESCRIBE
#define FESR_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace fesr;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c, bool config_required = false) {
    auto* opt = cmd->add_option("--config", c.config, "experiment config file");
    if (config_required) {
        opt->required();
    }
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    if (auto errors = validate_config(cfg); !errors.empty()) {
        std::string msg = "config violations:";
        for (const auto& e : errors) {
            msg += "\n  " + e;
        }
        throw ConfigError(msg);
    }
    return cfg;
}

struct Loaded {
    DatasetManifest manifest;
    std::vector<Image> images;
    TensorDataset data;
    FoldSplit split;
};

std::unique_ptr<Loaded> load_data(const std::string& manifest_path, const ExperimentConfig& cfg) {
    auto l = std::make_unique<Loaded>();
    l->manifest = load_manifest(manifest_path);
    l->images = load_images(l->manifest);
    l->data = TensorDataset(l->manifest, l->images);
    l->split = make_folds(l->manifest, cfg.fold_count, cfg.seed);
    return l;
}

/// Model from a checkpoint; a --config, when given, must hash identically to the stored one.
LoadedModel open_checkpoint(const std::string& path, const Common& c) {
    auto model = load_model(path);
    if (!c.config.empty()) {
        auto cfg = load_config(c.config);
        if (c.seed) {
            cfg.seed = *c.seed;
        }
        if (cfg.hash() != model.cfg.hash()) {
            throw ConfigError("config " + c.config + " (hash " + cfg.hash() + ") does not match checkpoint " + path +
                              " (hash " + model.cfg.hash() + ")");
        }
    }
    return model;
}

void write_run_json(const fs::path& out, const std::string& command, const std::string& hash, double seconds,
                    int exit_code) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = hash;
    j["git_describe"] = FESR_GIT_DESCRIBE;
    j["wall_time_s"] = seconds;
    j["exit_code"] = exit_code;
    fs::create_directories(out);
    std::ofstream(out / "run.json") << j.dump(2) << '\n';
}

Image tile(const torch::Tensor& chw) { return to_image(chw.clamp(-1, 1)); }

std::vector<Image> tiles(const torch::Tensor& batch) {
    std::vector<Image> out;
    for (std::int64_t i = 0; i < batch.size(0); ++i) {
        out.push_back(tile(batch[i]));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint facial expression synthesis and recognition"};
    app.require_subcommand(1);
    Common common;
    std::string config_hash;

    // toydata
    auto* toydata = app.add_subcommand("toydata", "render the procedural face dataset");
    add_common(toydata, common);
    int identities = 200;
    float noise = 0.02f;
    std::vector<float> intensities{0.6f, 0.8f, 1.0f};
    toydata->add_option("--identities", identities, "number of identities")->capture_default_str();
    toydata->add_option("--noise", noise, "per-pixel noise amplitude")->capture_default_str();
    toydata->add_option("--intensities", intensities, "expression intensities per class");

    // pretrain / train
    std::string manifest_path;
    int fold = 0;
    bool fresh = false;
    auto* pretrain = app.add_subcommand("pretrain", "stage 1 only: train the synthesis networks up to P_pre");
    auto* train = app.add_subcommand("train", "full training run on one fold, then held-out evaluation");
    for (auto* cmd : {pretrain, train}) {
        add_common(cmd, common, true);
        cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
        cmd->add_option("--fold", fold, "held-out fold index")->capture_default_str();
        cmd->add_flag("--fresh", fresh, "ignore existing checkpoints in --out");
    }

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "relabel, intensity sweep or prior sampling");
    add_common(synth, common);
    std::string checkpoint;
    std::string mode = "relabel";
    std::vector<std::string> inputs;
    int count = 16;
    synth->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    synth->add_option("--mode", mode, "relabel | intensity_sweep | prior")
        ->check(CLI::IsMember({"relabel", "intensity_sweep", "prior"}))
        ->capture_default_str();
    synth->add_option("--input", inputs, "input PNG (relabel and intensity_sweep)");
    synth->add_option("--count", count, "prior samples")->capture_default_str();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "held-out metrics for a checkpoint");
    add_common(evaluate, common);
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    evaluate->add_option("--manifest", manifest_path, "dataset manifest")->required();
    evaluate->add_option("--fold", fold, "held-out fold index")->capture_default_str();
    evaluate->add_flag("--features", "also export recognizer features of real and synthetic test images");

    // shapes
    auto* shapes = app.add_subcommand("shapes", "per-layer output shapes and parameter counts");
    add_common(shapes, common);
    bool paper_scale = false;
    shapes->add_flag("--paper-scale", paper_scale, "use the full-size 128x128 architecture");

    // grad-audit
    auto* audit = app.add_subcommand("grad-audit", "gradient norms of the three intra-class feature paths");
    add_common(audit, common);
    audit->add_option("--checkpoint", checkpoint, "checkpoint file (random weights when omitted)");
    audit->add_option("--manifest", manifest_path, "dataset manifest")->required();

    // plots
    auto* plots = app.add_subcommand("plots", "SVG loss curves and accuracy bars");
    add_common(plots, common);
    std::vector<std::string> metrics_files;
    std::vector<std::string> report_files;
    plots->add_option("--metrics", metrics_files, "metrics.csv files");
    plots->add_option("--reports", report_files, "eval.csv files to compare");

    CLI11_PARSE(app, argc, argv);

    const auto start = std::chrono::steady_clock::now();
    auto* cmd = app.get_subcommands().front();
    const fs::path out = common.out;
    int code = 0;
    try {
        fs::create_directories(out);
        if (cmd == toydata) {
            const auto cfg = resolve_config(common);
            config_hash = cfg.hash();
            ToyDatasetOptions o;
            o.identities = identities;
            o.num_classes = cfg.num_classes;
            o.intensities = intensities;
            o.size = cfg.image_size;
            o.channels = cfg.channels;
            o.seed = cfg.seed;
            o.noise = noise;
            const auto m = generate_dataset(o, out);
            std::cout << "wrote " << m.entries.size() << " images and " << (out / "manifest.tsv").string() << '\n';
        } else if (cmd == pretrain || cmd == train) {
            const auto cfg = resolve_config(common);
            config_hash = cfg.hash();
            auto d = load_data(manifest_path, cfg);
            if (fold < 0 || fold >= d->split.fold_count) {
                throw ConfigError("fold " + std::to_string(fold) + " outside [0, " +
                                  std::to_string(d->split.fold_count) + ")");
            }
            export_folds(d->split, out / "folds.tsv");
            RunOptions ro;
            ro.out_dir = out;
            ro.resume = !fresh;
            if (cmd == pretrain) {
                ro.stop_at = recognizer_start(cfg);
            }
            std::unique_ptr<Trainer> trainer;
            const auto result = run(cfg, d->data, d->split.train[static_cast<std::size_t>(fold)], ro, &trainer);
            std::cout << "trained to t=" << result.iterations << "; checkpoint " << result.final_checkpoint.string()
                      << '\n';
            if (cmd == train) {
                auto report = evaluate_fold(cfg, result.iterations, trainer->networks(), d->data, d->split, fold);
                report.write_csv(out / "eval.csv");
                report.write_summary(out / "eval.txt");
                std::cout << "held-out accuracy " << report.accuracy_mean << '\n';
            }
        } else if (cmd == synth) {
            auto model = open_checkpoint(checkpoint, common);
            config_hash = model.cfg.hash();
            const auto& cfg = model.cfg;
            auto& nets = *model.nets;
            if (mode == "prior") {
                const auto seed = common.seed.value_or(cfg.seed);
                write_grid_png(out / "prior.png", tiles(synthesize_prior(nets, cfg, count, seed)), cfg.num_classes);
            } else {
                if (inputs.empty()) {
                    throw DataError("--input is required for mode " + mode);
                }
                for (std::size_t i = 0; i < inputs.size(); ++i) {
                    const auto img = read_png(inputs[i]);
                    const auto x = to_tensor(img).unsqueeze(0);
                    std::vector<Image> grid;
                    int columns = 0;
                    if (mode == "relabel") {
                        grid.push_back(img);
                        for (auto& t : tiles(synthesize_relabel(nets, cfg, x))) {
                            grid.push_back(std::move(t));
                        }
                        columns = cfg.num_classes + 1;
                    } else {
                        grid = tiles(synthesize_intensity_sweep(nets, cfg, x, 5));
                        columns = 5;
                    }
                    write_grid_png(out / (mode + "_" + std::to_string(i) + ".png"), grid, columns);
                }
            }
            std::cout << "wrote " << mode << " grids to " << out.string() << '\n';
        } else if (cmd == evaluate) {
            auto model = open_checkpoint(checkpoint, common);
            config_hash = model.cfg.hash();
            auto d = load_data(manifest_path, model.cfg);
            auto report = evaluate_fold(model.cfg, model.t, *model.nets, d->data, d->split, fold);
            report.write_csv(out / "eval.csv");
            report.write_summary(out / "eval.txt");
            if (evaluate->count("--features") > 0) {
                const auto& test = d->split.test[static_cast<std::size_t>(fold)];
                std::vector<std::int64_t> idx(test.begin(), test.end());
                auto x = d->data.images.index_select(0, torch::tensor(idx, torch::kLong));
                std::vector<int> labels;
                for (auto i : test) {
                    labels.push_back(d->manifest.entries[i].class_index);
                }
                std::vector<int> flags(labels.size(), 0);
                if (variant_spec(model.cfg.variant)->train_generator) {
                    x = torch::cat({x, synthesize_prior(*model.nets, model.cfg, static_cast<int>(test.size()),
                                                        model.cfg.seed)});
                    for (std::size_t i = 0; i < test.size(); ++i) {
                        labels.push_back(static_cast<int>(i) % model.cfg.num_classes);
                        flags.push_back(1);
                    }
                }
                export_features(model.nets->rec, x, labels, flags, out / "features.csv");
            }
            std::cout << "accuracy " << report.accuracy_mean << '\n';
        } else if (cmd == shapes) {
            auto cfg = paper_scale ? ExperimentConfig::paper_scale() : resolve_config(common);
            config_hash = cfg.hash();
            const auto table = format_shape_table(shape_audit(cfg));
            Networks nets(cfg);
            std::ostringstream counts;
            counts << "parameters: G_enc " << parameter_count(*nets.enc) << " (" << weight_layer_count(*nets.enc)
                   << " weight layers), G_dec " << parameter_count(*nets.dec) << " (" << weight_layer_count(*nets.dec)
                   << "), D_img " << parameter_count(*nets.dimg) << " (" << weight_layer_count(*nets.dimg)
                   << "), D_z " << parameter_count(*nets.dz) << " (" << weight_layer_count(*nets.dz) << "), R "
                   << parameter_count(*nets.rec) << " (" << weight_layer_count(*nets.rec) << ")\n";
            std::cout << table << counts.str();
            std::ofstream(out / "shapes.txt") << table << counts.str();
        } else if (cmd == audit) {
            std::unique_ptr<Networks> owned;
            ExperimentConfig cfg;
            if (!checkpoint.empty()) {
                auto model = open_checkpoint(checkpoint, common);
                cfg = model.cfg;
                owned = std::move(model.nets);
            } else {
                cfg = resolve_config(common);
                owned = std::make_unique<Networks>(cfg);
            }
            config_hash = cfg.hash();
            auto d = load_data(manifest_path, cfg);
            BatchSchedule schedule(d->manifest, d->split.train[0], cfg.batch_size, cfg.seed);
            const auto batch = schedule.batch(0);
            std::vector<std::int64_t> xi(batch.indices.begin(), batch.indices.end());
            std::vector<std::int64_t> pi(batch.pair_indices.begin(), batch.pair_indices.end());
            const auto x = d->data.images.index_select(0, torch::tensor(xi, torch::kLong));
            const auto x_pr = d->data.images.index_select(0, torch::tensor(pi, torch::kLong));
            // same-class prior synthesis for every anchor
            const auto z_codes = peak_codes(batch.labels, cfg.num_classes);
            torch::Tensor pf;
            {
                torch::NoGradGuard ng;
                owned->dec->eval();
                auto rng = make_rng(cfg.seed, 0xa0d17);
                std::vector<float> flat;
                for (std::size_t i = 0; i < batch.indices.size(); ++i) {
                    const auto z = sample_prior(cfg.latent_dim, rng);
                    flat.insert(flat.end(), z.g.begin(), z.g.end());
                }
                pf = owned->dec->forward(
                    torch::tensor(flat).view({static_cast<std::int64_t>(batch.indices.size()), cfg.latent_dim}),
                    z_codes);
            }
            const auto f_x = extract_features(owned->rec, x);
            const auto f_pr = extract_features(owned->rec, x_pr);
            const auto f_pf = extract_features(owned->rec, pf);
            std::ostringstream os;
            os << "rule  |dL/df_x|  |dL/df_xpr|  |dL/df_xpf|\n";
            for (auto rule : {GradientRule::rdbp, GradientRule::full}) {
                const auto n = branch_gradient_norms(f_x, f_pr, f_pf, rule);
                os << (rule == GradientRule::rdbp ? "rdbp " : "full ") << ' ' << n[0] << ' ' << n[1] << ' ' << n[2]
                   << '\n';
            }
            std::cout << os.str();
            std::ofstream(out / "grad_audit.txt") << os.str();
        } else if (cmd == plots) {
            if (metrics_files.empty() && report_files.empty()) {
                throw DataError("plots needs --metrics and/or --reports");
            }
            for (std::size_t i = 0; i < metrics_files.size(); ++i) {
                const auto dir = metrics_files.size() == 1 ? out : out / ("run" + std::to_string(i));
                for (const auto& p : write_loss_curves(read_metrics_csv(metrics_files[i]), dir)) {
                    std::cout << "wrote " << p.string() << '\n';
                }
            }
            if (!report_files.empty()) {
                std::vector<EvalReport> reports;
                for (const auto& r : report_files) {
                    reports.push_back(EvalReport::read_csv(r));
                }
                write_accuracy_bars(reports, out / "accuracy.svg");
                std::cout << "wrote " << (out / "accuracy.svg").string() << '\n';
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        code = 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        code = 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << '\n';
        code = 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = 1;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
        write_run_json(out, cmd->get_name(), config_hash, seconds, code);
    } catch (const std::exception&) {
    }
    return code;
}
