// Command-line front end: train / infer / eval / gradcheck / synth.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uegan/gradcheck.hpp"
#include "uegan/inference.hpp"
#include "uegan/losses.hpp"
#include "uegan/metrics.hpp"
#include "uegan/network.hpp"
#include "uegan/raster_io.hpp"
#include "uegan/training.hpp"

namespace fs = std::filesystem;
using namespace uegan;

namespace {

RunConfig load_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_run_config(path);
}

Raster eval_forward(const ParamSet& params, const ModelConfig& mc, const Tensor& image) {
    Graph g;
    g.grad_enabled = false;
    auto x = std::make_shared<Tensor>(image);
    x->requires_grad = false;
    auto go = generator_forward(g, x, params, mc);
    auto probs = g.sigmoid(go.final().logits);
    Raster out(probs->h, probs->w);
    out.v = probs->data;
    return out;
}

int cmd_train(const std::string& config_path, int steps_override, long long seed_override,
              const std::string& out_dir) {
    RunConfig cfg = load_or_default(config_path);
    if (steps_override >= 0) cfg.steps = steps_override;
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    cfg.validate();
    fs::create_directories(out_dir);
    save_run_config(out_dir + "/config.txt", cfg);
    std::ofstream reports(out_dir + "/reports.jsonl");
    if (!reports) {
        std::cerr << "cannot write " << out_dir << "/reports.jsonl\n";
        return 1;
    }
    Trainer trainer(cfg);
    trainer.train([&reports](const LossReport& r) {
        reports << r.json_line() << "\n";
        reports.flush();
        if (r.step % 10 == 0)
            std::cerr << "step " << r.step << " total " << r.total << " dice " << r.dice << "\n";
    });
    save_checkpoint(out_dir + "/model.uegt", trainer.generator());
    ValReport val = trainer.validate();
    nlohmann::json j;
    j["threshold"] = val.threshold;
    j["iou"] = val.iou;
    j["f1"] = val.f1;
    j["object_f1"] = val.object_f1;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_infer(const std::string& config_path, const std::string& model_path,
              const std::vector<std::string>& ensemble_paths, const std::string& input_path,
              const std::string& output_path, int tile, double overlap, bool tta,
              double threshold, const std::string& probs_path) {
    RunConfig cfg = load_or_default(config_path);
    std::vector<std::string> paths{model_path};
    paths.insert(paths.end(), ensemble_paths.begin(), ensemble_paths.end());
    std::vector<ParamSet> models;
    for (const auto& p : paths) {
        ParamSet ps = build_generator<float>(cfg.model, cfg.seed);
        load_checkpoint_into(p, ps);
        models.push_back(std::move(ps));
    }
    Tensor image = load_ppm(input_path);
    std::vector<Raster> per_model;
    for (const auto& ps : models) {
        TileModel model = [&ps, &cfg](const Tensor& patch) {
            return eval_forward(ps, cfg.model, patch);
        };
        if (tile > 0)
            per_model.push_back(predict_tiled(image, model, tile, overlap, tta));
        else
            per_model.push_back(tta ? tta_predict(image, model) : model(image));
    }
    Raster probs = ensemble_average(per_model);
    if (!probs_path.empty()) save_pgm(probs_path, probs, false);
    save_pgm(output_path, binarize(probs, static_cast<float>(threshold)));
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const MetricConfig& mc) {
    Mask pred = load_mask_pgm(pred_path);
    Mask gt = load_mask_pgm(gt_path);
    if (!pred.same_shape(gt)) {
        std::cerr << "prediction and ground truth sizes differ\n";
        return 1;
    }
    auto px = pixel_metrics(pred, gt);
    auto relaxed = relaxed_pr(pred, gt, mc.rho);
    auto obj = object_f1(pred, gt, mc);
    nlohmann::json j;
    j["pixel"] = {{"precision", px.precision}, {"recall", px.recall},     {"f1", px.f1},
                  {"iou", px.iou},             {"accuracy", px.accuracy}};
    j["relaxed"] = {{"precision", relaxed.precision},
                    {"recall", relaxed.recall},
                    {"f1", relaxed.f1},
                    {"rho", mc.rho}};
    j["object"] = {{"f1", obj.f1}, {"tp", obj.tp}, {"fp", obj.fp}, {"fn", obj.fn}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_gradcheck() {
    Rng rng(7);
    struct Case {
        std::string name;
        GradCheckReport report;
    };
    std::vector<Case> cases;
    auto run = [&](const std::string& name, const GradFn& f,
                   std::vector<TensorPtr<double>> xs, double tol = 1e-5) {
        cases.push_back({name, grad_check_multi(f, std::move(xs), 1e-3, tol)});
    };

    run("sigmoid-mean",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            return g.mean(g.sigmoid(xs[0]));
        },
        {random_tensor<double>(1, 2, 5, 5, rng)});
    run("conv2d",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            return g.mean(g.conv2d(xs[0], xs[1], xs[2], 2, 1));
        },
        {random_tensor<double>(2, 3, 6, 6, rng), random_tensor<double>(4, 3, 3, 3, rng),
         random_tensor<double>(1, 4, 1, 1, rng)});
    run("conv-transpose",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            return g.mean(g.conv_transpose2d(xs[0], xs[1], xs[2], 2, 1, 1));
        },
        {random_tensor<double>(1, 3, 4, 4, rng), random_tensor<double>(3, 2, 3, 3, rng),
         random_tensor<double>(1, 2, 1, 1, rng)});
    run("batchnorm",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            GraphT<double>::BatchNormStats stats{make_tensor<double>(1, 3, 1, 1),
                                                 make_tensor<double>(1, 3, 1, 1)};
            stats.running_var->fill(1.0);
            return g.mean(g.batchnorm(xs[0], xs[1], xs[2], stats, true, false));
        },
        {random_tensor<double>(2, 3, 4, 4, rng), random_tensor<double>(1, 3, 1, 1, rng),
         random_tensor<double>(1, 3, 1, 1, rng)}, 1e-4);
    run("dice",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            auto p = g.sigmoid(xs[0]);
            auto gt = make_tensor<double>(1, 1, 6, 6);
            for (std::size_t i = 0; i < gt->size(); ++i) gt->data[i] = (i % 3 == 0) ? 1.0 : 0.0;
            LossConfig cfg;
            return dice_loss(g, p, g.constant(*gt), cfg);
        },
        {random_tensor<double>(1, 1, 6, 6, rng)});
    run("bilinear-upsample",
        [](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) {
            return g.mean(g.bilinear_upsample(xs[0], 2));
        },
        {random_tensor<double>(1, 2, 4, 4, rng)});

    bool all = true;
    for (const auto& c : cases) {
        std::printf("%-20s max_rel_err=%.3e tol=%.1e %s\n", c.name.c_str(), c.report.max_rel_err,
                    c.report.tol, c.report.pass ? "PASS" : "FAIL");
        all = all && c.report.pass;
    }
    return all ? 0 : 1;
}

int cmd_synth(int count, int size, long long seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto data = synth_dataset(count, size, static_cast<uint64_t>(seed));
    char name[64];
    for (int i = 0; i < count; ++i) {
        std::snprintf(name, sizeof(name), "/img_%04d.ppm", i);
        save_ppm(out_dir + name, data[static_cast<std::size_t>(i)].image);
        std::snprintf(name, sizeof(name), "/mask_%04d.pgm", i);
        save_pgm(out_dir + name, data[static_cast<std::size_t>(i)].mask);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"building segmentation: training, inference and evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run";
    int steps_override = -1;
    long long seed_override = -1;
    auto* train = app.add_subcommand("train", "train a model on the synthetic dataset");
    train->add_option("--config", config_path, "run configuration file (key = value)");
    train->add_option("--steps", steps_override, "override step count");
    train->add_option("--seed", seed_override, "override RNG seed");
    train->add_option("--out", out_dir, "output directory");

    std::string model_path, input_path, output_path, probs_path;
    std::vector<std::string> ensemble_paths;
    int tile = 0;
    double overlap = 0.3, threshold = 0.5;
    bool tta = false;
    auto* infer = app.add_subcommand("infer", "segment a PPM image");
    infer->add_option("--config", config_path, "run configuration file");
    infer->add_option("--model", model_path, "checkpoint (.uegt)")->required();
    infer->add_option("--ensemble", ensemble_paths, "additional checkpoints to average");
    infer->add_option("--input", input_path, "input PPM (P6)")->required();
    infer->add_option("--output", output_path, "output mask PGM (P5)")->required();
    infer->add_option("--tile", tile, "tile size (0 = whole image)");
    infer->add_option("--overlap", overlap, "tile overlap fraction");
    infer->add_flag("--tta", tta, "average flip/rotation predictions");
    infer->add_option("--threshold", threshold, "decision threshold");
    infer->add_option("--probs", probs_path, "also write the probability map (PGM)");

    std::string pred_path, gt_path;
    MetricConfig metric_cfg;
    auto* eval = app.add_subcommand("eval", "compare a predicted mask against ground truth");
    eval->add_option("--pred", pred_path, "predicted mask PGM")->required();
    eval->add_option("--gt", gt_path, "ground-truth mask PGM")->required();
    eval->add_option("--rho", metric_cfg.rho, "relaxed-match radius in pixels");
    eval->add_option("--iou-threshold", metric_cfg.object_iou_threshold,
                     "object match IoU threshold");
    eval->add_option("--connectivity", metric_cfg.connectivity, "4 or 8");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");

    int synth_count = 16, synth_size = 64;
    long long synth_seed = 42;
    std::string synth_out = "synth";
    auto* synth = app.add_subcommand("synth", "write synthetic image/mask pairs");
    synth->add_option("--count", synth_count, "number of samples");
    synth->add_option("--size", synth_size, "image side length");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed())
            return cmd_train(config_path, steps_override, seed_override, out_dir);
        if (infer->parsed())
            return cmd_infer(config_path, model_path, ensemble_paths, input_path, output_path,
                             tile, overlap, tta, threshold, probs_path);
        if (eval->parsed()) return cmd_eval(pred_path, gt_path, metric_cfg);
        if (gradcheck->parsed()) return cmd_gradcheck();
        if (synth->parsed()) return cmd_synth(synth_count, synth_size, synth_seed, synth_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
