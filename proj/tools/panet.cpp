#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "panet/data/synthetic.hpp"
#include "panet/io/archive.hpp"
#include "panet/train/summarize.hpp"
#include "panet/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace panet;

namespace {

struct SplitSources {
    CaseSource train, val, test;
};

// train/val/test resolution: explicit split tags or the seeded random split,
// then holdout or k-fold validation carved out of the training pool.
SplitSources make_sources(const TrainConfig& cfg) {
    if (cfg.data.manifest.empty()) throw ConfigError("config: data.manifest is required for this command");
    const DatasetManifest manifest = load_manifest(cfg.data.manifest);
    if (manifest.task != cfg.task)
        throw ConfigError("manifest task '" + manifest.task + "' does not match config task '" + cfg.task + "'");
    auto [pool, test] = resolve_splits(manifest, cfg.data.test_count, cfg.data.split_seed);
    DatasetManifest train = pool, val = pool;
    train.entries.clear();
    val.entries.clear();
    if (cfg.data.val_mode == "kfold") {
        const auto folds = kfold_assignments(static_cast<int64_t>(pool.entries.size()), cfg.data.folds,
                                             cfg.data.split_seed);
        for (size_t i = 0; i < pool.entries.size(); ++i)
            (folds[i] == cfg.data.fold_index ? val : train).entries.push_back(pool.entries[i]);
    } else {
        const auto n_val = static_cast<size_t>(std::llround(cfg.data.val_fraction * pool.entries.size()));
        auto [tr, va] = split_manifest(pool, static_cast<int64_t>(n_val), mix_seed(cfg.data.split_seed, 0x7a1u));
        train = tr;
        val = va;
    }
    return {manifest_source(train), manifest_source(val), manifest_source(test)};
}

std::string checkpoint_or_default(const TrainConfig& cfg, std::string checkpoint) {
    if (!checkpoint.empty()) return checkpoint;
    return (fs::path(cfg.checkpoint_dir) / (cfg.select + ".ckpt")).string();
}

std::vector<int64_t> parse_size(const std::string& s) {
    std::vector<int64_t> vals;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) vals.push_back(std::stoll(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (vals.size() == 2) return vals;                       // H,W
    if (vals.size() == 3) return {vals[2], vals[0], vals[1]};  // H,W,D -> [D,H,W]
    throw ConfigError("--input-size expects H,W or H,W,D");
}

int run(int argc, char** argv) {
    CLI::App app{"Prior Attention Network: coarse-to-fine multi-lesion segmentation"};
    app.require_subcommand(1);

    std::string config_path, resume, checkpoint, split = "test", input_dir, output_dir = "predictions";
    std::string input_size = "512,512", rows = "no1,no2,no3,no4", model_name = "panet", report_path;
    int64_t seed_override = -1;
    std::string synth_task = "covid-2d", synth_out = "synthetic";
    int synth_count = 8;
    int64_t synth_size = 64;
    uint64_t synth_seed = 7;

    auto* cmd_train = app.add_subcommand("train", "Train a model from a config file");
    cmd_train->add_option("--config", config_path, "JSON config path")->required();
    cmd_train->add_option("--seed", seed_override, "Override the config seed");
    cmd_train->add_option("--resume", resume, "Checkpoint to resume from");

    auto* cmd_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the val or test split");
    cmd_eval->add_option("--config", config_path)->required();
    cmd_eval->add_option("--checkpoint", checkpoint, "Defaults to <checkpoint_dir>/<select>.ckpt");
    cmd_eval->add_option("--split", split)->check(CLI::IsMember({"val", "test"}));
    cmd_eval->add_option("--report", report_path, "Write the per-case JSON report here");

    auto* cmd_pred = app.add_subcommand("predict", "Write masks and overlays for a directory of inputs");
    cmd_pred->add_option("--config", config_path)->required();
    cmd_pred->add_option("--checkpoint", checkpoint);
    cmd_pred->add_option("--input", input_dir, "Input directory (or a manifest.json inside it)")->required();
    cmd_pred->add_option("--output", output_dir)->required();

    auto* cmd_sum = app.add_subcommand("summarize", "Report parameters, MACs/FLOPs and alpha values");
    cmd_sum->add_option("--config", config_path)->required();
    cmd_sum->add_option("--input-size", input_size, "H,W (2D) or H,W,D (3D)");
    cmd_sum->add_option("--model", model_name)
        ->check(CLI::IsMember({"panet", "unet", "attention_unet", "cascaded_unet", "no1", "no2", "no3", "no4"}));
    cmd_sum->add_option("--checkpoint", checkpoint, "Report trained weights (e.g. learned alpha values)");

    auto* cmd_abl = app.add_subcommand("ablate", "Train and evaluate the ablation rows");
    cmd_abl->add_option("--config", config_path)->required();
    cmd_abl->add_option("--rows", rows, "Comma-separated: no1,no2,no3,no4");

    auto* cmd_synth = app.add_subcommand("make-synthetic", "Generate a synthetic phantom dataset");
    cmd_synth->add_option("--task", synth_task)->check(CLI::IsMember({"covid-2d", "brats-3d"}));
    cmd_synth->add_option("--output", synth_out);
    cmd_synth->add_option("--count", synth_count);
    cmd_synth->add_option("--size", synth_size);
    cmd_synth->add_option("--seed", synth_seed);

    CLI11_PARSE(app, argc, argv);

    if (cmd_synth->parsed()) {
        const std::string manifest = write_synthetic_dataset(synth_out, synth_task, synth_count, synth_size, synth_seed);
        std::cout << "wrote " << synth_count << " cases; manifest: " << manifest << "\n";
        return 0;
    }

    TrainConfig cfg = load_train_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

    if (cmd_train->parsed()) {
        const SplitSources src = make_sources(cfg);
        std::cout << "training on " << src.train.size() << " cases, validating on " << src.val.size() << "\n";
        const TrainResult result = run_training(cfg, src.train, src.val, resume);
        std::cout << "steps: " << result.steps << "  best val Dice: " << result.best_metric << "\n";
        std::cout << "checkpoints: " << result.best_path << ", " << result.last_path << "\n";
        return 0;
    }
    if (cmd_eval->parsed()) {
        const SplitSources src = make_sources(cfg);
        const CaseSource& cases = split == "val" ? src.val : src.test;
        if (cases.size() == 0) {
            std::cerr << "warning: the " << split << " split is empty; nothing to evaluate\n";
            return 0;
        }
        auto model = model_from_checkpoint(cfg, checkpoint_or_default(cfg, checkpoint));
        const MetricReport report = evaluate_cases(make_model_predictor(model, cfg), cases, cfg.eval_spec());
        std::cout << report.format_table("PANet (" + cfg.task + ", " + split + ")");
        if (!report_path.empty()) {
            std::ofstream os(report_path);
            os << report.to_json() << "\n";
            std::cout << "per-case report: " << report_path << "\n";
        }
        return 0;
    }
    if (cmd_pred->parsed()) {
        auto model = model_from_checkpoint(cfg, checkpoint_or_default(cfg, checkpoint));
        CaseSource cases;
        const fs::path in(input_dir);
        if (fs::exists(in / "manifest.json")) {
            cases = manifest_source(load_manifest((in / "manifest.json").string()));
        } else if (cfg.task == "covid-2d") {
            std::vector<SegCase> loose;
            for (const auto& entry : fs::directory_iterator(in)) {
                const std::string name = entry.path().filename().string();
                if (entry.path().extension() != ".pgm" || name.find("_mask") != std::string::npos) continue;
                const U8Tensor img = read_pgm(entry.path().string());
                SegCase c;
                c.id = entry.path().stem().string();
                c.image = FTensor({1, img.size(0), img.size(1)});
                for (int64_t i = 0; i < img.numel(); ++i) c.image[i] = static_cast<float>(img[i]) / 255.0f;
                c.labels = U8Tensor({img.size(0), img.size(1)});
                loose.push_back(std::move(c));
            }
            if (loose.empty()) throw DataError("no .pgm inputs found in '" + input_dir + "'");
            cases = memory_source(std::move(loose));
        } else {
            throw DataError("3D prediction requires a manifest.json in the input directory");
        }
        const int written = predict_and_write(make_model_predictor(model, cfg), cases, cfg.task, output_dir);
        std::cout << "wrote " << written << " predictions to " << output_dir << "\n";
        return 0;
    }
    if (cmd_sum->parsed()) {
        std::shared_ptr<SegModel<float>> model;
        if (model_name == "panet")
            model = build_model<float>(cfg.network);
        else if (model_name == "unet" || model_name == "attention_unet" || model_name == "cascaded_unet")
            model = build_baseline<float>(baseline_kind_from_string(model_name), cfg.network);
        else
            model = build_model<float>(apply_ablation(cfg.network, ablation_row(model_name)));
        model->initialize(cfg.seed);
        if (!checkpoint.empty()) model->load_state_dict(load_checkpoint(checkpoint).model_state, true);
        const std::vector<int64_t> sp = parse_size(input_size);
        if (static_cast<int>(sp.size()) != cfg.network.encoder.dimensionality)
            throw ConfigError("--input-size dimensionality does not match the network");
        std::cout << format_summary(summarize_model(*model, sp), model_name);
        return 0;
    }
    if (cmd_abl->parsed()) {
        const SplitSources src = make_sources(cfg);
        const auto row_list = parse_ablation_rows(rows);
        nlohmann::json table = nlohmann::json::array();
        std::cout << "Ablation (" << cfg.task << "), identical data, seed " << cfg.seed << "\n";
        for (const auto& row : row_list) {
            TrainConfig row_cfg = cfg;
            row_cfg.network = apply_ablation(cfg.network, row);
            row_cfg.checkpoint_dir = (fs::path(cfg.checkpoint_dir) / row.name).string();
            row_cfg.log_path = (fs::path(cfg.checkpoint_dir) / (row.name + "_log.jsonl")).string();
            const TrainResult tr = run_training(row_cfg, src.train, src.val, "");
            auto model = model_from_checkpoint(row_cfg, row_cfg.select == "best" ? tr.best_path : tr.last_path);
            const CaseSource& eval_cases = src.test.size() ? src.test : src.val;
            const MetricReport report = evaluate_cases(make_model_predictor(model, row_cfg), eval_cases,
                                                       cfg.eval_spec());
            const std::string title = row.name == "no4_full_panet" ? row.name + " (full PANet)" : row.name;
            std::cout << report.format_table(title);
            nlohmann::json jr{{"row", row.name}};
            for (const auto& [cls, metrics] : report.aggregate())
                for (const auto& [metric, a] : metrics) jr[cls][metric] = a.mean;
            table.push_back(jr);
        }
        std::ofstream os(fs::path(cfg.checkpoint_dir) / "ablation.json");
        os << table.dump(2) << "\n";
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
