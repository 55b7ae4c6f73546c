// burg: incomplete multi-view clustering via flow-based distribution
// transfer. Subcommands: synth, mask, train, eval.

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "burg/dataio.hpp"
#include "burg/errors.hpp"
#include "burg/metrics.hpp"
#include "burg/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_manifest(const fs::path& data) {
    if (fs::is_directory(data)) return data / "dataset.json";
    return data;
}

std::vector<int> read_label_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw burg::IoError("cannot open " + file.string());
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        int value = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
        if (ec != std::errc{} || ptr != line.data() + line.size())
            throw burg::ParseError("malformed label '" + line + "' in " + file.string() +
                                   " line " + std::to_string(line_no));
        labels.push_back(value);
    }
    if (labels.empty()) throw burg::ValidationError("no labels in " + file.string());
    return labels;
}

void write_label_file(const fs::path& file, const std::vector<int>& labels) {
    std::ofstream out(file);
    if (!out) throw burg::IoError("cannot write " + file.string());
    for (int label : labels) out << label << '\n';
    if (!out) throw burg::IoError("write failed for " + file.string());
}

std::string shortest(double value) {
    char buffer[32];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

void write_matrix_csv(const fs::path& file, const std::vector<double>& values, std::size_t rows,
                      std::size_t cols) {
    std::ofstream out(file);
    if (!out) throw burg::IoError("cannot write " + file.string());
    std::string line;
    for (std::size_t i = 0; i < rows; ++i) {
        line.clear();
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) line += ',';
            line += shortest(values[i * cols + j]);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw burg::IoError("write failed for " + file.string());
}

struct SynthArgs {
    std::size_t n = 1000, k = 5, views = 3, latent_dim = 8;
    std::vector<std::size_t> dims;
    double separation = 6.0, noise = 0.5;
    std::uint64_t seed = 0;
    std::string out;
};

void run_synth(const SynthArgs& args) {
    if (args.k == 0) throw burg::ConfigError("--k must be positive");
    burg::SyntheticSpec spec;
    spec.n_samples = args.n;
    spec.n_clusters = args.k;
    spec.n_views = args.views;
    spec.latent_dim = args.latent_dim;
    spec.view_dims = args.dims;
    spec.cluster_separation = args.separation;
    spec.noise_std = args.noise;
    spec.seed = args.seed;
    const burg::MultiViewDataset dataset = burg::generate_synthetic(spec);
    burg::write_dataset(dataset, args.out);
    std::cout << "wrote dataset: " << args.out << " (N=" << dataset.n_samples
              << ", V=" << dataset.n_views() << ", K=" << dataset.n_classes() << ")\n";
}

struct MaskArgs {
    std::string data;
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

void run_mask(const MaskArgs& args) {
    burg::MultiViewDataset dataset = burg::load_dataset(resolve_manifest(args.data));
    if (dataset.observed_count() != dataset.n_samples * dataset.n_views())
        throw burg::ValidationError(
            "input dataset is already incomplete; masking expects a complete dataset");
    burg::Rng rng(args.seed);
    dataset.mask =
        burg::generate_mask(dataset.n_samples, dataset.n_views(), args.missing_rate, rng);
    burg::write_dataset(dataset, args.out);
    std::size_t zeros = dataset.n_samples * dataset.n_views() - dataset.observed_count();
    std::cout << "wrote masked dataset: " << args.out << " (" << zeros << " missing slots)\n";
}

struct TrainArgs {
    std::string data;
    std::string config_file;
    std::string out;
    // optional flag overrides; only applied when the user passed them
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha, beta, gamma, tau, lr, scale_clamp;
    std::optional<std::size_t> d, coupling_layers, coupling_hidden, e1, e2, e3, batch12, batch3,
        k;
    std::optional<std::vector<std::size_t>> enc_hidden;
};

void run_train(const TrainArgs& args) {
    const burg::MultiViewDataset dataset = burg::load_dataset(resolve_manifest(args.data));
    burg::TrainConfig config;
    if (!args.config_file.empty()) config = burg::load_train_config(args.config_file);
    if (args.seed) config.seed = *args.seed;
    if (args.alpha) config.alpha = *args.alpha;
    if (args.beta) config.beta = *args.beta;
    if (args.gamma) config.gamma = *args.gamma;
    if (args.tau) config.tau = *args.tau;
    if (args.lr) config.learning_rate = *args.lr;
    if (args.scale_clamp) config.scale_clamp = *args.scale_clamp;
    if (args.d) config.latent_dim = *args.d;
    if (args.coupling_layers) config.coupling_layers = *args.coupling_layers;
    if (args.coupling_hidden) config.coupling_hidden = *args.coupling_hidden;
    if (args.e1) config.epochs_stage1 = *args.e1;
    if (args.e2) config.epochs_stage2 = *args.e2;
    if (args.e3) config.epochs_stage3 = *args.e3;
    if (args.batch12) config.batch_stage12 = *args.batch12;
    if (args.batch3) config.batch_stage3 = *args.batch3;
    if (args.enc_hidden) config.encoder_hidden = *args.enc_hidden;
    if (args.k) config.n_clusters = *args.k;
    if (config.n_clusters == 0) config.n_clusters = dataset.n_classes();
    if (config.n_clusters == 0)
        throw burg::ConfigError("dataset has no labels; pass --k or set n_clusters");

    fs::create_directories(args.out);
    const fs::path out(args.out);

    burg::Trainer trainer(dataset, config);
    trainer.run_stage1();
    trainer.save_checkpoint(out / "checkpoint_stage1.bin");
    trainer.run_stage2();
    trainer.save_checkpoint(out / "checkpoint_stage2.bin");
    trainer.run_stage3();
    trainer.save_checkpoint(out / "checkpoint_stage3.bin");

    trainer.write_curves_csv(out / "curves.csv");
    const std::vector<int> predicted = trainer.final_clustering();
    write_label_file(out / "labels_pred.csv", predicted);
    const std::vector<double> embedding = trainer.final_embedding();
    write_matrix_csv(out / "embedding.csv", embedding, dataset.n_samples,
                     dataset.n_views() * config.latent_dim);

    json report;
    report["config"] = json::parse(burg::train_config_to_json(trainer.config()));
    const auto schedule = trainer.executed_schedule();
    report["schedule"] = {{"learning_rate", schedule.learning_rate},
                          {"epochs", schedule.epochs},
                          {"batch_sizes", schedule.batch_sizes}};
    report["ablation_variant"] = config.ablation_variant();
    report["seed"] = config.seed;
    report["stage_seconds"] = {trainer.stage_seconds(1), trainer.stage_seconds(2),
                               trainer.stage_seconds(3)};
    report["files"] = {{"curves", "curves.csv"},
                       {"labels_pred", "labels_pred.csv"},
                       {"embedding", "embedding.csv"},
                       {"checkpoints",
                        {"checkpoint_stage1.bin", "checkpoint_stage2.bin",
                         "checkpoint_stage3.bin"}}};
    if (dataset.labels) {
        report["metrics"] = {{"acc", burg::accuracy(predicted, *dataset.labels)},
                             {"nmi", burg::nmi(predicted, *dataset.labels)},
                             {"ari", burg::ari(predicted, *dataset.labels)}};
    }
    std::ofstream report_out(out / "report.json");
    if (!report_out) throw burg::IoError("cannot write " + (out / "report.json").string());
    report_out << report.dump(2) << '\n';

    std::cout << "run complete: " << (out / "report.json").string();
    if (report.contains("metrics"))
        std::cout << " acc=" << report["metrics"]["acc"] << " nmi=" << report["metrics"]["nmi"]
                  << " ari=" << report["metrics"]["ari"];
    std::cout << '\n';
}

void run_eval(const std::string& pred_file, const std::string& truth_file) {
    const std::vector<int> pred = read_label_file(pred_file);
    const std::vector<int> truth = read_label_file(truth_file);
    if (pred.size() != truth.size())
        throw burg::ValidationError("label files differ in length: " +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(truth.size()));
    char line[128];
    std::snprintf(line, sizeof(line), "{\"acc\":%.6f,\"nmi\":%.6f,\"ari\":%.6f}",
                  burg::accuracy(pred, truth), burg::nmi(pred, truth), burg::ari(pred, truth));
    std::cout << line << '\n';
}

int categorized_failure(const char* category, const std::string& message) {
    std::cerr << "error:" << category << ": " << message << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BURG: incomplete multi-view clustering with flow-based recovery"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
    synth_cmd->add_option("--n", synth.n, "number of samples")->capture_default_str();
    synth_cmd->add_option("--k", synth.k, "number of clusters")->capture_default_str();
    synth_cmd->add_option("--views", synth.views, "number of views")->capture_default_str();
    synth_cmd->add_option("--latent-dim", synth.latent_dim, "generator latent dimension")
        ->capture_default_str();
    synth_cmd->add_option("--dims", synth.dims,
                          "per-view output dims (defaults to latent-dim each)");
    synth_cmd->add_option("--separation", synth.separation, "minimum center separation")
        ->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "cluster noise std")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "output directory")->required();

    MaskArgs mask;
    auto* mask_cmd = app.add_subcommand("mask", "apply a random missing mask to a dataset");
    mask_cmd->add_option("--data", mask.data, "dataset directory or manifest")->required();
    mask_cmd->add_option("--missing-rate", mask.missing_rate,
                         "fraction of (sample,view) slots to remove")
        ->required();
    mask_cmd->add_option("--seed", mask.seed, "mask seed")->capture_default_str();
    mask_cmd->add_option("--out", mask.out, "output directory")->required();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train and cluster a dataset");
    train_cmd->add_option("--data", train.data, "dataset directory or manifest")->required();
    train_cmd->add_option("--config", train.config_file, "JSON config file");
    train_cmd->add_option("--out", train.out, "output directory")->required();
    train_cmd->add_option("--seed", train.seed, "training seed (default 0)");
    train_cmd->add_option("--alpha", train.alpha, "neighbor-consistency weight (default 1)");
    train_cmd->add_option("--beta", train.beta, "prototype-consistency weight (default 1)");
    train_cmd->add_option("--gamma", train.gamma, "assignment entropy weight (default 0.1)");
    train_cmd->add_option("--tau", train.tau, "softmax temperature (default 1)");
    train_cmd->add_option("--lr", train.lr, "Adam learning rate (default 0.0003)");
    train_cmd->add_option("--scale-clamp", train.scale_clamp,
                          "coupling scale clamp (default 5)");
    train_cmd->add_option("--d", train.d, "shared latent dim, even (default 32)");
    train_cmd->add_option("--coupling-layers", train.coupling_layers,
                          "coupling layers per flow (default 6)");
    train_cmd->add_option("--coupling-hidden", train.coupling_hidden,
                          "coupling net hidden width (default 64)");
    train_cmd->add_option("--enc-hidden", train.enc_hidden,
                          "encoder hidden dims (default 256 128)");
    train_cmd->add_option("--e1", train.e1, "stage-1 epochs (default 200)");
    train_cmd->add_option("--e2", train.e2, "stage-2 epochs (default 30)");
    train_cmd->add_option("--e3", train.e3, "stage-3 epochs (default 20)");
    train_cmd->add_option("--batch12", train.batch12, "stage-1/2 batch size (default 128)");
    train_cmd->add_option("--batch3", train.batch3, "stage-3 batch size (default 512)");
    train_cmd->add_option("--k", train.k, "cluster count (default: from labels)");

    std::string eval_pred, eval_truth;
    auto* eval_cmd = app.add_subcommand("eval", "score predicted labels against ground truth");
    eval_cmd->add_option("--pred", eval_pred, "predicted labels file")->required();
    eval_cmd->add_option("--truth", eval_truth, "ground-truth labels file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) run_synth(synth);
        if (mask_cmd->parsed()) run_mask(mask);
        if (train_cmd->parsed()) run_train(train);
        if (eval_cmd->parsed()) run_eval(eval_pred, eval_truth);
    } catch (const burg::ShapeError& err) {
        return categorized_failure("dimension", err.what());
    } catch (const burg::DomainError& err) {
        return categorized_failure("domain", err.what());
    } catch (const burg::ContractError& err) {
        return categorized_failure("contract", err.what());
    } catch (const burg::NumericError& err) {
        return categorized_failure("numeric", err.what());
    } catch (const burg::ValidationError& err) {
        return categorized_failure("validation", err.what());
    } catch (const burg::ParseError& err) {
        return categorized_failure("parse", err.what());
    } catch (const burg::IoError& err) {
        return categorized_failure("io", err.what());
    } catch (const burg::ConfigError& err) {
        return categorized_failure("config", err.what());
    } catch (const std::exception& err) {
        return categorized_failure("internal", err.what());
    }
    return 0;
}
