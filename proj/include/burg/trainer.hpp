#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "burg/autoencoder.hpp"
#include "burg/consistency.hpp"
#include "burg/dataio.hpp"
#include "burg/flow.hpp"

namespace burg {

struct TrainConfig {
    std::size_t latent_dim = 32;  // shared subspace dim, must be even
    std::size_t coupling_layers = 6;
    std::vector<std::size_t> encoder_hidden = {256, 128};
    std::vector<std::size_t> decoder_hidden = {};  // empty mirrors encoder_hidden
    std::size_t coupling_hidden = 64;
    std::string activation = "relu";
    double learning_rate = 3e-4;
    std::size_t epochs_stage1 = 200;
    std::size_t epochs_stage2 = 30;
    std::size_t epochs_stage3 = 20;
    std::size_t batch_stage12 = 128;
    std::size_t batch_stage3 = 512;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.1;
    double tau = 1.0;
    double scale_clamp = 5.0;
    std::size_t n_clusters = 0;  // required
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::size_t> decoder_hidden_or_mirror() const;
    /// "None", "NAC Only", "PC Only" or "NAC+PC" depending on alpha/beta.
    std::string ablation_variant() const;
};

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& file);
std::string train_config_to_json(const TrainConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

/// Per-view latent snapshot for the whole dataset: observed slots hold
/// encoder outputs, missing slots hold inverse-flow recoveries.
struct LatentState {
    std::size_t n = 0;
    std::size_t n_views = 0;
    std::size_t dim = 0;
    std::size_t epoch_tag = 0;
    std::vector<std::vector<double>> view_latents;  // V x (N x dim)
    std::vector<double> fused;                      // N x dim, Eq-style masked mean
    std::vector<std::uint8_t> recovered;            // N x V, 1 where slot was recovered
};

struct CurveRow {
    int stage = 0;
    std::size_t epoch = 0;  // 1-based within the stage
    std::optional<double> loss_total, loss_rec, loss_flow_nll, loss_dtl, loss_nac, loss_pc;
};

/// Everything the stage-3 objective needs besides the batch.
struct Stage3Guidance {
    const NeighborIndex* index = nullptr;
    const NeighborResolution* resolution = nullptr;
    const PrototypeSet* prototypes = nullptr;
    const std::vector<int>* consensus = nullptr;  // per dataset sample
};

struct Stage3Loss {
    Tensor total, dtl, nac, pc;
};

/// Full stage-3 objective on one batch: dtl + alpha*nac + beta*pc, with
/// recovery recomputed inside the graph so gradients reach the inverse flows.
Stage3Loss stage3_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                       const std::vector<FlowNetwork>& flows, const Stage3Guidance& guidance,
                       double alpha, double beta, double gamma);

/// Runs the three-stage schedule over one dataset. Deterministic: identical
/// (dataset, config, seed) reproduce identical parameters and labels.
class Trainer {
public:
    Trainer(MultiViewDataset dataset, TrainConfig config);

    void run_stage1();
    void run_stage2();
    void run_stage3();
    /// All three stages, recording wall time per stage.
    void run_all();

    LatentState recover_missing() const;
    /// k-means over the concatenated per-view latents (recovered slots
    /// included), same settings as the prototype k-means.
    std::vector<int> final_clustering() const;
    /// N x (V*latent_dim) concatenated latents backing the clustering.
    std::vector<double> final_embedding() const;

    const std::vector<CurveRow>& curves() const { return curves_; }
    void write_curves_csv(const std::filesystem::path& file) const;

    void save_checkpoint(const std::filesystem::path& file) const;
    void load_checkpoint(const std::filesystem::path& file);

    struct Schedule {
        double learning_rate = 0.0;
        std::array<std::size_t, 3> epochs{};      // executed per stage
        std::array<std::size_t, 3> batch_sizes{};  // configured per stage
    };
    Schedule executed_schedule() const;
    double stage_seconds(int stage) const { return stage_seconds_[stage - 1]; }

    const TrainConfig& config() const { return config_; }
    const MultiViewDataset& dataset() const { return dataset_; }
    const std::vector<ViewAutoencoder>& autoencoders() const { return aes_; }
    const std::vector<FlowNetwork>& flows() const { return flows_; }
    std::vector<Tensor> all_parameters() const;

private:
    std::vector<std::vector<std::size_t>> epoch_batches(int stage, std::size_t epoch,
                                                        std::size_t batch_size) const;
    std::vector<Tensor> ae_parameters() const;
    std::vector<Tensor> flow_parameters() const;
    void ensure_finite(double value, int stage, std::size_t epoch, std::size_t batch) const;

    MultiViewDataset dataset_;
    TrainConfig config_;
    std::vector<ViewAutoencoder> aes_;
    std::vector<FlowNetwork> flows_;
    std::vector<CurveRow> curves_;
    std::array<std::size_t, 3> executed_epochs_{0, 0, 0};
    std::array<double, 3> stage_seconds_{0.0, 0.0, 0.0};
};

}  // namespace burg
