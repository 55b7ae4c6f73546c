#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "burg/rng.hpp"
#include "burg/tensor.hpp"

namespace burg {

/// Multi-view data: V feature matrices over the same N samples plus the
/// availability mask W. mask[i*V + v] == 1 means sample i is observed in
/// view v. Values at masked-out slots must parse as finite numbers but are
/// never read by the pipeline.
struct MultiViewDataset {
    std::size_t n_samples = 0;
    std::vector<std::string> view_names;
    std::vector<std::size_t> view_dims;
    std::vector<std::vector<double>> views;  // V matrices, row-major N x d_v
    std::vector<std::uint8_t> mask;          // N x V
    std::optional<std::vector<int>> labels;  // values in [0, K)

    std::size_t n_views() const { return views.size(); }
    /// K inferred from labels (0 when unlabeled).
    std::size_t n_classes() const;
    bool observed(std::size_t sample, std::size_t view) const {
        return mask[sample * n_views() + view] != 0;
    }
    std::size_t observed_count() const;

    /// Checks every structural invariant; throws ValidationError.
    void validate() const;
};

/// Reads a dataset.json manifest and the CSV files it references.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest plus CSVs into `dir`; round-trips bit-exactly through
/// load_dataset for finite values.
void write_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir);

/// Mask with exactly round(missing_rate * n * v) zeros, at least one
/// observed view per row. missing_rate must stay below (v-1)/v.
std::vector<std::uint8_t> generate_mask(std::size_t n, std::size_t v, double missing_rate,
                                        Rng& rng);

struct SyntheticSpec {
    std::size_t n_samples = 1000;
    std::size_t n_clusters = 5;
    std::size_t n_views = 3;
    std::size_t latent_dim = 8;
    std::vector<std::size_t> view_dims;  // defaults to latent-sized views when empty
    double cluster_separation = 6.0;
    double noise_std = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Gaussian clusters in a latent space pushed through per-view random linear
/// maps and tanh, with per-view noise. Labels are the generating clusters.
MultiViewDataset generate_synthetic(const SyntheticSpec& spec);

/// A slice of the dataset as constant tensors, one [B, d_v] matrix per view.
struct Batch {
    std::size_t size = 0;
    std::size_t n_views = 0;
    std::vector<std::size_t> indices;  // original sample ids
    std::vector<Tensor> x;             // V x [B, d_v]
    std::vector<std::uint8_t> mask;    // B x V

    bool observed(std::size_t row, std::size_t view) const {
        return mask[row * n_views + view] != 0;
    }
    std::size_t observed_count() const;
    /// Rows with every view observed.
    std::size_t fully_observed_count() const;
};

Batch make_batch(const MultiViewDataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace burg
