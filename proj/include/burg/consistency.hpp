#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "burg/dataio.hpp"
#include "burg/metrics.hpp"
#include "burg/rng.hpp"
#include "burg/tensor.hpp"

namespace burg {

/// Immutable per-epoch snapshot of observed latents used for neighbor
/// queries. Row (j, v) is valid only when mask says view v of sample j is
/// observed.
struct NeighborIndex {
    std::size_t n = 0;
    std::size_t n_views = 0;
    std::size_t dim = 0;
    std::vector<std::vector<double>> latents;  // V x (N x dim)
    std::vector<std::uint8_t> mask;            // N x V

    static NeighborIndex build(std::vector<std::vector<double>> view_latents,
                               std::vector<std::uint8_t> mask, std::size_t n,
                               std::size_t n_views, std::size_t dim);

    std::span<const double> latent(std::size_t sample, std::size_t view) const {
        return {latents[view].data() + sample * dim, dim};
    }
};

/// Cross-view nearest-neighbor transfer for a missing instance (i, v):
/// in every other observed view v' the nearest observed candidate to the
/// recovered latent is found (restricted to candidates that have view v
/// observed, so the transferred latent exists), then the view whose
/// candidate sits closest to sample i's own latent wins. Returns none when
/// no candidate anywhere has view v observed.
std::optional<std::size_t> find_cross_view_neighbor(std::size_t sample, std::size_t view,
                                                    std::span<const double> z_tilde,
                                                    const NeighborIndex& index);

/// Neighbor ids per (sample, view) slot; -1 where not missing or unresolved.
struct NeighborResolution {
    std::vector<std::int64_t> neighbor;
};

/// Resolves every missing slot against the snapshot recovered latents
/// (V matrices of N x dim).
NeighborResolution resolve_neighbors(const NeighborIndex& index,
                                     const std::vector<std::vector<double>>& recovered);

/// Mean squared pull of each recovered latent toward its resolved neighbor's
/// snapshot latent; averaged over the batch's missing instances, unresolved
/// ones contributing zero.
Tensor nac_loss(const Batch& batch, const std::vector<Tensor>& z_tilde,
                const NeighborIndex& index, const NeighborResolution& resolution);

struct PrototypeSet {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> centroids;  // k x dim
    double tau = 1.0;
    double gamma = 0.1;
};

/// k-means prototypes over fused latents (k-means++ seeding, 20 iterations,
/// 4 restarts, best inertia).
PrototypeSet compute_prototypes(const std::vector<double>& latents, std::size_t n,
                                std::size_t dim, std::size_t k, Rng& rng, double tau = 1.0,
                                double gamma = 0.1);

/// Softmax over cosine similarity to each prototype, temperature tau.
/// Zero-norm rows or centroids are a domain error.
Tensor soft_assign(const Tensor& z, const PrototypeSet& prototypes);

/// Argmax of the masked mean of per-view assignments (observed views only),
/// ties broken toward the lowest cluster index.
int consensus_label(const std::vector<std::vector<double>>& view_assignments,
                    std::span<const std::uint8_t> mask_row);

/// Cross-entropy of every view slot's assignment against the consensus
/// one-hot plus gamma times the per-slot assignment entropy, mean-reduced
/// over (sample, view) slots. Logs are clamped at 1e-12.
Tensor pc_loss(const std::vector<Tensor>& slot_assignments, const std::vector<int>& consensus,
               double gamma);

}  // namespace burg
