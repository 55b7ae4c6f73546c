#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "burg/autoencoder.hpp"
#include "burg/dataio.hpp"
#include "burg/mlp.hpp"
#include "burg/tensor.hpp"

namespace burg {

/// Affine coupling layer. Odd layers (1-based) rescale and shift the first
/// half of the coordinates conditioned on the second half; even layers do the
/// opposite, so two consecutive layers touch every coordinate. The Jacobian
/// is triangular, so its log-determinant is the sum of the (clamped) scale
/// outputs on the transformed half.
class CouplingLayer {
public:
    CouplingLayer() = default;
    CouplingLayer(std::size_t layer_index_1based, std::size_t latent_dim, std::size_t hidden,
                  double scale_clamp, Rng& rng, const std::string& name_prefix);

    struct Result {
        Tensor y;
        Tensor log_det;  // [B, 1]
    };

    Result forward(const Tensor& x) const;
    Tensor inverse(const Tensor& y) const;

    bool transforms_first_half() const { return transform_first_; }
    std::vector<Tensor> parameters() const;

private:
    Tensor clamped_scale(const Tensor& conditioner) const;

    Mlp s_net_;
    Mlp t_net_;
    std::size_t half_ = 0;
    bool transform_first_ = true;
    double scale_clamp_ = 5.0;
};

/// Learnable elementwise exp(s_theta) rescaling; log-det is sum(s_theta).
class ScalingLayer {
public:
    ScalingLayer() = default;
    ScalingLayer(std::size_t latent_dim, const std::string& name);

    Tensor forward(const Tensor& x) const;
    Tensor inverse(const Tensor& y) const;
    Tensor log_det() const;  // scalar
    const Tensor& log_scale() const { return log_scale_; }
    std::vector<Tensor> parameters() const { return {log_scale_}; }

private:
    Tensor log_scale_;
};

struct FlowSpec {
    std::size_t latent_dim = 32;   // must be even
    std::size_t n_coupling = 6;
    std::size_t hidden = 64;
    double scale_clamp = 5.0;

    void validate() const;
};

/// View-specific invertible map F = f_1 ∘ … ∘ f_M ∘ s with exact inverse and
/// exact log-det, Gaussianizing the view's latents.
class FlowNetwork {
public:
    FlowNetwork() = default;
    FlowNetwork(FlowSpec spec, Rng& rng, const std::string& name_prefix);

    struct ForwardResult {
        Tensor h;        // [B, d]
        Tensor log_det;  // [B, 1]
    };

    ForwardResult forward(const Tensor& z) const;
    Tensor inverse(const Tensor& h) const;
    /// Per-row log density under the standard-normal base:
    /// -0.5 (d log 2π + ||h||^2) + log|det J|. Shape [B, 1].
    Tensor log_likelihood(const Tensor& z) const;

    const FlowSpec& spec() const { return spec_; }
    std::vector<Tensor> parameters() const;

private:
    FlowSpec spec_;
    std::vector<CouplingLayer> coupling_;
    ScalingLayer scaling_;
};

/// Gaussian fusion of contributing views: sum / sqrt(count), which keeps the
/// result standard normal when inputs are. Empty input is a contract error.
Tensor fuse_gaussian(const std::vector<Tensor>& contributors);

/// Batched fusion over observed views, optionally excluding one view.
/// Rows with no contributor come out zero; callers must gate them.
Tensor fuse_gaussian_masked(const std::vector<Tensor>& h_views, const Batch& batch,
                            std::optional<std::size_t> exclude_view);

struct DtlOut {
    Tensor loss;            // scalar
    Tensor transfer_term;   // scalar (0 when no fully observed sample)
    Tensor preserve_term;   // scalar
    ReconOut recon;
    std::vector<Tensor> h_view;           // V x [B, d]
    std::vector<Tensor> log_likelihoods;  // V x [B, 1]
};

/// Cross-view distribution-transfer loss: squared transfer error on fully
/// observed samples plus the anti-forgetting term (reconstruction minus
/// flow log-likelihood) on observed instances, each mean-reduced.
DtlOut dtl_forward(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                   const std::vector<FlowNetwork>& flows);

Tensor dtl_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                const std::vector<FlowNetwork>& flows);

}  // namespace burg
