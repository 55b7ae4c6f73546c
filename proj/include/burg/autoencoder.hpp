#pragma once

#include <vector>

#include "burg/dataio.hpp"
#include "burg/mlp.hpp"
#include "burg/tensor.hpp"

namespace burg {

/// Encoder/decoder pair for one view; both ends of the shared d-dimensional
/// subspace. The decoder mirrors the encoder unless configured otherwise.
class ViewAutoencoder {
public:
    ViewAutoencoder() = default;
    ViewAutoencoder(std::size_t view_dim, std::size_t latent_dim,
                    const std::vector<std::size_t>& encoder_hidden,
                    const std::vector<std::size_t>& decoder_hidden, Activation activation,
                    Rng& rng, const std::string& name_prefix);

    Tensor encode(const Tensor& x) const { return encoder_.forward(x); }
    Tensor decode(const Tensor& z) const { return decoder_.forward(z); }

    std::size_t view_dim() const { return encoder_.spec().input_dim; }
    std::size_t latent_dim() const { return encoder_.spec().output_dim; }
    std::vector<Tensor> parameters() const;

private:
    Mlp encoder_;
    Mlp decoder_;
};

/// Constant [B, width] tensor replicating the mask column of one view.
Tensor mask_column(const Batch& batch, std::size_t view, std::size_t width);

/// Constant [B, width] tensor that is 1 on rows where every view is observed.
Tensor fully_observed_column(const Batch& batch, std::size_t width);

/// Masked mean of per-view latents: z_i = sum_v w_i^v z_i^v / sum_v w_i^v.
/// Throws ContractError if any row has no observed view.
Tensor fuse_latents(const std::vector<Tensor>& view_latents,
                    const std::vector<std::uint8_t>& mask, std::size_t batch_size,
                    std::size_t n_views);

/// Everything the dual-reconstruction pass produces that later losses reuse.
struct ReconOut {
    std::vector<Tensor> z_view;          // V x [B, d] encoder latents
    Tensor z_fused;                      // [B, d]
    std::vector<Tensor> instance_loss;   // V x [B, 1], per-instance cost (unmasked)
    Tensor loss;                         // scalar, masked mean over observed instances
};

ReconOut reconstruction_forward(const Batch& batch, const std::vector<ViewAutoencoder>& aes);

/// Masked dual reconstruction loss, mean-reduced over observed (sample, view)
/// instances so its magnitude is missing-rate invariant.
Tensor reconstruction_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes);

}  // namespace burg
