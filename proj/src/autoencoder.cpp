#include "burg/autoencoder.hpp"

#include <string>

#include "burg/errors.hpp"

namespace burg {

ViewAutoencoder::ViewAutoencoder(std::size_t view_dim, std::size_t latent_dim,
                                 const std::vector<std::size_t>& encoder_hidden,
                                 const std::vector<std::size_t>& decoder_hidden,
                                 Activation activation, Rng& rng,
                                 const std::string& name_prefix) {
    MlpSpec enc{view_dim, latent_dim, encoder_hidden, activation};
    MlpSpec dec{latent_dim, view_dim, decoder_hidden, activation};
    encoder_ = Mlp(enc, rng, name_prefix + "/enc");
    decoder_ = Mlp(dec, rng, name_prefix + "/dec");
}

std::vector<Tensor> ViewAutoencoder::parameters() const {
    std::vector<Tensor> params = encoder_.parameters();
    auto dec = decoder_.parameters();
    params.insert(params.end(), dec.begin(), dec.end());
    return params;
}

Tensor mask_column(const Batch& batch, std::size_t view, std::size_t width) {
    std::vector<double> values(batch.size * width);
    for (std::size_t i = 0; i < batch.size; ++i) {
        const double w = batch.mask[i * batch.n_views + view] ? 1.0 : 0.0;
        for (std::size_t j = 0; j < width; ++j) values[i * width + j] = w;
    }
    return Tensor::matrix(batch.size, width, std::move(values));
}

Tensor fully_observed_column(const Batch& batch, std::size_t width) {
    std::vector<double> values(batch.size * width);
    for (std::size_t i = 0; i < batch.size; ++i) {
        bool full = true;
        for (std::size_t v = 0; v < batch.n_views; ++v)
            full = full && batch.mask[i * batch.n_views + v];
        for (std::size_t j = 0; j < width; ++j) values[i * width + j] = full ? 1.0 : 0.0;
    }
    return Tensor::matrix(batch.size, width, std::move(values));
}

Tensor fuse_latents(const std::vector<Tensor>& view_latents, const std::vector<std::uint8_t>& mask,
                    std::size_t batch_size, std::size_t n_views) {
    if (view_latents.size() != n_views) throw ContractError("fuse_latents: latent list length != V");
    if (n_views == 0) throw ContractError("fuse_latents: no views");
    const std::size_t d = view_latents[0].cols();
    std::vector<double> counts(batch_size, 0.0);
    for (std::size_t i = 0; i < batch_size; ++i) {
        for (std::size_t v = 0; v < n_views; ++v) counts[i] += mask[i * n_views + v] ? 1.0 : 0.0;
        if (counts[i] == 0.0)
            throw ContractError("fuse_latents: sample row " + std::to_string(i) +
                                " has no observed view");
    }
    Tensor fused;
    for (std::size_t v = 0; v < n_views; ++v) {
        // fold the 1/count normalization into the mask weights
        std::vector<double> weights(batch_size * d);
        for (std::size_t i = 0; i < batch_size; ++i) {
            const double w = mask[i * n_views + v] ? 1.0 / counts[i] : 0.0;
            for (std::size_t j = 0; j < d; ++j) weights[i * d + j] = w;
        }
        Tensor term = mul(view_latents[v], Tensor::matrix(batch_size, d, std::move(weights)));
        fused = fused.defined() ? add(fused, term) : term;
    }
    return fused;
}

ReconOut reconstruction_forward(const Batch& batch, const std::vector<ViewAutoencoder>& aes) {
    if (aes.size() != batch.n_views)
        throw ContractError("reconstruction: autoencoder count != view count");
    ReconOut out;
    out.z_view.reserve(batch.n_views);
    for (std::size_t v = 0; v < batch.n_views; ++v)
        out.z_view.push_back(aes[v].encode(batch.x[v]));
    out.z_fused = fuse_latents(out.z_view, batch.mask, batch.size, batch.n_views);

    const std::size_t observed = batch.observed_count();
    Tensor total;
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        const Tensor own = sub(batch.x[v], aes[v].decode(out.z_view[v]));
        const Tensor common = sub(batch.x[v], aes[v].decode(out.z_fused));
        Tensor inst = add(row_sum(mul(own, own)), row_sum(mul(common, common)));
        Tensor masked = sum(mul(mask_column(batch, v, 1), inst));
        out.instance_loss.push_back(std::move(inst));
        total = total.defined() ? add(total, masked) : masked;
    }
    out.loss = scale(total, 1.0 / static_cast<double>(observed));
    return out;
}

Tensor reconstruction_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes) {
    return reconstruction_forward(batch, aes).loss;
}

}  // namespace burg
