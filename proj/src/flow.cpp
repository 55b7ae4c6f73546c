#include "burg/flow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "burg/errors.hpp"

namespace burg {

CouplingLayer::CouplingLayer(std::size_t layer_index_1based, std::size_t latent_dim,
                             std::size_t hidden, double scale_clamp, Rng& rng,
                             const std::string& name_prefix)
    : half_(latent_dim / 2),
      transform_first_(layer_index_1based % 2 == 1),
      scale_clamp_(scale_clamp) {
    if (latent_dim % 2 != 0)
        throw ConfigError("coupling layer needs an even latent dim, got " +
                          std::to_string(latent_dim));
    if (!(scale_clamp > 0.0)) throw ConfigError("scale_clamp must be positive");
    MlpSpec net{half_, half_, {hidden}, Activation::tanh};
    const std::string base = name_prefix + "/c" + std::to_string(layer_index_1based);
    s_net_ = Mlp(net, rng, base + "/s");
    t_net_ = Mlp(net, rng, base + "/t");
}

Tensor CouplingLayer::clamped_scale(const Tensor& conditioner) const {
    // soft clamp keeps exp(s) bounded while the log-det stays exact
    return scale(burg::tanh(scale(s_net_.forward(conditioner), 1.0 / scale_clamp_)),
                 scale_clamp_);
}

CouplingLayer::Result CouplingLayer::forward(const Tensor& x) const {
    auto [first, second] = split_cols(x, half_);
    const Tensor& moved = transform_first_ ? first : second;
    const Tensor& kept = transform_first_ ? second : first;
    const Tensor s = clamped_scale(kept);
    const Tensor t = t_net_.forward(kept);
    const Tensor transformed = add(mul(moved, exp(s)), t);
    Tensor y = transform_first_ ? concat_cols(transformed, kept)
                                : concat_cols(kept, transformed);
    return {std::move(y), row_sum(s)};
}

Tensor CouplingLayer::inverse(const Tensor& y) const {
    auto [first, second] = split_cols(y, half_);
    const Tensor& moved = transform_first_ ? first : second;
    const Tensor& kept = transform_first_ ? second : first;
    const Tensor s = clamped_scale(kept);
    const Tensor t = t_net_.forward(kept);
    const Tensor restored = mul(sub(moved, t), exp(neg(s)));
    return transform_first_ ? concat_cols(restored, kept) : concat_cols(kept, restored);
}

std::vector<Tensor> CouplingLayer::parameters() const {
    std::vector<Tensor> params = s_net_.parameters();
    auto t = t_net_.parameters();
    params.insert(params.end(), t.begin(), t.end());
    return params;
}

ScalingLayer::ScalingLayer(std::size_t latent_dim, const std::string& name) {
    log_scale_ = Tensor::zeros({latent_dim}, true);
    log_scale_.set_name(name);
}

Tensor ScalingLayer::forward(const Tensor& x) const { return mul(x, exp(log_scale_)); }

Tensor ScalingLayer::inverse(const Tensor& y) const { return mul(y, exp(neg(log_scale_))); }

Tensor ScalingLayer::log_det() const { return sum(log_scale_); }

void FlowSpec::validate() const {
    if (latent_dim == 0 || latent_dim % 2 != 0)
        throw ConfigError("flow latent dim must be even and positive, got " +
                          std::to_string(latent_dim));
    if (hidden == 0) throw ConfigError("flow hidden width must be positive");
    if (!(scale_clamp > 0.0)) throw ConfigError("scale_clamp must be positive");
}

FlowNetwork::FlowNetwork(FlowSpec spec, Rng& rng, const std::string& name_prefix) : spec_(spec) {
    spec_.validate();
    coupling_.reserve(spec_.n_coupling);
    for (std::size_t m = 1; m <= spec_.n_coupling; ++m)
        coupling_.emplace_back(m, spec_.latent_dim, spec_.hidden, spec_.scale_clamp, rng,
                               name_prefix);
    scaling_ = ScalingLayer(spec_.latent_dim, name_prefix + "/s_theta");
}

FlowNetwork::ForwardResult FlowNetwork::forward(const Tensor& z) const {
    if (z.ndim() != 2 || z.cols() != spec_.latent_dim)
        throw ShapeError("flow forward: input has " + std::to_string(z.cols()) +
                         " columns, expected " + std::to_string(spec_.latent_dim));
    Tensor h = z;
    Tensor log_det;
    for (const CouplingLayer& layer : coupling_) {
        auto result = layer.forward(h);
        h = std::move(result.y);
        log_det = log_det.defined() ? add(log_det, result.log_det) : std::move(result.log_det);
    }
    h = scaling_.forward(h);
    const Tensor scaling_ld = scaling_.log_det();
    if (log_det.defined()) {
        log_det = add(log_det, scaling_ld);
    } else {
        // M = 0: replicate the scalar scaling log-det per row
        log_det = add(Tensor::zeros({z.rows(), 1}), scaling_ld);
    }
    return {std::move(h), std::move(log_det)};
}

Tensor FlowNetwork::inverse(const Tensor& h) const {
    if (h.ndim() != 2 || h.cols() != spec_.latent_dim)
        throw ShapeError("flow inverse: input has " + std::to_string(h.cols()) +
                         " columns, expected " + std::to_string(spec_.latent_dim));
    auto check_finite = [](const Tensor& t, const std::string& where) {
        for (double v : t.values())
            if (!std::isfinite(v))
                throw NumericError("flow inverse: non-finite value after " + where);
    };
    Tensor z = scaling_.inverse(h);
    check_finite(z, "scaling layer");
    std::size_t m = coupling_.size();
    for (auto it = coupling_.rbegin(); it != coupling_.rend(); ++it, --m) {
        z = it->inverse(z);
        check_finite(z, "coupling layer " + std::to_string(m));
    }
    return z;
}

Tensor FlowNetwork::log_likelihood(const Tensor& z) const {
    auto [h, log_det] = forward(z);
    const double d = static_cast<double>(spec_.latent_dim);
    const Tensor energy =
        scale(add_scalar(row_sum(mul(h, h)), d * std::log(2.0 * std::numbers::pi)), -0.5);
    return add(energy, log_det);
}

std::vector<Tensor> FlowNetwork::parameters() const {
    std::vector<Tensor> params;
    for (const CouplingLayer& layer : coupling_) {
        auto p = layer.parameters();
        params.insert(params.end(), p.begin(), p.end());
    }
    auto s = scaling_.parameters();
    params.insert(params.end(), s.begin(), s.end());
    return params;
}

Tensor fuse_gaussian(const std::vector<Tensor>& contributors) {
    if (contributors.empty())
        throw ContractError("fuse_gaussian: no contributing views");
    Tensor total;
    for (const Tensor& h : contributors) total = total.defined() ? add(total, h) : h;
    return scale(total, 1.0 / std::sqrt(static_cast<double>(contributors.size())));
}

Tensor fuse_gaussian_masked(const std::vector<Tensor>& h_views, const Batch& batch,
                            std::optional<std::size_t> exclude_view) {
    if (h_views.size() != batch.n_views)
        throw ContractError("fuse_gaussian_masked: view count mismatch");
    const std::size_t d = h_views[0].cols();
    std::vector<double> counts(batch.size, 0.0);
    for (std::size_t i = 0; i < batch.size; ++i)
        for (std::size_t v = 0; v < batch.n_views; ++v) {
            if (exclude_view && *exclude_view == v) continue;
            counts[i] += batch.mask[i * batch.n_views + v] ? 1.0 : 0.0;
        }
    Tensor total;
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        if (exclude_view && *exclude_view == v) continue;
        Tensor term = mul(h_views[v], mask_column(batch, v, d));
        total = total.defined() ? add(total, term) : term;
    }
    std::vector<double> inv_sqrt(batch.size * d, 0.0);
    for (std::size_t i = 0; i < batch.size; ++i) {
        const double w = counts[i] > 0.0 ? 1.0 / std::sqrt(counts[i]) : 0.0;
        for (std::size_t j = 0; j < d; ++j) inv_sqrt[i * d + j] = w;
    }
    return mul(total, Tensor::matrix(batch.size, d, std::move(inv_sqrt)));
}

DtlOut dtl_forward(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                   const std::vector<FlowNetwork>& flows) {
    if (flows.size() != batch.n_views) throw ContractError("dtl: flow count != view count");
    DtlOut out;
    out.recon = reconstruction_forward(batch, aes);
    out.h_view.reserve(batch.n_views);
    out.log_likelihoods.reserve(batch.n_views);
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        auto fwd = flows[v].forward(out.recon.z_view[v]);
        const double d = static_cast<double>(flows[v].spec().latent_dim);
        const Tensor energy = scale(
            add_scalar(row_sum(mul(fwd.h, fwd.h)), d * std::log(2.0 * std::numbers::pi)), -0.5);
        out.log_likelihoods.push_back(add(energy, fwd.log_det));
        out.h_view.push_back(std::move(fwd.h));
    }

    // transfer error over fully observed samples, every view once
    const std::size_t n_full = batch.fully_observed_count();
    if (n_full > 0) {
        const Tensor full_rows = fully_observed_column(batch, 1);
        Tensor transfer;
        for (std::size_t v = 0; v < batch.n_views; ++v) {
            const Tensor fused = fuse_gaussian_masked(out.h_view, batch, v);
            const Tensor recovered = flows[v].inverse(fused);
            const Tensor diff = sub(recovered, out.recon.z_view[v]);
            const Tensor gated = sum(mul(full_rows, row_sum(mul(diff, diff))));
            transfer = transfer.defined() ? add(transfer, gated) : gated;
        }
        out.transfer_term =
            scale(transfer, 1.0 / static_cast<double>(n_full * batch.n_views));
    } else {
        out.transfer_term = Tensor::scalar(0.0);
    }

    // anti-forgetting: reconstruction minus log-likelihood on observed instances
    const std::size_t observed = batch.observed_count();
    Tensor preserve;
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        const Tensor inst = sub(out.recon.instance_loss[v], out.log_likelihoods[v]);
        const Tensor gated = sum(mul(mask_column(batch, v, 1), inst));
        preserve = preserve.defined() ? add(preserve, gated) : gated;
    }
    out.preserve_term = scale(preserve, 1.0 / static_cast<double>(observed));

    out.loss = add(out.transfer_term, out.preserve_term);
    return out;
}

Tensor dtl_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                const std::vector<FlowNetwork>& flows) {
    return dtl_forward(batch, aes, flows).loss;
}

}  // namespace burg
