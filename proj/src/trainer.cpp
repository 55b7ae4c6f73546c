#include "burg/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "burg/adam.hpp"
#include "burg/errors.hpp"
#include "burg/metrics.hpp"

namespace burg {

namespace {

using nlohmann::json;

// stream tags deriving independent generators from the master seed
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffleBase = 100;  // + stage
constexpr std::uint64_t kTagPrototypes = 200;
constexpr std::uint64_t kTagFinalKmeans = 300;

std::string shortest(double value) {
    char buffer[32];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

KmeansOptions prototype_kmeans_options() {
    KmeansOptions options;
    options.max_iters = 20;
    options.restarts = 4;
    return options;
}

}  // namespace

void TrainConfig::validate() const {
    if (latent_dim == 0 || latent_dim % 2 != 0)
        throw ConfigError("latent_dim must be a positive even number, got " +
                          std::to_string(latent_dim));
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_stage12 == 0 || batch_stage3 == 0) throw ConfigError("batch sizes must be positive");
    if (coupling_hidden == 0) throw ConfigError("coupling_hidden must be positive");
    if (n_clusters < 2) throw ConfigError("n_clusters must be at least 2");
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
        throw ConfigError("alpha, beta and gamma must be non-negative");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(scale_clamp > 0.0)) throw ConfigError("scale_clamp must be positive");
    activation_from_string(activation);
    for (std::size_t h : encoder_hidden)
        if (h == 0) throw ConfigError("encoder_hidden entries must be positive");
    for (std::size_t h : decoder_hidden)
        if (h == 0) throw ConfigError("decoder_hidden entries must be positive");
}

std::vector<std::size_t> TrainConfig::decoder_hidden_or_mirror() const {
    if (!decoder_hidden.empty()) return decoder_hidden;
    return {encoder_hidden.rbegin(), encoder_hidden.rend()};
}

std::string TrainConfig::ablation_variant() const {
    const bool nac = alpha > 0.0, pc = beta > 0.0;
    if (nac && pc) return "NAC+PC";
    if (nac) return "NAC Only";
    if (pc) return "PC Only";
    return "None";
}

TrainConfig parse_train_config(const std::string& json_text) {
    json parsed;
    try {
        parsed = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ParseError(std::string("config: invalid JSON: ") + err.what());
    }
    TrainConfig config;
    try {
        auto get = [&](const char* key, auto& field) {
            if (parsed.contains(key)) field = parsed.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("latent_dim", config.latent_dim);
        get("coupling_layers", config.coupling_layers);
        get("encoder_hidden", config.encoder_hidden);
        get("decoder_hidden", config.decoder_hidden);
        get("coupling_hidden", config.coupling_hidden);
        get("activation", config.activation);
        get("learning_rate", config.learning_rate);
        get("epochs_stage1", config.epochs_stage1);
        get("epochs_stage2", config.epochs_stage2);
        get("epochs_stage3", config.epochs_stage3);
        get("batch_stage12", config.batch_stage12);
        get("batch_stage3", config.batch_stage3);
        get("alpha", config.alpha);
        get("beta", config.beta);
        get("gamma", config.gamma);
        get("tau", config.tau);
        get("scale_clamp", config.scale_clamp);
        get("n_clusters", config.n_clusters);
        get("seed", config.seed);
    } catch (const json::exception& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }
    return config;
}

TrainConfig load_train_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_train_config(text);
}

std::string train_config_to_json(const TrainConfig& config) {
    json out;
    out["latent_dim"] = config.latent_dim;
    out["coupling_layers"] = config.coupling_layers;
    out["encoder_hidden"] = config.encoder_hidden;
    out["decoder_hidden"] = config.decoder_hidden;
    out["coupling_hidden"] = config.coupling_hidden;
    out["activation"] = config.activation;
    out["learning_rate"] = config.learning_rate;
    out["epochs_stage1"] = config.epochs_stage1;
    out["epochs_stage2"] = config.epochs_stage2;
    out["epochs_stage3"] = config.epochs_stage3;
    out["batch_stage12"] = config.batch_stage12;
    out["batch_stage3"] = config.batch_stage3;
    out["alpha"] = config.alpha;
    out["beta"] = config.beta;
    out["gamma"] = config.gamma;
    out["tau"] = config.tau;
    out["scale_clamp"] = config.scale_clamp;
    out["n_clusters"] = config.n_clusters;
    out["seed"] = config.seed;
    return out.dump();
}

std::uint64_t config_hash(const TrainConfig& config) {
    const std::string text = train_config_to_json(config);
    std::uint64_t hash = 0xCBF29CE484222325ULL;  // FNV-1a
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

Stage3Loss stage3_loss(const Batch& batch, const std::vector<ViewAutoencoder>& aes,
                       const std::vector<FlowNetwork>& flows, const Stage3Guidance& guidance,
                       double alpha, double beta, double gamma) {
    Stage3Loss out;
    DtlOut dtl = dtl_forward(batch, aes, flows);
    out.dtl = dtl.loss;

    // recovery inside the graph: fused Gaussian over observed views, then
    // each view's inverse flow
    const Tensor fused_h = fuse_gaussian_masked(dtl.h_view, batch, std::nullopt);
    std::vector<Tensor> z_tilde;
    z_tilde.reserve(batch.n_views);
    for (std::size_t v = 0; v < batch.n_views; ++v)
        z_tilde.push_back(flows[v].inverse(fused_h));

    out.nac = nac_loss(batch, z_tilde, *guidance.index, *guidance.resolution);

    const std::size_t d = flows[0].spec().latent_dim;
    std::vector<Tensor> slot_assignments;
    slot_assignments.reserve(batch.n_views);
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        const Tensor observed_gate = mask_column(batch, v, d);
        const Tensor missing_gate = add_scalar(neg(observed_gate), 1.0);
        const Tensor slot = add(mul(dtl.recon.z_view[v], observed_gate),
                                mul(z_tilde[v], missing_gate));
        slot_assignments.push_back(soft_assign(slot, *guidance.prototypes));
    }
    std::vector<int> consensus(batch.size);
    for (std::size_t r = 0; r < batch.size; ++r)
        consensus[r] = (*guidance.consensus)[batch.indices[r]];
    out.pc = pc_loss(slot_assignments, consensus, gamma);

    out.total = add(out.dtl, add(scale(out.nac, alpha), scale(out.pc, beta)));
    return out;
}

Trainer::Trainer(MultiViewDataset dataset, TrainConfig config)
    : dataset_(std::move(dataset)), config_(std::move(config)) {
    config_.validate();
    dataset_.validate();
    if (config_.n_clusters > dataset_.n_samples)
        throw ContractError("n_clusters exceeds the number of samples");
    Rng init_rng(mix_seed(config_.seed, kTagInit));
    const Activation activation = activation_from_string(config_.activation);
    const auto decoder_hidden = config_.decoder_hidden_or_mirror();
    for (std::size_t v = 0; v < dataset_.n_views(); ++v)
        aes_.emplace_back(dataset_.view_dims[v], config_.latent_dim, config_.encoder_hidden,
                          decoder_hidden, activation, init_rng,
                          "ae" + std::to_string(v));
    FlowSpec flow_spec;
    flow_spec.latent_dim = config_.latent_dim;
    flow_spec.n_coupling = config_.coupling_layers;
    flow_spec.hidden = config_.coupling_hidden;
    flow_spec.scale_clamp = config_.scale_clamp;
    for (std::size_t v = 0; v < dataset_.n_views(); ++v)
        flows_.emplace_back(flow_spec, init_rng, "flow" + std::to_string(v));
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(int stage, std::size_t epoch,
                                                             std::size_t batch_size) const {
    std::vector<std::size_t> order(dataset_.n_samples);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(config_.seed, kTagShuffleBase + static_cast<std::uint64_t>(stage), epoch));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, order.size());
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

std::vector<Tensor> Trainer::ae_parameters() const {
    std::vector<Tensor> params;
    for (const auto& ae : aes_) {
        auto p = ae.parameters();
        params.insert(params.end(), p.begin(), p.end());
    }
    return params;
}

std::vector<Tensor> Trainer::flow_parameters() const {
    std::vector<Tensor> params;
    for (const auto& flow : flows_) {
        auto p = flow.parameters();
        params.insert(params.end(), p.begin(), p.end());
    }
    return params;
}

std::vector<Tensor> Trainer::all_parameters() const {
    std::vector<Tensor> params = ae_parameters();
    auto f = flow_parameters();
    params.insert(params.end(), f.begin(), f.end());
    return params;
}

void Trainer::ensure_finite(double value, int stage, std::size_t epoch, std::size_t batch) const {
    if (!std::isfinite(value))
        throw NumericError("non-finite loss at stage " + std::to_string(stage) + ", epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch));
}

void Trainer::run_stage1() {
    const auto start = std::chrono::steady_clock::now();
    Adam ae_opt(ae_parameters(), {config_.learning_rate});
    Adam flow_opt(flow_parameters(), {config_.learning_rate});
    for (std::size_t epoch = 1; epoch <= config_.epochs_stage1; ++epoch) {
        double rec_sum = 0.0, nll_sum = 0.0;
        std::size_t batch_no = 0;
        const auto batches = epoch_batches(1, epoch, config_.batch_stage12);
        for (const auto& indices : batches) {
            ++batch_no;
            const Batch batch = make_batch(dataset_, indices);
            const Tensor rec = reconstruction_loss(batch, aes_);
            ensure_finite(rec.item(), 1, epoch, batch_no);
            rec.backward();
            ae_opt.step();
            ae_opt.zero_grad();

            // flows train against the updated encoders' outputs, detached
            std::vector<Tensor> latents;
            {
                NoGradGuard guard;
                for (std::size_t v = 0; v < batch.n_views; ++v)
                    latents.push_back(aes_[v].encode(batch.x[v]));
            }
            Tensor nll;
            for (std::size_t v = 0; v < batch.n_views; ++v) {
                const Tensor gated =
                    sum(mul(mask_column(batch, v, 1), neg(flows_[v].log_likelihood(latents[v]))));
                nll = nll.defined() ? add(nll, gated) : gated;
            }
            nll = scale(nll, 1.0 / static_cast<double>(batch.observed_count()));
            ensure_finite(nll.item(), 1, epoch, batch_no);
            nll.backward();
            flow_opt.step();
            flow_opt.zero_grad();

            rec_sum += rec.item();
            nll_sum += nll.item();
        }
        CurveRow row;
        row.stage = 1;
        row.epoch = epoch;
        row.loss_rec = rec_sum / static_cast<double>(batches.size());
        row.loss_flow_nll = nll_sum / static_cast<double>(batches.size());
        row.loss_total = *row.loss_rec + *row.loss_flow_nll;
        curves_.push_back(row);
        ++executed_epochs_[0];
    }
    stage_seconds_[0] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void Trainer::run_stage2() {
    const auto start = std::chrono::steady_clock::now();
    Adam opt(all_parameters(), {config_.learning_rate});
    for (std::size_t epoch = 1; epoch <= config_.epochs_stage2; ++epoch) {
        double dtl_sum = 0.0;
        std::size_t batch_no = 0;
        const auto batches = epoch_batches(2, epoch, config_.batch_stage12);
        for (const auto& indices : batches) {
            ++batch_no;
            const Batch batch = make_batch(dataset_, indices);
            const Tensor loss = dtl_loss(batch, aes_, flows_);
            ensure_finite(loss.item(), 2, epoch, batch_no);
            loss.backward();
            opt.step();
            opt.zero_grad();
            dtl_sum += loss.item();
        }
        CurveRow row;
        row.stage = 2;
        row.epoch = epoch;
        row.loss_dtl = dtl_sum / static_cast<double>(batches.size());
        row.loss_total = row.loss_dtl;
        curves_.push_back(row);
        ++executed_epochs_[1];
    }
    stage_seconds_[1] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void Trainer::run_stage3() {
    const auto start = std::chrono::steady_clock::now();
    Adam opt(all_parameters(), {config_.learning_rate});
    for (std::size_t epoch = 1; epoch <= config_.epochs_stage3; ++epoch) {
        // per-epoch snapshot: recovered latents, neighbors, prototypes,
        // consensus labels
        LatentState state = recover_missing();
        const NeighborIndex index = NeighborIndex::build(
            state.view_latents, dataset_.mask, dataset_.n_samples, dataset_.n_views(),
            config_.latent_dim);
        const NeighborResolution resolution = resolve_neighbors(index, state.view_latents);
        Rng proto_rng(mix_seed(config_.seed, kTagPrototypes, epoch));
        const PrototypeSet prototypes =
            compute_prototypes(state.fused, dataset_.n_samples, config_.latent_dim,
                               config_.n_clusters, proto_rng, config_.tau, config_.gamma);
        std::vector<int> consensus(dataset_.n_samples);
        {
            NoGradGuard guard;
            std::vector<std::vector<double>> assignments(dataset_.n_views());
            for (std::size_t v = 0; v < dataset_.n_views(); ++v) {
                const Tensor p = soft_assign(
                    Tensor::matrix(dataset_.n_samples, config_.latent_dim,
                                   state.view_latents[v]),
                    prototypes);
                assignments[v].assign(p.values().begin(), p.values().end());
            }
            std::vector<std::vector<double>> row_p(dataset_.n_views(),
                                                   std::vector<double>(config_.n_clusters));
            for (std::size_t i = 0; i < dataset_.n_samples; ++i) {
                for (std::size_t v = 0; v < dataset_.n_views(); ++v)
                    std::copy_n(assignments[v].data() + i * config_.n_clusters,
                                config_.n_clusters, row_p[v].data());
                consensus[i] = consensus_label(
                    row_p, {dataset_.mask.data() + i * dataset_.n_views(), dataset_.n_views()});
            }
        }
        Stage3Guidance guidance{&index, &resolution, &prototypes, &consensus};

        double total_sum = 0.0, dtl_sum = 0.0, nac_sum = 0.0, pc_sum = 0.0;
        std::size_t batch_no = 0;
        const auto batches = epoch_batches(3, epoch, config_.batch_stage3);
        for (const auto& indices : batches) {
            ++batch_no;
            const Batch batch = make_batch(dataset_, indices);
            const Stage3Loss loss = stage3_loss(batch, aes_, flows_, guidance, config_.alpha,
                                                config_.beta, config_.gamma);
            ensure_finite(loss.total.item(), 3, epoch, batch_no);
            loss.total.backward();
            opt.step();
            opt.zero_grad();
            total_sum += loss.total.item();
            dtl_sum += loss.dtl.item();
            nac_sum += loss.nac.item();
            pc_sum += loss.pc.item();
        }
        const double inv = 1.0 / static_cast<double>(batches.size());
        CurveRow row;
        row.stage = 3;
        row.epoch = epoch;
        row.loss_total = total_sum * inv;
        row.loss_dtl = dtl_sum * inv;
        row.loss_nac = nac_sum * inv;
        row.loss_pc = pc_sum * inv;
        curves_.push_back(row);
        ++executed_epochs_[2];
    }
    stage_seconds_[2] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void Trainer::run_all() {
    run_stage1();
    run_stage2();
    run_stage3();
}

LatentState Trainer::recover_missing() const {
    NoGradGuard guard;
    LatentState state;
    state.n = dataset_.n_samples;
    state.n_views = dataset_.n_views();
    state.dim = config_.latent_dim;
    state.epoch_tag = executed_epochs_[0] + executed_epochs_[1] + executed_epochs_[2];
    state.recovered.assign(state.n * state.n_views, 0);
    for (std::size_t i = 0; i < state.n * state.n_views; ++i)
        state.recovered[i] = dataset_.mask[i] ? 0 : 1;

    std::vector<std::size_t> all(state.n);
    for (std::size_t i = 0; i < state.n; ++i) all[i] = i;
    const Batch batch = make_batch(dataset_, all);

    std::vector<Tensor> z_view, h_view;
    for (std::size_t v = 0; v < state.n_views; ++v) {
        z_view.push_back(aes_[v].encode(batch.x[v]));
        h_view.push_back(flows_[v].forward(z_view[v]).h);
    }
    const Tensor fused_h = fuse_gaussian_masked(h_view, batch, std::nullopt);
    const Tensor fused_z = fuse_latents(z_view, batch.mask, batch.size, batch.n_views);
    state.fused.assign(fused_z.values().begin(), fused_z.values().end());

    for (std::size_t v = 0; v < state.n_views; ++v) {
        const Tensor z_tilde = flows_[v].inverse(fused_h);
        std::vector<double> slots(state.n * state.dim);
        const auto z = z_view[v].values();
        const auto zt = z_tilde.values();
        for (std::size_t i = 0; i < state.n; ++i) {
            const bool observed = dataset_.mask[i * state.n_views + v] != 0;
            const double* src = (observed ? z.data() : zt.data()) + i * state.dim;
            std::copy_n(src, state.dim, slots.data() + i * state.dim);
        }
        state.view_latents.push_back(std::move(slots));
    }
    return state;
}

std::vector<double> Trainer::final_embedding() const {
    const LatentState state = recover_missing();
    const std::size_t width = state.n_views * state.dim;
    std::vector<double> embedding(state.n * width);
    for (std::size_t i = 0; i < state.n; ++i)
        for (std::size_t v = 0; v < state.n_views; ++v)
            std::copy_n(state.view_latents[v].data() + i * state.dim, state.dim,
                        embedding.data() + i * width + v * state.dim);
    return embedding;
}

std::vector<int> Trainer::final_clustering() const {
    const std::vector<double> embedding = final_embedding();
    const std::size_t width = dataset_.n_views() * config_.latent_dim;
    Rng rng(mix_seed(config_.seed, kTagFinalKmeans));
    return kmeans(embedding, dataset_.n_samples, width, config_.n_clusters, rng,
                  prototype_kmeans_options())
        .labels;
}

Trainer::Schedule Trainer::executed_schedule() const {
    Schedule schedule;
    schedule.learning_rate = config_.learning_rate;
    schedule.epochs = executed_epochs_;
    schedule.batch_sizes = {config_.batch_stage12, config_.batch_stage12, config_.batch_stage3};
    return schedule;
}

void Trainer::write_curves_csv(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << "stage,epoch,loss_total,loss_rec,loss_flow_nll,loss_dtl,loss_nac,loss_pc\n";
    auto cell = [](const std::optional<double>& value) {
        return value ? shortest(*value) : std::string();
    };
    for (const CurveRow& row : curves_) {
        out << row.stage << ',' << row.epoch << ',' << cell(row.loss_total) << ','
            << cell(row.loss_rec) << ',' << cell(row.loss_flow_nll) << ',' << cell(row.loss_dtl)
            << ',' << cell(row.loss_nac) << ',' << cell(row.loss_pc) << '\n';
    }
    if (!out) throw IoError("write failed for " + file.string());
}

void Trainer::save_checkpoint(const std::filesystem::path& file) const {
    const auto params = all_parameters();
    json header;
    header["version"] = 1;
    header["config_hash"] = config_hash(config_);
    header["tensors"] = json::array();
    for (const Tensor& p : params)
        header["tensors"].push_back({{"name", p.name()}, {"shape", p.shape()}});
    const std::string header_text = header.dump();

    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out.write("BURGCKP1", 8);
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const Tensor& p : params) {
        const auto values = p.values();
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + file.string());
}

void Trainer::load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "BURGCKP1", 8) != 0)
        throw ValidationError("not a checkpoint file: " + file.string());
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ValidationError("truncated checkpoint header: " + file.string());
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::parse_error& err) {
        throw ValidationError("corrupt checkpoint header: " + std::string(err.what()));
    }
    auto params = all_parameters();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size())
        throw ValidationError("checkpoint has " + std::to_string(tensors.size()) +
                              " tensors, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string name = tensors[i].at("name").get<std::string>();
        const auto shape = tensors[i].at("shape").get<Shape>();
        if (name != params[i].name() || shape != params[i].shape())
            throw ValidationError("checkpoint tensor '" + name + "' does not match model tensor '" +
                                  params[i].name() + "'");
        auto values = params[i].mutable_values();
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!in) throw ValidationError("truncated checkpoint data: " + file.string());
    }
}

}  // namespace burg
