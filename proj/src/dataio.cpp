#include "burg/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "burg/errors.hpp"

namespace burg {

namespace {

using nlohmann::json;

std::string csv_double(double value) {
    char buffer[32];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

double parse_cell(std::string_view cell, const std::filesystem::path& file, std::size_t line) {
    // trim spaces and a trailing CR from Windows line endings
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() &&
           (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
        cell.remove_suffix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value))
        throw ParseError("malformed numeric cell '" + std::string(cell) + "' in " +
                         file.string() + " line " + std::to_string(line));
    return value;
}

struct CsvMatrix {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

CsvMatrix read_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    CsvMatrix matrix;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::size_t start = 0, cols = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            const std::string_view cell(line.data() + start,
                                        (comma == std::string::npos ? line.size() : comma) - start);
            matrix.values.push_back(parse_cell(cell, file, line_no));
            ++cols;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (matrix.rows == 0) {
            matrix.cols = cols;
        } else if (cols != matrix.cols) {
            throw ParseError("ragged row in " + file.string() + " line " +
                             std::to_string(line_no) + ": expected " +
                             std::to_string(matrix.cols) + " cells, got " + std::to_string(cols));
        }
        ++matrix.rows;
    }
    return matrix;
}

void write_csv(const std::filesystem::path& file, const std::vector<double>& values,
               std::size_t rows, std::size_t cols) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    std::string line;
    for (std::size_t i = 0; i < rows; ++i) {
        line.clear();
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) line += ',';
            line += csv_double(values[i * cols + j]);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw IoError("write failed for " + file.string());
}

json read_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    json parsed;
    try {
        parsed = json::parse(in);
    } catch (const json::parse_error& err) {
        throw ParseError("invalid JSON in " + file.string() + ": " + err.what());
    }
    return parsed;
}

}  // namespace

std::size_t MultiViewDataset::n_classes() const {
    if (!labels) return 0;
    int max_label = -1;
    for (int y : *labels) max_label = std::max(max_label, y);
    return static_cast<std::size_t>(max_label + 1);
}

std::size_t MultiViewDataset::observed_count() const {
    std::size_t count = 0;
    for (std::uint8_t w : mask) count += w;
    return count;
}

void MultiViewDataset::validate() const {
    const std::size_t v_count = views.size();
    if (v_count == 0) throw ValidationError("dataset has no views");
    if (view_names.size() != v_count || view_dims.size() != v_count)
        throw ValidationError("view metadata does not match view count");
    for (std::size_t v = 0; v < v_count; ++v) {
        if (view_dims[v] == 0) throw ValidationError("view '" + view_names[v] + "' has dim 0");
        const std::size_t rows =
            view_dims[v] == 0 ? 0 : views[v].size() / view_dims[v];
        if (views[v].size() != n_samples * view_dims[v])
            throw ValidationError("view '" + view_names[v] + "' has " + std::to_string(rows) +
                                  " rows, expected " + std::to_string(n_samples));
    }
    if (mask.size() != n_samples * v_count)
        throw ValidationError("mask is not N x V (" + std::to_string(mask.size()) + " entries)");
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::size_t row_sum = 0;
        for (std::size_t v = 0; v < v_count; ++v) {
            const std::uint8_t w = mask[i * v_count + v];
            if (w > 1)
                throw ValidationError("mask entry at sample " + std::to_string(i) +
                                      " is not 0/1");
            row_sum += w;
        }
        if (row_sum == 0)
            throw ValidationError("sample " + std::to_string(i) + " has no observed view");
    }
    if (labels) {
        if (labels->size() != n_samples)
            throw ValidationError("labels length " + std::to_string(labels->size()) +
                                  " does not match N=" + std::to_string(n_samples));
        const std::size_t k = n_classes();
        if (k == 0) throw ValidationError("labels present but empty");
        std::vector<std::size_t> seen(k, 0);
        for (int y : *labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= k)
                throw ValidationError("label " + std::to_string(y) + " outside [0," +
                                      std::to_string(k) + ")");
            ++seen[static_cast<std::size_t>(y)];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (seen[c] == 0)
                throw ValidationError("class " + std::to_string(c) + " has no samples");
    }
}

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
    const json manifest = read_json_file(manifest_path);
    const auto base = manifest_path.parent_path();
    MultiViewDataset dataset;
    try {
        dataset.n_samples = manifest.at("n_samples").get<std::size_t>();
        for (const auto& view : manifest.at("views")) {
            dataset.view_names.push_back(view.at("name").get<std::string>());
            dataset.view_dims.push_back(view.at("dim").get<std::size_t>());
            const auto file = base / view.at("file").get<std::string>();
            CsvMatrix matrix = read_csv(file);
            if (matrix.rows != dataset.n_samples)
                throw ValidationError("view '" + dataset.view_names.back() + "' (" +
                                      file.string() + ") has " + std::to_string(matrix.rows) +
                                      " rows, manifest says " +
                                      std::to_string(dataset.n_samples));
            if (matrix.cols != dataset.view_dims.back())
                throw ValidationError("view '" + dataset.view_names.back() + "' has " +
                                      std::to_string(matrix.cols) + " columns, manifest says " +
                                      std::to_string(dataset.view_dims.back()));
            dataset.views.push_back(std::move(matrix.values));
        }
    } catch (const json::exception& err) {
        throw ParseError("manifest " + manifest_path.string() + ": " + err.what());
    }
    const std::size_t v_count = dataset.views.size();
    if (manifest.contains("mask_file")) {
        const auto file = base / manifest.at("mask_file").get<std::string>();
        CsvMatrix matrix = read_csv(file);
        if (matrix.rows != dataset.n_samples || matrix.cols != v_count)
            throw ValidationError("mask " + file.string() + " is " + std::to_string(matrix.rows) +
                                  "x" + std::to_string(matrix.cols) + ", expected " +
                                  std::to_string(dataset.n_samples) + "x" +
                                  std::to_string(v_count));
        dataset.mask.reserve(matrix.values.size());
        for (std::size_t i = 0; i < matrix.values.size(); ++i) {
            const double w = matrix.values[i];
            if (w != 0.0 && w != 1.0)
                throw ValidationError("mask entry " + csv_double(w) + " in " + file.string() +
                                      " is not 0/1");
            dataset.mask.push_back(static_cast<std::uint8_t>(w));
        }
    } else {
        dataset.mask.assign(dataset.n_samples * v_count, 1);
    }
    if (manifest.contains("labels_file")) {
        const auto file = base / manifest.at("labels_file").get<std::string>();
        CsvMatrix matrix = read_csv(file);
        if (matrix.cols != 1 || matrix.rows != dataset.n_samples)
            throw ValidationError("labels " + file.string() + " must be one integer per line, N=" +
                                  std::to_string(dataset.n_samples));
        std::vector<int> labels;
        labels.reserve(matrix.rows);
        for (double y : matrix.values) {
            if (y != std::floor(y))
                throw ValidationError("non-integer label " + csv_double(y) + " in " +
                                      file.string());
            labels.push_back(static_cast<int>(y));
        }
        dataset.labels = std::move(labels);
    }
    dataset.validate();
    return dataset;
}

void write_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir) {
    dataset.validate();
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["n_samples"] = dataset.n_samples;
    manifest["views"] = json::array();
    for (std::size_t v = 0; v < dataset.n_views(); ++v) {
        const std::string file = dataset.view_names[v] + ".csv";
        write_csv(dir / file, dataset.views[v], dataset.n_samples, dataset.view_dims[v]);
        manifest["views"].push_back(
            {{"name", dataset.view_names[v]}, {"file", file}, {"dim", dataset.view_dims[v]}});
    }
    const bool complete =
        dataset.observed_count() == dataset.n_samples * dataset.n_views();
    if (!complete) {
        std::vector<double> mask_values(dataset.mask.begin(), dataset.mask.end());
        write_csv(dir / "mask.csv", mask_values, dataset.n_samples, dataset.n_views());
        manifest["mask_file"] = "mask.csv";
    }
    if (dataset.labels) {
        std::vector<double> label_values(dataset.labels->begin(), dataset.labels->end());
        write_csv(dir / "labels.csv", label_values, dataset.n_samples, 1);
        manifest["labels_file"] = "labels.csv";
    }
    std::ofstream out(dir / "dataset.json");
    if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
    out << manifest.dump(2) << '\n';
}

std::vector<std::uint8_t> generate_mask(std::size_t n, std::size_t v, double missing_rate,
                                        Rng& rng) {
    if (n == 0 || v == 0) throw ContractError("generate_mask: n and v must be positive");
    if (missing_rate < 0.0 || missing_rate >= 1.0)
        throw ContractError("generate_mask: missing_rate must lie in [0, 1)");
    const auto target =
        static_cast<std::size_t>(std::llround(missing_rate * static_cast<double>(n * v)));
    // every row keeps one observed slot, so at most n*(v-1) removals exist
    if (target > n * (v - 1))
        throw ContractError("generate_mask: missing_rate " + csv_double(missing_rate) +
                            " infeasible for v=" + std::to_string(v) +
                            " (would need " + std::to_string(target) + " removals, only " +
                            std::to_string(n * (v - 1)) + " slots are removable)");
    std::vector<std::uint8_t> mask(n * v, 1);
    if (target == 0) return mask;
    std::vector<std::size_t> slots(n * v);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    rng.shuffle(slots);
    std::vector<std::size_t> row_ones(n, v);
    std::size_t removed = 0;
    // one pass suffices: each row offers v-1 removable slots and
    // target <= n*(v-1) by the rate bound
    for (std::size_t slot : slots) {
        if (removed == target) break;
        const std::size_t row = slot / v;
        if (row_ones[row] <= 1) continue;
        mask[slot] = 0;
        --row_ones[row];
        ++removed;
    }
    return mask;
}

void SyntheticSpec::validate() const {
    if (n_samples == 0 || n_clusters == 0 || n_views == 0 || latent_dim == 0)
        throw ContractError("synthetic spec: all counts must be positive");
    if (n_clusters > n_samples)
        throw ContractError("synthetic spec: more clusters than samples");
    if (!(cluster_separation > 0.0)) throw ContractError("synthetic spec: separation must be positive");
    if (noise_std < 0.0) throw ContractError("synthetic spec: noise_std must be non-negative");
    for (std::size_t d : view_dims)
        if (d == 0) throw ContractError("synthetic spec: view dim 0");
    if (!view_dims.empty() && view_dims.size() != n_views)
        throw ContractError("synthetic spec: view_dims length does not match n_views");
}

MultiViewDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<std::size_t> dims = spec.view_dims;
    if (dims.empty()) dims.assign(spec.n_views, spec.latent_dim);
    Rng rng(spec.seed);

    // cluster centers at pairwise distance >= separation, rejection-sampled
    std::vector<double> centers(spec.n_clusters * spec.latent_dim);
    for (std::size_t k = 0; k < spec.n_clusters; ++k) {
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw NumericError("generate_synthetic: could not place separated centers");
            const double scale = spec.cluster_separation * (1.0 + attempt / 50.0);
            double* c = centers.data() + k * spec.latent_dim;
            for (std::size_t j = 0; j < spec.latent_dim; ++j) c[j] = scale * rng.gaussian();
            bool ok = true;
            for (std::size_t other = 0; other < k && ok; ++other) {
                double dist2 = 0.0;
                const double* o = centers.data() + other * spec.latent_dim;
                for (std::size_t j = 0; j < spec.latent_dim; ++j)
                    dist2 += (c[j] - o[j]) * (c[j] - o[j]);
                ok = dist2 >= spec.cluster_separation * spec.cluster_separation;
            }
            if (ok) break;
        }
    }

    // balanced labels, shuffled
    std::vector<int> labels(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i)
        labels[i] = static_cast<int>(i % spec.n_clusters);
    rng.shuffle(labels);

    std::vector<double> latent(spec.n_samples * spec.latent_dim);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const double* c = centers.data() + static_cast<std::size_t>(labels[i]) * spec.latent_dim;
        for (std::size_t j = 0; j < spec.latent_dim; ++j)
            latent[i * spec.latent_dim + j] = c[j] + spec.noise_std * rng.gaussian();
    }

    MultiViewDataset dataset;
    dataset.n_samples = spec.n_samples;
    dataset.view_dims = dims;
    dataset.labels = std::move(labels);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    const double view_noise = 0.1 * spec.noise_std;
    for (std::size_t v = 0; v < spec.n_views; ++v) {
        dataset.view_names.push_back("view" + std::to_string(v));
        std::vector<double> map(spec.latent_dim * dims[v]);
        for (double& m : map) m = map_scale * rng.gaussian();
        std::vector<double> data(spec.n_samples * dims[v]);
        for (std::size_t i = 0; i < spec.n_samples; ++i) {
            const double* z = latent.data() + i * spec.latent_dim;
            double* x = data.data() + i * dims[v];
            for (std::size_t j = 0; j < dims[v]; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < spec.latent_dim; ++l)
                    acc += z[l] * map[l * dims[v] + j];
                x[j] = std::tanh(acc) + view_noise * rng.gaussian();
            }
        }
        dataset.views.push_back(std::move(data));
    }
    dataset.mask.assign(spec.n_samples * spec.n_views, 1);
    dataset.validate();
    return dataset;
}

std::size_t Batch::observed_count() const {
    std::size_t count = 0;
    for (std::uint8_t w : mask) count += w;
    return count;
}

std::size_t Batch::fully_observed_count() const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < size; ++i) {
        bool full = true;
        for (std::size_t v = 0; v < n_views; ++v) full = full && mask[i * n_views + v];
        count += full ? 1 : 0;
    }
    return count;
}

Batch make_batch(const MultiViewDataset& dataset, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("make_batch: empty index list");
    Batch batch;
    batch.size = indices.size();
    batch.n_views = dataset.n_views();
    batch.indices = indices;
    batch.mask.resize(batch.size * batch.n_views);
    for (std::size_t r = 0; r < batch.size; ++r) {
        if (indices[r] >= dataset.n_samples) throw ContractError("make_batch: index out of range");
        for (std::size_t v = 0; v < batch.n_views; ++v)
            batch.mask[r * batch.n_views + v] = dataset.mask[indices[r] * batch.n_views + v];
    }
    for (std::size_t v = 0; v < batch.n_views; ++v) {
        const std::size_t d = dataset.view_dims[v];
        std::vector<double> values(batch.size * d);
        for (std::size_t r = 0; r < batch.size; ++r)
            std::copy_n(dataset.views[v].data() + indices[r] * d, d, values.data() + r * d);
        batch.x.push_back(Tensor::matrix(batch.size, d, std::move(values)));
    }
    return batch;
}

}  // namespace burg
