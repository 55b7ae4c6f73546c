#include "burg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "burg/errors.hpp"

namespace burg {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
    double total = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double diff = a[j] - b[j];
        total += diff * diff;
    }
    return total;
}

// k-means++: first center uniform, then proportional to squared distance.
std::vector<double> seed_centroids(const std::vector<double>& points, std::size_t n,
                                   std::size_t dim, std::size_t k, Rng& rng) {
    std::vector<double> centroids(k * dim);
    const std::size_t first = static_cast<std::size_t>(rng.uniform_int(n));
    std::copy_n(points.data() + first * dim, dim, centroids.data());
    std::vector<double> min_dist(n);
    for (std::size_t i = 0; i < n; ++i)
        min_dist[i] = sq_dist(points.data() + i * dim, centroids.data(), dim);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : min_dist) total += d;
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = static_cast<std::size_t>(rng.uniform_int(n));
        } else {
            const double target = rng.uniform01() * total;
            double running = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                running += min_dist[i];
                if (running > target) {
                    chosen = i;
                    break;
                }
            }
        }
        std::copy_n(points.data() + chosen * dim, dim, centroids.data() + c * dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = sq_dist(points.data() + i * dim, centroids.data() + c * dim, dim);
            min_dist[i] = std::min(min_dist[i], d);
        }
    }
    return centroids;
}

struct LloydResult {
    std::vector<int> labels;
    std::vector<double> centroids;
    double inertia;
};

LloydResult lloyd(const std::vector<double>& points, std::size_t n, std::size_t dim,
                  std::size_t k, std::vector<double> centroids, std::size_t max_iters) {
    std::vector<int> labels(n, 0);
    std::vector<double> dist_to_center(n, 0.0);
    std::vector<std::size_t> counts(k);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_dist(points.data() + i * dim, centroids.data() + c * dim, dim);
                if (d < best) {
                    best = d;
                    best_c = static_cast<int>(c);
                }
            }
            dist_to_center[i] = best;
            if (labels[i] != best_c) {
                labels[i] = best_c;
                changed = true;
            }
        }
        // empty clusters grab the point farthest from its current centroid
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(labels[i])];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t farthest = 0;
            double worst = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] <= 1) continue;
                if (dist_to_center[i] > worst) {
                    worst = dist_to_center[i];
                    farthest = i;
                }
            }
            --counts[static_cast<std::size_t>(labels[farthest])];
            labels[farthest] = static_cast<int>(c);
            counts[c] = 1;
            dist_to_center[farthest] = 0.0;
            changed = true;
        }
        std::fill(centroids.begin(), centroids.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* c = centroids.data() + static_cast<std::size_t>(labels[i]) * dim;
            const double* p = points.data() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) c[j] += p[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t j = 0; j < dim; ++j) centroids[c * dim + j] *= inv;
        }
        if (!changed) break;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        inertia +=
            sq_dist(points.data() + i * dim, centroids.data() + labels[i] * dim, dim);
    return {std::move(labels), std::move(centroids), inertia};
}

}  // namespace

KmeansResult kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim,
                    std::size_t k, Rng& rng, KmeansOptions options) {
    if (k == 0) throw ContractError("kmeans: k must be positive");
    if (k > n)
        throw ContractError("kmeans: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
    if (points.size() != n * dim) throw ContractError("kmeans: points size does not match n x dim");
    for (double v : points)
        if (!std::isfinite(v)) throw NumericError("kmeans: non-finite point coordinate");

    KmeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
    for (std::size_t r = 0; r < restarts; ++r) {
        auto centroids = seed_centroids(points, n, dim, k, rng);
        auto result = lloyd(points, n, dim, k, std::move(centroids), options.max_iters);
        if (result.inertia < best.inertia) {
            best.labels = std::move(result.labels);
            best.centroids = std::move(result.centroids);
            best.inertia = result.inertia;
        }
    }
    return best;
}

std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
    if (n == 0) throw ContractError("hungarian: empty matrix");
    if (cost.size() != n * n) throw ContractError("hungarian: cost matrix is not square");
    for (double v : cost)
        if (!std::isfinite(v)) throw NumericError("hungarian: non-finite cost");

    // Potentials method, O(n^3). 1-based auxiliary arrays; column 0 is virtual.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // match[j] = row assigned to column j
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> min_v(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < min_v[j]) {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if (min_v[j] < delta) {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

ContingencyTable ContingencyTable::from(const std::vector<int>& pred,
                                        const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw ContractError("labelings differ in length: " + std::to_string(pred.size()) +
                            " vs " + std::to_string(truth.size()));
    if (pred.empty()) throw ContractError("empty labelings");
    int max_pred = 0, max_true = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || truth[i] < 0) throw ContractError("labels must be non-negative");
        max_pred = std::max(max_pred, pred[i]);
        max_true = std::max(max_true, truth[i]);
    }
    ContingencyTable table;
    table.n_pred = static_cast<std::size_t>(max_pred) + 1;
    table.n_true = static_cast<std::size_t>(max_true) + 1;
    table.counts.assign(table.n_pred * table.n_true, 0);
    table.pred_marginal.assign(table.n_pred, 0);
    table.true_marginal.assign(table.n_true, 0);
    table.total = static_cast<long long>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++table.counts[static_cast<std::size_t>(pred[i]) * table.n_true +
                       static_cast<std::size_t>(truth[i])];
        ++table.pred_marginal[static_cast<std::size_t>(pred[i])];
        ++table.true_marginal[static_cast<std::size_t>(truth[i])];
    }
    return table;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    const ContingencyTable table = ContingencyTable::from(pred, truth);
    // pad to square so the assignment is injective either way
    const std::size_t k = std::max(table.n_pred, table.n_true);
    std::vector<double> cost(k * k, 0.0);
    for (std::size_t i = 0; i < table.n_pred; ++i)
        for (std::size_t j = 0; j < table.n_true; ++j)
            cost[i * k + j] = -static_cast<double>(table.at(i, j));
    const auto assignment = hungarian(cost, k);
    long long matched = 0;
    for (std::size_t i = 0; i < table.n_pred; ++i)
        if (assignment[i] < table.n_true) matched += table.at(i, assignment[i]);
    return static_cast<double>(matched) / static_cast<double>(table.total);
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    const ContingencyTable table = ContingencyTable::from(pred, truth);
    const double n = static_cast<double>(table.total);
    double h_pred = 0.0, h_true = 0.0, mi = 0.0;
    for (long long c : table.pred_marginal)
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h_pred -= p * std::log(p);
        }
    for (long long c : table.true_marginal)
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h_true -= p * std::log(p);
        }
    for (std::size_t i = 0; i < table.n_pred; ++i)
        for (std::size_t j = 0; j < table.n_true; ++j) {
            const long long c = table.at(i, j);
            if (c == 0) continue;
            const double p_ij = static_cast<double>(c) / n;
            const double p_i = static_cast<double>(table.pred_marginal[i]) / n;
            const double p_j = static_cast<double>(table.true_marginal[j]) / n;
            mi += p_ij * std::log(p_ij / (p_i * p_j));
        }
    const double denom = 0.5 * (h_pred + h_true);
    if (denom <= 0.0) return 0.0;  // a constant labeling carries no information
    return mi / denom;
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
    const ContingencyTable table = ContingencyTable::from(pred, truth);
    auto choose2 = [](long long m) { return 0.5 * static_cast<double>(m) * (m - 1); };
    double sum_cells = 0.0;
    for (long long c : table.counts) sum_cells += choose2(c);
    double sum_pred = 0.0, sum_true = 0.0;
    for (long long c : table.pred_marginal) sum_pred += choose2(c);
    for (long long c : table.true_marginal) sum_true += choose2(c);
    const double pairs = choose2(table.total);
    if (pairs == 0.0) return 1.0;  // single sample
    const double expected = sum_pred * sum_true / pairs;
    const double max_index = 0.5 * (sum_pred + sum_true);
    const double denom = max_index - expected;
    if (denom == 0.0) return 1.0;  // degenerate identical structure
    return (sum_cells - expected) / denom;
}

}  // namespace burg
