#pragma once

#include <cstddef>
#include <vector>

#include "burg/rng.hpp"

namespace burg {

struct KmeansOptions {
    std::size_t max_iters = 100;
    std::size_t restarts = 4;
};

struct KmeansResult {
    std::vector<int> labels;        // length n, values in [0, k)
    std::vector<double> centroids;  // k x dim, row-major
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding, several restarts, and empty
/// clusters reseeded to the point farthest from its centroid. Deterministic
/// given the generator.
KmeansResult kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim,
                    std::size_t k, Rng& rng, KmeansOptions options = {});

/// Minimum-cost assignment of rows to columns of a square cost matrix.
/// Returns the column assigned to each row.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n);

/// Contingency counts between two labelings over the same samples.
struct ContingencyTable {
    std::size_t n_pred = 0;  // distinct predicted labels (max + 1)
    std::size_t n_true = 0;
    std::vector<long long> counts;  // n_pred x n_true
    std::vector<long long> pred_marginal;
    std::vector<long long> true_marginal;
    long long total = 0;

    static ContingencyTable from(const std::vector<int>& pred, const std::vector<int>& truth);
    long long at(std::size_t i, std::size_t j) const { return counts[i * n_true + j]; }
};

/// Clustering accuracy under the optimal injective cluster-to-class map.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Mutual information normalized by the arithmetic mean of label entropies.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

/// Adjusted Rand index via pair counting.
double ari(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace burg
