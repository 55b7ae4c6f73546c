#include <doctest.h>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "burg/consistency.hpp"
#include "burg/errors.hpp"
#include "burg/grad_check.hpp"
#include "burg/rng.hpp"

using namespace burg;

namespace {

// independent realization of the two-stage neighbor rule
std::optional<std::size_t> oracle_neighbor(std::size_t i, std::size_t v,
                                           std::span<const double> z_tilde,
                                           const NeighborIndex& index) {
    double best_score = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> best;
    for (std::size_t vp = 0; vp < index.n_views; ++vp) {
        if (vp == v || !index.mask[i * index.n_views + vp]) continue;
        double nearest = std::numeric_limits<double>::infinity();
        std::optional<std::size_t> cand;
        for (std::size_t j = 0; j < index.n; ++j) {
            if (j == i || !index.mask[j * index.n_views + vp] ||
                !index.mask[j * index.n_views + v])
                continue;
            double dist = 0.0;
            const auto zj = index.latent(j, vp);
            for (std::size_t c = 0; c < index.dim; ++c)
                dist += (zj[c] - z_tilde[c]) * (zj[c] - z_tilde[c]);
            if (dist < nearest) {
                nearest = dist;
                cand = j;
            }
        }
        if (!cand) continue;
        double score = 0.0;
        const auto zc = index.latent(*cand, vp);
        const auto zi = index.latent(i, vp);
        for (std::size_t c = 0; c < index.dim; ++c) score += (zc[c] - zi[c]) * (zc[c] - zi[c]);
        if (score < best_score) {
            best_score = score;
            best = cand;
        }
    }
    return best;
}

NeighborIndex two_view_index(const std::vector<double>& v0, const std::vector<double>& v1,
                             const std::vector<std::uint8_t>& mask, std::size_t n,
                             std::size_t dim) {
    return NeighborIndex::build({v0, v1}, mask, n, 2, dim);
}

}  // namespace

TEST_CASE("nearest observed candidate wins") {
    // 3 samples, 2 views, dim 1. Sample 0 misses view 1; query latent 0.
    // View-0 latents of candidates 1 and 2 sit at 0.1 and 5.0... but the
    // search runs in the OTHER view (view 0) comparing to z_tilde.
    const std::vector<double> v0 = {0.0, 0.1, 5.0};
    const std::vector<double> v1 = {9.0, 2.0, 3.0};
    const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 1, 1};
    const NeighborIndex index = two_view_index(v0, v1, mask, 3, 1);
    const std::vector<double> z_tilde = {0.0};
    const auto neighbor = find_cross_view_neighbor(0, 1, z_tilde, index);
    REQUIRE(neighbor.has_value());
    CHECK(*neighbor == 1);
}

TEST_CASE("candidates lacking the missing view fall back to the next nearest") {
    const std::vector<double> v0 = {0.0, 0.1, 5.0};
    const std::vector<double> v1 = {9.0, 2.0, 3.0};
    // candidate 1 is nearest in view 0 but has no view-1 latent
    const std::vector<std::uint8_t> mask = {1, 0, 1, 0, 1, 1};
    const NeighborIndex index = two_view_index(v0, v1, mask, 3, 1);
    const auto neighbor = find_cross_view_neighbor(0, 1, std::vector<double>{0.0}, index);
    REQUIRE(neighbor.has_value());
    CHECK(*neighbor == 2);
}

TEST_CASE("no candidate with the view observed yields none") {
    const std::vector<double> v0 = {0.0, 0.1, 5.0};
    const std::vector<double> v1 = {9.0, 2.0, 3.0};
    const std::vector<std::uint8_t> mask = {1, 0, 1, 0, 1, 0};
    const NeighborIndex index = two_view_index(v0, v1, mask, 3, 1);
    CHECK_FALSE(find_cross_view_neighbor(0, 1, std::vector<double>{0.0}, index).has_value());
}

TEST_CASE("querying an observed slot is a contract error") {
    const std::vector<double> v0 = {0.0, 1.0};
    const std::vector<double> v1 = {2.0, 3.0};
    const NeighborIndex index = two_view_index(v0, v1, {1, 1, 1, 1}, 2, 1);
    CHECK_THROWS_AS(find_cross_view_neighbor(0, 0, std::vector<double>{0.0}, index),
                    ContractError);
}

TEST_CASE("neighbor search matches the exhaustive oracle on a 3-view fixture") {
    Rng rng(31);
    const std::size_t n = 6, views = 3, dim = 2;
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<std::vector<double>> latents(views, std::vector<double>(n * dim));
        for (auto& m : latents)
            for (double& value : m) value = rng.uniform(-3, 3);
        std::vector<std::uint8_t> mask(n * views, 1);
        // knock out ~a third of slots, keep each row covered
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t drop = rng.uniform_int(views + 1);
            if (drop < views) mask[i * views + drop] = 0;
        }
        const NeighborIndex index = NeighborIndex::build(latents, mask, n, views, dim);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t v = 0; v < views; ++v) {
                if (mask[i * views + v]) continue;
                std::vector<double> z_tilde(dim);
                for (double& value : z_tilde) value = rng.uniform(-3, 3);
                const auto got = find_cross_view_neighbor(i, v, z_tilde, index);
                const auto expected = oracle_neighbor(i, v, z_tilde, index);
                CHECK(got == expected);
            }
    }
}

namespace {

Batch guidance_batch(std::size_t n, std::size_t views, const std::vector<std::uint8_t>& mask) {
    Batch batch;
    batch.size = n;
    batch.n_views = views;
    batch.mask = mask;
    batch.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) batch.indices[i] = i;
    return batch;
}

}  // namespace

TEST_CASE("nac loss basics") {
    const std::size_t dim = 2;
    // 2 samples, 2 views; sample 0 misses view 1 and resolves to neighbor 1
    std::vector<double> v0 = {0.0, 0.0, 1.0, 1.0};
    std::vector<double> v1 = {5.0, 5.0, 1.0, 1.0};
    std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    NeighborIndex index = NeighborIndex::build({v0, v1}, mask, 2, 2, dim);
    NeighborResolution resolution;
    resolution.neighbor = {-1, 1, -1, -1};

    Batch batch = guidance_batch(2, 2, mask);
    SUBCASE("recovered latent equal to the neighbor gives zero") {
        std::vector<Tensor> z_tilde = {Tensor::matrix(2, 2, {0, 0, 0, 0}),
                                       Tensor::matrix(2, 2, {1.0, 1.0, 0, 0})};
        CHECK(nac_loss(batch, z_tilde, index, resolution).item() == doctest::Approx(0.0));
    }
    SUBCASE("unit offsets add up") {
        std::vector<Tensor> z_tilde = {Tensor::matrix(2, 2, {0, 0, 0, 0}),
                                       Tensor::matrix(2, 2, {0.0, 0.0, 9, 9})};
        // z_tilde (0,0) vs neighbor latent (1,1) in view 1 -> 2.0 over 1 missing
        CHECK(nac_loss(batch, z_tilde, index, resolution).item() == doctest::Approx(2.0));
    }
    SUBCASE("no missing instances means zero") {
        Batch complete = guidance_batch(2, 2, {1, 1, 1, 1});
        std::vector<Tensor> z_tilde = {Tensor::matrix(2, 2, {7, 7, 7, 7}),
                                       Tensor::matrix(2, 2, {7, 7, 7, 7})};
        CHECK(nac_loss(complete, z_tilde, index, resolution).item() == 0.0);
    }
    SUBCASE("unresolved instances contribute zero but count in the mean") {
        NeighborResolution none;
        none.neighbor = {-1, -1, -1, -1};
        std::vector<Tensor> z_tilde = {Tensor::matrix(2, 2, {0, 0, 0, 0}),
                                       Tensor::matrix(2, 2, {42.0, 0.0, 9, 9})};
        CHECK(nac_loss(batch, z_tilde, index, none).item() == 0.0);
    }
}

TEST_CASE("prototypes from k distinct points are the points") {
    const std::vector<double> points = {0, 0, 10, 0, 0, 10};
    Rng rng(5);
    const PrototypeSet prototypes = compute_prototypes(points, 3, 2, 3, rng);
    for (std::size_t c = 0; c < 3; ++c) {
        bool found = false;
        for (std::size_t p = 0; p < 3; ++p)
            found = found || (prototypes.centroids[c * 2] == points[p * 2] &&
                              prototypes.centroids[c * 2 + 1] == points[p * 2 + 1]);
        CHECK(found);
    }
}

TEST_CASE("prototypes of two far blobs match the blob means") {
    std::vector<double> points;
    for (int i = 0; i < 4; ++i) {
        points.push_back(i % 2 ? 0.1 : -0.1);
        points.push_back(0.0);
    }
    for (int i = 0; i < 4; ++i) {
        points.push_back(20.0 + (i % 2 ? 0.1 : -0.1));
        points.push_back(0.0);
    }
    Rng rng(6);
    const PrototypeSet prototypes = compute_prototypes(points, 8, 2, 2, rng);
    std::vector<double> xs = {prototypes.centroids[0], prototypes.centroids[2]};
    std::sort(xs.begin(), xs.end());
    CHECK(xs[0] == doctest::Approx(0.0));
    CHECK(xs[1] == doctest::Approx(20.0));
}

TEST_CASE("prototype computation is deterministic per seed") {
    Rng fill(7);
    std::vector<double> points(40);
    for (double& value : points) value = fill.uniform(-5, 5);
    Rng r1(9), r2(9);
    const PrototypeSet a = compute_prototypes(points, 20, 2, 3, r1);
    const PrototypeSet b = compute_prototypes(points, 20, 2, 3, r2);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("soft assignment properties") {
    SUBCASE("identical prototypes give the uniform distribution") {
        PrototypeSet prototypes;
        prototypes.k = 4;
        prototypes.dim = 2;
        prototypes.centroids = {1, 1, 1, 1, 1, 1, 1, 1};
        const Tensor p = soft_assign(Tensor::matrix(1, 2, {0.3, 0.7}), prototypes);
        for (std::size_t c = 0; c < 4; ++c) CHECK(p.value_at(c) == doctest::Approx(0.25));
    }
    SUBCASE("cosine similarities (1, 0) split as e:(e+1)") {
        PrototypeSet prototypes;
        prototypes.k = 2;
        prototypes.dim = 2;
        prototypes.centroids = {2.0, 0.0, 0.0, 5.0};  // along the axes
        const Tensor p = soft_assign(Tensor::matrix(1, 2, {3.0, 0.0}), prototypes);
        const double e = std::exp(1.0);
        CHECK(p.value_at(0) == doctest::Approx(e / (e + 1.0)));
        CHECK(p.value_at(1) == doctest::Approx(1.0 / (e + 1.0)));
    }
    SUBCASE("rows sum to one") {
        Rng rng(8);
        PrototypeSet prototypes;
        prototypes.k = 5;
        prototypes.dim = 3;
        prototypes.centroids.resize(15);
        for (double& value : prototypes.centroids) value = rng.uniform(-2, 2);
        std::vector<double> z(4 * 3);
        for (double& value : z) value = rng.uniform(-2, 2);
        const Tensor p = soft_assign(Tensor::matrix(4, 3, z), prototypes);
        for (std::size_t i = 0; i < 4; ++i) {
            double row = 0.0;
            for (std::size_t c = 0; c < 5; ++c) row += p.value_at(i * 5 + c);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("zero norms are domain errors") {
        PrototypeSet prototypes;
        prototypes.k = 2;
        prototypes.dim = 2;
        prototypes.centroids = {1, 0, 0, 1};
        CHECK_THROWS_AS(soft_assign(Tensor::matrix(1, 2, {0.0, 0.0}), prototypes), DomainError);
        prototypes.centroids = {0, 0, 0, 1};
        CHECK_THROWS_AS(soft_assign(Tensor::matrix(1, 2, {1.0, 0.0}), prototypes), DomainError);
    }
}

TEST_CASE("consensus labels") {
    SUBCASE("single observed view picks its argmax") {
        const std::vector<std::vector<double>> p = {{0.2, 0.7, 0.1}, {0.9, 0.05, 0.05}};
        const std::vector<std::uint8_t> mask = {1, 0};
        CHECK(consensus_label(p, mask) == 1);
    }
    SUBCASE("masked mean decides") {
        const std::vector<std::vector<double>> p = {{0.7, 0.2, 0.1}, {0.1, 0.7, 0.2}};
        // means: (0.4, 0.45, 0.15)
        const std::vector<std::uint8_t> mask = {1, 1};
        CHECK(consensus_label({{0.7, 0.2, 0.1}, {0.1, 0.7, 0.2}}, mask) == 1);
    }
    SUBCASE("exact ties take the lowest cluster") {
        const std::vector<std::uint8_t> mask = {1};
        CHECK(consensus_label({{0.5, 0.5}}, mask) == 0);
    }
    SUBCASE("all-zero mask is a contract error") {
        const std::vector<std::uint8_t> mask = {0, 0};
        CHECK_THROWS_AS(consensus_label({{1.0, 0.0}, {1.0, 0.0}}, mask), ContractError);
    }
}

TEST_CASE("pc loss values") {
    SUBCASE("one-hot matching assignments cost nothing at gamma 0") {
        const Tensor p = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
        CHECK(pc_loss({p}, {0, 1}, 0.0).item() == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("uniform assignments cost log 2") {
        const Tensor p = Tensor::matrix(1, 2, {0.5, 0.5});
        CHECK(pc_loss({p}, {0}, 0.0).item() == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("entropy term sharpens") {
        const Tensor p = Tensor::matrix(1, 2, {0.5, 0.5});
        const double with_entropy = pc_loss({p}, {0}, 0.5).item();
        CHECK(with_entropy == doctest::Approx(std::log(2.0) + 0.5 * std::log(2.0)));
    }
}

TEST_CASE("pc loss is invariant to consistent cluster permutation") {
    Rng rng(10);
    const std::size_t b = 3, k = 4;
    std::vector<double> logits(b * k);
    for (double& value : logits) value = rng.uniform(-1, 1);
    const Tensor p = softmax_rows(Tensor::matrix(b, k, logits));
    const std::vector<int> consensus = {2, 0, 3};
    const double base = pc_loss({p}, consensus, 0.3).item();

    const std::vector<std::size_t> perm = {2, 3, 1, 0};
    std::vector<double> permuted(b * k);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < k; ++c)
            permuted[i * k + perm[c]] = p.value_at(i * k + c);
    std::vector<int> consensus_perm(b);
    for (std::size_t i = 0; i < b; ++i) consensus_perm[i] = static_cast<int>(perm[consensus[i]]);
    const double after =
        pc_loss({Tensor::matrix(b, k, permuted)}, consensus_perm, 0.3).item();
    CHECK(base == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("pc loss gradient matches finite differences") {
    Rng rng(11);
    PrototypeSet prototypes;
    prototypes.k = 3;
    prototypes.dim = 4;
    prototypes.centroids.resize(12);
    for (double& value : prototypes.centroids) value = rng.uniform(-1, 1);
    Tensor z = Tensor::matrix(5, 4, [&] {
        std::vector<double> values(20);
        for (double& value : values) value = rng.uniform(-1, 1);
        return values;
    }());
    // differentiate through a small net feeding the assignments
    Tensor weight = Tensor::matrix(4, 4, [&] {
        std::vector<double> values(16);
        for (double& value : values) value = rng.uniform(-0.5, 0.5);
        return values;
    }(), true);
    const std::vector<int> consensus = {0, 2, 1, 0, 1};
    const double err = grad_check(
        [&] {
            const Tensor latent = tanh(matmul(z, weight));
            return pc_loss({soft_assign(latent, prototypes)}, consensus, 0.2);
        },
        {weight});
    CHECK(err < 1e-4);
}

TEST_CASE("nac loss gradient matches finite differences") {
    Rng rng(12);
    const std::size_t dim = 3;
    std::vector<double> v0 = {0.5, 0.1, -0.2, 1.0, 1.1, 0.9};
    std::vector<double> v1 = {0.0, 0.3, 0.3, -1.0, 0.2, 0.4};
    std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    NeighborIndex index = NeighborIndex::build({v0, v1}, mask, 2, 2, dim);
    NeighborResolution resolution;
    resolution.neighbor = {-1, 1, -1, -1};
    Batch batch = guidance_batch(2, 2, mask);
    Tensor weight = Tensor::matrix(dim, dim, [&] {
        std::vector<double> values(dim * dim);
        for (double& value : values) value = rng.uniform(-0.7, 0.7);
        return values;
    }(), true);
    Tensor seed = Tensor::matrix(2, dim, {0.2, -0.4, 0.6, 0.9, 0.0, -0.3});
    const double err = grad_check(
        [&] {
            const Tensor z_tilde = tanh(matmul(seed, weight));
            return nac_loss(batch, {z_tilde, z_tilde}, index, resolution);
        },
        {weight});
    CHECK(err < 1e-4);
}
