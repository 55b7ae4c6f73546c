#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "burg/dataio.hpp"
#include "burg/errors.hpp"
#include "burg/metrics.hpp"

using namespace burg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path(BURG_TEST_TMP) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

MultiViewDataset small_dataset() {
    MultiViewDataset ds;
    ds.n_samples = 4;
    ds.view_names = {"a", "b"};
    ds.view_dims = {2, 3};
    ds.views = {{1.0, 2.5, -0.125, 4.0, 0.1, 0.2, 0.3, 7.0},
                {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0.0625}};
    ds.mask = {1, 1, 1, 0, 0, 1, 1, 1};
    ds.labels = std::vector<int>{0, 1, 1, 0};
    return ds;
}

}  // namespace

TEST_CASE("dataset round-trips bit exactly") {
    const auto dir = fresh_dir("roundtrip");
    const MultiViewDataset original = small_dataset();
    write_dataset(original, dir);
    const MultiViewDataset loaded = load_dataset(dir / "dataset.json");
    CHECK(loaded.n_samples == original.n_samples);
    CHECK(loaded.view_names == original.view_names);
    CHECK(loaded.view_dims == original.view_dims);
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < original.views[v].size(); ++i)
            CHECK(loaded.views[v][i] == original.views[v][i]);
    CHECK(loaded.mask == original.mask);
    CHECK(*loaded.labels == *original.labels);
}

TEST_CASE("manifest with two complete views loads") {
    const auto dir = fresh_dir("complete");
    {
        std::ofstream v0(dir / "v0.csv");
        v0 << "1,2\n3,4\n5,6\n7,8\n";
        std::ofstream v1(dir / "v1.csv");
        v1 << "0,1\n1,0\n0,0\n1,1\n";
        std::ofstream manifest(dir / "dataset.json");
        manifest << R"({"n_samples":4,"views":[{"name":"v0","file":"v0.csv","dim":2},)"
                 << R"({"name":"v1","file":"v1.csv","dim":2}]})";
    }
    const MultiViewDataset ds = load_dataset(dir / "dataset.json");
    CHECK(ds.n_samples == 4);
    CHECK(ds.n_views() == 2);
    CHECK(ds.observed_count() == 8);  // absent mask means complete
    CHECK_FALSE(ds.labels.has_value());
}

TEST_CASE("an all-zero mask row is rejected naming the sample") {
    const auto dir = fresh_dir("badmask");
    MultiViewDataset ds = small_dataset();
    ds.mask = {1, 1, 0, 0, 1, 1, 1, 1};
    try {
        write_dataset(ds, dir);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(std::string(err.what()).find("sample 1") != std::string::npos);
    }
}

TEST_CASE("row-count mismatch across views is rejected") {
    const auto dir = fresh_dir("ragged");
    {
        std::ofstream v0(dir / "v0.csv");
        for (int i = 0; i < 5; ++i) v0 << "1,2\n";
        std::ofstream v1(dir / "v1.csv");
        for (int i = 0; i < 6; ++i) v1 << "3\n";
        std::ofstream manifest(dir / "dataset.json");
        manifest << R"({"n_samples":5,"views":[{"name":"v0","file":"v0.csv","dim":2},)"
                 << R"({"name":"v1","file":"v1.csv","dim":1}]})";
    }
    try {
        load_dataset(dir / "dataset.json");
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(std::string(err.what()).find("v1") != std::string::npos);
    }
}

TEST_CASE("malformed cells carry file and line") {
    const auto dir = fresh_dir("badcell");
    {
        std::ofstream v0(dir / "v0.csv");
        v0 << "1,2\n3,oops\n";
        std::ofstream manifest(dir / "dataset.json");
        manifest << R"({"n_samples":2,"views":[{"name":"v0","file":"v0.csv","dim":2}]})";
    }
    try {
        load_dataset(dir / "dataset.json");
        FAIL("expected ParseError");
    } catch (const ParseError& err) {
        const std::string message = err.what();
        CHECK(message.find("v0.csv") != std::string::npos);
        CHECK(message.find("line 2") != std::string::npos);
        CHECK(message.find("oops") != std::string::npos);
    }
}

TEST_CASE("generate_mask honors the exact zero budget") {
    Rng rng(17);
    SUBCASE("rate zero keeps everything") {
        const auto mask = generate_mask(6, 3, 0.0, rng);
        for (std::uint8_t w : mask) CHECK(w == 1);
    }
    SUBCASE("n=10 v=2 rate=0.5 gives 10 zeros and one 1 per row") {
        const auto mask = generate_mask(10, 2, 0.5, rng);
        std::size_t zeros = 0;
        for (std::uint8_t w : mask) zeros += w == 0;
        CHECK(zeros == 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(mask[i * 2] + mask[i * 2 + 1] == 1);
    }
    SUBCASE("same seed twice gives identical masks") {
        Rng r1(5), r2(5);
        CHECK(generate_mask(20, 3, 0.4, r1) == generate_mask(20, 3, 0.4, r2));
    }
    SUBCASE("zero count is exact and rows stay covered across seeds and rates") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            Rng r(seed);
            const double rate = 0.1 + 0.55 * (seed % 10) / 10.0;
            const std::size_t n = 13, v = 3;
            const auto mask = generate_mask(n, v, rate, r);
            std::size_t zeros = 0;
            for (std::uint8_t w : mask) zeros += w == 0;
            CHECK(zeros == static_cast<std::size_t>(std::llround(rate * n * v)));
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t row = 0;
                for (std::size_t j = 0; j < v; ++j) row += mask[i * v + j];
                CHECK(row >= 1);
            }
        }
    }
    SUBCASE("infeasible rates are rejected") {
        CHECK_THROWS_AS(generate_mask(10, 2, 0.6, rng), ContractError);
        CHECK_THROWS_AS(generate_mask(10, 2, 0.9, rng), ContractError);
        CHECK_THROWS_AS(generate_mask(10, 2, 1.0, rng), ContractError);
        CHECK_THROWS_AS(generate_mask(10, 2, -0.1, rng), ContractError);
    }
}

TEST_CASE("synthetic data is deterministic per spec+seed") {
    SyntheticSpec spec;
    spec.n_samples = 50;
    spec.n_clusters = 3;
    spec.n_views = 2;
    spec.view_dims = {5, 7};
    spec.seed = 9;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.views[0] == b.views[0]);
    CHECK(a.views[1] == b.views[1]);
    CHECK(*a.labels == *b.labels);
}

TEST_CASE("noise-free synthetic clusters are separable from one view") {
    SyntheticSpec spec;
    spec.n_samples = 60;
    spec.n_clusters = 2;
    spec.n_views = 2;
    spec.latent_dim = 4;
    spec.view_dims = {6, 6};
    spec.cluster_separation = 8.0;
    spec.noise_std = 0.0;
    spec.seed = 3;
    const auto ds = generate_synthetic(spec);
    Rng rng(4);
    const auto result = kmeans(ds.views[0], ds.n_samples, 6, 2, rng);
    CHECK(accuracy(result.labels, *ds.labels) == doctest::Approx(1.0));
}

TEST_CASE("the desk-scale fixture is cleanly clusterable when complete") {
    SyntheticSpec spec;
    spec.n_samples = 1000;
    spec.n_clusters = 5;
    spec.n_views = 3;
    spec.latent_dim = 8;
    spec.view_dims = {20, 20, 20};
    spec.cluster_separation = 6.0;
    spec.noise_std = 0.5;
    spec.seed = 42;
    const auto ds = generate_synthetic(spec);
    // concatenate all views
    std::vector<double> all(ds.n_samples * 60);
    for (std::size_t i = 0; i < ds.n_samples; ++i)
        for (std::size_t v = 0; v < 3; ++v)
            std::copy_n(ds.views[v].data() + i * 20, 20, all.data() + i * 60 + v * 20);
    Rng rng(7);
    const auto result = kmeans(all, ds.n_samples, 60, 5, rng);
    CHECK(accuracy(result.labels, *ds.labels) >= 0.95);
}

TEST_CASE("make_batch slices rows and mask") {
    const MultiViewDataset ds = small_dataset();
    const Batch batch = make_batch(ds, {2, 0});
    CHECK(batch.size == 2);
    CHECK(batch.x[0].rows() == 2);
    CHECK(batch.x[0].value_at(0) == ds.views[0][4]);  // row 2 of view a
    CHECK(batch.x[1].value_at(3) == ds.views[1][0]);  // row 0 of view b
    CHECK_FALSE(batch.observed(0, 0));  // sample 2 misses view a
    CHECK(batch.observed(0, 1));
    CHECK(batch.observed(1, 0));
    CHECK(batch.fully_observed_count() == 1);
}
