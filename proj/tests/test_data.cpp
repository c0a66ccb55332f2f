#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <set>

#include "star/dataset.hpp"

using namespace star;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("load_csv: small fixture with header") {
    const auto path = write_temp("fixture_small.csv", "a,b,target\n1,2,3\n4,5,6\n7,8,9\n");
    Dataset ds = load_csv(path, "target");
    CHECK(ds.size() == 3);
    CHECK(ds.features() == 2);
    CHECK(ds.X(1, 0) == 4.0);
    CHECK(ds.y[2] == 9.0);
    CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
    std::remove(path.c_str());
}

TEST_CASE("load_csv: unparseable cell names row and column") {
    const auto path = write_temp("fixture_bad.csv", "a,b,target\n1,2,3\n4,abc,6\n");
    CHECK_THROWS_WITH_AS(load_csv(path, "target"), doctest::Contains("row 2, col 1"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("load_csv: missing target column") {
    const auto path = write_temp("fixture_miss.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(path, "target"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("load_csv: numeric index target without header") {
    const auto path = write_temp("fixture_nohdr.csv", "1,2,3\n4,5,6\n");
    Dataset ds = load_csv(path, "1", false);
    CHECK(ds.features() == 2);
    CHECK(ds.y == std::vector<double>{2.0, 5.0});
    CHECK(ds.X(1, 1) == 6.0);
    std::remove(path.c_str());
}

TEST_CASE("bundled housing fixture: 506 rows, 13 features") {
    Dataset ds = load_csv(std::string(STAR_DATA_DIR) + "/housing.csv", "price");
    CHECK(ds.size() == 506);
    CHECK(ds.features() == 13);
    for (double v : ds.X.data) CHECK(std::isfinite(v));
    for (double v : ds.y) CHECK(std::isfinite(v));
}

TEST_CASE("load -> save -> load round-trips bit-identically") {
    Dataset ds = load_csv(std::string(STAR_DATA_DIR) + "/housing.csv", "price");
    save_csv(ds, "housing_roundtrip.csv", "price");
    Dataset again = load_csv("housing_roundtrip.csv", "price");
    REQUIRE(again.size() == ds.size());
    REQUIRE(again.features() == ds.features());
    CHECK(std::memcmp(again.X.data.data(), ds.X.data.data(),
                      ds.X.data.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(again.y.data(), ds.y.data(), ds.y.size() * sizeof(double)) == 0);
    std::remove("housing_roundtrip.csv");
}

TEST_CASE("standard scaler: train columns become mean 0, std 1") {
    Dataset ds;
    ds.X = MatD(3, 2);
    ds.X(0, 0) = 1.0; ds.X(1, 0) = 2.0; ds.X(2, 0) = 3.0;
    ds.X(0, 1) = 5.0; ds.X(1, 1) = 5.0; ds.X(2, 1) = 5.0;  // constant column
    ds.y = {10.0, 20.0, 30.0};

    ScalerState s = standard_scale_fit(ds, false);
    CHECK(s.scaled[0]);
    CHECK_FALSE(s.scaled[1]);  // constant column flagged through

    Dataset scaled = standard_scale_apply(s, ds);
    double mean = 0.0, var = 0.0;
    for (int r = 0; r < 3; ++r) mean += scaled.X(r, 0);
    mean /= 3.0;
    for (int r = 0; r < 3; ++r) var += (scaled.X(r, 0) - mean) * (scaled.X(r, 0) - mean);
    var /= 3.0;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);
    CHECK(scaled.X(0, 1) == 5.0);  // untouched

    // inverse transform recovers originals
    for (int r = 0; r < 3; ++r) {
        const double back = scaled.X(r, 0) * s.std[0] + s.mean[0];
        CHECK(back == doctest::Approx(ds.X(r, 0)).epsilon(1e-10));
    }
}

TEST_CASE("standard scaler: statistics come from the training split only") {
    Dataset ds = load_csv(std::string(STAR_DATA_DIR) + "/housing.csv", "price");
    SplitResult parts = split(ds, 0.7, SplitMode::Shuffled, 13);
    ScalerState s = standard_scale_fit(parts.train, false);
    for (std::size_t c = 0; c < parts.train.features(); ++c) {
        if (!s.scaled[c]) continue;
        double mean = 0.0;
        for (std::size_t r = 0; r < parts.train.size(); ++r) mean += parts.train.X(r, c);
        mean /= static_cast<double>(parts.train.size());
        CHECK(s.mean[c] == doctest::Approx(mean).epsilon(1e-14));
        double full_mean = 0.0;
        for (std::size_t r = 0; r < ds.size(); ++r) full_mean += ds.X(r, c);
        full_mean /= static_cast<double>(ds.size());
        CHECK(s.mean[c] != full_mean);  // test rows never enter the fit
    }
}

TEST_CASE("standard scaler: target scaling and unscaling") {
    Dataset ds;
    ds.X = MatD(4, 1);
    for (int r = 0; r < 4; ++r) ds.X(r, 0) = r;
    ds.y = {2.0, 4.0, 6.0, 8.0};
    ScalerState s = standard_scale_fit(ds, true);
    CHECK(s.targets_scaled);
    Dataset scaled = standard_scale_apply(s, ds);
    const auto back = unscale_targets(s, scaled.y);
    for (int r = 0; r < 4; ++r) CHECK(back[r] == doctest::Approx(ds.y[r]).epsilon(1e-12));
}

TEST_CASE("split: shuffled ratio and determinism") {
    Dataset ds;
    ds.X = MatD(10, 1);
    ds.y.resize(10);
    for (int r = 0; r < 10; ++r) {
        ds.X(r, 0) = r;
        ds.y[r] = r;
    }
    SplitResult a = split(ds, 0.7, SplitMode::Shuffled, 42);
    CHECK(a.train.size() == 7);
    CHECK(a.test.size() == 3);
    SplitResult b = split(ds, 0.7, SplitMode::Shuffled, 42);
    CHECK(std::memcmp(a.train.X.data.data(), b.train.X.data.data(), 7 * sizeof(double)) == 0);

    std::set<double> seen;
    for (int r = 0; r < 7; ++r) seen.insert(a.train.X(r, 0));
    for (int r = 0; r < 3; ++r) seen.insert(a.test.X(r, 0));
    CHECK(seen.size() == 10);  // a partition
}

TEST_CASE("split: tail mode keeps the final rows in order") {
    Dataset ds;
    ds.X = MatD(10, 1);
    ds.y.resize(10);
    for (int r = 0; r < 10; ++r) {
        ds.X(r, 0) = r;
        ds.y[r] = r;
    }
    SplitResult parts = split(ds, 0.9, SplitMode::Tail, 0);
    REQUIRE(parts.test.size() == 1);
    CHECK(parts.test.X(0, 0) == 9.0);

    SplitResult bigger = split(ds, 0.7, SplitMode::Tail, 0);
    REQUIRE(bigger.test.size() == 3);
    CHECK(bigger.test.X(0, 0) == 7.0);
    CHECK(bigger.test.X(2, 0) == 9.0);

    CHECK_THROWS_AS(split(ds, 0.001, SplitMode::Tail, 0), ConfigError);
}

TEST_CASE("batches: sizes, reshuffle key, exact index partition") {
    const auto a = batches(10, 4, 7, 1);
    REQUIRE(a.size() == 3);
    CHECK(a[0].size() == 4);
    CHECK(a[1].size() == 4);
    CHECK(a[2].size() == 2);  // short final batch kept

    const auto b = batches(10, 4, 7, 1);
    CHECK(a == b);  // same (seed, epoch)
    const auto c = batches(10, 4, 7, 2);
    CHECK(a != c);  // epoch reshuffles

    std::set<std::size_t> seen;
    for (const auto& slice : a)
        for (std::size_t i : slice) seen.insert(i);
    CHECK(seen.size() == 10);
}

TEST_CASE("synthetic regression: noise accounting") {
    SyntheticSpec spec;
    spec.teacher_spec.depth = 1;
    spec.teacher_spec.widths = {2, 8, 1};
    Rng rng(3);
    spec.teacher_params = init_params<double>(spec.teacher_spec, rng);
    spec.noise_std = 0.5;

    SyntheticDataset data = synthetic_regression(spec, 100000, 11);
    CHECK(data.noise_variance == doctest::Approx(0.25));

    // empirical Var(y - f*(X)) within 3% of noise_std^2
    double mean = 0.0;
    for (std::size_t i = 0; i < data.data.size(); ++i)
        mean += data.data.y[i] - data.clean_targets[i];
    mean /= static_cast<double>(data.data.size());
    double var = 0.0;
    for (std::size_t i = 0; i < data.data.size(); ++i) {
        const double d = data.data.y[i] - data.clean_targets[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(data.data.size());
    CHECK(var == doctest::Approx(0.25).epsilon(0.03));

    // noise-free task: y equals the teacher output
    spec.noise_std = 0.0;
    SyntheticDataset clean = synthetic_regression(spec, 50, 11);
    for (std::size_t i = 0; i < clean.data.size(); ++i)
        CHECK(clean.data.y[i] == clean.clean_targets[i]);
}
