#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowsentry/error.hpp"
#include "flowsentry/lof.hpp"
#include "support.hpp"

using namespace flowsentry;

namespace {

Matrix random_points(std::size_t n, std::size_t dims, std::uint64_t seed, bool integer_grid = false) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> cell(0, 6);
    Matrix x(n, dims);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dims; ++j) x(i, j) = integer_grid ? cell(rng) : u(rng);
    return x;
}

double dist(const Matrix& x, std::size_t i, std::span<const double> q) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (x(i, j) - q[j]) * (x(i, j) - q[j]);
    return std::sqrt(s);
}

std::vector<Neighbor> brute_knn(const Matrix& x, std::span<const double> q, std::size_t k,
                                std::optional<std::size_t> exclude = std::nullopt) {
    std::vector<Neighbor> all;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (exclude && *exclude == i) continue;
        all.push_back({i, dist(x, i, q)});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    all.resize(k);
    return all;
}

// Independent LOF straight from the definitions.
double brute_lof(const Matrix& x, std::span<const double> q, std::size_t k) {
    const std::size_t n = x.rows();
    std::vector<double> kdist(n);
    std::vector<std::vector<Neighbor>> nbrs(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbrs[i] = brute_knn(x, x.row(i), k, i);
        kdist[i] = nbrs[i].back().distance;
    }
    auto lrd_of = [&](const std::vector<Neighbor>& ns) {
        double s = 0;
        for (const auto& o : ns) s += std::max(kdist[o.index], o.distance);
        return static_cast<double>(k) / s;
    };
    std::vector<double> lrd(n);
    for (std::size_t i = 0; i < n; ++i) lrd[i] = lrd_of(nbrs[i]);
    auto qn = brute_knn(x, q, k);
    double mean = 0;
    for (const auto& o : qn) mean += lrd[o.index];
    mean /= static_cast<double>(k);
    return mean / lrd_of(qn);
}

}  // namespace

TEST_CASE("k-d tree agrees with exhaustive search") {
    std::size_t configs = 0;
    for (std::size_t n : {1, 7, 31, 100, 257, 500}) {
        for (std::size_t dims : {1, 2, 5}) {
            for (bool grid : {false, true}) {
                auto x = random_points(n, dims, n * 31 + dims, grid);
                KdTree tree(x, 30);
                auto qs = random_points(10, dims, n + 5, grid);
                for (std::size_t k : {std::size_t{1}, std::min<std::size_t>(5, n), n}) {
                    for (std::size_t q = 0; q < qs.rows(); ++q) {
                        CHECK(tree.knn(qs.row(q), k) == brute_knn(x, qs.row(q), k));
                    }
                    if (k < n) {
                        for (std::size_t i = 0; i < std::min<std::size_t>(n, 10); ++i) {
                            CHECK(tree.knn(x.row(i), k, i) == brute_knn(x, x.row(i), k, i));
                        }
                    }
                }
                ++configs;
            }
        }
    }
    CHECK(configs == 36);
}

TEST_CASE("k-d tree basics") {
    auto x = random_points(100, 3, 2);
    KdTree tree(x);
    auto self = tree.knn(x.row(17), 5);
    CHECK(self.front().index == 17);
    CHECK(self.front().distance == 0.0);
    auto all = tree.knn(x.row(3), 100);
    CHECK(all.size() == 100);
    CHECK(std::is_sorted(all.begin(), all.end(), [](auto& a, auto& b) { return a.distance < b.distance; }));
    CHECK_THROWS_AS(tree.knn(x.row(0), 101), InvalidArgument);
    CHECK_THROWS_AS(tree.knn(x.row(0), 100, 0), InvalidArgument);
}

TEST_CASE("reachability density examples") {
    SUBCASE("query surrounded by a ring at equal distance") {
        const double d = 2.0;
        Matrix ring(60, 2);
        for (std::size_t i = 0; i < 60; ++i) {
            const double a = 2 * M_PI * static_cast<double>(i) / 60.0;
            ring(i, 0) = d * std::cos(a);
            ring(i, 1) = d * std::sin(a);
        }
        LofConfig c;
        c.k = 3;
        auto m = lof_fit(ring, c);
        for (double kd : m.k_distance) CHECK(kd < d);
        std::vector<double> centre{0.0, 0.0};
        auto nbrs = m.index.knn(centre, 3);
        CHECK(local_reachability_density(m, nbrs) == doctest::Approx(1.0 / d).epsilon(1e-12));
    }
    SUBCASE("duplicate stack uses the sentinel") {
        Matrix stack(10, 2, 0.25);
        LofConfig c;
        c.k = 3;
        auto m = lof_fit(stack, c);
        for (double v : m.lrd) CHECK(v == kLrdSentinel);
        std::vector<double> q{0.25, 0.25};
        auto s = lof_score(m, q);
        CHECK(std::isfinite(s));
        CHECK(s == doctest::Approx(1.0));
    }
    SUBCASE("interior points of a uniform grid share one density") {
        Matrix grid(40 * 40, 2);
        for (std::size_t i = 0; i < 40; ++i)
            for (std::size_t j = 0; j < 40; ++j) {
                grid(i * 40 + j, 0) = static_cast<double>(i);
                grid(i * 40 + j, 1) = static_cast<double>(j);
            }
        LofConfig c;
        auto m = lof_fit(grid, c);
        double ref = m.lrd[20 * 40 + 20];
        for (std::size_t i = 10; i < 30; ++i)
            for (std::size_t j = 10; j < 30; ++j) CHECK(std::abs(m.lrd[i * 40 + j] - ref) <= 0.01 * ref);
        for (std::size_t i = 12; i < 28; i += 3)
            for (std::size_t j = 12; j < 28; j += 3) {
                std::vector<double> q{i + 0.5, j + 0.5};
                auto s = lof_score(m, q);
                CHECK(s >= 0.8);
                CHECK(s <= 1.2);
            }
    }
}

TEST_CASE("LOF matches a brute-force oracle") {
    Matrix square(4, 2);
    square(1, 0) = 1;
    square(2, 1) = 1;
    square(3, 0) = 1;
    square(3, 1) = 1;
    LofConfig c;
    c.k = 3;
    auto m = lof_fit(square, c);
    std::vector<double> centre{0.5, 0.5};
    CHECK(std::abs(lof_score(m, centre) - brute_lof(square, centre, 3)) < 1e-9);

    auto x = random_points(80, 3, 44);
    c.k = 6;
    auto rm = lof_fit(x, c);
    auto qs = random_points(15, 3, 45);
    for (std::size_t q = 0; q < qs.rows(); ++q) {
        CHECK(std::abs(lof_score(rm, qs.row(q)) - brute_lof(x, qs.row(q), 6)) < 1e-9);
    }
}

TEST_CASE("far outlier from a tight cluster") {
    auto rng = make_rng(3);
    std::normal_distribution<double> z(0, 0.2);
    Matrix x(200, 2);
    for (std::size_t i = 0; i < 200; ++i) x(i, 0) = z(rng), x(i, 1) = z(rng);
    LofConfig c;
    auto m = lof_fit(x, c);
    std::vector<double> far{3.0, 3.0};
    CHECK(lof_score(m, far) > 1.5);
    for (double s : lof_scores(m, x)) CHECK(s > 0.0);
}

TEST_CASE("thresholding and preconditions") {
    auto x = random_points(400, 2, 8);
    LofConfig c;
    c.contamination = 0.05;
    auto fit = lof_fit_predict(x, c);
    auto flagged = std::count(fit.predictions.begin(), fit.predictions.end(), 1u);
    CHECK(flagged == 20);
    auto train_scores = lof_training_scores(fit.model);
    for (double s : train_scores) CHECK(s > 0.0);

    c.k = 400;
    CHECK_THROWS_AS(lof_fit(x, c), InvalidArgument);
    c.k = 399;
    CHECK_NOTHROW(lof_fit(x, c));
    c.k = 35;
    c.contamination = 0.55;
    CHECK_THROWS_AS(lof_fit(x, c), InvalidArgument);
}

TEST_CASE("planted far cluster is flagged") {
    Matrix x;
    std::vector<std::size_t> truth;
    testsupport::planted_outliers(600, 3, 13, x, truth);
    LofConfig c;
    c.k = 35;
    auto fit = lof_fit_predict(x, c);
    std::size_t planted = 0, caught = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        planted += truth[i];
        caught += truth[i] && fit.predictions[i];
    }
    CHECK(static_cast<double>(caught) >= 0.9 * static_cast<double>(planted));
}

TEST_CASE("scores are invariant to translation and uniform scaling") {
    auto x = random_points(150, 3, 19);
    auto qs = random_points(10, 3, 20);
    Matrix moved = x, qmoved = qs;
    auto transform = [](Matrix& m) {
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = 3.5 * m(i, j) + (j == 0 ? -7.0 : 12.0);
    };
    transform(moved);
    transform(qmoved);
    LofConfig c;
    c.k = 10;
    auto a = lof_scores(lof_fit(x, c), qs);
    auto b = lof_scores(lof_fit(moved, c), qmoved);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("model JSON round trip rebuilds the index") {
    auto x = random_points(60, 2, 2);
    LofConfig c;
    c.k = 5;
    c.contamination = 0.1;
    auto m = lof_fit(x, c);
    auto back = lof_from_json(to_json(m));
    CHECK(back.threshold == m.threshold);
    CHECK(back.lrd == m.lrd);
    CHECK(lof_scores(back, x) == lof_scores(m, x));
    auto cfg = lof_config_from_json(nlohmann::json{{"k", 100}});
    CHECK(cfg.k == 100);
    CHECK(cfg.contamination == 0.05);
}
