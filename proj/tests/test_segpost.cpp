#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "seedsr/rng.hpp"
#include "seedsr/segpost.hpp"
#include "seedsr/synthetic.hpp"

using namespace seedsr;

TEST_CASE("ensemble_mean basics") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(ensemble_mean({a})[2] == doctest::Approx(3.0));

    Tensor neg = a;
    neg *= -1.0;
    Tensor z = ensemble_mean({a, neg});
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(0.0));

    // linearity: mean(x_i + c) == mean(x_i) + c
    Tensor b({2, 2}, {0.5, -1.5, 2.0, 0.0});
    Tensor ac = a, bc = b;
    for (int64_t i = 0; i < 4; ++i) {
        ac[i] += 2.5;
        bc[i] += 2.5;
    }
    Tensor m = ensemble_mean({a, b});
    Tensor mc = ensemble_mean({ac, bc});
    for (int64_t i = 0; i < 4; ++i) CHECK(mc[i] == doctest::Approx(m[i] + 2.5));

    CHECK_THROWS_AS(ensemble_mean({}), ConfigError);
}

TEST_CASE("ensemble_mean is order invariant") {
    Philox rng(61);
    Tensor a = rng.normal_tensor({4, 4});
    Tensor b = rng.normal_tensor({4, 4});
    Tensor c = rng.normal_tensor({4, 4});
    Tensor m1 = ensemble_mean({a, b, c});
    Tensor m2 = ensemble_mean({c, a, b});
    for (int64_t i = 0; i < m1.numel(); ++i) CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-15));
}

TEST_CASE("semantic_mask threshold rules") {
    Tensor logits({1, 3}, {-50.0, 0.0, 3.0});
    ByteGrid m = semantic_mask(logits, 0.5);
    CHECK(m.v[0] == 0);
    CHECK(m.v[1] == 0);  // sigmoid(0) = 0.5 is excluded by the strict rule
    CHECK(m.v[2] == 1);

    // monotonicity: raising the threshold never adds pixels
    Philox rng(62);
    for (int t = 0; t < 50; ++t) {
        Tensor g = rng.normal_tensor({8, 8});
        const double t1 = rng.uniform(0.05, 0.9);
        const double t2 = t1 + rng.uniform(0.0, 0.95 - t1);
        ByteGrid lo = semantic_mask(g, t1);
        ByteGrid hi = semantic_mask(g, t2);
        for (size_t i = 0; i < lo.v.size(); ++i) {
            if (hi.v[i]) CHECK(lo.v[i]);
        }
    }
}

TEST_CASE("distance transform against brute force") {
    Philox rng(63);
    for (int trial = 0; trial < 10; ++trial) {
        ByteGrid m(9, 11);
        for (auto& v : m.v) v = rng.uniform() < 0.7 ? 1 : 0;
        const auto dt = distance_transform(m);
        for (int r = 0; r < m.h; ++r) {
            for (int c = 0; c < m.w; ++c) {
                if (!m.at(r, c)) {
                    CHECK(dt[static_cast<size_t>(r) * m.w + c] == doctest::Approx(0.0));
                    continue;
                }
                // nearest background pixel, with the outside ring as background
                double best = 1e300;
                for (int rr = -1; rr <= m.h; ++rr)
                    for (int cc = -1; cc <= m.w; ++cc) {
                        const bool outside = rr < 0 || rr >= m.h || cc < 0 || cc >= m.w;
                        if (!outside && m.at(rr, cc)) continue;
                        const double d = std::hypot(rr - r, cc - c);
                        best = std::min(best, d);
                    }
                CHECK(dt[static_cast<size_t>(r) * m.w + c] == doctest::Approx(best).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("watershed on an empty mask yields no instances") {
    ByteGrid empty(16, 16);
    IntGrid inst = watershed_instances(empty, 5.0);
    CHECK(inst.max_id() == 0);
}

TEST_CASE("two separated squares become exactly two exact instances") {
    // 10x10 squares with a 3 px background gap
    ByteGrid m(12, 23);
    for (int r = 1; r < 11; ++r) {
        for (int c = 0; c < 10; ++c) m.at(r, c) = 1;
        for (int c = 13; c < 23; ++c) m.at(r, c) = 1;
    }
    IntGrid inst = watershed_instances(m, 5.0);
    CHECK(inst.max_id() == 2);
    std::set<int> left, right;
    for (int r = 0; r < 12; ++r) {
        for (int c = 0; c < 23; ++c) {
            const int id = inst.at(r, c);
            if (m.at(r, c)) {
                CHECK(id > 0);
                (c < 10 ? left : right).insert(id);
            } else {
                CHECK(id == 0);
            }
        }
    }
    CHECK(left.size() == 1);
    CHECK(right.size() == 1);
    CHECK(*left.begin() != *right.begin());
}

TEST_CASE("a single convex blob is one instance") {
    ByteGrid m(20, 20);
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c)
            if (std::hypot(r - 9.5, c - 9.5) < 7.0) m.at(r, c) = 1;
    IntGrid inst = watershed_instances(m, 5.0);
    CHECK(inst.max_id() == 1);
    for (int64_t i = 0; i < inst.size(); ++i) {
        CHECK((inst.v[static_cast<size_t>(i)] > 0) == (m.v[static_cast<size_t>(i)] != 0));
    }
}

TEST_CASE("watershed partitions the mask and is deterministic (500 random scenes)") {
    for (int t = 0; t < 500; ++t) {
        Philox rng(7000 + static_cast<uint64_t>(t));
        IntGrid labels = gen_field_map(32, 2 + static_cast<int>(rng.uniform_int(5)), rng);
        ByteGrid mask = interior_mask(labels);
        IntGrid a = watershed_instances(mask, 4.0);
        IntGrid b = watershed_instances(mask, 4.0);
        CHECK(a.v == b.v);
        // union of instances == mask; instances disjoint by construction
        for (int64_t i = 0; i < a.size(); ++i) {
            CHECK((a.v[static_cast<size_t>(i)] > 0) == (mask.v[static_cast<size_t>(i)] != 0));
        }
        // ids contiguous
        const int K = a.max_id();
        std::vector<bool> present(static_cast<size_t>(K + 1), false);
        for (int x : a.v) present[static_cast<size_t>(x)] = true;
        for (int id = 1; id <= K; ++id) CHECK(present[static_cast<size_t>(id)]);
    }
}

TEST_CASE("pgm and csv exports") {
    ByteGrid m(3, 4);
    m.at(1, 2) = 1;
    const std::string dir = "/tmp/seedsr_test_export";
    std::filesystem::create_directories(dir);
    write_pgm(dir + "/m.pgm", m);
    std::ifstream f(dir + "/m.pgm", std::ios::binary);
    std::string header;
    std::getline(f, header);
    CHECK(header == "P5");

    IntGrid g(2, 2);
    g.at(0, 1) = 3;
    write_instance_csv(dir + "/g.csv", g);
    std::ifstream cf(dir + "/g.csv");
    std::string line;
    std::getline(cf, line);
    CHECK(line == "0,3");
}
