#include "doctest.h"
#include "seedsr/costmodel.hpp"
#include "seedsr/errors.hpp"

using namespace seedsr;

TEST_CASE("published cost cells under heads=16 head_dim=64") {
    const AttentionCost a = attention_cost(7, 16, 64);
    CHECK(a.tokens == 49);
    CHECK(a.score_memory_bytes == 153664);          // ~0.15 MB
    CHECK(a.score_flops == 4917248);                // ~5 MFLOPs

    const AttentionCost b = attention_cost(120, 16, 64);
    CHECK(b.tokens == 14400);
    CHECK(b.score_memory_bytes == 13271040000LL);   // ~13.2e3 MB
    CHECK(b.score_flops == 424673280000LL);         // ~423e3 MFLOPs

    // each within 5% of the published cells
    CHECK(std::abs(a.score_memory_bytes / 1e6 - 0.15) / 0.15 < 0.05);
    CHECK(std::abs(a.score_flops / 1e6 - 5.0) / 5.0 < 0.05);
    CHECK(std::abs(b.score_memory_bytes / 1e6 - 13.2e3) / 13.2e3 < 0.05);
    CHECK(std::abs(b.score_flops / 1e6 - 423e3) / 423e3 < 0.05);
}

TEST_CASE("FLOP ratio is exactly (tokens_large/tokens_small)^2") {
    const AttentionCost a = attention_cost(7, 16, 64);
    const AttentionCost b = attention_cost(120, 16, 64);
    // exact rational identity: flops_b / flops_a == (14400/49)^2
    CHECK(b.score_flops * 49LL * 49LL == a.score_flops * 14400LL * 14400LL);
    // matches the published 423 GFLOPs / 5 MFLOPs ratio within 3%
    const double ratio = static_cast<double>(b.score_flops) / static_cast<double>(a.score_flops);
    CHECK(std::abs(ratio - 423e9 / 5e6) / (423e9 / 5e6) < 0.03);
}

TEST_CASE("degenerate single-token case") {
    const AttentionCost c = attention_cost(1, 3, 5);
    CHECK(c.tokens == 1);
    CHECK(c.score_memory_bytes == 4 * 3);
    CHECK(c.score_flops == 2 * 5 * 3);
}

TEST_CASE("cost is monotone in every argument") {
    const AttentionCost base = attention_cost(9, 4, 8);
    CHECK(attention_cost(10, 4, 8).score_memory_bytes > base.score_memory_bytes);
    CHECK(attention_cost(9, 5, 8).score_memory_bytes > base.score_memory_bytes);
    CHECK(attention_cost(10, 4, 8).score_flops > base.score_flops);
    CHECK(attention_cost(9, 5, 8).score_flops > base.score_flops);
    CHECK(attention_cost(9, 4, 9).score_flops > base.score_flops);
    CHECK_THROWS_AS(attention_cost(0, 4, 8), ConfigError);
}
