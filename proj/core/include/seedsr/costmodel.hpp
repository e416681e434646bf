#pragma once

#include <cstdint>
#include <string>

namespace seedsr {

// Dominant attention score-matrix costs: a 32-bit score matrix per head for
// memory, and the QK^T multiply-adds for FLOPs. Activation terms outside the
// score matrices are intentionally out of model.
struct AttentionCost {
    int64_t tokens = 0;
    int heads = 0;
    int head_dim = 0;
    int64_t score_memory_bytes = 0;
    int64_t score_flops = 0;
};

AttentionCost attention_cost(int spatial_hw, int heads, int head_dim);

// Two-column table comparing a bottleneck-sized attention against a
// full-resolution one.
std::string cost_table(int hw_small, int hw_large, int heads, int head_dim);

}  // namespace seedsr
