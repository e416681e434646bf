#include "seedsr/costmodel.hpp"

#include <sstream>

#include "seedsr/errors.hpp"

namespace seedsr {

AttentionCost attention_cost(int spatial_hw, int heads, int head_dim) {
    if (spatial_hw < 1 || heads < 1 || head_dim < 1) {
        throw ConfigError("attention_cost: all arguments must be positive");
    }
    AttentionCost c;
    c.tokens = static_cast<int64_t>(spatial_hw) * spatial_hw;
    c.heads = heads;
    c.head_dim = head_dim;
    c.score_memory_bytes = 4 * static_cast<int64_t>(heads) * c.tokens * c.tokens;
    c.score_flops = 2 * static_cast<int64_t>(head_dim) * heads * c.tokens * c.tokens;
    return c;
}

namespace {

std::string human_bytes(int64_t b) {
    std::ostringstream os;
    os.precision(3);
    if (b >= 1000000000) {
        os << static_cast<double>(b) / 1e6 << " MB (" << static_cast<double>(b) / 1e9 << " GB)";
    } else if (b >= 1000000) {
        os << static_cast<double>(b) / 1e6 << " MB";
    } else {
        os << static_cast<double>(b) / 1e3 << " kB";
    }
    return os.str();
}

std::string human_flops(int64_t f) {
    std::ostringstream os;
    os.precision(4);
    if (f >= 1000000000) {
        os << static_cast<double>(f) / 1e9 << " GFLOPs";
    } else {
        os << static_cast<double>(f) / 1e6 << " MFLOPs";
    }
    return os.str();
}

}  // namespace

std::string cost_table(int hw_small, int hw_large, int heads, int head_dim) {
    const AttentionCost a = attention_cost(hw_small, heads, head_dim);
    const AttentionCost b = attention_cost(hw_large, heads, head_dim);
    std::ostringstream os;
    os << "attention cost model (heads=" << heads << ", head_dim=" << head_dim << ")\n";
    os << "metric                "
       << "| " << hw_small << "x" << hw_small << "              | " << hw_large << "x" << hw_large
       << "\n";
    os << "tokens per sample     | " << a.tokens << "               | " << b.tokens << "\n";
    os << "attention score memory| " << human_bytes(a.score_memory_bytes) << "         | "
       << human_bytes(b.score_memory_bytes) << "\n";
    os << "QK^T FLOPs            | " << human_flops(a.score_flops) << "    | "
       << human_flops(b.score_flops) << "\n";
    os << "total memory          | (out of model: activation terms beyond score matrices are not "
          "counted)\n";
    return os.str();
}

}  // namespace seedsr
