#pragma once

#include <cstdint>
#include <vector>

namespace seedsr {

// Dense integer label grid (row-major); 0 means background/boundary.
struct IntGrid {
    int h = 0, w = 0;
    std::vector<int> v;

    IntGrid() = default;
    IntGrid(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

    int& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    int at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    int64_t size() const { return static_cast<int64_t>(v.size()); }
    bool same_shape(const IntGrid& o) const { return h == o.h && w == o.w; }
    int max_id() const {
        int m = 0;
        for (int x : v) m = x > m ? x : m;
        return m;
    }
};

struct ByteGrid {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    ByteGrid() = default;
    ByteGrid(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

    uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    int64_t size() const { return static_cast<int64_t>(v.size()); }
    bool same_shape(const ByteGrid& o) const { return h == o.h && w == o.w; }
    int64_t count() const {
        int64_t n = 0;
        for (uint8_t x : v) n += x ? 1 : 0;
        return n;
    }
};

}  // namespace seedsr
