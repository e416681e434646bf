#include "seedsr/segpost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include "seedsr/errors.hpp"

namespace seedsr {

Tensor ensemble_mean(const std::vector<Tensor>& logit_grids) {
    if (logit_grids.empty()) throw ConfigError("ensemble_mean: empty grid list");
    Tensor out = logit_grids[0];
    for (size_t i = 1; i < logit_grids.size(); ++i) {
        require_same_dims(out, logit_grids[i], "ensemble_mean");
        out += logit_grids[i];
    }
    out *= 1.0 / static_cast<double>(logit_grids.size());
    return out;
}

ByteGrid semantic_mask(const Tensor& logits, double threshold) {
    if (logits.ndim() != 2) {
        throw ShapeError("semantic_mask: expected a 2-D logit grid, got " + logits.shape_str());
    }
    ByteGrid m(logits.dim(0), logits.dim(1));
    for (int64_t i = 0; i < logits.numel(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        m.v[static_cast<size_t>(i)] = p > threshold ? 1 : 0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// exact EDT (Felzenszwalb & Huttenlocher), squared distances
// ---------------------------------------------------------------------------

namespace {

void dt1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    std::vector<int> v(static_cast<size_t>(n));
    std::vector<double> z(static_cast<size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[static_cast<size_t>(k)];
            s = ((f[static_cast<size_t>(q)] + q * q) - (f[static_cast<size_t>(p)] + p * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[static_cast<size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = s;
        z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(k) + 1] < q) ++k;
        const int p = v[static_cast<size_t>(k)];
        d[static_cast<size_t>(q)] =
            static_cast<double>(q - p) * (q - p) + f[static_cast<size_t>(p)];
    }
}

}  // namespace

std::vector<double> distance_transform(const ByteGrid& mask) {
    const int h = mask.h, w = mask.w;
    // pad by one: the outside ring is background, so distances stay finite
    const int H = h + 2, W = w + 2;
    std::vector<double> g(static_cast<size_t>(H) * W, 0.0);
    const double inf = 1e18;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            g[static_cast<size_t>(r + 1) * W + (c + 1)] = mask.at(r, c) ? inf : 0.0;

    std::vector<double> col(static_cast<size_t>(H)), dcol(static_cast<size_t>(H));
    for (int c = 0; c < W; ++c) {
        for (int r = 0; r < H; ++r) col[static_cast<size_t>(r)] = g[static_cast<size_t>(r) * W + c];
        dt1d(col, dcol, H);
        for (int r = 0; r < H; ++r) g[static_cast<size_t>(r) * W + c] = dcol[static_cast<size_t>(r)];
    }
    std::vector<double> row(static_cast<size_t>(W)), drow(static_cast<size_t>(W));
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) row[static_cast<size_t>(c)] = g[static_cast<size_t>(r) * W + c];
        dt1d(row, drow, W);
        for (int c = 0; c < W; ++c) g[static_cast<size_t>(r) * W + c] = drow[static_cast<size_t>(c)];
    }
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            out[static_cast<size_t>(r) * w + c] =
                std::sqrt(g[static_cast<size_t>(r + 1) * W + (c + 1)]);
    return out;
}

// ---------------------------------------------------------------------------
// watershed
// ---------------------------------------------------------------------------

namespace {

struct FloodEntry {
    double dist;
    int64_t idx;
    uint64_t age;
    int label;
    bool operator<(const FloodEntry& o) const {
        // max-heap on distance; ties to smaller index, then earlier insertion
        if (dist != o.dist) return dist < o.dist;
        if (idx != o.idx) return idx > o.idx;
        return age > o.age;
    }
};

}  // namespace

IntGrid watershed_instances(const ByteGrid& semantic, double min_marker_dist) {
    const int h = semantic.h, w = semantic.w;
    IntGrid out(h, w);
    if (semantic.count() == 0) return out;
    const std::vector<double> dist = distance_transform(semantic);

    // 8-neighborhood maxima (non-strict, to cover plateaus)
    std::vector<int64_t> cands;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!semantic.at(r, c)) continue;
            const double d0 = dist[static_cast<size_t>(r) * w + c];
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr) {
                for (int dc = -1; dc <= 1 && is_max; ++dc) {
                    if (!dr && !dc) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    if (!semantic.at(nr, nc)) continue;
                    is_max = dist[static_cast<size_t>(nr) * w + nc] <= d0;
                }
            }
            if (is_max) cands.push_back(static_cast<int64_t>(r) * w + c);
        }
    }
    // greedy thinning by (distance desc, scan order)
    std::stable_sort(cands.begin(), cands.end(), [&](int64_t a, int64_t b) {
        const double da = dist[static_cast<size_t>(a)], db = dist[static_cast<size_t>(b)];
        if (da != db) return da > db;
        return a < b;
    });
    std::vector<int64_t> markers;
    const double min_sq = min_marker_dist * min_marker_dist;
    for (int64_t cand : cands) {
        const int cr = static_cast<int>(cand / w), cc = static_cast<int>(cand % w);
        bool ok = true;
        for (int64_t m : markers) {
            const int mr = static_cast<int>(m / w), mc = static_cast<int>(m % w);
            const double d2 = static_cast<double>(cr - mr) * (cr - mr) +
                              static_cast<double>(cc - mc) * (cc - mc);
            if (d2 < min_sq) {
                ok = false;
                break;
            }
        }
        if (ok) markers.push_back(cand);
    }
    // a nearby component's marker must not orphan a small component: every
    // 4-connected mask component keeps its best candidate as a marker
    {
        IntGrid comp(h, w);
        int n_comp = 0;
        constexpr int dr4[4] = {-1, 0, 0, 1};
        constexpr int dc4[4] = {0, -1, 1, 0};
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                if (!semantic.at(r, c) || comp.at(r, c)) continue;
                ++n_comp;
                std::vector<int64_t> stack{static_cast<int64_t>(r) * w + c};
                comp.at(r, c) = n_comp;
                while (!stack.empty()) {
                    const int64_t i = stack.back();
                    stack.pop_back();
                    const int ir = static_cast<int>(i / w), ic = static_cast<int>(i % w);
                    for (int k = 0; k < 4; ++k) {
                        const int nr = ir + dr4[k], nc = ic + dc4[k];
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        if (semantic.at(nr, nc) && !comp.at(nr, nc)) {
                            comp.at(nr, nc) = n_comp;
                            stack.push_back(static_cast<int64_t>(nr) * w + nc);
                        }
                    }
                }
            }
        }
        std::vector<char> has_marker(static_cast<size_t>(n_comp + 1), 0);
        for (int64_t m : markers) has_marker[static_cast<size_t>(comp.v[static_cast<size_t>(m)])] = 1;
        for (int64_t cand : cands) {
            const int cid = comp.v[static_cast<size_t>(cand)];
            if (!has_marker[static_cast<size_t>(cid)]) {
                markers.push_back(cand);
                has_marker[static_cast<size_t>(cid)] = 1;
            }
        }
    }

    std::priority_queue<FloodEntry> pq;
    uint64_t age = 0;
    int next_label = 1;
    for (int64_t m : markers) {
        out.v[static_cast<size_t>(m)] = next_label;
        pq.push({dist[static_cast<size_t>(m)], m, age++, next_label});
        ++next_label;
    }
    constexpr int kDr[4] = {-1, 0, 0, 1};
    constexpr int kDc[4] = {0, -1, 1, 0};
    while (!pq.empty()) {
        const FloodEntry e = pq.top();
        pq.pop();
        const int r = static_cast<int>(e.idx / w), c = static_cast<int>(e.idx % w);
        for (int k = 0; k < 4; ++k) {
            const int nr = r + kDr[k], nc = c + kDc[k];
            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            if (!semantic.at(nr, nc) || out.at(nr, nc) != 0) continue;
            out.at(nr, nc) = e.label;
            const int64_t ni = static_cast<int64_t>(nr) * w + nc;
            pq.push({dist[static_cast<size_t>(ni)], ni, age++, e.label});
        }
    }

    // canonical contiguous ids by first scan-order appearance
    std::vector<int> remap(static_cast<size_t>(next_label), 0);
    int next = 1;
    for (int& x : out.v) {
        if (x == 0) continue;
        if (remap[static_cast<size_t>(x)] == 0) remap[static_cast<size_t>(x)] = next++;
        x = remap[static_cast<size_t>(x)];
    }
    return out;
}

SegmentationResult segment(const std::vector<Tensor>& logit_grids, double threshold,
                           double min_marker_dist) {
    SegmentationResult res;
    res.logits = ensemble_mean(logit_grids);
    res.semantic = semantic_mask(res.logits, threshold);
    res.instances = watershed_instances(res.semantic, min_marker_dist);
    return res;
}

void write_pgm(const std::string& path, const ByteGrid& mask) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("write_pgm: cannot open " + path);
    f << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(mask.w));
    for (int r = 0; r < mask.h; ++r) {
        for (int c = 0; c < mask.w; ++c) row[static_cast<size_t>(c)] = mask.at(r, c) ? 255 : 0;
        f.write(reinterpret_cast<const char*>(row.data()), mask.w);
    }
}

void write_instance_csv(const std::string& path, const IntGrid& instances) {
    std::ofstream f(path);
    if (!f) throw MissingArtifactError("write_instance_csv: cannot open " + path);
    for (int r = 0; r < instances.h; ++r) {
        for (int c = 0; c < instances.w; ++c) {
            if (c) f << ",";
            f << instances.at(r, c);
        }
        f << "\n";
    }
}

}  // namespace seedsr
