#include "seedsr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "seedsr/autodiff.hpp"
#include "seedsr/errors.hpp"
#include "seedsr/stf.hpp"
#include "seedsr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seedsr {

namespace {

constexpr int kDr[4] = {-1, 0, 0, 1};
constexpr int kDc[4] = {0, -1, 1, 0};

// Band goes wherever the underlying partition changes across a 4-edge; the
// outer ring always belongs to the band.
IntGrid carve(const IntGrid& part) {
    IntGrid out(part.h, part.w);
    for (int r = 0; r < part.h; ++r) {
        for (int c = 0; c < part.w; ++c) {
            if (r == 0 || c == 0 || r == part.h - 1 || c == part.w - 1) continue;
            const int id = part.at(r, c);
            bool boundary = false;
            for (int k = 0; k < 4 && !boundary; ++k) {
                boundary = part.at(r + kDr[k], c + kDc[k]) != id;
            }
            out.at(r, c) = boundary ? 0 : id;
        }
    }
    return out;
}

// Renumber nonzero ids to 1..K preserving numeric order; returns old->new.
std::map<int, int> compact_ids(IntGrid& g) {
    std::set<int> ids;
    for (int x : g.v)
        if (x > 0) ids.insert(x);
    std::map<int, int> remap;
    int next = 1;
    for (int id : ids) remap[id] = next++;
    for (int& x : g.v)
        if (x > 0) x = remap[x];
    return remap;
}

}  // namespace

IntGrid region_grow(const IntGrid& labels) {
    IntGrid owner = labels;
    std::deque<int> q;
    for (int i = 0; i < static_cast<int>(owner.v.size()); ++i) {
        if (owner.v[static_cast<size_t>(i)] > 0) q.push_back(i);
    }
    while (!q.empty()) {
        const int i = q.front();
        q.pop_front();
        const int r = i / owner.w, c = i % owner.w;
        const int id = owner.at(r, c);
        for (int k = 0; k < 4; ++k) {
            const int nr = r + kDr[k], nc = c + kDc[k];
            if (nr < 0 || nr >= owner.h || nc < 0 || nc >= owner.w) continue;
            if (owner.at(nr, nc) == 0) {
                owner.at(nr, nc) = id;
                q.push_back(nr * owner.w + nc);
            }
        }
    }
    return owner;
}

std::string check_scene_labels(const IntGrid& g) {
    const int K = g.max_id();
    if (K < 1) return "no instances";
    std::vector<int64_t> area(static_cast<size_t>(K + 1), 0);
    for (int x : g.v) {
        if (x < 0 || x > K) return "id out of range";
        ++area[static_cast<size_t>(x)];
    }
    for (int id = 1; id <= K; ++id) {
        if (area[static_cast<size_t>(id)] == 0) {
            return "id " + std::to_string(id) + " empty (not compact)";
        }
    }
    for (int c = 0; c < g.w; ++c) {
        if (g.at(0, c) != 0 || g.at(g.h - 1, c) != 0) return "border row not boundary";
    }
    for (int r = 0; r < g.h; ++r) {
        if (g.at(r, 0) != 0 || g.at(r, g.w - 1) != 0) return "border column not boundary";
    }
    // separation: distinct nonzero ids never 4-adjacent
    for (int r = 0; r < g.h; ++r) {
        for (int c = 0; c < g.w; ++c) {
            const int id = g.at(r, c);
            if (id == 0) continue;
            if (c + 1 < g.w) {
                const int o = g.at(r, c + 1);
                if (o != 0 && o != id) return "distinct ids 4-adjacent";
            }
            if (r + 1 < g.h) {
                const int o = g.at(r + 1, c);
                if (o != 0 && o != id) return "distinct ids 4-adjacent";
            }
        }
    }
    // 4-connectivity per id
    IntGrid seen(g.h, g.w);
    for (int r = 0; r < g.h; ++r) {
        for (int c = 0; c < g.w; ++c) {
            const int id = g.at(r, c);
            if (id == 0 || seen.at(r, c)) continue;
            // flood this component
            int64_t comp = 0;
            std::deque<std::pair<int, int>> q{{r, c}};
            seen.at(r, c) = 1;
            while (!q.empty()) {
                auto [cr, cc] = q.front();
                q.pop_front();
                ++comp;
                for (int k = 0; k < 4; ++k) {
                    const int nr = cr + kDr[k], nc = cc + kDc[k];
                    if (nr < 0 || nr >= g.h || nc < 0 || nc >= g.w) continue;
                    if (!seen.at(nr, nc) && g.at(nr, nc) == id) {
                        seen.at(nr, nc) = 1;
                        q.push_back({nr, nc});
                    }
                }
            }
            if (comp != area[static_cast<size_t>(id)]) {
                return "id " + std::to_string(id) + " not 4-connected";
            }
        }
    }
    // band thinness: every boundary pixel is near some instance pixel
    for (int r = 0; r < g.h; ++r) {
        for (int c = 0; c < g.w; ++c) {
            if (g.at(r, c) != 0) continue;
            bool near = false;
            for (int dr = -2; dr <= 2 && !near; ++dr) {
                for (int dc = -2; dc <= 2 && !near; ++dc) {
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= g.h || nc < 0 || nc >= g.w) continue;
                    near = g.at(nr, nc) != 0;
                }
            }
            if (!near) return "boundary blob thicker than the band";
        }
    }
    return {};
}

IntGrid carve_partition(const IntGrid& part) { return carve(part); }

namespace {

IntGrid voronoi_partition(int size, const std::vector<std::pair<double, double>>& points) {
    IntGrid part(size, size);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            double best = 1e300;
            int best_id = 1;
            for (size_t i = 0; i < points.size(); ++i) {
                const double dr = r + 0.5 - points[i].first;
                const double dc = c + 0.5 - points[i].second;
                const double d = dr * dr + dc * dc;
                if (d < best) {
                    best = d;
                    best_id = static_cast<int>(i) + 1;
                }
            }
            part.at(r, c) = best_id;
        }
    }
    return part;
}

// Consistent compaction: every partition cell must keep interior pixels after
// carving; returns false when a cell vanished (caller redraws).
bool carve_and_compact(const IntGrid& part_in, FieldPartition& out) {
    IntGrid labels = carve(part_in);
    std::set<int> carved_ids, part_ids;
    for (int x : labels.v)
        if (x > 0) carved_ids.insert(x);
    for (int x : part_in.v) part_ids.insert(x);
    if (carved_ids != part_ids) return false;
    out.part = part_in;
    const auto remap = compact_ids(out.part);
    out.labels = std::move(labels);
    for (int& x : out.labels.v)
        if (x > 0) x = remap.at(x);
    return true;
}

}  // namespace

IntGrid voronoi_labels(int size, const std::vector<std::pair<double, double>>& points) {
    if (points.empty()) throw ConfigError("voronoi_labels: need at least one point");
    IntGrid out = carve(voronoi_partition(size, points));
    compact_ids(out);
    return out;
}

FieldPartition gen_field_partition(int size, int n_seeds, Philox& rng) {
    if (n_seeds < 1) throw ConfigError("gen_field_map: n_seeds must be >= 1");
    if (size < 8) throw ConfigError("gen_field_map: size must be >= 8");
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::pair<double, double>> pts(static_cast<size_t>(n_seeds));
        for (auto& p : pts) p = {rng.uniform() * size, rng.uniform() * size};
        FieldPartition fp;
        if (!carve_and_compact(voronoi_partition(size, pts), fp)) continue;
        if (check_scene_labels(fp.labels).empty()) return fp;
    }
    throw NumericError("gen_field_map: could not draw a valid map in 64 attempts");
}

IntGrid gen_field_map(int size, int n_seeds, Philox& rng) {
    return gen_field_partition(size, n_seeds, rng).labels;
}

// ---------------------------------------------------------------------------
// edits
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<int, int>> adjacent_pairs(const IntGrid& part) {
    std::set<std::pair<int, int>> s;
    for (int r = 0; r < part.h; ++r) {
        for (int c = 0; c < part.w; ++c) {
            const int id = part.at(r, c);
            if (c + 1 < part.w) {
                const int o = part.at(r, c + 1);
                if (o != id) s.insert({std::min(id, o), std::max(id, o)});
            }
            if (r + 1 < part.h) {
                const int o = part.at(r + 1, c);
                if (o != id) s.insert({std::min(id, o), std::max(id, o)});
            }
        }
    }
    return {s.begin(), s.end()};
}

}  // namespace

ChangeResult apply_changes_partition(const IntGrid& input_part, int n_merges, int n_splits,
                                     Philox& rng) {
    ChangeResult res;
    IntGrid part = input_part;
    int next_id = part.max_id() + 1;
    std::vector<int> session_born;

    for (int m = 0; m < n_merges; ++m) {
        bool done = false;
        for (int attempt = 0; attempt < 8 && !done; ++attempt) {
            auto pairs = adjacent_pairs(part);
            if (pairs.size() < 1 || part.max_id() < 2) break;
            const auto [a, b] = pairs[rng.uniform_int(pairs.size())];
            const bool a_into_b = rng.next_u32() & 1u;
            const int from = a_into_b ? a : b;
            const int into = a_into_b ? b : a;
            IntGrid trial = part;
            for (int& x : trial.v)
                if (x == from) x = into;
            IntGrid carved = carve(trial);
            // compaction postponed; checker needs compact ids, so test a copy
            IntGrid probe = carved;
            compact_ids(probe);
            if (check_scene_labels(probe).empty()) {
                part = std::move(trial);
                res.log.push_back({Change::Type::merge, from, into});
                ++res.applied_merges;
                done = true;
            }
        }
        if (!done) break;  // partial application
    }

    for (int s = 0; s < n_splits; ++s) {
        bool done = false;
        // candidate regions, largest first so splits stay visible
        std::vector<std::pair<int64_t, int>> cands;
        {
            std::map<int, int64_t> area;
            for (int x : part.v) ++area[x];
            for (auto [id, a] : area)
                if (a >= 80) cands.push_back({a, id});
            std::sort(cands.rbegin(), cands.rend());
        }
        for (size_t ci = 0; ci < cands.size() && !done; ++ci) {
            const int id = cands[ci].second;
            double cr = 0.0, cc = 0.0;
            int64_t n = 0;
            for (int r = 0; r < part.h; ++r)
                for (int c = 0; c < part.w; ++c)
                    if (part.at(r, c) == id) {
                        cr += r;
                        cc += c;
                        ++n;
                    }
            cr /= static_cast<double>(n);
            cc /= static_cast<double>(n);
            for (int attempt = 0; attempt < 8 && !done; ++attempt) {
                const double theta = rng.uniform() * M_PI;
                const double nr = -std::sin(theta), nc = std::cos(theta);
                IntGrid trial = part;
                int64_t moved = 0;
                for (int r = 0; r < part.h; ++r)
                    for (int c = 0; c < part.w; ++c)
                        if (trial.at(r, c) == id &&
                            (r - cr) * nr + (c - cc) * nc > 0.0) {
                            trial.at(r, c) = next_id;
                            ++moved;
                        }
                if (moved < 20 || n - moved < 20) continue;
                IntGrid carved = carve(trial);
                IntGrid probe = carved;
                compact_ids(probe);
                if (check_scene_labels(probe).empty()) {
                    part = std::move(trial);
                    res.log.push_back({Change::Type::split, id, next_id});
                    session_born.push_back(next_id);
                    ++next_id;
                    ++res.applied_splits;
                    done = true;
                }
            }
        }
        if (!done) break;
    }

    res.labels = carve(part);
    const auto remap = compact_ids(res.labels);
    const int input_max = input_part.max_id();
    for (int id = 1; id <= input_max; ++id) {
        auto it = remap.find(id);
        if (it != remap.end()) res.id_map[id] = it->second;
    }
    for (int id : session_born) {
        auto it = remap.find(id);
        if (it != remap.end()) res.born_ids.push_back(it->second);
    }
    return res;
}

ChangeResult apply_changes(const IntGrid& labels, int n_merges, int n_splits, Philox& rng) {
    if (n_merges == 0 && n_splits == 0) {
        ChangeResult res;
        res.labels = labels;
        for (int id = 1; id <= labels.max_id(); ++id) res.id_map[id] = id;
        return res;
    }
    return apply_changes_partition(region_grow(labels), n_merges, n_splits, rng);
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

Palette random_palette(int n_ids, Philox& rng) {
    Palette p;
    p.colors.resize(static_cast<size_t>(n_ids));
    for (auto& c : p.colors)
        for (auto& ch : c) ch = rng.uniform(0.1, 0.9);
    return p;
}

Tensor rasterize_with(const IntGrid& labels, const Palette& pal, Philox& rng,
                      double noise_sigma) {
    if (labels.max_id() > static_cast<int>(pal.colors.size())) {
        throw ConfigError("rasterize: palette smaller than max id");
    }
    const IntGrid owner = region_grow(labels);
    Tensor img({labels.h, labels.w, 3});
    for (int r = 0; r < labels.h; ++r) {
        for (int c = 0; c < labels.w; ++c) {
            const int own = owner.at(r, c);
            const Color& base = pal.colors[static_cast<size_t>(std::max(own, 1) - 1)];
            const double dark = labels.at(r, c) == 0 ? 0.4 : 1.0;
            for (int ch = 0; ch < 3; ++ch) {
                double v = base[static_cast<size_t>(ch)] * dark;
                if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
                img.at(r, c, ch) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

Tensor rasterize(const IntGrid& labels, Philox& rng, double noise_sigma) {
    const Palette pal = random_palette(std::max(labels.max_id(), 1), rng);
    return rasterize_with(labels, pal, rng, noise_sigma);
}

ByteGrid interior_mask(const IntGrid& labels) {
    ByteGrid m(labels.h, labels.w);
    for (size_t i = 0; i < labels.v.size(); ++i) m.v[i] = labels.v[i] > 0 ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// toy encoders / decoder
// ---------------------------------------------------------------------------

void WorldConfig::validate() const {
    if (scene_px != 2 * hr_hw) throw ConfigError("world: scene_px must equal 2*hr_hw");
    if (scene_px % lr_hw != 0) throw ConfigError("world: scene_px must be divisible by lr_hw");
    if (scene_px / lr_hw < 4) throw ConfigError("world: LR pooling factor must be >= 4");
    if (min_fields < 1 || max_fields < min_fields) throw ConfigError("world: bad field range");
    if (min_merges < 0 || max_merges < min_merges) throw ConfigError("world: bad merge range");
    if (min_splits < 0 || max_splits < min_splits) throw ConfigError("world: bad split range");
}

namespace {

Tensor frozen_uniform(Philox& rng, std::vector<int> dims, double bound) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ToyEncoders::ToyEncoders(const WorldConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Philox rng(seed, 0x656e63ull);  // "enc"
    k1_ = frozen_uniform(rng, {3, 3, 3, cfg.enc_hidden}, 1.0 / std::sqrt(27.0));
    b1_ = frozen_uniform(rng, {cfg.enc_hidden}, 0.1);
    k2_ = frozen_uniform(rng, {3, 3, cfg.enc_hidden, cfg.hr_c},
                         1.0 / std::sqrt(9.0 * cfg.enc_hidden));
    b2_ = frozen_uniform(rng, {cfg.hr_c}, 0.1);
    klr_ = frozen_uniform(rng, {1, 1, 3, cfg.lr_c}, 1.0 / std::sqrt(3.0));
    blr_ = frozen_uniform(rng, {cfg.lr_c}, 0.1);
    kad_ = frozen_uniform(rng, {1, 1, cfg.lr_c, cfg.hr_c}, 1.0 / std::sqrt(1.0 * cfg.lr_c));
    bad_ = frozen_uniform(rng, {cfg.hr_c}, 0.1);
}

Tensor ToyEncoders::encode_hr(const Tensor& render) const {
    if (render.ndim() != 3 || render.dim(0) != cfg_.scene_px || render.dim(1) != cfg_.scene_px ||
        render.dim(2) != 3) {
        throw ShapeError("encode_hr: expected (" + std::to_string(cfg_.scene_px) + "," +
                         std::to_string(cfg_.scene_px) + ",3), got " + render.shape_str());
    }
    Tensor h = conv2d_value(render, k1_, &b1_, 2, 1);
    for (int64_t i = 0; i < h.numel(); ++i) h[i] = std::max(h[i], 0.0);
    Tensor e = conv2d_value(h, k2_, &b2_, 1, 1);
    for (int64_t i = 0; i < e.numel(); ++i) e[i] = std::max(e[i], 0.0);
    return e;
}

Tensor ToyEncoders::encode_lr(const Tensor& render) const {
    Tensor pooled = avgpool_to_value(render, cfg_.lr_hw);
    return conv2d_value(pooled, klr_, &blr_, 1, 0);
}

Tensor ToyEncoders::lr_probe(const Tensor& e_l) const {
    Tensor up = bilinear_resize_value(e_l, cfg_.hr_hw, cfg_.hr_hw);
    Tensor e = conv2d_value(up, kad_, &bad_, 1, 0);
    for (int64_t i = 0; i < e.numel(); ++i) e[i] = std::max(e[i], 0.0);
    return e;
}

Tensor ToyDecoder::decode(const Tensor& emb) const {
    Tensor h = conv2d_value(emb, k1, &b1, 1, 1);
    for (int64_t i = 0; i < h.numel(); ++i) h[i] = std::max(h[i], 0.0);
    // upsample the hidden features before the logit conv so the head can
    // place boundaries at scene resolution
    Tensor up = bilinear_resize_value(h, scene_px, scene_px);
    Tensor z = conv2d_value(up, k2, &b2, 1, 1);
    return z.reshaped({scene_px, scene_px});
}

namespace {

Tensor mask_to_tensor(const ByteGrid& m) {
    Tensor t({m.h, m.w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = m.v[static_cast<size_t>(i)] ? 1.0 : 0.0;
    return t;
}

}  // namespace

double decoder_pixel_accuracy(const ToyDecoder& dec,
                              const std::vector<std::pair<Tensor, ByteGrid>>& pairs) {
    int64_t good = 0, total = 0;
    for (const auto& [emb, mask] : pairs) {
        Tensor logits = dec.decode(emb);
        for (int64_t i = 0; i < logits.numel(); ++i) {
            const bool pred = logits[i] > 0.0;  // sigmoid(z) > 0.5
            good += pred == (mask.v[static_cast<size_t>(i)] != 0) ? 1 : 0;
            ++total;
        }
    }
    return total ? static_cast<double>(good) / static_cast<double>(total) : 0.0;
}

ToyDecoder train_toy_decoder(const std::vector<std::pair<Tensor, ByteGrid>>& train_pairs,
                             const std::vector<std::pair<Tensor, ByteGrid>>& heldout_pairs,
                             int scene_px, const DecoderTrainConfig& cfg) {
    if (train_pairs.size() < 200) {
        throw ConfigError("train_toy_decoder: need >= 200 training pairs, got " +
                          std::to_string(train_pairs.size()));
    }
    const int hr_c = train_pairs[0].first.dim(2);
    Philox rng(cfg.seed, 0x646563ull);  // "dec"
    ParamMap params;
    params["k1"] = frozen_uniform(rng, {3, 3, hr_c, cfg.hidden}, 1.0 / std::sqrt(9.0 * hr_c));
    params["b1"] = Tensor::zeros({cfg.hidden});
    params["k2"] = frozen_uniform(rng, {3, 3, cfg.hidden, 1}, 1.0 / std::sqrt(9.0 * cfg.hidden));
    params["b2"] = Tensor::zeros({1});
    AdamState opt;
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.weight_decay = 0.0;

    for (int step = 0; step < cfg.steps; ++step) {
        ParamMap grads;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& [emb, mask] = train_pairs[rng.uniform_int(train_pairs.size())];
            NodePtr k1 = make_leaf(params["k1"]), b1 = make_leaf(params["b1"]);
            NodePtr k2 = make_leaf(params["k2"]), b2 = make_leaf(params["b2"]);
            NodePtr h = relu(conv2d(make_const(emb), k1, b1, 1, 1));
            NodePtr up = bilinear_resize(h, scene_px, scene_px);
            NodePtr z = reshape(conv2d(up, k2, b2, 1, 1), {scene_px, scene_px});
            NodePtr loss = bce_with_logits(z, mask_to_tensor(mask));
            backward(loss);
            const std::pair<const char*, NodePtr> entries[] = {
                {"k1", k1}, {"b1", b1}, {"k2", k2}, {"b2", b2}};
            for (const auto& [key, node] : entries) {
                auto it = grads.find(key);
                if (it == grads.end()) {
                    Tensor g = node->grad;
                    g *= 1.0 / cfg.batch;
                    grads.emplace(key, std::move(g));
                } else {
                    for (int64_t i = 0; i < it->second.numel(); ++i) {
                        it->second[i] += node->grad[i] / cfg.batch;
                    }
                }
            }
        }
        adamw_update(params, opt, grads, tc);
    }

    ToyDecoder dec{scene_px, params["k1"], params["b1"], params["k2"], params["b2"]};
    const double acc = decoder_pixel_accuracy(dec, heldout_pairs);
    if (acc < cfg.accuracy_gate) {
        throw NumericError("train_toy_decoder: held-out pixel accuracy " + std::to_string(acc) +
                           " below gate " + std::to_string(cfg.accuracy_gate) +
                           "; regenerate the dataset with a different seed");
    }
    return dec;
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

FieldScene make_scene(const WorldConfig& cfg, uint64_t dataset_seed, int scene_id) {
    cfg.validate();
    Philox rng(dataset_seed, mix64(0x7363656eull, static_cast<uint64_t>(scene_id)));
    FieldScene sc;
    sc.size = cfg.scene_px;
    const int n_fields =
        cfg.min_fields + static_cast<int>(rng.uniform_int(
                             static_cast<uint64_t>(cfg.max_fields - cfg.min_fields + 1)));
    FieldPartition fp = gen_field_partition(cfg.scene_px, n_fields, rng);
    sc.labels_ref = fp.labels;
    const int n_merges =
        cfg.min_merges + static_cast<int>(rng.uniform_int(
                             static_cast<uint64_t>(cfg.max_merges - cfg.min_merges + 1)));
    const int n_splits =
        cfg.min_splits + static_cast<int>(rng.uniform_int(
                             static_cast<uint64_t>(cfg.max_splits - cfg.min_splits + 1)));
    ChangeResult cr = n_merges == 0 && n_splits == 0
                          ? apply_changes(sc.labels_ref, 0, 0, rng)
                          : apply_changes_partition(fp.part, n_merges, n_splits, rng);
    sc.labels_tgt = std::move(cr.labels);
    sc.change_log = std::move(cr.log);
    sc.n_merges = cr.applied_merges;
    sc.n_splits = cr.applied_splits;

    const Palette pal_ref = random_palette(sc.labels_ref.max_id(), rng);
    Palette pal_tgt;
    pal_tgt.colors.resize(static_cast<size_t>(sc.labels_tgt.max_id()));
    std::map<int, int> tgt_to_ref;
    for (auto [ref_id, tgt_id] : cr.id_map) tgt_to_ref[tgt_id] = ref_id;
    for (int tgt_id = 1; tgt_id <= sc.labels_tgt.max_id(); ++tgt_id) {
        auto it = tgt_to_ref.find(tgt_id);
        Color& col = pal_tgt.colors[static_cast<size_t>(tgt_id - 1)];
        if (it != tgt_to_ref.end()) {
            // surviving field: inherit with small drift (temporal style gap)
            const Color& base = pal_ref.colors[static_cast<size_t>(it->second - 1)];
            for (int ch = 0; ch < 3; ++ch) {
                col[static_cast<size_t>(ch)] =
                    std::clamp(base[static_cast<size_t>(ch)] + cfg.color_drift * rng.normal(),
                               0.05, 0.95);
            }
        } else {
            for (auto& ch : col) ch = rng.uniform(0.1, 0.9);
        }
    }
    sc.render_ref = rasterize_with(sc.labels_ref, pal_ref, rng, cfg.noise_sigma);
    sc.render_tgt = rasterize_with(sc.labels_tgt, pal_tgt, rng, cfg.noise_sigma);
    return sc;
}

std::vector<const SceneRecord*> Dataset::of_split(const std::string& split) const {
    std::vector<const SceneRecord*> out;
    for (const auto& s : scenes)
        if (s.split == split) out.push_back(&s);
    return out;
}

Dataset build_dataset(int n_scenes, const WorldConfig& cfg, uint64_t seed) {
    cfg.validate();
    Dataset ds;
    ds.cfg = cfg;
    ds.seed = seed;
    ds.encoders = ToyEncoders(cfg, cfg.encoder_seed);
    ds.scenes.reserve(static_cast<size_t>(n_scenes));
    for (int id = 0; id < n_scenes; ++id) {
        SceneRecord rec;
        rec.id = id;
        const uint64_t h = mix64(static_cast<uint64_t>(id)) % 10;
        rec.split = h < 8 ? "train" : (h == 8 ? "val" : "test");
        rec.scene = make_scene(cfg, seed, id);
        rec.e_r = ds.encoders.encode_hr(rec.scene.render_ref);
        rec.e_h = ds.encoders.encode_hr(rec.scene.render_tgt);
        rec.e_l = ds.encoders.encode_lr(rec.scene.render_tgt);
        ds.scenes.push_back(std::move(rec));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// dataset persistence
// ---------------------------------------------------------------------------

namespace {

Tensor grid_to_tensor(const IntGrid& g) {
    Tensor t({g.h, g.w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(g.v[static_cast<size_t>(i)]);
    return t;
}

IntGrid tensor_to_grid(const Tensor& t) {
    IntGrid g(t.dim(0), t.dim(1));
    for (int64_t i = 0; i < t.numel(); ++i) g.v[static_cast<size_t>(i)] = static_cast<int>(t[i]);
    return g;
}

json world_cfg_json(const WorldConfig& c) {
    return json{{"scene_px", c.scene_px},       {"hr_hw", c.hr_hw},
                {"hr_c", c.hr_c},               {"lr_hw", c.lr_hw},
                {"lr_c", c.lr_c},               {"enc_hidden", c.enc_hidden},
                {"min_fields", c.min_fields},   {"max_fields", c.max_fields},
                {"min_merges", c.min_merges},   {"max_merges", c.max_merges},
                {"min_splits", c.min_splits},   {"max_splits", c.max_splits},
                {"noise_sigma", c.noise_sigma}, {"color_drift", c.color_drift},
                {"encoder_seed", c.encoder_seed}};
}

WorldConfig world_cfg_from_json(const json& j) {
    WorldConfig c;
    c.scene_px = j.at("scene_px");
    c.hr_hw = j.at("hr_hw");
    c.hr_c = j.at("hr_c");
    c.lr_hw = j.at("lr_hw");
    c.lr_c = j.at("lr_c");
    c.enc_hidden = j.at("enc_hidden");
    c.min_fields = j.at("min_fields");
    c.max_fields = j.at("max_fields");
    c.min_merges = j.at("min_merges");
    c.max_merges = j.at("max_merges");
    c.min_splits = j.at("min_splits");
    c.max_splits = j.at("max_splits");
    c.noise_sigma = j.at("noise_sigma");
    c.color_drift = j.at("color_drift");
    c.encoder_seed = j.at("encoder_seed");
    return c;
}

std::string scene_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05d", id);
    return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["seed"] = ds.seed;
    manifest["world"] = world_cfg_json(ds.cfg);
    json scenes = json::array();
    for (const auto& rec : ds.scenes) {
        json edits = json::array();
        for (const auto& ch : rec.scene.change_log) {
            edits.push_back({{"type", ch.type == Change::Type::merge ? "merge" : "split"},
                             {"from", ch.from_id},
                             {"into", ch.into_id}});
        }
        scenes.push_back({{"id", rec.id},
                          {"split", rec.split},
                          {"n_merges", rec.scene.n_merges},
                          {"n_splits", rec.scene.n_splits},
                          {"edits", edits}});
        const fs::path sdir = fs::path(dir) / scene_dir_name(rec.id);
        fs::create_directories(sdir);
        save_stf((sdir / "labels_ref.stf").string(), grid_to_tensor(rec.scene.labels_ref));
        save_stf((sdir / "labels_tgt.stf").string(), grid_to_tensor(rec.scene.labels_tgt));
        save_stf((sdir / "render_ref.stf").string(), rec.scene.render_ref);
        save_stf((sdir / "render_tgt.stf").string(), rec.scene.render_tgt);
        save_stf((sdir / "e_r.stf").string(), rec.e_r);
        save_stf((sdir / "e_h.stf").string(), rec.e_h);
        save_stf((sdir / "e_l.stf").string(), rec.e_l);
    }
    manifest["scenes"] = scenes;
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream f(mpath);
    if (!f) {
        throw MissingArtifactError("dataset manifest not found at " + mpath.string() +
                                   "; run the gen-data subcommand first");
    }
    json manifest = json::parse(f);
    Dataset ds;
    ds.seed = manifest.at("seed");
    ds.cfg = world_cfg_from_json(manifest.at("world"));
    ds.encoders = ToyEncoders(ds.cfg, ds.cfg.encoder_seed);
    for (const auto& js : manifest.at("scenes")) {
        SceneRecord rec;
        rec.id = js.at("id");
        rec.split = js.at("split");
        const fs::path sdir = fs::path(dir) / scene_dir_name(rec.id);
        rec.scene.size = ds.cfg.scene_px;
        rec.scene.labels_ref = tensor_to_grid(load_stf((sdir / "labels_ref.stf").string()));
        rec.scene.labels_tgt = tensor_to_grid(load_stf((sdir / "labels_tgt.stf").string()));
        rec.scene.render_ref = load_stf((sdir / "render_ref.stf").string());
        rec.scene.render_tgt = load_stf((sdir / "render_tgt.stf").string());
        rec.scene.n_merges = js.at("n_merges");
        rec.scene.n_splits = js.at("n_splits");
        for (const auto& je : js.at("edits")) {
            Change ch;
            ch.type = je.at("type") == "merge" ? Change::Type::merge : Change::Type::split;
            ch.from_id = je.at("from");
            ch.into_id = je.at("into");
            rec.scene.change_log.push_back(ch);
        }
        rec.e_r = load_stf((sdir / "e_r.stf").string());
        rec.e_h = load_stf((sdir / "e_h.stf").string());
        rec.e_l = load_stf((sdir / "e_l.stf").string());
        ds.scenes.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace seedsr
