#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "seedsr/metrics.hpp"
#include "seedsr/synthetic.hpp"

using namespace seedsr;

TEST_CASE("single-seed map is one instance covering all non-border pixels") {
    Philox rng(1);
    IntGrid g = gen_field_map(32, 1, rng);
    CHECK(g.max_id() == 1);
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            const bool border = r == 0 || c == 0 || r == 31 || c == 31;
            CHECK(g.at(r, c) == (border ? 0 : 1));
        }
    }
}

TEST_CASE("mirrored seeds give a symmetric bisector band") {
    const int size = 40;
    IntGrid g = voronoi_labels(size, {{20.0, 12.0}, {20.0, 28.0}});
    CHECK(g.max_id() == 2);
    int64_t n1 = 0, n2 = 0;
    for (int x : g.v) {
        if (x == 1) ++n1;
        if (x == 2) ++n2;
    }
    CHECK(std::abs(n1 - n2) <= size);
    // band sits along the vertical bisector column
    for (int r = 2; r < size - 2; ++r) {
        CHECK(g.at(r, 5) == 1);
        CHECK(g.at(r, size - 6) == 2);
    }
}

TEST_CASE("generated maps satisfy the scene invariants") {
    for (int t = 0; t < 50; ++t) {
        Philox rng(100 + static_cast<uint64_t>(t));
        IntGrid g = gen_field_map(64, 4 + static_cast<int>(rng.uniform_int(10)), rng);
        CHECK(check_scene_labels(g).empty());
    }
}

TEST_CASE("apply_changes basics") {
    Philox rng(7);
    IntGrid g = gen_field_map(64, 10, rng);
    const int k = g.max_id();

    SUBCASE("no-op request returns identical labels") {
        Philox r2(8);
        ChangeResult cr = apply_changes(g, 0, 0, r2);
        CHECK(cr.labels.v == g.v);
        CHECK(cr.log.empty());
        CHECK(cr.applied_merges == 0);
        CHECK(cr.applied_splits == 0);
    }

    SUBCASE("one merge drops the instance count by exactly one") {
        Philox r2(9);
        ChangeResult cr = apply_changes(g, 1, 0, r2);
        REQUIRE(cr.applied_merges == 1);
        CHECK(cr.labels.max_id() == k - 1);
        CHECK(check_scene_labels(cr.labels).empty());
    }

    SUBCASE("one split raises the instance count by exactly one") {
        Philox r2(10);
        ChangeResult cr = apply_changes(g, 0, 1, r2);
        REQUIRE(cr.applied_splits == 1);
        CHECK(cr.labels.max_id() == k + 1);
        CHECK(check_scene_labels(cr.labels).empty());
    }

    SUBCASE("excess requests are partially applied, never fatal") {
        Philox r2(11);
        ChangeResult cr = apply_changes(g, 100, 0, r2);
        CHECK(cr.applied_merges < 100);
        CHECK(cr.labels.max_id() >= 1);
        CHECK(check_scene_labels(cr.labels).empty());
    }

    SUBCASE("edit sequences preserve the invariants and the id map is consistent") {
        Philox r2(12);
        ChangeResult cr = apply_changes(g, 2, 1, r2);
        CHECK(check_scene_labels(cr.labels).empty());
        // surviving ids in the map actually exist in the output
        for (auto [ref_id, tgt_id] : cr.id_map) {
            CHECK(ref_id >= 1);
            CHECK(ref_id <= k);
            bool found = false;
            for (int x : cr.labels.v) found = found || x == tgt_id;
            CHECK(found);
        }
        for (int born : cr.born_ids) {
            bool found = false;
            for (int x : cr.labels.v) found = found || x == born;
            CHECK(found);
        }
    }
}

TEST_CASE("rasterize: noiseless renders are piecewise constant with darkened band") {
    Philox rng(21);
    IntGrid g = gen_field_map(48, 6, rng);
    Philox prng(22);
    const Palette pal = random_palette(g.max_id(), prng);
    Philox rrng(23);
    Tensor img = rasterize_with(g, pal, rrng, 0.0);
    const IntGrid owner = region_grow(g);
    for (int r = 0; r < 48; ++r) {
        for (int c = 0; c < 48; ++c) {
            const Color& base = pal.colors[static_cast<size_t>(owner.at(r, c) - 1)];
            const double dark = g.at(r, c) == 0 ? 0.4 : 1.0;
            for (int ch = 0; ch < 3; ++ch) {
                CHECK(img.at(r, c, ch) ==
                      doctest::Approx(std::clamp(base[static_cast<size_t>(ch)] * dark, 0.0, 1.0))
                          .epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("rasterize determinism and field-mean statistic") {
    Philox rng(31);
    IntGrid g = gen_field_map(64, 8, rng);
    Philox a(32), b(32);
    Tensor ia = rasterize(g, a);
    Tensor ib = rasterize(g, b);
    for (int64_t i = 0; i < ia.numel(); ++i) CHECK(ia[i] == ib[i]);

    Philox prng(33);
    const Palette pal = random_palette(g.max_id(), prng);
    Philox rrng(34);
    const double sigma = 0.05;
    Tensor img = rasterize_with(g, pal, rrng, sigma);
    for (int id = 1; id <= g.max_id(); ++id) {
        double mean[3] = {0, 0, 0};
        int64_t area = 0;
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                if (g.at(r, c) == id) {
                    ++area;
                    for (int ch = 0; ch < 3; ++ch) mean[ch] += img.at(r, c, ch);
                }
        REQUIRE(area > 0);
        for (int ch = 0; ch < 3; ++ch) {
            mean[ch] /= static_cast<double>(area);
            const double base = pal.colors[static_cast<size_t>(id - 1)][static_cast<size_t>(ch)];
            CHECK(std::abs(mean[ch] - base) < 3.0 * sigma / std::sqrt(static_cast<double>(area)) +
                                                  0.01);  // clipping slack
        }
    }
}

TEST_CASE("toy encoders: constant embedding for a zero raster, determinism, locality") {
    WorldConfig cfg;
    ToyEncoders enc(cfg, 99);

    Tensor zero({64, 64, 3});
    Tensor e = enc.encode_hr(zero);
    CHECK(e.dims() == std::vector<int>{32, 32, 16});
    // interior is constant (border positions see zero padding, same value by
    // translation invariance away from edges)
    for (int r = 2; r < 30; ++r)
        for (int c = 2; c < 30; ++c)
            for (int ch = 0; ch < 16; ++ch)
                CHECK(e.at(r, c, ch) == doctest::Approx(e.at(15, 15, ch)).epsilon(1e-12));

    ToyEncoders enc2(cfg, 99);
    Philox rng(44);
    Tensor img = rng.normal_tensor({64, 64, 3});
    Tensor a = enc.encode_hr(img);
    Tensor b = enc2.encode_hr(img);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    // locality: a change confined to a small patch leaves far pixels intact
    Tensor img2 = img;
    for (int r = 40; r < 52; ++r)
        for (int c = 40; c < 52; ++c)
            for (int ch = 0; ch < 3; ++ch) img2.at(r, c, ch) += 0.8;
    Tensor ea = enc.encode_hr(img);
    Tensor eb = enc.encode_hr(img2);
    bool changed_near = false;
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            bool diff = false;
            for (int ch = 0; ch < 16; ++ch) diff = diff || ea.at(r, c, ch) != eb.at(r, c, ch);
            // receptive field is 7 scene px; embedding px r covers scene rows
            // 2r-3 .. 2r+3
            const bool can_see = 2 * r + 3 >= 40 && 2 * r - 3 < 52 && 2 * c + 3 >= 40 &&
                                 2 * c - 3 < 52;
            if (!can_see) {
                CHECK(!diff);
            } else {
                changed_near = changed_near || diff;
            }
        }
    }
    CHECK(changed_near);

    Tensor el = enc.encode_lr(img);
    CHECK(el.dims() == std::vector<int>{8, 8, 8});
    Tensor probe = enc.lr_probe(el);
    CHECK(probe.dims() == std::vector<int>{32, 32, 16});
}

TEST_CASE("dataset build, persistence round trip, and information asymmetry") {
    WorldConfig cfg;
    Dataset ds = build_dataset(10, cfg, 1234);
    CHECK(ds.scenes.size() == 10);
    for (const auto& rec : ds.scenes) {
        CHECK((rec.split == "train" || rec.split == "val" || rec.split == "test"));
        CHECK(check_scene_labels(rec.scene.labels_ref).empty());
        CHECK(check_scene_labels(rec.scene.labels_tgt).empty());
        CHECK(rec.e_h.dims() == std::vector<int>{32, 32, 16});
        CHECK(rec.e_l.dims() == std::vector<int>{8, 8, 8});
    }

    const std::string dir = "/tmp/seedsr_test_dataset";
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    REQUIRE(back.scenes.size() == ds.scenes.size());
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        CHECK(back.scenes[i].split == ds.scenes[i].split);
        CHECK(back.scenes[i].scene.labels_tgt.v == ds.scenes[i].scene.labels_tgt.v);
        for (int64_t j = 0; j < ds.scenes[i].e_h.numel(); ++j) {
            CHECK(back.scenes[i].e_h[j] == ds.scenes[i].e_h[j]);
        }
        for (int64_t j = 0; j < ds.scenes[i].e_l.numel(); ++j) {
            CHECK(back.scenes[i].e_l[j] == ds.scenes[i].e_l[j]);
        }
    }

    // reproducibility from (seed, cfg)
    Dataset again = build_dataset(10, cfg, 1234);
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        CHECK(again.scenes[i].scene.labels_tgt.v == ds.scenes[i].scene.labels_tgt.v);
        for (int64_t j = 0; j < ds.scenes[i].e_h.numel(); ++j) {
            CHECK(again.scenes[i].e_h[j] == ds.scenes[i].e_h[j]);
        }
    }
}

TEST_CASE("zero-change scenes keep e_r closest to e_h") {
    WorldConfig frozen;
    frozen.min_merges = frozen.max_merges = 0;
    frozen.min_splits = frozen.max_splits = 0;
    WorldConfig changed;
    changed.min_merges = 2;
    changed.max_merges = 3;
    changed.min_splits = 1;
    changed.max_splits = 1;

    ToyEncoders enc(frozen, frozen.encoder_seed);
    auto msd = [&](const FieldScene& sc) {
        Tensor er = enc.encode_hr(sc.render_ref);
        Tensor eh = enc.encode_hr(sc.render_tgt);
        double s = 0.0;
        for (int64_t i = 0; i < er.numel(); ++i) {
            const double d = er[i] - eh[i];
            s += d * d;
        }
        return s / static_cast<double>(er.numel());
    };

    const FieldScene still = make_scene(frozen, 555, 0);
    CHECK(still.n_merges == 0);
    CHECK(still.n_splits == 0);
    const double still_msd = msd(still);
    for (int id = 1; id <= 5; ++id) {
        const FieldScene moved = make_scene(changed, 555, id);
        CHECK(moved.n_merges >= 1);
        CHECK(still_msd < msd(moved));
    }
}

TEST_CASE("toy decoder trains to the accuracy gate and sees less from the LR probe") {
    WorldConfig cfg;
    Dataset ds = build_dataset(135, cfg, 777);  // 2 pairs per scene
    std::vector<std::pair<Tensor, ByteGrid>> train_pairs, val_pairs;
    for (const auto& rec : ds.scenes) {
        auto& sink = rec.split == "train" ? train_pairs : val_pairs;
        sink.push_back({rec.e_h, interior_mask(rec.scene.labels_tgt)});
        sink.push_back({rec.e_r, interior_mask(rec.scene.labels_ref)});
    }
    REQUIRE(train_pairs.size() >= 200);
    DecoderTrainConfig dcfg;
    ToyDecoder dec = train_toy_decoder(train_pairs, val_pairs, cfg.scene_px, dcfg);
    const double acc = decoder_pixel_accuracy(dec, val_pairs);
    CHECK(acc >= dcfg.accuracy_gate);

    // logits finite on random embeddings
    Philox rng(88);
    Tensor logits = dec.decode(rng.normal_tensor({32, 32, 16}));
    CHECK(logits.all_finite());

    // information asymmetry: decoding the upsampled LR embedding scores a
    // strictly lower IoU than decoding the true HR embedding
    double iou_hr = 0.0, iou_lr = 0.0;
    int n = 0;
    for (const auto& rec : ds.scenes) {
        if (rec.split != "val") continue;
        const ByteGrid gt = interior_mask(rec.scene.labels_tgt);
        auto mask_of = [&](const Tensor& emb) {
            Tensor lg = dec.decode(emb);
            ByteGrid m(lg.dim(0), lg.dim(1));
            for (int64_t i = 0; i < lg.numel(); ++i) m.v[static_cast<size_t>(i)] = lg[i] > 0.0;
            return m;
        };
        iou_hr += iou_semantic_image(mask_of(rec.e_h), gt);
        iou_lr += iou_semantic_image(mask_of(ds.encoders.lr_probe(rec.e_l)), gt);
        ++n;
    }
    REQUIRE(n > 0);
    CHECK(iou_lr / n < iou_hr / n);
}
