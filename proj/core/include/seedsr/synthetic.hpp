#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seedsr/grid.hpp"
#include "seedsr/rng.hpp"
#include "seedsr/tensor.hpp"

namespace seedsr {

// ---------------------------------------------------------------------------
// field maps
// ---------------------------------------------------------------------------

// Voronoi partition of a size x size grid with a boundary band (id 0) carved
// where 4-neighboring cells differ; the outer ring is boundary as well.
// Instance ids are contiguous from 1. Retries seed draws until the invariant
// checker passes.
IntGrid gen_field_map(int size, int n_seeds, Philox& rng);

// Carved Voronoi partition for explicit generator points (ties go to the
// earlier point).
IntGrid voronoi_labels(int size, const std::vector<std::pair<double, double>>& points);

// Underlying cell-ownership partition plus its carved label map, with
// consistent ids (carve(part) == labels exactly).
struct FieldPartition {
    IntGrid part;
    IntGrid labels;
};
FieldPartition gen_field_partition(int size, int n_seeds, Philox& rng);
IntGrid carve_partition(const IntGrid& part);

struct Change {
    enum class Type { merge, split };
    Type type;
    int from_id;  // merge: absorbed id; split: parent id (pre-edit numbering)
    int into_id;  // merge: surviving id; split: new id (post-edit numbering)
};

struct ChangeResult {
    IntGrid labels;
    std::vector<Change> log;
    // pre-edit id -> post-edit id for surviving fields; absorbed ids absent.
    std::map<int, int> id_map;
    // post-edit ids born from splits (they get fresh rendering colors)
    std::vector<int> born_ids;
    int applied_merges = 0;
    int applied_splits = 0;
};

// Merges relabel a region into an adjacent one (band between them erased);
// splits bisect a region through its centroid with a new band. Requests that
// exceed what the map supports are partially applied and logged.
ChangeResult apply_changes(const IntGrid& labels, int n_merges, int n_splits, Philox& rng);

// Same edits on the underlying partition; boundaries away from the edits stay
// pixel-identical.
ChangeResult apply_changes_partition(const IntGrid& part, int n_merges, int n_splits, Philox& rng);

// Empty string when all FieldScene invariants hold, else a description.
std::string check_scene_labels(const IntGrid& labels);

// Nearest-instance owner of every pixel (multi-source BFS over 4-neighbors,
// deterministic tie-break by earlier scan order).
IntGrid region_grow(const IntGrid& labels);

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

using Color = std::array<double, 3>;

struct Palette {
    std::vector<Color> colors;  // colors[id-1]
};

Palette random_palette(int n_ids, Philox& rng);

// Per-field base color + Gaussian texture noise (clipped to [0,1]); boundary
// pixels take 0.4 x the nearest field's color.
Tensor rasterize_with(const IntGrid& labels, const Palette& pal, Philox& rng,
                      double noise_sigma);
Tensor rasterize(const IntGrid& labels, Philox& rng, double noise_sigma = 0.05);

struct FieldScene {
    int size = 0;
    IntGrid labels_ref, labels_tgt;
    std::vector<Change> change_log;
    int n_merges = 0, n_splits = 0;
    Tensor render_ref, render_tgt;  // [size,size,3]
};

ByteGrid interior_mask(const IntGrid& labels);

// ---------------------------------------------------------------------------
// frozen toy encoders / decoder
// ---------------------------------------------------------------------------

struct WorldConfig {
    int scene_px = 64;
    int hr_hw = 32, hr_c = 16;  // scene_px must equal 2*hr_hw
    int lr_hw = 8, lr_c = 8;
    int enc_hidden = 12;
    int min_fields = 4, max_fields = 8;
    int min_merges = 1, max_merges = 3;
    int min_splits = 0, max_splits = 1;
    double noise_sigma = 0.05;
    double color_drift = 0.06;
    uint64_t encoder_seed = 1234;

    void validate() const;
};

// Seed-frozen conv weights standing in for the pretrained encoders, plus a
// frozen 1x1 probe that lifts e_l into the decoder's channel space for the
// information-asymmetry check.
class ToyEncoders {
public:
    ToyEncoders() = default;
    ToyEncoders(const WorldConfig& cfg, uint64_t seed);

    Tensor encode_hr(const Tensor& render) const;   // [scene,scene,3] -> [hr,hr,hr_c]
    Tensor encode_lr(const Tensor& render) const;   // -> [lr,lr,lr_c]
    Tensor lr_probe(const Tensor& e_l) const;       // e_l upsampled + 1x1 to hr_c

    const WorldConfig& cfg() const { return cfg_; }

private:
    WorldConfig cfg_;
    Tensor k1_, b1_, k2_, b2_;  // encode_hr stages
    Tensor klr_, blr_;          // encode_lr 1x1
    Tensor kad_, bad_;          // lr probe 1x1
};

// Trained-then-frozen segmentation head: embedding -> per-pixel interior
// logit, bilinearly upsampled to scene size.
struct ToyDecoder {
    int scene_px = 0;
    Tensor k1, b1, k2, b2;

    Tensor decode(const Tensor& emb) const;  // -> [scene,scene] logits
};

struct DecoderTrainConfig {
    int steps = 4000;
    int batch = 8;
    double lr = 5e-3;
    double accuracy_gate = 0.95;
    uint64_t seed = 7;
    int hidden = 16;
};

// Logistic-loss training to the accuracy gate on held-out pairs; throws
// NumericError telling the user to regenerate data when the gate fails.
ToyDecoder train_toy_decoder(const std::vector<std::pair<Tensor, ByteGrid>>& train_pairs,
                             const std::vector<std::pair<Tensor, ByteGrid>>& heldout_pairs,
                             int scene_px, const DecoderTrainConfig& cfg);

double decoder_pixel_accuracy(const ToyDecoder& dec,
                              const std::vector<std::pair<Tensor, ByteGrid>>& pairs);

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

struct SceneRecord {
    int id = 0;
    std::string split;  // train / val / test
    FieldScene scene;
    Tensor e_r, e_h, e_l;
};

struct Dataset {
    WorldConfig cfg;
    uint64_t seed = 0;
    std::vector<SceneRecord> scenes;
    ToyEncoders encoders;

    std::vector<const SceneRecord*> of_split(const std::string& split) const;
};

FieldScene make_scene(const WorldConfig& cfg, uint64_t dataset_seed, int scene_id);

// Scenes, renders, frozen-encoder embeddings, and an 80/10/10 split by scene
// id hash.
Dataset build_dataset(int n_scenes, const WorldConfig& cfg, uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace seedsr
