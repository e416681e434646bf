#include "seedsr/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seedsr/errors.hpp"
#include "seedsr/stf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seedsr {

std::string shapes_text(const DenoiserConfig& cfg) {
    std::ostringstream os;
    for (const auto& [name, dims] : shape_infer(cfg)) {
        os << name << " " << shape_str(dims) << "\n";
    }
    return os.str();
}

void run_gen_data(const RunConfig& cfg, const std::string& data_dir) {
    cfg.validate();
    Dataset ds = build_dataset(cfg.n_scenes, cfg.world, cfg.seed);
    save_dataset(ds, data_dir);
}

namespace {

std::vector<std::pair<Tensor, ByteGrid>> decoder_pairs(const Dataset& ds,
                                                       const std::string& split) {
    std::vector<std::pair<Tensor, ByteGrid>> out;
    for (const SceneRecord* rec : ds.of_split(split)) {
        out.push_back({rec->e_h, interior_mask(rec->scene.labels_tgt)});
        out.push_back({rec->e_r, interior_mask(rec->scene.labels_ref)});
    }
    return out;
}

void check_geometry(const RunConfig& cfg, const Dataset& ds) {
    if (ds.cfg.hr_hw != cfg.model.hr_hw || ds.cfg.hr_c != cfg.model.hr_c ||
        ds.cfg.lr_hw != cfg.model.lr_hw || ds.cfg.lr_c != cfg.model.lr_c) {
        throw ConfigError("dataset geometry (hr " + std::to_string(ds.cfg.hr_hw) + "x" +
                          std::to_string(ds.cfg.hr_c) + ", lr " + std::to_string(ds.cfg.lr_hw) +
                          "x" + std::to_string(ds.cfg.lr_c) +
                          ") does not match the model config");
    }
}

}  // namespace

void run_train_decoder(const RunConfig& cfg, const std::string& data_dir,
                       const std::string& decoder_dir) {
    cfg.validate();
    Dataset ds = load_dataset(data_dir);
    auto train_pairs = decoder_pairs(ds, "train");
    auto val_pairs = decoder_pairs(ds, "val");
    if (val_pairs.empty()) val_pairs = decoder_pairs(ds, "test");
    ToyDecoder dec = train_toy_decoder(train_pairs, val_pairs, ds.cfg.scene_px, cfg.decoder);
    save_decoder(decoder_dir, dec);
}

ConditioningBundle bundle_for(const SceneRecord& rec, const DenoiserConfig& mcfg) {
    ConditioningBundle b;
    if (mcfg.use_ref) b.e_r = rec.e_r;
    if (mcfg.use_lr) b.e_l = rec.e_l;
    return b;
}

std::vector<TrainItem> items_for_split(const Dataset& ds, const std::string& split,
                                       const DenoiserConfig& mcfg) {
    std::vector<TrainItem> items;
    for (const SceneRecord* rec : ds.of_split(split)) {
        items.push_back({rec->e_h, bundle_for(*rec, mcfg)});
    }
    return items;
}

void run_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    cfg.validate();
    Dataset ds = load_dataset(data_dir);
    check_geometry(cfg, ds);
    std::vector<TrainItem> items = items_for_split(ds, "train", cfg.model);
    if (items.empty()) throw MissingArtifactError("dataset has no train split scenes");

    fs::create_directories(out_dir);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const NoiseSchedule sched = cfg.schedule();
    std::ofstream curve(fs::path(out_dir) / "loss_curve.jsonl");
    TrainResult result = train(items, cfg.model, tc, sched);
    for (const auto& rec : result.curve) {
        curve << "{\"step\": " << rec.step << ", \"loss\": " << rec.loss << "}\n";
    }
    save_checkpoint((fs::path(out_dir) / "checkpoint").string(), result.params, cfg.model);
}

uint64_t scene_sample_seed(uint64_t run_seed, int scene_id, int sample_idx) {
    return mix64(mix64(run_seed, static_cast<uint64_t>(scene_id)),
                 static_cast<uint64_t>(sample_idx));
}

Tensor sample_embedding(const DenoiserParams& params, const DenoiserConfig& mcfg,
                        const NoiseSchedule& sched, const ConditioningBundle& cond,
                        const std::vector<int>& dims, uint64_t seed, int t_inf) {
    ParamNodes P(params, /*trainable=*/false);
    DenoiseFn fn = [&](const Tensor& e_tau, int tau) {
        return denoiser_forward(P, mcfg, make_const(e_tau), tau, cond)->value;
    };
    SamplerConfig scfg;
    scfg.seed = seed;
    scfg.t_inf = t_inf;
    return ddpm_sample(fn, dims, sched, scfg);
}

void run_infer(const RunConfig& cfg, const std::string& data_dir, const std::string& decoder_dir,
               const std::string& ckpt_dir, const std::string& out_dir, const InferOptions& opt) {
    cfg.validate();
    if (opt.n_seeds < 1) throw ConfigError("infer: n_seeds must be >= 1");
    Dataset ds = load_dataset(data_dir);
    check_geometry(cfg, ds);
    ToyDecoder dec = load_decoder(decoder_dir);
    DenoiserConfig mcfg;
    DenoiserParams params = load_checkpoint(ckpt_dir, &mcfg);
    const NoiseSchedule sched = cfg.schedule();
    const int t_inf = opt.t_inf > 0 ? opt.t_inf : cfg.sampler.t_inf;

    fs::create_directories(out_dir);
    json manifest;
    manifest["split"] = opt.split;
    manifest["n_seeds"] = opt.n_seeds;
    manifest["t_inf"] = t_inf;
    json scenes = json::array();
    const std::vector<int> dims = {mcfg.hr_hw, mcfg.hr_hw, mcfg.hr_c};
    for (const SceneRecord* rec : ds.of_split(opt.split)) {
        const ConditioningBundle cond = bundle_for(*rec, mcfg);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene_%05d", rec->id);
        const fs::path sdir = fs::path(out_dir) / buf;
        fs::create_directories(sdir);
        std::vector<Tensor> logit_grids;
        for (int s = 0; s < opt.n_seeds; ++s) {
            Tensor e0 = sample_embedding(params, mcfg, sched, cond, dims,
                                         scene_sample_seed(cfg.seed, rec->id, s), t_inf);
            save_stf((sdir / ("sample_" + std::to_string(s) + ".stf")).string(), e0);
            logit_grids.push_back(dec.decode(e0));
        }
        SegmentationResult seg = segment(logit_grids, cfg.post_threshold, cfg.min_marker_dist);
        save_stf((sdir / "mean_logits.stf").string(), seg.logits);
        write_pgm((sdir / "semantic.pgm").string(), seg.semantic);
        write_instance_csv((sdir / "instances.csv").string(), seg.instances);
        scenes.push_back(rec->id);
    }
    manifest["scenes"] = scenes;
    std::ofstream f(fs::path(out_dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
}

void run_eval(const RunConfig& cfg, const std::string& data_dir, const std::string& decoder_dir,
              const std::string& infer_dir, const std::string& out_path) {
    cfg.validate();
    Dataset ds = load_dataset(data_dir);
    ToyDecoder dec = load_decoder(decoder_dir);
    const fs::path mpath = fs::path(infer_dir) / "manifest.json";
    std::ifstream mf(mpath);
    if (!mf) {
        throw MissingArtifactError("inference manifest not found at " + mpath.string() +
                                   "; run the infer subcommand first");
    }
    json manifest = json::parse(mf);

    std::vector<EvalPair> vs_gt, vs_teacher;
    for (const auto& jid : manifest.at("scenes")) {
        const int id = jid;
        const SceneRecord* rec = nullptr;
        for (const auto& r : ds.scenes) {
            if (r.id == id) {
                rec = &r;
                break;
            }
        }
        if (!rec) throw MissingArtifactError("scene " + std::to_string(id) + " not in dataset");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene_%05d", id);
        const fs::path sdir = fs::path(infer_dir) / buf;
        Tensor mean_logits = load_stf((sdir / "mean_logits.stf").string());
        SegmentationResult seg =
            segment({mean_logits}, cfg.post_threshold, cfg.min_marker_dist);

        EvalPair gt;
        gt.name = buf;
        gt.pred_mask = seg.semantic;
        gt.pred_instances = seg.instances;
        gt.gt_mask = interior_mask(rec->scene.labels_tgt);
        gt.gt_instances = rec->scene.labels_tgt;
        vs_gt.push_back(std::move(gt));

        // teacher: frozen decoder on the true target embedding
        SegmentationResult teacher =
            segment({dec.decode(rec->e_h)}, cfg.post_threshold, cfg.min_marker_dist);
        EvalPair tp;
        tp.name = buf;
        tp.pred_mask = seg.semantic;
        tp.pred_instances = seg.instances;
        tp.gt_mask = teacher.semantic;
        tp.gt_instances = teacher.instances;
        vs_teacher.push_back(std::move(tp));
    }

    const MetricsReport rep_gt = compute_report(vs_gt, cfg.overlap_threshold, cfg.overlap_basis);
    const MetricsReport rep_teacher =
        compute_report(vs_teacher, cfg.overlap_threshold, cfg.overlap_basis);
    const std::string echo = config_echo(cfg);
    json out;
    out["vs_ground_truth"] = json::parse(report_to_json(rep_gt, echo));
    out["vs_teacher"] = json::parse(report_to_json(rep_teacher, echo));
    const fs::path parent = fs::path(out_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream f(out_path);
    f << out.dump(2) << "\n";
}

}  // namespace seedsr
