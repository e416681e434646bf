#pragma once

#include <string>
#include <vector>

#include "seedsr/checkpoint.hpp"
#include "seedsr/metrics.hpp"
#include "seedsr/runconfig.hpp"
#include "seedsr/segpost.hpp"

namespace seedsr {

// Formatted layer table, one "name (h,w,c)" line per row.
std::string shapes_text(const DenoiserConfig& cfg);

void run_gen_data(const RunConfig& cfg, const std::string& data_dir);
void run_train_decoder(const RunConfig& cfg, const std::string& data_dir,
                       const std::string& decoder_dir);

// Trains the conditional denoiser on the train split; writes a checkpoint and
// a JSON-lines loss curve (step, loss) into out_dir.
void run_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir);

struct InferOptions {
    int n_seeds = 4;
    int t_inf = 0;  // 0: take from config
    std::string split = "val";
};

// Per scene: n_seeds clean-embedding samples, their decoded mean logits, the
// semantic mask, and the watershed instance map.
void run_infer(const RunConfig& cfg, const std::string& data_dir, const std::string& decoder_dir,
               const std::string& ckpt_dir, const std::string& out_dir, const InferOptions& opt);

// Metric report against ground-truth masks and against teacher predictions
// (the frozen decoder applied to the true target embedding).
void run_eval(const RunConfig& cfg, const std::string& data_dir, const std::string& decoder_dir,
              const std::string& infer_dir, const std::string& out_path);

// ---- in-memory helpers shared by the CLI and the acceptance suite ----

Tensor sample_embedding(const DenoiserParams& params, const DenoiserConfig& mcfg,
                        const NoiseSchedule& sched, const ConditioningBundle& cond,
                        const std::vector<int>& dims, uint64_t seed, int t_inf);

uint64_t scene_sample_seed(uint64_t run_seed, int scene_id, int sample_idx);

std::vector<TrainItem> items_for_split(const Dataset& ds, const std::string& split,
                                       const DenoiserConfig& mcfg);
ConditioningBundle bundle_for(const SceneRecord& rec, const DenoiserConfig& mcfg);

}  // namespace seedsr
