#pragma once

#include <string>

#include "seedsr/metrics.hpp"
#include "seedsr/model.hpp"
#include "seedsr/schedule.hpp"
#include "seedsr/synthetic.hpp"
#include "seedsr/trainer.hpp"

namespace seedsr {

// Everything a run needs, parsed from a flat sectioned key=value file.
// Grammar: '#' comments, [section] headers, key = value lines. Unknown
// sections or keys are rejected with a line diagnostic.
struct RunConfig {
    uint64_t seed = 0;
    DenoiserConfig model = desk_config();
    int sched_T = 100;
    double beta_start = 1e-4, beta_end = 0.02;
    SamplerConfig sampler{94, 0, 4};
    TrainConfig train;
    WorldConfig world;
    int n_scenes = 150;
    DecoderTrainConfig decoder;
    double post_threshold = 0.5;
    double min_marker_dist = 5.0;
    double overlap_threshold = 50.0;
    OverlapBasis overlap_basis = OverlapBasis::pred;

    NoiseSchedule schedule() const { return make_linear_schedule(sched_T, beta_start, beta_end); }
    void validate() const;
};

RunConfig preset_desk();
RunConfig preset_paper();
RunConfig preset_by_name(const std::string& name);

// Applies the file's settings on top of `base`.
RunConfig parse_run_config(const std::string& text, RunConfig base);
RunConfig load_run_config(const std::string& path, RunConfig base);

// Canonical dump in the same grammar; parsing it back is the identity.
std::string config_echo(const RunConfig& cfg);

}  // namespace seedsr
