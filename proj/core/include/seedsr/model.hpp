#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seedsr/autodiff.hpp"
#include "seedsr/tensor.hpp"

namespace seedsr {

enum class LrMode { encoded, raw };

// Architecture hyperparameters. One config reproduces the published layer
// table as a dry run; another runs trainably at desk scale.
struct DenoiserConfig {
    int hr_hw = 32;   // spatial side of e_h / e_r
    int hr_c = 16;    // channels of e_h / e_r
    int lr_hw = 8;    // spatial side of e_l
    int lr_c = 8;     // channels of e_l
    std::array<int, 4> enc_channels = {12, 16, 20, 24};
    int bottleneck_c = 28;
    int attn_c = 8;   // channel width of the attention token space
    int heads = 4;
    int t_embed_dim = 16;
    bool use_ref = true;
    bool use_lr = true;
    LrMode lr_mode = LrMode::encoded;
    int raw_frames = 32, raw_hw = 80, raw_bands = 12;  // raw-LR ablation stack
    int sft_c1 = 128, sft_c2 = 64;                     // SFT hidden widths

    void validate() const;
    int concat_c() const;        // channel count of the encoder input concat
    int lr_cond_c() const;       // channels of the LR conditioning map
    std::array<int, 5> ladder() const;  // hr_hw and its four floor-halvings
    int dec_c(int i) const { return enc_channels[static_cast<size_t>(3 - i)]; }  // i in [0,3]
};

DenoiserConfig desk_config();    // trainable preset
DenoiserConfig desk48_config();  // 48-ladder shape-contract preset
DenoiserConfig paper_config();   // published layer-table shapes (dry-run only)

struct DenoiserParams {
    std::map<std::string, Tensor> tensors;  // keyed by stable layer path
    int64_t count() const;
};

struct ParamSpec {
    std::string key;
    std::vector<int> dims;
    int fan_in;  // 0 => zero-init
};
std::vector<ParamSpec> param_specs(const DenoiserConfig& cfg);

// Fan-in-scaled uniform init; biases and the SFT gamma branch start at zero
// (sigmoid(0) = 0.5 makes gamma a benign constant scale at step 0).
DenoiserParams init_params(const DenoiserConfig& cfg, uint64_t seed);

struct ConditioningBundle {
    std::optional<Tensor> e_r;     // [hr_hw, hr_hw, hr_c]
    std::optional<Tensor> e_l;     // [lr_hw, lr_hw, lr_c]
    std::optional<Tensor> raw_lr;  // [frames, hw, hw, bands]
};

// Bilinear spatial resize with half-pixel centers; channel count preserved.
Tensor tile_project_lr(const Tensor& e_l, int target_hw);

// Pre-MLP sinusoidal features: sin/cos(tau / 10000^(2k/dim)).
Tensor timestep_features(int tau, int dim);

// [frames, hw, hw, bands] -> [hw, hw, frames*bands]
Tensor raw_stack_to_channels(const Tensor& raw);

// Symbolic per-layer output shapes; allocates no parameter or activation
// storage. Throws ConfigError on an infeasible ladder.
std::vector<std::pair<std::string, std::vector<int>>> shape_infer(const DenoiserConfig& cfg);

// Params bound as graph nodes (leaves when trainable, constants otherwise).
class ParamNodes {
public:
    ParamNodes(const DenoiserParams& p, bool trainable);
    const NodePtr& at(const std::string& key) const;
    const std::map<std::string, NodePtr>& map() const { return nodes_; }

private:
    std::map<std::string, NodePtr> nodes_;
};

// F * gamma + beta with gamma/beta derived from the conditioning input:
// conv3x3->sft_c1 + relu, conv3x3->sft_c2 + relu, bilinear upsample to F's
// spatial size, then a sigmoid conv branch (gamma) and a linear conv branch
// (beta), each with F's channel count.
NodePtr sft_apply(NodePtr feat, NodePtr cond, const ParamNodes& params, const std::string& prefix);

using ShapeTrace = std::vector<std::pair<std::string, std::vector<int>>>;

// Full conditional denoiser: returns the clean-embedding prediction. When
// `trace` is given, actual tensor shapes are recorded at the same named
// stages shape_infer emits.
NodePtr denoiser_forward(const ParamNodes& params, const DenoiserConfig& cfg, NodePtr e_h_tau,
                         int tau, const ConditioningBundle& cond, ShapeTrace* trace = nullptr);
Tensor denoiser_forward_value(const DenoiserParams& params, const DenoiserConfig& cfg,
                              const Tensor& e_h_tau, int tau, const ConditioningBundle& cond);

}  // namespace seedsr
