#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "seedsr/model.hpp"
#include "seedsr/rng.hpp"
#include "seedsr/schedule.hpp"

namespace seedsr {

struct TrainConfig {
    double lr = 5e-4;
    int batch = 8;
    int steps = 2000;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int checkpoint_every = 500;

    void validate() const;
};

using ParamMap = std::map<std::string, Tensor>;

struct AdamState {
    ParamMap m, v;
    int64_t step = 0;
};

struct TrainState {
    DenoiserParams params;
    AdamState opt;
};

struct TrainItem {
    Tensor e_h0;
    ConditioningBundle cond;
};

struct LossResult {
    double loss = 0.0;
    ParamMap grads;
};

// Per item: tau ~ U[1,T], eps ~ N(0,I); mean squared error between the clean
// embedding and the model prediction, averaged over the batch.
LossResult ddpm_loss(const DenoiserParams& params, const DenoiserConfig& cfg,
                     std::span<const TrainItem* const> batch, const NoiseSchedule& sched,
                     Philox& rng);

// Decoupled weight decay applied before the bias-corrected Adam update.
// Update is per-key and therefore invariant to enumeration order.
void adamw_update(ParamMap& params, AdamState& state, const ParamMap& grads,
                  const TrainConfig& cfg);
void adamw_step(TrainState& state, const ParamMap& grads, const TrainConfig& cfg);

struct TrainRecord {
    int64_t step;
    double loss;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<TrainRecord> curve;
};

using CheckpointFn = std::function<void(int64_t step, const DenoiserParams&)>;

TrainResult train(const std::vector<TrainItem>& dataset, const DenoiserConfig& mcfg,
                  const TrainConfig& tcfg, const NoiseSchedule& sched,
                  const CheckpointFn& checkpoint_cb = {});

}  // namespace seedsr
