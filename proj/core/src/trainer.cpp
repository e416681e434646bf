#include "seedsr/trainer.hpp"

#include <cmath>

#include "seedsr/errors.hpp"
#include "seedsr/rng.hpp"

namespace seedsr {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
}

LossResult ddpm_loss(const DenoiserParams& params, const DenoiserConfig& cfg,
                     std::span<const TrainItem* const> batch, const NoiseSchedule& sched,
                     Philox& rng) {
    if (batch.empty()) throw ConfigError("ddpm_loss: empty batch");
    LossResult res;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const TrainItem* item : batch) {
        const int tau = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.T())));
        Tensor eps = rng.normal_tensor(item->e_h0.dims());
        Tensor e_tau = forward_noise(item->e_h0, tau, eps, sched);

        ParamNodes P(params, /*trainable=*/true);
        NodePtr pred = denoiser_forward(P, cfg, make_const(std::move(e_tau)), tau, item->cond);
        NodePtr loss = mse(pred, make_const(item->e_h0));
        const double lv = loss->value[0];
        if (!std::isfinite(lv)) {
            throw NumericError("ddpm_loss: non-finite loss at tau=" + std::to_string(tau));
        }
        res.loss += lv * inv_b;
        backward(loss);
        for (const auto& [key, node] : P.map()) {
            if (node->grad.empty()) continue;
            auto it = res.grads.find(key);
            if (it == res.grads.end()) {
                Tensor g = node->grad;
                g *= inv_b;
                res.grads.emplace(key, std::move(g));
            } else {
                Tensor& acc = it->second;
                const Tensor& g = node->grad;
                for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += inv_b * g[i];
            }
        }
    }
    return res;
}

void adamw_update(ParamMap& params, AdamState& state, const ParamMap& grads,
                  const TrainConfig& cfg) {
    state.step += 1;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (auto& [key, theta] : params) {
        if (cfg.weight_decay > 0.0) theta *= (1.0 - cfg.lr * cfg.weight_decay);
        auto git = grads.find(key);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        Tensor& m = state.m.try_emplace(key, Tensor::zeros(theta.dims())).first->second;
        Tensor& v = state.v.try_emplace(key, Tensor::zeros(theta.dims())).first->second;
        for (int64_t i = 0; i < theta.numel(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

void adamw_step(TrainState& state, const ParamMap& grads, const TrainConfig& cfg) {
    adamw_update(state.params.tensors, state.opt, grads, cfg);
}

TrainResult train(const std::vector<TrainItem>& dataset, const DenoiserConfig& mcfg,
                  const TrainConfig& tcfg, const NoiseSchedule& sched,
                  const CheckpointFn& checkpoint_cb) {
    tcfg.validate();
    if (dataset.empty()) throw ConfigError("train: empty dataset");
    TrainState state{init_params(mcfg, tcfg.seed), {}};
    Philox rng(tcfg.seed, 0x747261696eull);  // "train"
    TrainResult out;
    out.curve.reserve(static_cast<size_t>(tcfg.steps));
    std::vector<const TrainItem*> batch(static_cast<size_t>(tcfg.batch));
    for (int step = 1; step <= tcfg.steps; ++step) {
        for (auto& slot : batch) {
            slot = &dataset[rng.uniform_int(dataset.size())];
        }
        LossResult lr = ddpm_loss(state.params, mcfg, batch, sched, rng);
        adamw_step(state, lr.grads, tcfg);
        out.curve.push_back({step, lr.loss});
        if (checkpoint_cb && tcfg.checkpoint_every > 0 &&
            (step % tcfg.checkpoint_every == 0 || step == tcfg.steps)) {
            checkpoint_cb(step, state.params);
        }
    }
    out.params = std::move(state.params);
    return out;
}

}  // namespace seedsr
