#include "seedsr/schedule.hpp"

#include <cmath>

#include "seedsr/errors.hpp"
#include "seedsr/rng.hpp"

namespace seedsr {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw ConfigError("schedule: empty beta table");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double prod = 1.0;
    for (size_t i = 0; i < beta_.size(); ++i) {
        if (!(beta_[i] > 0.0 && beta_[i] < 1.0)) {
            throw ConfigError("schedule: beta_" + std::to_string(i + 1) + " = " +
                              std::to_string(beta_[i]) + " outside (0,1)");
        }
        alpha_[i] = 1.0 - beta_[i];
        prod *= alpha_[i];
        alpha_bar_[i] = prod;
    }
}

int NoiseSchedule::check(int tau) const {
    if (tau < 1 || tau > T()) {
        throw ConfigError("schedule: tau " + std::to_string(tau) + " outside [1," +
                          std::to_string(T()) + "]");
    }
    return tau;
}

double NoiseSchedule::alpha_bar(int tau) const {
    if (tau == 0) return 1.0;
    return alpha_bar_[check(tau) - 1];
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("schedule: T must be >= 2, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1, got [" +
                          std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    }
    std::vector<double> betas(static_cast<size_t>(T));
    for (int tau = 1; tau <= T; ++tau) {
        betas[static_cast<size_t>(tau - 1)] =
            beta_start + (static_cast<double>(tau - 1) / (T - 1)) * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(betas));
}

Tensor forward_noise(const Tensor& e0, int tau, const Tensor& eps, const NoiseSchedule& sched) {
    require_same_dims(e0, eps, "forward_noise");
    const double ab = sched.alpha_bar(tau);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(e0.dims());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * e0[i] + b * eps[i];
    return out;
}

Tensor posterior_mean(const Tensor& e_tau, const Tensor& e0_hat, int tau,
                      const NoiseSchedule& sched) {
    require_same_dims(e_tau, e0_hat, "posterior_mean");
    const double ab = sched.alpha_bar(tau);
    const double ab_prev = sched.alpha_bar(tau - 1);
    const double denom = 1.0 - ab;
    if (denom == 0.0) {
        throw ConfigError("posterior_mean: 1 - alpha_bar(" + std::to_string(tau) + ") == 0");
    }
    const double c0 = std::sqrt(ab_prev) * sched.beta(tau) / denom;
    const double ct = std::sqrt(sched.alpha(tau)) * (1.0 - ab_prev) / denom;
    Tensor out(e_tau.dims());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = c0 * e0_hat[i] + ct * e_tau[i];
    return out;
}

Tensor ddpm_sample(const DenoiseFn& denoiser, const std::vector<int>& dims,
                   const NoiseSchedule& sched, const SamplerConfig& cfg) {
    const int T = sched.T();
    const int t_inf = cfg.t_inf == 0 ? T : cfg.t_inf;
    if (t_inf < 1 || t_inf > T) {
        throw ConfigError("sampler: t_inf " + std::to_string(t_inf) + " outside [1," +
                          std::to_string(T) + "]");
    }
    Philox rng(cfg.seed, 0x6464706du);  // "ddpm"
    Tensor e_tau(dims);
    rng.fill_normal(e_tau);
    Tensor e0_hat;
    for (int step = 0; step < t_inf; ++step) {
        const int tau = T - step;
        e0_hat = denoiser(e_tau, tau);
        if (!e_tau.same_dims(e0_hat)) {
            throw ShapeError("sampler: denoiser returned " + e0_hat.shape_str() + ", expected " +
                             e_tau.shape_str());
        }
        if (step == t_inf - 1) break;
        Tensor mu = posterior_mean(e_tau, e0_hat, tau, sched);
        if (tau > 1) {
            const double sd = std::sqrt(sched.beta(tau));
            for (int64_t i = 0; i < mu.numel(); ++i) mu[i] += sd * rng.normal();
        }
        e_tau = std::move(mu);
    }
    return e0_hat;
}

DenoiseFn gaussian_oracle_denoiser(double mu0, double sigma0, const NoiseSchedule& sched) {
    if (!(sigma0 > 0.0)) throw ConfigError("oracle denoiser: sigma0 must be > 0");
    const double var0 = sigma0 * sigma0;
    return [mu0, var0, sched](const Tensor& e_tau, int tau) {
        const double ab = sched.alpha_bar(tau);
        const double sab = std::sqrt(ab);
        const double gain = sab * var0 / (ab * var0 + 1.0 - ab);
        Tensor out(e_tau.dims());
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = mu0 + gain * (e_tau[i] - sab * mu0);
        return out;
    };
}

}  // namespace seedsr
