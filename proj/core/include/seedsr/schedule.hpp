#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seedsr/tensor.hpp"

namespace seedsr {

// beta/alpha/alpha_bar tables for tau in [1,T]; alpha_bar(0) == 1 by convention
// so the tau=1 posterior is well defined.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    explicit NoiseSchedule(std::vector<double> betas);

    int T() const { return static_cast<int>(beta_.size()); }
    double beta(int tau) const { return beta_[check(tau) - 1]; }
    double alpha(int tau) const { return alpha_[check(tau) - 1]; }
    double alpha_bar(int tau) const;  // tau in [0,T]

private:
    int check(int tau) const;
    std::vector<double> beta_, alpha_, alpha_bar_;
};

// beta_tau = beta_start + (tau-1)/(T-1) * (beta_end - beta_start)
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// e_tau = sqrt(abar_tau) e0 + sqrt(1 - abar_tau) eps
Tensor forward_noise(const Tensor& e0, int tau, const Tensor& eps, const NoiseSchedule& sched);

// mu = sqrt(abar_{tau-1}) beta_tau / (1-abar_tau) * e0_hat
//    + sqrt(alpha_tau) (1-abar_{tau-1}) / (1-abar_tau) * e_tau
Tensor posterior_mean(const Tensor& e_tau, const Tensor& e0_hat, int tau,
                      const NoiseSchedule& sched);

struct SamplerConfig {
    int t_inf = 0;  // reverse steps executed; 0 means all T
    uint64_t seed = 0;
    int n_samples = 1;
};

// Predicts the clean signal from (e_tau, tau).
using DenoiseFn = std::function<Tensor(const Tensor&, int)>;

// Ancestral sampling from tau=T; executes exactly t_inf reverse steps and
// returns the denoiser's clean prediction at the last executed step. All noise
// comes from one Philox stream keyed by cfg.seed, consumed in fixed order, so
// a shorter t_inf is a strict prefix of the longer trajectory.
Tensor ddpm_sample(const DenoiseFn& denoiser, const std::vector<int>& dims,
                   const NoiseSchedule& sched, const SamplerConfig& cfg);

// Exact Bayes predictor E[e0 | e_tau] for e0 ~ N(mu0, sigma0^2 I) under the
// forward process; verification oracle for the sampler.
DenoiseFn gaussian_oracle_denoiser(double mu0, double sigma0, const NoiseSchedule& sched);

}  // namespace seedsr
