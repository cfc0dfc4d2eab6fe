#pragma once

#include <cstddef>

#include "diffgate/rng.hpp"
#include "diffgate/tensor.hpp"

namespace diffgate {

// Stretched-rectified binary concrete ("hard concrete") gate.
//
// Sampling chain: u ~ U(0,1), s = sigmoid((log u - log(1-u) + log_alpha)/beta),
// sbar = s*(zeta-gamma)+gamma, z = min(1, max(0, sbar)). The stretch past
// [0,1] plus rectification gives point masses at exactly 0 and 1 while the
// pathwise estimator keeps z differentiable w.r.t. log_alpha.

struct HardConcreteConfig {
    double beta = 1.0;     // temperature, > 0
    double gamma = -0.1;   // stretch lower bound, < 0
    double zeta = 1.1;     // stretch upper bound, > 1
};

enum class GateMode { stochastic, deterministic };

class HardConcreteGate {
  public:
    HardConcreteGate(std::size_t count, const HardConcreteConfig& cfg, Rng& init_rng,
                     GateMode mode = GateMode::stochastic);
    // Wraps an existing log_alpha leaf (used by checkpoint loading).
    HardConcreteGate(Tensor log_alpha, const HardConcreteConfig& cfg,
                     GateMode mode = GateMode::stochastic);

    Tensor& log_alpha() { return log_alpha_; }
    const Tensor& log_alpha() const { return log_alpha_; }
    const HardConcreteConfig& config() const { return cfg_; }
    GateMode mode() const { return mode_; }
    void set_mode(GateMode m) { mode_ = m; }
    std::size_t count() const { return log_alpha_.numel(); }

  private:
    Tensor log_alpha_;
    HardConcreteConfig cfg_;
    GateMode mode_;
};

// One stochastic z per gate element; requires stochastic mode. The uniform
// draw is clamped to [1e-12, 1-1e-12] so both logs stay finite.
Tensor sample_gate(const HardConcreteGate& gate, Rng& rng);

// Sum_j sigmoid(log_alpha_j - beta * log(-gamma/zeta)) — the differentiable
// surrogate for E[number of open gates], equal to sum_j P(z_j > 0).
Tensor l0_penalty(const HardConcreteGate& gate);

// CDF of the pre-rectification variable sbar, evaluated for one gate element.
//
// Convention note: we use Q(sbar) = sigmoid(beta * logit((sbar-gamma)/(zeta-sbar))
// - log_alpha), which is the exact CDF of the sampling chain above and makes
// the identity  l0_penalty == sum_j (1 - cdf_sbar(0))  hold exactly. Published
// statements of this CDF sometimes divide the logit term by beta instead of
// multiplying; the two agree only at beta = 1.
double cdf_sbar(const HardConcreteGate& gate, double sbar, std::size_t index = 0);
double cdf_sbar(const HardConcreteConfig& cfg, double log_alpha, double sbar);

// Inference-time collapse: z = min(1, max(0, sigmoid(log_alpha)*(zeta-gamma)+gamma)).
// Pure function of log_alpha; differentiable through the same clamp subgradient.
Tensor deterministic_gate(const HardConcreteGate& gate);

}  // namespace diffgate
