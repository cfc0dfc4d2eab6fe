#include "diffgate/hard_concrete.hpp"

#include <cmath>
#include <stdexcept>

namespace diffgate {

namespace {

void validate(const HardConcreteConfig& cfg) {
    if (!(cfg.beta > 0.0))
        throw std::invalid_argument("hard concrete: beta must be > 0");
    if (!(cfg.gamma < 0.0 && cfg.zeta > 1.0))
        throw std::invalid_argument("hard concrete: need gamma < 0 < 1 < zeta");
}

// sbar = s*zeta + (1-s)*gamma. Algebraically s*(zeta-gamma)+gamma, but this
// form is also exact in floating point at s = 1/2 (default constants give
// 0.55 - 0.05 = 0.5 with no rounding), which the deterministic collapse at
// log_alpha = 0 relies on.
Tensor stretch(const Tensor& s, const HardConcreteConfig& cfg) {
    Tensor one_minus_s = add_scalar(scale(s, -1.0), 1.0);
    return add(scale(s, cfg.zeta), scale(one_minus_s, cfg.gamma));
}

}  // namespace

HardConcreteGate::HardConcreteGate(std::size_t count, const HardConcreteConfig& cfg,
                                   Rng& init_rng, GateMode mode)
    : cfg_(cfg), mode_(mode) {
    validate(cfg);
    // Start near half-open so neither the open nor closed basin dominates
    // before any training signal arrives.
    std::vector<double> init(count);
    for (auto& v : init) v = 0.01 * init_rng.next_normal();
    log_alpha_ = Tensor::from({count}, std::move(init), /*requires_grad=*/true);
}

HardConcreteGate::HardConcreteGate(Tensor log_alpha, const HardConcreteConfig& cfg,
                                   GateMode mode)
    : log_alpha_(std::move(log_alpha)), cfg_(cfg), mode_(mode) {
    validate(cfg);
}

Tensor sample_gate(const HardConcreteGate& gate, Rng& rng) {
    if (gate.mode() != GateMode::stochastic)
        throw std::invalid_argument("sample_gate called on a deterministic-mode gate");
    const auto& cfg = gate.config();
    const std::size_t n = gate.count();
    std::vector<double> noise(n);
    for (auto& v : noise) {
        double u = rng.next_double();
        u = std::min(1.0 - 1e-12, std::max(1e-12, u));
        v = std::log(u) - std::log(1.0 - u);
    }
    Tensor logistic = Tensor::from({n}, std::move(noise));
    Tensor s = sigmoid(scale(add(gate.log_alpha(), logistic), 1.0 / cfg.beta));
    return clamp_hard(stretch(s, cfg));
}

Tensor l0_penalty(const HardConcreteGate& gate) {
    const auto& cfg = gate.config();
    const double shift = -cfg.beta * std::log(-cfg.gamma / cfg.zeta);
    return sum(sigmoid(add_scalar(gate.log_alpha(), shift)));
}

double cdf_sbar(const HardConcreteConfig& cfg, double log_alpha, double sbar) {
    if (!(sbar > cfg.gamma && sbar < cfg.zeta))
        throw std::domain_error("cdf_sbar: argument outside (gamma, zeta)");
    const double logit = std::log((sbar - cfg.gamma) / (cfg.zeta - sbar));
    return 1.0 / (1.0 + std::exp(-(cfg.beta * logit - log_alpha)));
}

double cdf_sbar(const HardConcreteGate& gate, double sbar, std::size_t index) {
    return cdf_sbar(gate.config(), gate.log_alpha().data()[index], sbar);
}

Tensor deterministic_gate(const HardConcreteGate& gate) {
    const auto& cfg = gate.config();
    return clamp_hard(stretch(sigmoid(gate.log_alpha()), cfg));
}

}  // namespace diffgate
