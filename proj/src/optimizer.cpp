#include "diffgate/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace diffgate {

void Adam::add_param(const Tensor& t) {
    if (!t.requires_grad())
        throw std::invalid_argument("Adam: parameter does not require grad");
    slots_.push_back({t.impl(), std::vector<double>(t.numel(), 0.0),
                      std::vector<double>(t.numel(), 0.0)});
}

void Adam::add_params(const std::vector<Tensor>& ts) {
    for (const auto& t : ts) add_param(t);
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& s : slots_) {
        auto& p = *s.param;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            if (g == 0.0 && s.m[i] == 0.0 && s.v[i] == 0.0) continue;
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                    cfg_.weight_decay * p.data[i]);
        }
    }
}

void Adam::zero_grad() {
    for (auto& s : slots_)
        std::fill(s.param->grad.begin(), s.param->grad.end(), 0.0);
}

}  // namespace diffgate
