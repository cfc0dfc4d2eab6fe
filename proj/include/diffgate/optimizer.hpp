#pragma once

#include <vector>

#include "diffgate/tensor.hpp"

namespace diffgate {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; skipped for untouched elements
};

// Adaptive-moment estimation over a set of leaf tensors. Elements that have
// never received a gradient (grad, m and v all zero) are left untouched,
// including by weight decay, so frozen-mask positions stay bitwise stable.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void add_param(const Tensor& t);
    void add_params(const std::vector<Tensor>& ts);
    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }

  private:
    struct Slot {
        TensorImplPtr param;
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    long t_ = 0;
};

}  // namespace diffgate
