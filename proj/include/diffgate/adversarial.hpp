#pragma once

#include <cstdint>
#include <vector>

#include "diffgate/data_synth.hpp"
#include "diffgate/encoder.hpp"
#include "diffgate/tensor.hpp"

namespace diffgate {

// Four-component adversarial assembly: encoder features h feed a task head
// and, through a gradient reversal layer, an attribute head. lambda_adv is
// the GRL strength; it is distinct from the sparsity lambda of the diff
// penalty and named accordingly everywhere.
struct AdversarialObjective {
    double lambda_adv = 1.0;
    Head task_head;
    Head adv_head;
    // Whether the task term participates alongside the reversed attribute
    // term (the debias step supports both readings; see pipeline).
    bool include_task_loss = true;
};

struct AdversarialLoss {
    Tensor total;
    double task_loss = 0.0;
    double adv_loss = 0.0;
};

// total = CE(task_head(h), y) + CE(adv_head(grad_reverse(h, lambda_adv)), a).
// The adversarial head itself receives ordinary gradients (reversal happens
// upstream of its parameters), so it keeps learning to predict the attribute
// while the encoder unlearns it.
AdversarialLoss adversarial_loss(const AdversarialObjective& obj, const Tensor& h,
                                 const std::vector<int>& task_labels,
                                 const std::vector<int>& attr_labels);

// Bias metric: trains a fresh linear probe on frozen features and returns
// balanced accuracy on the held-out features. h tensors are constants here;
// no gradient reaches their producer.
double probe_attribute(const Tensor& h_train, const std::vector<int>& attr_train,
                       const Tensor& h_eval, const std::vector<int>& attr_eval,
                       std::size_t epochs, std::uint64_t seed);

// Same probe, with both accuracy and balanced accuracy (for run records).
Metrics probe_attribute_full(const Tensor& h_train, const std::vector<int>& attr_train,
                             const Tensor& h_eval, const std::vector<int>& attr_eval,
                             std::size_t epochs, std::uint64_t seed);

}  // namespace diffgate
