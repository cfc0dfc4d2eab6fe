#include "diffgate/adversarial.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "diffgate/data_synth.hpp"
#include "diffgate/optimizer.hpp"

namespace diffgate {

AdversarialLoss adversarial_loss(const AdversarialObjective& obj, const Tensor& h,
                                 const std::vector<int>& task_labels,
                                 const std::vector<int>& attr_labels) {
    if (h.shape()[0] != task_labels.size() || h.shape()[0] != attr_labels.size())
        throw std::invalid_argument("adversarial_loss: batch size mismatch");

    AdversarialLoss out;
    Tensor task_ce = softmax_cross_entropy(head_forward(obj.task_head, h), task_labels);
    Tensor adv_ce = softmax_cross_entropy(
        head_forward(obj.adv_head, grad_reverse(h, obj.lambda_adv)), attr_labels);
    out.task_loss = task_ce.item();
    out.adv_loss = adv_ce.item();
    out.total = obj.include_task_loss ? add(task_ce, adv_ce) : adv_ce;
    return out;
}

double probe_attribute(const Tensor& h_train, const std::vector<int>& attr_train,
                       const Tensor& h_eval, const std::vector<int>& attr_eval,
                       std::size_t epochs, std::uint64_t seed) {
    return probe_attribute_full(h_train, attr_train, h_eval, attr_eval, epochs, seed)
        .balanced_accuracy;
}

Metrics probe_attribute_full(const Tensor& h_train, const std::vector<int>& attr_train,
                             const Tensor& h_eval, const std::vector<int>& attr_eval,
                             std::size_t epochs, std::uint64_t seed) {
    if (h_train.shape()[0] != attr_train.size() || h_eval.shape()[0] != attr_eval.size())
        throw std::invalid_argument("probe_attribute: batch size mismatch");
    std::set<int> classes(attr_train.begin(), attr_train.end());
    if (classes.size() < 2)
        throw std::invalid_argument("probe_attribute: training split has a single class");
    const std::size_t n_classes = *std::max_element(classes.begin(), classes.end()) + 1;

    Rng rng = Rng::stream(seed, "probe.init");
    Head probe = Head::init(HeadKind::adversarial, h_train.shape()[1], n_classes, rng);
    Adam opt(AdamConfig{.lr = 1e-2});
    opt.add_param(probe.weights);
    opt.add_param(probe.bias);

    for (std::size_t e = 0; e < epochs; ++e) {
        opt.zero_grad();
        backward(softmax_cross_entropy(head_forward(probe, h_train), attr_train));
        opt.step();
    }

    Tensor logits = head_forward(probe, h_eval);
    std::vector<int> preds(attr_eval.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double* row = logits.data().data() + i * n_classes;
        preds[i] = static_cast<int>(std::max_element(row, row + n_classes) - row);
    }
    return compute_metrics(preds, attr_eval);
}

}  // namespace diffgate
