#include "diffgate/adversarial.hpp"

#include <cmath>

#include "doctest.h"

using namespace diffgate;

namespace {

Tensor random_features(std::size_t n, std::size_t dim, Rng& rng, bool requires_grad = false) {
    std::vector<double> v(n * dim);
    for (auto& x : v) x = rng.next_normal();
    return Tensor::from({n, dim}, std::move(v), requires_grad);
}

AdversarialObjective make_objective(std::size_t dim, double lambda_adv, Rng& rng) {
    AdversarialObjective obj;
    obj.lambda_adv = lambda_adv;
    obj.task_head = Head::init(HeadKind::task, dim, 2, rng);
    obj.adv_head = Head::init(HeadKind::adversarial, dim, 2, rng);
    return obj;
}

}  // namespace

TEST_CASE("forward loss value is unaffected by lambda_adv") {
    Rng rng(1);
    auto h = random_features(6, 4, rng);
    std::vector<int> y{0, 1, 0, 1, 0, 1}, a{1, 0, 1, 0, 1, 0};
    auto obj0 = make_objective(4, 0.0, rng);
    auto obj1 = obj0;
    obj1.lambda_adv = 2.5;
    CHECK(adversarial_loss(obj0, h, y, a).total.item() ==
          adversarial_loss(obj1, h, y, a).total.item());
}

TEST_CASE("lambda_adv = 0 gives the task-only encoder gradient") {
    Rng rng(2);
    std::vector<int> y{0, 1, 0, 1}, a{1, 1, 0, 0};
    auto obj = make_objective(4, 0.0, rng);

    auto h1 = random_features(4, 4, rng, true);
    backward(adversarial_loss(obj, h1, y, a).total);

    // task branch alone, same features
    auto h2 = Tensor::from({4, 4},
                           std::vector<double>(h1.data().begin(), h1.data().end()), true);
    backward(softmax_cross_entropy(head_forward(obj.task_head, h2), y));

    for (std::size_t i = 0; i < h1.numel(); ++i)
        CHECK(h1.grad()[i] == doctest::Approx(h2.grad()[i]).epsilon(1e-12));
}

TEST_CASE("encoder gradient decomposes into task minus attribute branches") {
    Rng rng(3);
    std::vector<int> y{0, 1, 1, 0}, a{1, 0, 1, 0};
    auto obj = make_objective(4, 1.0, rng);

    auto h = random_features(4, 4, rng, true);
    backward(adversarial_loss(obj, h, y, a).total);

    auto copy_of = [&](const Tensor& t) {
        return Tensor::from({4, 4}, std::vector<double>(t.data().begin(), t.data().end()),
                            true);
    };
    auto ht = copy_of(h);
    backward(softmax_cross_entropy(head_forward(obj.task_head, ht), y));
    auto ha = copy_of(h);
    backward(softmax_cross_entropy(head_forward(obj.adv_head, ha), a));

    for (std::size_t i = 0; i < h.numel(); ++i)
        CHECK(h.grad()[i] == doctest::Approx(ht.grad()[i] - ha.grad()[i]).epsilon(1e-12));
}

TEST_CASE("adv head parameter gradient is unaffected by the reversal layer") {
    Rng rng(4);
    std::vector<int> y{0, 1, 1, 0}, a{1, 0, 1, 0};
    auto h = random_features(4, 4, rng);

    auto obj = make_objective(4, 3.0, rng);
    backward(adversarial_loss(obj, h, y, a).total);
    std::vector<double> with_grl(obj.adv_head.weights.grad().begin(),
                                 obj.adv_head.weights.grad().end());

    obj.adv_head.weights.zero_grad();
    obj.adv_head.bias.zero_grad();
    backward(softmax_cross_entropy(head_forward(obj.adv_head, h), a));
    for (std::size_t i = 0; i < with_grl.size(); ++i)
        CHECK(obj.adv_head.weights.grad()[i] == doctest::Approx(with_grl[i]).epsilon(1e-12));
}

TEST_CASE("grad_reverse forward is bitwise identity") {
    Rng rng(5);
    auto h = random_features(3, 5, rng);
    auto r = grad_reverse(h, 1.7);
    for (std::size_t i = 0; i < h.numel(); ++i) CHECK(r.data()[i] == h.data()[i]);
}

TEST_CASE("probe at chance on shuffled labels") {
    Rng rng(6);
    auto h_train = random_features(400, 8, rng);
    auto h_eval = random_features(400, 8, rng);
    std::vector<int> a_train, a_eval;
    for (int i = 0; i < 400; ++i) {
        a_train.push_back(static_cast<int>(rng.next_below(2)));
        a_eval.push_back(static_cast<int>(rng.next_below(2)));
    }
    const double bac = probe_attribute(h_train, a_train, h_eval, a_eval, 100, 42);
    CHECK(std::abs(bac - 0.5) < 0.06);
}

TEST_CASE("probe near-perfect when the attribute is a coordinate of h") {
    Rng rng(7);
    auto make = [&](std::size_t n, std::vector<int>& labels) {
        std::vector<double> v(n * 8);
        labels.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const int a = static_cast<int>(rng.next_below(2));
            labels.push_back(a);
            for (std::size_t d = 0; d < 8; ++d) v[i * 8 + d] = rng.next_normal();
            v[i * 8 + 3] = a ? 2.0 : -2.0;
        }
        return Tensor::from({n, 8}, std::move(v));
    };
    std::vector<int> a_train, a_eval;
    auto h_train = make(300, a_train);
    auto h_eval = make(300, a_eval);
    CHECK(probe_attribute(h_train, a_train, h_eval, a_eval, 200, 42) > 0.95);
}

TEST_CASE("probe rejects a single-class split") {
    Rng rng(8);
    auto h = random_features(10, 4, rng);
    std::vector<int> ones(10, 1);
    CHECK_THROWS_AS(probe_attribute(h, ones, h, ones, 10, 1), std::invalid_argument);
}

TEST_CASE("batch mismatch rejected") {
    Rng rng(9);
    auto obj = make_objective(4, 1.0, rng);
    auto h = random_features(4, 4, rng);
    CHECK_THROWS_AS(adversarial_loss(obj, h, {0, 1}, {0, 1, 0, 1}), std::invalid_argument);
}
