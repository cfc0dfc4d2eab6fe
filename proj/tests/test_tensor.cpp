#include "diffgate/tensor.hpp"

#include <cmath>

#include "diffgate/rng.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace diffgate;

namespace {

Tensor random_leaf(std::vector<std::size_t> shape, Rng& rng, double scl = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = scl * rng.next_normal();
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_CASE("matmul identity") {
    auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto b = Tensor::from({2, 2}, {3, 4, 5, 6});
    auto c = matmul(id, b);
    CHECK(c.data()[0] == 3);
    CHECK(c.data()[1] == 4);
    CHECK(c.data()[2] == 5);
    CHECK(c.data()[3] == 6);
}

TEST_CASE("matmul hand arithmetic") {
    auto a = Tensor::from({1, 2}, {1, 2});
    auto b = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor::from({2, 3}, std::vector<double>(6, 0.0));
    auto b = Tensor::from({2, 2}, std::vector<double>(4, 0.0));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(42);
    auto a = random_leaf({3, 4}, rng);
    auto b = random_leaf({4, 2}, rng);
    auto forward = [&] { return sum(matmul(a, b)).item(); };
    auto loss = sum(matmul(a, b));
    backward(loss);
    CHECK(fd::max_rel_err(a, forward) < 1e-6);
    CHECK(fd::max_rel_err(b, forward) < 1e-6);
}

TEST_CASE("sigmoid symmetry and backward") {
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);

    auto x = Tensor::from({1}, {2.0}, true);
    auto forward = [&] { return sigmoid(x).item(); };
    backward(sigmoid(x));
    CHECK(fd::max_rel_err(x, forward) < 1e-6);
}

TEST_CASE("clamp_hard saturation") {
    auto x = Tensor::from({1}, {1.3}, true);
    auto z = clamp_hard(x);
    CHECK(z.item() == 1.0);
    backward(z);
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("clamp_hard interior passes gradient through") {
    auto x = Tensor::from({1}, {0.25}, true);
    auto z = clamp_hard(x);
    CHECK(z.item() == 0.25);
    backward(z);
    CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("broadcast bias add") {
    auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto b = Tensor::from({3}, {10, 20, 30}, true);
    auto y = add(x, b);
    CHECK(y.data()[0] == 11);
    CHECK(y.data()[5] == 36);
    backward(sum(y));
    CHECK(b.grad()[0] == 2.0);  // summed over leading dim
    CHECK(x.grad()[3] == 1.0);
}

TEST_CASE("softmax_cross_entropy values") {
    auto uniform = softmax_cross_entropy(Tensor::from({1, 2}, {0, 0}), {0});
    CHECK(uniform.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto confident = softmax_cross_entropy(Tensor::from({1, 2}, {10, -10}), {0});
    // closed form: log(1 + e^-20)
    CHECK(confident.item() == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
    CHECK(confident.item() < 3e-9);
}

TEST_CASE("softmax_cross_entropy gradient vs finite differences") {
    Rng rng(7);
    auto logits = random_leaf({4, 3}, rng);
    std::vector<int> labels{0, 2, 1, 1};
    auto forward = [&] { return softmax_cross_entropy(logits, labels).item(); };
    backward(softmax_cross_entropy(logits, labels));
    CHECK(fd::max_rel_err(logits, forward) < 1e-5);
}

TEST_CASE("softmax_cross_entropy rejects empty batch and bad labels") {
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::from({0, 2}, {}), {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::from({1, 2}, {0, 0}), {2}),
                    std::invalid_argument);
}

TEST_CASE("backward of sum gives ones") {
    auto x = Tensor::from({3}, {5, 6, 7}, true);
    backward(sum(x));
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("backward of sum of squares") {
    auto x = Tensor::from({2}, {1, 2}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("backward rejects non-scalar") {
    auto x = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);
}

TEST_CASE("repeated backward accumulates, zero_grad resets") {
    auto x = Tensor::from({2}, {1, 2}, true);
    backward(sum(x));
    backward(sum(x));
    CHECK(x.grad()[0] == 2.0);
    x.zero_grad();
    backward(sum(x));
    CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("grad_reverse identity forward, reversed backward") {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    auto y = grad_reverse(x, 1.0);
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[2] == 3.0);

    auto w = Tensor::from({3}, {1, -2, 0}, true);
    backward(sum(mul(grad_reverse(x, 1.0), w)));
    CHECK(x.grad()[0] == -1.0);
    CHECK(x.grad()[1] == 2.0);

    x.zero_grad();
    backward(sum(mul(grad_reverse(x, 0.0), w)));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("layer_norm statistics and gradient") {
    Rng rng(11);
    auto x = random_leaf({4, 8}, rng);
    auto gamma = Tensor::full({8}, 1.0, true);
    auto beta = Tensor::zeros({8}, true);
    auto y = layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < 8; ++c) mean += y.data()[r * 8 + c];
        mean /= 8.0;
        for (std::size_t c = 0; c < 8; ++c) {
            double d = y.data()[r * 8 + c] - mean;
            var += d * d;
        }
        var /= 8.0;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }

    auto w = random_leaf({4, 8}, rng);
    auto forward = [&] { return sum(mul(layer_norm(x, gamma, beta), w)).item(); };
    backward(sum(mul(layer_norm(x, gamma, beta), w)));
    CHECK(fd::max_rel_err(x, forward) < 1e-5);
    CHECK(fd::max_rel_err(gamma, forward) < 1e-5);
    CHECK(fd::max_rel_err(beta, forward) < 1e-5);
}

TEST_CASE("attention rows sum to one and gradients check out") {
    Rng rng(13);
    const std::size_t batch = 2, seq = 3, hidden = 8, heads = 2;
    auto q = random_leaf({batch * seq, hidden}, rng, 0.5);
    auto k = random_leaf({batch * seq, hidden}, rng, 0.5);
    auto v = random_leaf({batch * seq, hidden}, rng, 0.5);
    auto w = random_leaf({batch * seq, hidden}, rng);
    auto forward = [&] { return sum(mul(attention(q, k, v, batch, seq, heads), w)).item(); };
    backward(sum(mul(attention(q, k, v, batch, seq, heads), w)));
    CHECK(fd::max_rel_err(q, forward) < 1e-5);
    CHECK(fd::max_rel_err(k, forward) < 1e-5);
    CHECK(fd::max_rel_err(v, forward) < 1e-5);
}

TEST_CASE("embed validates token ids with position") {
    auto tok = Tensor::zeros({4, 2});
    auto pos = Tensor::zeros({3, 2});
    CHECK_THROWS_WITH_AS(embed(tok, pos, {{0, 7}}), doctest::Contains("(0,1)"),
                         std::invalid_argument);
}

TEST_CASE("mean_pool gradient") {
    Rng rng(17);
    auto x = random_leaf({6, 4}, rng);
    auto w = random_leaf({2, 4}, rng);
    auto forward = [&] { return sum(mul(mean_pool(x, 2, 3), w)).item(); };
    backward(sum(mul(mean_pool(x, 2, 3), w)));
    CHECK(fd::max_rel_err(x, forward) < 1e-6);
}

TEST_CASE("graph evaluation is deterministic") {
    auto run = [] {
        Rng rng(99);
        auto a = random_leaf({5, 5}, rng);
        auto b = random_leaf({5, 5}, rng);
        return sum(sigmoid(matmul(a, b))).item();
    };
    CHECK(run() == run());
}
