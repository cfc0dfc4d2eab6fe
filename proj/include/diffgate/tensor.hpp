#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace diffgate {

// Dense 64-bit float tensor, node in a reverse-mode autodiff tape.
// Graph construction and backward are single-threaded; the heavy inner
// loops live in kernels.hpp.
//
// Errors are reported with exceptions: ShapeError for dimension mismatches,
// std::invalid_argument for contract violations.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<TensorImplPtr> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(const TensorImpl&)> backward_fn;
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    bool requires_grad() const { return impl_->requires_grad; }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }
    std::span<double> grad() { return impl_->grad; }
    std::span<const double> grad() const { return impl_->grad; }

    double item() const;
    void zero_grad();

    TensorImplPtr impl() const { return impl_; }

  private:
    explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}
    TensorImplPtr impl_;
    friend Tensor wrap(TensorImplPtr);
};

Tensor wrap(TensorImplPtr impl);

// Runs reverse-mode accumulation from a scalar loss. Repeated calls without
// zero_grad accumulate.
void backward(const Tensor& loss);

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with trailing-dimension broadcasting (the smaller operand's
// shape must be a suffix of the larger's).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
// z = min(1, max(0, x)); subgradient 1 strictly inside (0,1), 0 outside and
// at the boundary points themselves.
Tensor clamp_hard(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor sum(const Tensor& a);

// Same data, new shape (numel must match). Copies; gradients flow through.
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

// Mean NLL over the batch, stabilized by max-subtraction. logits [batch x classes].
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Identity forward; backward propagates -lambda_adv * incoming gradient.
Tensor grad_reverse(const Tensor& x, double lambda_adv);

// Per-row layer norm (last dim), then affine with gamma/beta vectors.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

// Row-softmax self-attention. q,k,v are [batch*seq x hidden]; hidden is split
// into heads; output heads re-concatenated to [batch*seq x hidden].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t batch, std::size_t seq, std::size_t heads);

// out[b*seq+s] = tok_emb[tokens[b][s]] + pos_emb[s]
Tensor embed(const Tensor& tok_emb, const Tensor& pos_emb,
             const std::vector<std::vector<int>>& tokens);

// [batch*seq x hidden] -> [batch x hidden], mean over each sequence.
Tensor mean_pool(const Tensor& x, std::size_t batch, std::size_t seq);

// Rows of x selected by index (used by the masked-LM head to score only
// masked positions).
Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows);

}  // namespace diffgate
