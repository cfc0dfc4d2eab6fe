#include "diffgate/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "diffgate/kernels.hpp"

namespace diffgate {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorImplPtr make_leaf(std::vector<std::size_t> shape, std::vector<double> data,
                        bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
    return impl;
}

Tensor make_node(std::vector<std::size_t> shape, std::vector<double> data,
                 std::vector<TensorImplPtr> parents,
                 std::function<void(const TensorImpl&)> backward_fn) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    auto impl = make_leaf(std::move(shape), std::move(data), rg);
    if (rg) {
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return wrap(impl);
}

// True when small's shape is a trailing suffix of big's.
bool suffix_of(const std::vector<std::size_t>& small, const std::vector<std::size_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Tensor binary_broadcast(const Tensor& a, const Tensor& b, const char* name,
                        double (*fwd)(double, double),
                        double (*dda)(double, double),
                        double (*ddb)(double, double)) {
    const bool a_big = a.numel() >= b.numel();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    if (small.numel() != 1 && !suffix_of(small.shape(), big.shape()))
        throw ShapeError(std::string(name) + ": shapes not broadcast-compatible: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = big.numel(), sn = small.numel();

    std::vector<double> out(n);
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a_big ? ad[i] : ad[i % sn];
        const double bv = a_big ? bd[i % sn] : bd[i];
        out[i] = fwd(av, bv);
    }

    auto ai = a.impl(), bi = b.impl();
    return make_node(big.shape(), std::move(out), {ai, bi},
                     [ai, bi, a_big, sn, n, dda, ddb](const TensorImpl& self) {
                         for (std::size_t i = 0; i < n; ++i) {
                             const double g = self.grad[i];
                             const double av = a_big ? ai->data[i] : ai->data[i % sn];
                             const double bv = a_big ? bi->data[i % sn] : bi->data[i];
                             if (ai->requires_grad)
                                 ai->grad[a_big ? i : i % sn] += g * dda(av, bv);
                             if (bi->requires_grad)
                                 bi->grad[a_big ? i % sn : i] += g * ddb(av, bv);
                         }
                     });
}

Tensor unary_op(const Tensor& a, double (*fwd)(double), double (*dfdx)(double)) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    auto ad = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i]);
    auto ai = a.impl();
    return make_node(a.shape(), std::move(out), {ai}, [ai, n, dfdx](const TensorImpl& self) {
        if (!ai->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i] * dfdx(ai->data[i]);
    });
}

#ifndef NDEBUG
void assert_finite(const Tensor& t, const char* op) {
    for (double v : t.data())
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value produced by ") + op);
}
#else
void assert_finite(const Tensor&, const char*) {}
#endif

}  // namespace

Tensor wrap(TensorImplPtr impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return wrap(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("Tensor::from: " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    return wrap(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return wrap(make_leaf({1}, {v}, requires_grad));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    auto n = shape_numel(shape);
    return wrap(make_leaf(std::move(shape), std::vector<double>(n, v), requires_grad));
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor");
    return impl_->data[0];
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS to avoid recursion depth limits.
    std::vector<TensorImpl*> topo;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{loss.impl().get(), 0}};
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* p = node->parents[idx++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss.impl()->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n);
    kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto ai = a.impl(), bi = b.impl();
    return make_node({m, n}, std::move(out), {ai, bi},
                     [ai, bi, m, k, n](const TensorImpl& self) {
                         if (ai->requires_grad)
                             kernels::matmul_nt_acc(self.grad.data(), bi->data.data(),
                                                    ai->grad.data(), m, n, k);
                         if (bi->requires_grad)
                             kernels::matmul_tn_acc(ai->data.data(), self.grad.data(),
                                                    bi->grad.data(), m, k, n);
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    auto ad = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * c;
    auto ai = a.impl();
    return make_node(a.shape(), std::move(out), {ai}, [ai, n, c](const TensorImpl& self) {
        if (!ai->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    auto ad = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] + c;
    auto ai = a.impl();
    return make_node(a.shape(), std::move(out), {ai}, [ai, n](const TensorImpl& self) {
        if (!ai->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        });
}

Tensor log_op(const Tensor& a) {
    auto out = unary_op(a, [](double x) { return std::log(x); },
                        [](double x) { return 1.0 / x; });
    assert_finite(out, "log");
    return out;
}

Tensor exp_op(const Tensor& a) {
    auto out = unary_op(a, [](double x) { return std::exp(x); },
                        [](double x) { return std::exp(x); });
    assert_finite(out, "exp");
    return out;
}

Tensor clamp_hard(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::min(1.0, std::max(0.0, x)); },
        [](double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); },
        [](double x) {
            const double phi_big = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
            const double phi_small = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return phi_big + x * phi_small;
        });
}

Tensor sum(const Tensor& a) {
    const std::size_t n = a.numel();
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto ai = a.impl();
    return make_node({1}, {s}, {ai}, [ai, n](const TensorImpl& self) {
        if (!ai->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += self.grad[0];
    });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    auto ai = a.impl();
    const std::size_t n = a.numel();
    return make_node(std::move(shape), std::move(out), {ai}, [ai, n](const TensorImpl& self) {
        if (!ai->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i];
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax_cross_entropy: logits must be 2-D, got " +
                         shape_str(logits.shape()));
    const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
    if (batch == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
    if (labels.size() != batch)
        throw std::invalid_argument("softmax_cross_entropy: batch " + std::to_string(batch) +
                                    " vs " + std::to_string(labels.size()) + " labels");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= classes)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");

    auto ld = logits.data();
    auto probs = std::make_shared<std::vector<double>>(batch * classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = ld.data() + i * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
        const double lse = mx + std::log(denom);
        loss += lse - row[labels[i]];
        for (std::size_t c = 0; c < classes; ++c)
            (*probs)[i * classes + c] = std::exp(row[c] - lse);
    }
    loss /= static_cast<double>(batch);

    auto li = logits.impl();
    return make_node({1}, {loss}, {li},
                     [li, probs, labels, batch, classes](const TensorImpl& self) {
                         if (!li->requires_grad) return;
                         const double g = self.grad[0] / static_cast<double>(batch);
                         for (std::size_t i = 0; i < batch; ++i)
                             for (std::size_t c = 0; c < classes; ++c) {
                                 double d = (*probs)[i * classes + c];
                                 if (static_cast<std::size_t>(labels[i]) == c) d -= 1.0;
                                 li->grad[i * classes + c] += g * d;
                             }
                     });
}

Tensor grad_reverse(const Tensor& x, double lambda_adv) {
    if (lambda_adv < 0.0)
        throw std::invalid_argument("grad_reverse: lambda_adv must be >= 0");
    std::vector<double> out(x.data().begin(), x.data().end());
    auto xi = x.impl();
    const std::size_t n = x.numel();
    return make_node(x.shape(), std::move(out), {xi},
                     [xi, n, lambda_adv](const TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         for (std::size_t i = 0; i < n; ++i)
                             xi->grad[i] += -lambda_adv * self.grad[i];
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t cols = gamma.numel();
    if (beta.numel() != cols || x.numel() % cols != 0)
        throw ShapeError("layer_norm: incompatible shapes");
    const std::size_t rows = x.numel() / cols;

    auto xd = x.data();
    auto normed = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += row[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < cols; ++c) {
            const double n = (row[c] - mean) * is;
            (*normed)[r * cols + c] = n;
            out[r * cols + c] = n * gamma.data()[c] + beta.data()[c];
        }
    }

    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    return make_node(
        x.shape(), std::move(out), {xi, gi, bi},
        [xi, gi, bi, normed, inv_std, rows, cols](const TensorImpl& self) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = self.grad.data() + r * cols;
                const double* n = normed->data() + r * cols;
                if (gi->requires_grad || bi->requires_grad)
                    for (std::size_t c = 0; c < cols; ++c) {
                        if (gi->requires_grad) gi->grad[c] += g[c] * n[c];
                        if (bi->requires_grad) bi->grad[c] += g[c];
                    }
                if (!xi->requires_grad) continue;
                // dn = g * gamma; dx = inv_std * (dn - mean(dn) - n * mean(dn*n))
                double mean_dn = 0.0, mean_dn_n = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double dn = g[c] * gi->data[c];
                    mean_dn += dn;
                    mean_dn_n += dn * n[c];
                }
                mean_dn /= static_cast<double>(cols);
                mean_dn_n /= static_cast<double>(cols);
                for (std::size_t c = 0; c < cols; ++c) {
                    const double dn = g[c] * gi->data[c];
                    xi->grad[r * cols + c] +=
                        (*inv_std)[r] * (dn - mean_dn - n[c] * mean_dn_n);
                }
            }
        });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t batch, std::size_t seq, std::size_t heads) {
    const std::size_t rows = batch * seq;
    if (q.shape().size() != 2 || q.shape()[0] != rows || k.shape() != q.shape() ||
        v.shape() != q.shape())
        throw ShapeError("attention: q/k/v must all be [batch*seq x hidden]");
    const std::size_t hidden = q.shape()[1];
    if (hidden % heads != 0) throw ShapeError("attention: hidden not divisible by heads");
    const std::size_t dh = hidden / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    // Softmax rows kept for backward: [batch, head, seq, seq].
    auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
    std::vector<double> out(rows * hidden, 0.0);
    auto qd = q.data(), kd = k.data(), vd = v.data();

    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
            double* P = probs->data() + ((b * heads + h) * seq) * seq;
            for (std::size_t i = 0; i < seq; ++i) {
                const double* qi = qd.data() + (b * seq + i) * hidden + h * dh;
                double mx = -1e300;
                for (std::size_t j = 0; j < seq; ++j) {
                    const double* kj = kd.data() + (b * seq + j) * hidden + h * dh;
                    double a = 0.0;
                    for (std::size_t d = 0; d < dh; ++d) a += qi[d] * kj[d];
                    P[i * seq + j] = a * sc;
                    mx = std::max(mx, P[i * seq + j]);
                }
                double denom = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    P[i * seq + j] = std::exp(P[i * seq + j] - mx);
                    denom += P[i * seq + j];
                }
                double* o = out.data() + (b * seq + i) * hidden + h * dh;
                for (std::size_t j = 0; j < seq; ++j) {
                    P[i * seq + j] /= denom;
                    const double* vj = vd.data() + (b * seq + j) * hidden + h * dh;
                    for (std::size_t d = 0; d < dh; ++d) o[d] += P[i * seq + j] * vj[d];
                }
            }
        }

    auto qi_ = q.impl(), ki_ = k.impl(), vi_ = v.impl();
    return make_node(
        q.shape(), std::move(out), {qi_, ki_, vi_},
        [qi_, ki_, vi_, probs, batch, seq, heads, dh, hidden, sc](const TensorImpl& self) {
            std::vector<double> dP(seq * seq), dA(seq * seq);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t h = 0; h < heads; ++h) {
                    const double* P = probs->data() + ((b * heads + h) * seq) * seq;
                    auto row = [&](const TensorImplPtr& t, std::size_t i) {
                        return t->data.data() + (b * seq + i) * hidden + h * dh;
                    };
                    auto grow = [&](const TensorImplPtr& t, std::size_t i) {
                        return t->grad.data() + (b * seq + i) * hidden + h * dh;
                    };
                    auto gout = [&](std::size_t i) {
                        return self.grad.data() + (b * seq + i) * hidden + h * dh;
                    };
                    // dV += P^T dO ; dP = dO V^T
                    for (std::size_t i = 0; i < seq; ++i)
                        for (std::size_t j = 0; j < seq; ++j) {
                            const double* go = gout(i);
                            const double* vj = row(vi_, j);
                            double acc = 0.0;
                            for (std::size_t d = 0; d < dh; ++d) acc += go[d] * vj[d];
                            dP[i * seq + j] = acc;
                            if (vi_->requires_grad) {
                                double* gv = grow(vi_, j);
                                const double p = P[i * seq + j];
                                for (std::size_t d = 0; d < dh; ++d) gv[d] += p * go[d];
                            }
                        }
                    // softmax backward per row
                    for (std::size_t i = 0; i < seq; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < seq; ++j)
                            dot += dP[i * seq + j] * P[i * seq + j];
                        for (std::size_t j = 0; j < seq; ++j)
                            dA[i * seq + j] = P[i * seq + j] * (dP[i * seq + j] - dot);
                    }
                    // dQ += dA K * sc ; dK += dA^T Q * sc
                    for (std::size_t i = 0; i < seq; ++i)
                        for (std::size_t j = 0; j < seq; ++j) {
                            const double a = dA[i * seq + j] * sc;
                            if (a == 0.0) continue;
                            if (qi_->requires_grad) {
                                double* gq = grow(qi_, i);
                                const double* kj = row(ki_, j);
                                for (std::size_t d = 0; d < dh; ++d) gq[d] += a * kj[d];
                            }
                            if (ki_->requires_grad) {
                                double* gk = grow(ki_, j);
                                const double* qi = row(qi_, i);
                                for (std::size_t d = 0; d < dh; ++d) gk[d] += a * qi[d];
                            }
                        }
                }
        });
}

Tensor embed(const Tensor& tok_emb, const Tensor& pos_emb,
             const std::vector<std::vector<int>>& tokens) {
    const std::size_t vocab = tok_emb.shape()[0], hidden = tok_emb.shape()[1];
    const std::size_t max_seq = pos_emb.shape()[0];
    if (pos_emb.shape()[1] != hidden) throw ShapeError("embed: hidden dims disagree");
    const std::size_t batch = tokens.size();
    const std::size_t seq = batch ? tokens[0].size() : 0;
    if (seq > max_seq)
        throw std::invalid_argument("embed: sequence length " + std::to_string(seq) +
                                    " exceeds max " + std::to_string(max_seq));
    for (std::size_t b = 0; b < batch; ++b) {
        if (tokens[b].size() != seq)
            throw std::invalid_argument("embed: ragged token batch");
        for (std::size_t s = 0; s < seq; ++s)
            if (tokens[b][s] < 0 || static_cast<std::size_t>(tokens[b][s]) >= vocab)
                throw std::invalid_argument("embed: token id " + std::to_string(tokens[b][s]) +
                                            " out of range at position (" +
                                            std::to_string(b) + "," + std::to_string(s) + ")");
    }

    std::vector<double> out(batch * seq * hidden);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < seq; ++s) {
            const double* te = tok_emb.data().data() + tokens[b][s] * hidden;
            const double* pe = pos_emb.data().data() + s * hidden;
            double* o = out.data() + (b * seq + s) * hidden;
            for (std::size_t d = 0; d < hidden; ++d) o[d] = te[d] + pe[d];
        }

    auto ti = tok_emb.impl(), pi = pos_emb.impl();
    return make_node({batch * seq, hidden}, std::move(out), {ti, pi},
                     [ti, pi, tokens, batch, seq, hidden](const TensorImpl& self) {
                         for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t s = 0; s < seq; ++s) {
                                 const double* g = self.grad.data() + (b * seq + s) * hidden;
                                 if (ti->requires_grad) {
                                     double* gt = ti->grad.data() + tokens[b][s] * hidden;
                                     for (std::size_t d = 0; d < hidden; ++d) gt[d] += g[d];
                                 }
                                 if (pi->requires_grad) {
                                     double* gp = pi->grad.data() + s * hidden;
                                     for (std::size_t d = 0; d < hidden; ++d) gp[d] += g[d];
                                 }
                             }
                     });
}

Tensor mean_pool(const Tensor& x, std::size_t batch, std::size_t seq) {
    if (x.shape().size() != 2 || x.shape()[0] != batch * seq)
        throw ShapeError("mean_pool: expected [batch*seq x hidden]");
    const std::size_t hidden = x.shape()[1];
    std::vector<double> out(batch * hidden, 0.0);
    auto xd = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < seq; ++s)
            for (std::size_t d = 0; d < hidden; ++d)
                out[b * hidden + d] += xd[(b * seq + s) * hidden + d];
        for (std::size_t d = 0; d < hidden; ++d)
            out[b * hidden + d] /= static_cast<double>(seq);
    }
    auto xi = x.impl();
    return make_node({batch, hidden}, std::move(out), {xi},
                     [xi, batch, seq, hidden](const TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         const double inv = 1.0 / static_cast<double>(seq);
                         for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t s = 0; s < seq; ++s)
                                 for (std::size_t d = 0; d < hidden; ++d)
                                     xi->grad[(b * seq + s) * hidden + d] +=
                                         self.grad[b * hidden + d] * inv;
                     });
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    if (x.shape().size() != 2) throw ShapeError("select_rows: expected 2-D input");
    const std::size_t cols = x.shape()[1];
    for (auto r : rows)
        if (r >= x.shape()[0]) throw std::invalid_argument("select_rows: row out of range");
    std::vector<double> out(rows.size() * cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data().data() + rows[i] * cols, cols, out.data() + i * cols);
    auto xi = x.impl();
    return make_node({rows.size(), cols}, std::move(out), {xi},
                     [xi, rows, cols](const TensorImpl& self) {
                         if (!xi->requires_grad) return;
                         for (std::size_t i = 0; i < rows.size(); ++i)
                             for (std::size_t c = 0; c < cols; ++c)
                                 xi->grad[rows[i] * cols + c] += self.grad[i * cols + c];
                     });
}

}  // namespace diffgate
