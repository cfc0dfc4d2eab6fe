#include "diffgate/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "diffgate/optimizer.hpp"

namespace diffgate {

void EncoderConfig::validate() const {
    if (vocab_size < 1 || max_seq_len < 1 || num_layers < 1 || hidden_dim < 1 ||
        num_heads < 1 || ffn_dim < 1)
        throw std::invalid_argument("encoder config: all counts must be >= 1");
    if (hidden_dim % num_heads != 0)
        throw std::invalid_argument("encoder config: hidden_dim must be divisible by "
                                    "num_heads");
}

namespace {

Tensor normal_init(std::vector<std::size_t> shape, Rng& rng, double std_dev = 0.02) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = std_dev * rng.next_normal();
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

}  // namespace

ParamGroups Encoder::init_params(Rng& rng) const {
    const auto H = cfg_.hidden_dim, F = cfg_.ffn_dim;
    ParamGroups p;
    p.emplace("embed.tok", normal_init({cfg_.vocab_size, H}, rng));
    p.emplace("embed.pos", normal_init({cfg_.max_seq_len, H}, rng));
    for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
        const std::string L = "layer" + std::to_string(i) + ".";
        p.emplace(L + "ln1.g", Tensor::full({H}, 1.0));
        p.emplace(L + "ln1.b", Tensor::zeros({H}));
        for (const char* n : {"wq", "wk", "wv", "wo"})
            p.emplace(L + "attn." + n, normal_init({H, H}, rng));
        for (const char* n : {"bq", "bk", "bv", "bo"})
            p.emplace(L + "attn." + n, Tensor::zeros({H}));
        p.emplace(L + "ln2.g", Tensor::full({H}, 1.0));
        p.emplace(L + "ln2.b", Tensor::zeros({H}));
        p.emplace(L + "ffn.w1", normal_init({H, F}, rng));
        p.emplace(L + "ffn.b1", Tensor::zeros({F}));
        p.emplace(L + "ffn.w2", normal_init({F, H}, rng));
        p.emplace(L + "ffn.b2", Tensor::zeros({H}));
    }
    p.emplace("final.ln.g", Tensor::full({H}, 1.0));
    p.emplace("final.ln.b", Tensor::zeros({H}));
    return p;
}

Tensor Encoder::encode_tokens(const ParamGroups& params, const TokenBatch& tokens) const {
    const std::size_t batch = tokens.size();
    if (batch == 0) throw std::invalid_argument("encode: empty batch");
    const std::size_t seq = tokens[0].size();

    auto P = [&](const std::string& name) -> const Tensor& {
        auto it = params.find(name);
        if (it == params.end())
            throw std::runtime_error("encoder: missing parameter group '" + name + "'");
        return it->second;
    };

    Tensor x = embed(P("embed.tok"), P("embed.pos"), tokens);
    for (std::size_t i = 0; i < cfg_.num_layers; ++i) {
        const std::string L = "layer" + std::to_string(i) + ".";
        Tensor n1 = layer_norm(x, P(L + "ln1.g"), P(L + "ln1.b"));
        Tensor q = linear(n1, P(L + "attn.wq"), P(L + "attn.bq"));
        Tensor k = linear(n1, P(L + "attn.wk"), P(L + "attn.bk"));
        Tensor v = linear(n1, P(L + "attn.wv"), P(L + "attn.bv"));
        Tensor a = attention(q, k, v, batch, seq, cfg_.num_heads);
        x = add(x, linear(a, P(L + "attn.wo"), P(L + "attn.bo")));
        Tensor n2 = layer_norm(x, P(L + "ln2.g"), P(L + "ln2.b"));
        Tensor f = linear(gelu(linear(n2, P(L + "ffn.w1"), P(L + "ffn.b1"))),
                          P(L + "ffn.w2"), P(L + "ffn.b2"));
        x = add(x, f);
    }
    return layer_norm(x, P("final.ln.g"), P("final.ln.b"));
}

Tensor Encoder::encode(const ParamGroups& params, const TokenBatch& tokens) const {
    return mean_pool(encode_tokens(params, tokens), tokens.size(), tokens[0].size());
}

Head Head::init(HeadKind kind, std::size_t hidden, std::size_t classes, Rng& rng) {
    if (classes < 2) throw std::invalid_argument("head: need at least 2 classes");
    Head h;
    h.kind = kind;
    h.weights = normal_init({hidden, classes}, rng);
    h.weights.impl()->requires_grad = true;
    h.weights.impl()->grad.assign(h.weights.numel(), 0.0);
    h.bias = Tensor::zeros({classes}, true);
    return h;
}

Tensor head_forward(const Head& head, const Tensor& h) {
    if (h.shape().size() != 2 || h.shape()[1] != head.weights.shape()[0])
        throw ShapeError("head_forward: feature width does not match head input dim");
    return add(matmul(h, head.weights), head.bias);
}

PretrainResult pretrain(const EncoderConfig& cfg, const std::vector<std::vector<int>>& corpus,
                        std::size_t steps, std::size_t batch_size, double lr) {
    Encoder enc(cfg);
    Rng init_rng = Rng::stream(cfg.seed, "pretrain.init");
    ParamGroups params = enc.init_params(init_rng);
    for (auto& [name, t] : params) {
        t.impl()->requires_grad = true;
        t.impl()->grad.assign(t.numel(), 0.0);
    }
    // Masked-token prediction head; scaffolding only, dropped from the result.
    Rng head_rng = Rng::stream(cfg.seed, "pretrain.head");
    Tensor mlm_w = normal_init({cfg.hidden_dim, cfg.vocab_size}, head_rng);
    mlm_w.impl()->requires_grad = true;
    mlm_w.impl()->grad.assign(mlm_w.numel(), 0.0);
    Tensor mlm_b = Tensor::zeros({cfg.vocab_size}, true);

    if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
    const std::size_t held_out = std::max<std::size_t>(1, corpus.size() / 10);
    const std::size_t n_train = corpus.size() > held_out ? corpus.size() - held_out : 1;

    Adam opt(AdamConfig{.lr = lr});
    for (auto& [name, t] : params) opt.add_param(t);
    opt.add_param(mlm_w);
    opt.add_param(mlm_b);

    Rng data_rng = Rng::stream(cfg.seed, "pretrain.data");
    PretrainResult result;

    auto masked_batch = [&](const std::vector<std::size_t>& idx, Rng& rng, TokenBatch& toks,
                            std::vector<std::size_t>& rows, std::vector<int>& targets) {
        const std::size_t seq = corpus[idx[0]].size();
        toks.clear();
        rows.clear();
        targets.clear();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            toks.push_back(corpus[idx[b]]);
            for (std::size_t s = 0; s < seq; ++s)
                if (rng.next_double() < 0.15) {
                    rows.push_back(b * seq + s);
                    targets.push_back(toks[b][s]);
                    toks[b][s] = 0;  // reserved mask token
                }
        }
        if (rows.empty()) {  // force one so the loss is defined
            rows.push_back(0);
            targets.push_back(corpus[idx[0]][0]);
            toks[0][0] = 0;
        }
    };

    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<std::size_t> idx(batch_size);
        for (auto& i : idx) i = data_rng.next_below(n_train);
        TokenBatch toks;
        std::vector<std::size_t> rows;
        std::vector<int> targets;
        masked_batch(idx, data_rng, toks, rows, targets);

        opt.zero_grad();
        Tensor feats = enc.encode_tokens(params, toks);
        Tensor logits = add(matmul(select_rows(feats, rows), mlm_w), mlm_b);
        Tensor loss = softmax_cross_entropy(logits, targets);
        if (!std::isfinite(loss.item()))
            throw std::runtime_error("pretrain: non-finite loss at step " +
                                     std::to_string(step));
        result.final_loss = loss.item();
        backward(loss);
        opt.step();
    }

    // Held-out masked accuracy with the scaffolding head still attached.
    Rng eval_rng = Rng::stream(cfg.seed, "pretrain.eval");
    std::size_t correct = 0, seen = 0;
    for (std::size_t i = n_train; i < corpus.size(); i += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t j = i; j < std::min(corpus.size(), i + batch_size); ++j)
            idx.push_back(j);
        TokenBatch toks;
        std::vector<std::size_t> rows;
        std::vector<int> targets;
        masked_batch(idx, eval_rng, toks, rows, targets);
        Tensor feats = enc.encode_tokens(params, toks);
        Tensor logits = add(matmul(select_rows(feats, rows), mlm_w), mlm_b);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double* row = logits.data().data() + r * cfg.vocab_size;
            std::size_t best = 0;
            for (std::size_t c = 1; c < cfg.vocab_size; ++c)
                if (row[c] > row[best]) best = c;
            correct += (static_cast<int>(best) == targets[r]);
            ++seen;
        }
    }
    result.masked_accuracy = seen ? static_cast<double>(correct) / seen : 0.0;

    // Freeze: returned parameters carry no gradient state.
    for (auto& [name, t] : params) {
        t.impl()->requires_grad = false;
        t.impl()->grad.clear();
        t.impl()->parents.clear();
        t.impl()->backward_fn = nullptr;
    }
    result.params = std::move(params);
    return result;
}

}  // namespace diffgate
