#pragma once

#include <cstdint>
#include <vector>

#include "diffgate/diff_subnetwork.hpp"
#include "diffgate/rng.hpp"
#include "diffgate/tensor.hpp"

namespace diffgate {

struct EncoderConfig {
    std::size_t vocab_size = 64;
    std::size_t max_seq_len = 16;
    std::size_t num_layers = 4;
    std::size_t hidden_dim = 64;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    std::uint64_t seed = 0;

    void validate() const;
};

using TokenBatch = std::vector<std::vector<int>>;

// Pre-norm transformer encoder: embeddings + per-layer (LN, multi-head
// self-attention, residual; LN, GELU FFN, residual), final LN, mean-pool
// over the sequence. Forward is pure given the parameter map, so gated or
// masked parameter sets can be swapped in.
class Encoder {
  public:
    explicit Encoder(EncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const EncoderConfig& config() const { return cfg_; }

    // Fresh seeded initialization of every parameter group.
    ParamGroups init_params(Rng& rng) const;

    // Per-position features [batch*seq x hidden].
    Tensor encode_tokens(const ParamGroups& params, const TokenBatch& tokens) const;
    // Pooled feature vector h [batch x hidden].
    Tensor encode(const ParamGroups& params, const TokenBatch& tokens) const;

  private:
    EncoderConfig cfg_;
};

enum class HeadKind { task, adversarial };

// Affine classification head on top of h.
struct Head {
    HeadKind kind = HeadKind::task;
    Tensor weights;  // [hidden x classes]
    Tensor bias;     // [classes]

    static Head init(HeadKind kind, std::size_t hidden, std::size_t classes, Rng& rng);
};

Tensor head_forward(const Head& head, const Tensor& h);

// Scripted stand-in for a public pretrained checkpoint: trains the encoder
// plus a masked-token prediction head on the corpus (15% of positions
// masked, token id 0 reserved as the mask token) and returns the trained
// parameters. Deterministic under seed.
struct PretrainResult {
    ParamGroups params;
    double final_loss = 0.0;
    double masked_accuracy = 0.0;  // on the held-out slice
};

PretrainResult pretrain(const EncoderConfig& cfg, const std::vector<std::vector<int>>& corpus,
                        std::size_t steps, std::size_t batch_size = 32, double lr = 1e-3);

}  // namespace diffgate
