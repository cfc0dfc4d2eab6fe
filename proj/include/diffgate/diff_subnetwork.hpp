#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffgate/hard_concrete.hpp"
#include "diffgate/rng.hpp"
#include "diffgate/tensor.hpp"

namespace diffgate {

// Frozen pretrained parameters, keyed by stable group names. None of these
// tensors require grad; the pretrained store is bitwise invariant across a
// whole training run.
using ParamGroups = std::map<std::string, Tensor>;

enum class PenaltyCombination { multiplicative, additive };

struct SparsityReport {
    std::size_t total_params = 0;
    std::size_t nonzero_diff = 0;
    double sparsity_rate = 0.0;  // nonzero_diff / total_params
    std::map<std::string, std::size_t> per_group;
};

// Additive diff reparametrization over frozen pretrained weights:
// effective = theta + delta with delta = z (.) w elementwise, or
// delta = (z_group * z) (.) w when structured. After magnitude pruning the
// gates are discarded and delta = frozen_mask (.) w.
class DiffSubnetwork {
  public:
    struct Group {
        Tensor w;  // trainable diff magnitudes, pretrained shape
        std::optional<HardConcreteGate> gate;        // one per scalar
        std::optional<HardConcreteGate> group_gate;  // scalar, structured only
        Tensor frozen_mask;                          // 0/1 constants, post-prune
    };

    DiffSubnetwork() = default;

    // w ~ Normal(0, 0.01^2): exactly-zero w kills the pathwise gradient to
    // log_alpha, so start with small nonzero magnitudes.
    static DiffSubnetwork create(const ParamGroups& pretrained, bool structured,
                                 PenaltyCombination combo, const HardConcreteConfig& cfg,
                                 Rng& init_rng);

    bool frozen() const { return frozen_; }
    bool structured() const { return structured_; }
    PenaltyCombination penalty_combination() const { return combo_; }
    const HardConcreteConfig& gate_config() const { return gate_cfg_; }
    std::map<std::string, Group>& groups() { return groups_; }
    const std::map<std::string, Group>& groups() const { return groups_; }

    // delta per group as an autodiff expression. Stochastic gates draw from
    // rng; deterministic mode uses the inference collapse. Frozen networks
    // ignore both flags.
    std::map<std::string, Tensor> deltas(bool stochastic, Rng* rng) const;

    // theta + delta per group.
    std::map<std::string, Tensor> effective_params(const ParamGroups& pretrained,
                                                   bool stochastic, Rng* rng) const;

    // lambda-scaled L0 surrogate across all groups. Contract error when the
    // mask is already frozen (the penalty only exists in the gate phase).
    Tensor l0_loss(double lambda_sparsity) const;

    // Fig-3 step 2: scores |deterministic z * w| per scalar globally across
    // groups, keeps the top ceil(target * total), freezes the mask and drops
    // the gates. Ties broken by (|score| desc, group_id asc, flat index asc).
    SparsityReport magnitude_prune(double target_sparsity);

    SparsityReport sparsity_report() const;

    // Every leaf the optimizer should see in the gate-training phase
    // (w, log_alpha, group log_alpha), or just w when frozen.
    std::vector<Tensor> trainable() const;

    // Fraction of group gates whose deterministic z equals exactly 0
    // (structured networks only).
    double closed_group_fraction() const;

    // Assembles a frozen network directly (mask loading).
    static DiffSubnetwork from_frozen(std::map<std::string, Group> groups);

    // Rebuilds a gate-phase network from saved w/log_alpha leaves, so step 2
    // (pruning) can run standalone on a saved gate state.
    static DiffSubnetwork from_gate_state(std::map<std::string, Group> groups,
                                          bool structured, PenaltyCombination combo,
                                          const HardConcreteConfig& cfg);

  private:
    std::map<std::string, Group> groups_;
    bool structured_ = false;
    bool frozen_ = false;
    PenaltyCombination combo_ = PenaltyCombination::additive;
    HardConcreteConfig gate_cfg_;
};

// theta + delta_a (+ delta_b ...): stacked subnetworks compose additively.
ParamGroups apply_deltas(const ParamGroups& pretrained,
                         const std::vector<const DiffSubnetwork*>& nets,
                         bool stochastic, Rng* rng);

}  // namespace diffgate
