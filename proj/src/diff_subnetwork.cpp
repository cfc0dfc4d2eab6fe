#include "diffgate/diff_subnetwork.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace diffgate {

DiffSubnetwork DiffSubnetwork::create(const ParamGroups& pretrained, bool structured,
                                      PenaltyCombination combo,
                                      const HardConcreteConfig& cfg, Rng& init_rng) {
    DiffSubnetwork net;
    net.structured_ = structured;
    net.combo_ = combo;
    net.gate_cfg_ = cfg;
    for (const auto& [name, theta] : pretrained) {
        Group g;
        std::vector<double> w_init(theta.numel());
        for (auto& v : w_init) v = 0.01 * init_rng.next_normal();
        g.w = Tensor::from(theta.shape(), std::move(w_init), /*requires_grad=*/true);
        g.gate.emplace(theta.numel(), cfg, init_rng);
        if (structured) g.group_gate.emplace(1, cfg, init_rng);
        net.groups_.emplace(name, std::move(g));
    }
    return net;
}

DiffSubnetwork DiffSubnetwork::from_frozen(std::map<std::string, Group> groups) {
    DiffSubnetwork net;
    net.groups_ = std::move(groups);
    net.frozen_ = true;
    return net;
}

DiffSubnetwork DiffSubnetwork::from_gate_state(std::map<std::string, Group> groups,
                                               bool structured, PenaltyCombination combo,
                                               const HardConcreteConfig& cfg) {
    DiffSubnetwork net;
    net.structured_ = structured;
    net.combo_ = combo;
    net.gate_cfg_ = cfg;
    for (const auto& [name, g] : groups) {
        if (!g.gate || g.gate->count() != g.w.numel())
            throw std::invalid_argument("from_gate_state: group '" + name +
                                        "' needs one gate per weight");
        if (structured && (!g.group_gate || g.group_gate->count() != 1))
            throw std::invalid_argument("from_gate_state: group '" + name +
                                        "' needs a scalar group gate");
    }
    net.groups_ = std::move(groups);
    return net;
}

std::map<std::string, Tensor> DiffSubnetwork::deltas(bool stochastic, Rng* rng) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, g] : groups_) {
        if (frozen_) {
            out.emplace(name, mul(g.frozen_mask, g.w));
            continue;
        }
        if (!g.gate)
            throw std::runtime_error("diff subnetwork: group '" + name +
                                     "' has neither gates nor a frozen mask");
        Tensor z;
        if (stochastic) {
            if (!rng)
                throw std::invalid_argument("deltas: stochastic mode needs an rng");
            z = sample_gate(*g.gate, *rng);
            if (structured_) z = mul(z, sample_gate(*g.group_gate, *rng));
        } else {
            z = deterministic_gate(*g.gate);
            if (structured_) z = mul(z, deterministic_gate(*g.group_gate));
        }
        out.emplace(name, mul(reshape(z, g.w.shape()), g.w));
    }
    return out;
}

std::map<std::string, Tensor> DiffSubnetwork::effective_params(
    const ParamGroups& pretrained, bool stochastic, Rng* rng) const {
    return apply_deltas(pretrained, {this}, stochastic, rng);
}

Tensor DiffSubnetwork::l0_loss(double lambda_sparsity) const {
    if (frozen_)
        throw std::logic_error("l0_loss: mask is frozen; the penalty only applies in "
                               "the gate-training phase");
    if (lambda_sparsity == 0.0) return Tensor::scalar(0.0);
    Tensor total;
    for (const auto& [name, g] : groups_) {
        Tensor term = l0_penalty(*g.gate);
        if (structured_) {
            Tensor group_term = l0_penalty(*g.group_gate);
            if (combo_ == PenaltyCombination::multiplicative) {
                // sigma_g * sum_i sigma_i: the group factor multiplies every
                // element term, so the group gate feels pressure from the
                // whole group at once.
                term = mul(group_term, term);
            } else {
                // sigma_g + sum_i sigma_i: the decoupled variant counts the
                // group gate once, which is what makes it the stable choice —
                // group closure is no longer the dominant descent direction.
                term = add(group_term, term);
            }
        }
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, lambda_sparsity);
}

SparsityReport DiffSubnetwork::magnitude_prune(double target_sparsity) {
    if (!(target_sparsity > 0.0 && target_sparsity <= 1.0))
        throw std::invalid_argument("magnitude_prune: target sparsity must be in (0,1]");
    if (frozen_) throw std::logic_error("magnitude_prune: gates already discarded");

    struct Entry {
        double score;
        const std::string* group;
        std::size_t idx;
    };
    std::vector<Entry> entries;
    std::size_t total = 0;
    for (const auto& [name, g] : groups_) total += g.w.numel();
    entries.reserve(total);

    for (const auto& [name, g] : groups_) {
        // Deterministic z for the pruning score keeps step 2 reproducible.
        Tensor z = deterministic_gate(*g.gate);
        double zg = 1.0;
        if (structured_) zg = deterministic_gate(*g.group_gate).item();
        for (std::size_t i = 0; i < g.w.numel(); ++i)
            entries.push_back({std::abs(z.data()[i] * zg * g.w.data()[i]), &name, i});
    }

    const std::size_t kept = static_cast<std::size_t>(
        std::ceil(target_sparsity * static_cast<double>(total)));
    std::nth_element(entries.begin(), entries.begin() + kept, entries.end(),
                     [](const Entry& a, const Entry& b) {
                         return std::tie(b.score, *a.group, a.idx) <
                                std::tie(a.score, *b.group, b.idx);
                     });
    // nth_element suffices: the comparator is a strict total order, so the
    // first `kept` entries are exactly the winners of the full sort.

    SparsityReport report;
    report.total_params = total;
    report.nonzero_diff = kept;
    report.sparsity_rate = static_cast<double>(kept) / static_cast<double>(total);

    std::map<std::string, std::vector<double>> masks;
    for (const auto& [name, g] : groups_) {
        masks.emplace(name, std::vector<double>(g.w.numel(), 0.0));
        report.per_group[name] = 0;
    }
    for (std::size_t i = 0; i < kept; ++i) {
        masks[*entries[i].group][entries[i].idx] = 1.0;
        ++report.per_group[*entries[i].group];
    }
    for (auto& [name, g] : groups_) {
        g.frozen_mask = Tensor::from(g.w.shape(), std::move(masks[name]));
        g.gate.reset();
        g.group_gate.reset();
    }
    frozen_ = true;
    return report;
}

SparsityReport DiffSubnetwork::sparsity_report() const {
    SparsityReport report;
    for (const auto& [name, g] : groups_) {
        std::size_t nz = 0;
        if (frozen_) {
            for (double v : g.frozen_mask.data())
                if (v != 0.0) ++nz;
        } else {
            Tensor z = deterministic_gate(*g.gate);
            for (double v : z.data())
                if (v != 0.0) ++nz;
        }
        report.per_group[name] = nz;
        report.nonzero_diff += nz;
        report.total_params += g.w.numel();
    }
    report.sparsity_rate =
        static_cast<double>(report.nonzero_diff) / static_cast<double>(report.total_params);
    return report;
}

std::vector<Tensor> DiffSubnetwork::trainable() const {
    std::vector<Tensor> out;
    for (const auto& [name, g] : groups_) {
        out.push_back(g.w);
        if (!frozen_) {
            out.push_back(g.gate->log_alpha());
            if (structured_) out.push_back(g.group_gate->log_alpha());
        }
    }
    return out;
}

double DiffSubnetwork::closed_group_fraction() const {
    if (!structured_ || frozen_) return 0.0;
    std::size_t closed = 0;
    for (const auto& [name, g] : groups_)
        if (deterministic_gate(*g.group_gate).item() == 0.0) ++closed;
    return static_cast<double>(closed) / static_cast<double>(groups_.size());
}

ParamGroups apply_deltas(const ParamGroups& pretrained,
                         const std::vector<const DiffSubnetwork*>& nets,
                         bool stochastic, Rng* rng) {
    std::vector<std::map<std::string, Tensor>> all_deltas;
    for (const auto* net : nets) {
        for (const auto& [name, g] : net->groups())
            if (!pretrained.count(name))
                throw std::runtime_error("apply_deltas: group '" + name +
                                         "' missing from pretrained parameters");
        if (net->groups().size() != pretrained.size())
            for (const auto& [name, theta] : pretrained)
                if (!net->groups().count(name))
                    throw std::runtime_error("apply_deltas: subnetwork lacks group '" +
                                             name + "'");
        all_deltas.push_back(net->deltas(stochastic, rng));
    }
    ParamGroups out;
    for (const auto& [name, theta] : pretrained) {
        Tensor eff = theta;
        for (auto& deltas : all_deltas) eff = add(eff, deltas.at(name));
        out.emplace(name, eff);
    }
    return out;
}

}  // namespace diffgate
