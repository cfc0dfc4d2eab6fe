#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffgate/data_synth.hpp"
#include "diffgate/diff_subnetwork.hpp"
#include "diffgate/encoder.hpp"
#include "diffgate/serialize.hpp"
#include "json.hpp"

namespace diffgate {

struct OptimizerSettings {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

enum class PhaseKind {
    pretrain,
    diff_train,
    magnitude_prune,
    diff_finetune,
    adv_diff_train,
    evaluate
};
enum class SubnetworkId { E_t, E_d };

struct Phase {
    PhaseKind kind = PhaseKind::diff_train;
    std::size_t epochs = 1;
    SubnetworkId which_subnetwork = SubnetworkId::E_t;
};

// Full experiment configuration. Loading a config materializes every
// default, so the stored document is always complete and its SHA-256 is the
// run's config hash.
struct TrainPlan {
    EncoderConfig encoder;
    SynthSpec synth;
    std::vector<Phase> phases;
    OptimizerSettings optimizer;                   // gates and diff weights
    OptimizerSettings dense_optimizer{.lr = 1e-4};  // dense baselines
    // The published sparsity lambda (1.25e-7) was tuned for ~110M-parameter
    // models; a negative value here means "preserve the penalty-to-task-loss
    // ratio at toy scale": lambda = 1.25e-7 * 110e6 / param_count.
    double lambda_sparsity = -1.0;
    double lambda_adv = 1.0;
    double target_sparsity = 0.05;  // eta
    bool structured = false;
    PenaltyCombination penalty_combination = PenaltyCombination::additive;
    HardConcreteConfig gate;
    bool adv_include_task_loss = true;
    // Full-batch steps fitting the adversarial head on the frozen task-only
    // features before reversed training begins. The reversal gradient only
    // points away from the attribute once the head actually predicts it.
    std::size_t adv_head_warmup = 200;
    // The attribute head gets its own, faster optimizer: reversed training
    // only removes (rather than flips) attribute structure when the head
    // adapts faster than the encoder moves.
    double adv_head_lr = 1e-2;
    // Alternating refit steps of the attribute head per encoder batch (on
    // detached features). Keeps the head near its best response so the
    // encoder cannot win by flipping predictions across a stale boundary.
    std::size_t adv_head_steps = 4;
    std::size_t batch_size = 32;
    std::size_t pretrain_steps = 300;
    // The bias metric is only meaningful when the probe is fit to
    // convergence; the linear probe is cheap, so train it long.
    std::size_t probe_epochs = 1500;
    std::uint64_t seed = 0;

    void validate() const;
    double resolved_lambda(std::size_t param_count) const;
};

// Fig-3 schedule: diff_train, magnitude_prune, diff_finetune, evaluate.
std::vector<Phase> default_diffpruning_phases(std::size_t train_epochs = 3,
                                              std::size_t finetune_epochs = 2);
// Fig-4 schedule: the E_t phases above followed by the E_d adversarial pass.
std::vector<Phase> default_debias_phases(std::size_t train_epochs = 3,
                                         std::size_t finetune_epochs = 2);

void to_json(nlohmann::json& j, const TrainPlan& p);
void from_json(const nlohmann::json& j, TrainPlan& p);

// Canonical serialization (sorted keys, default formatting); its SHA-256 is
// the config hash embedded in every artifact file.
std::string canonical_json(const TrainPlan& plan);
ConfigHash config_hash(const TrainPlan& plan);
ConfigHash sha256(std::string_view bytes);

TrainPlan load_plan(const std::filesystem::path& path);
void save_plan(const TrainPlan& plan, const std::filesystem::path& path);

}  // namespace diffgate
