#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "diffgate/adversarial.hpp"
#include "diffgate/config.hpp"

namespace diffgate {

enum class BaselineKind { full_finetune, frozen_linear_head };

// One experiment run: the record is a machine-diffable JSON document with an
// identical schema across run kinds; record_hash is the SHA-256 of its
// canonical serialization. When out_dir is set the record is rewritten after
// every epoch, so an interrupted run leaves a usable partial record.
struct RunResult {
    nlohmann::json record;
    std::string record_hash;
    // Trained artifacts for callers that want to save masks or heads.
    std::optional<DiffSubnetwork> subnetwork_t;
    std::optional<DiffSubnetwork> subnetwork_d;
    std::optional<Head> task_head;
};

class Pipeline {
  public:
    explicit Pipeline(TrainPlan plan);

    const TrainPlan& plan() const { return plan_; }
    const Dataset& dataset() const { return dataset_; }

    // Scripted pretraining pass over the synthetic corpus; stands in for a
    // public checkpoint.
    ParamGroups pretrain_encoder() const;

    // Fig-3 two-step schedule over E_t: gate training with the L0 penalty,
    // magnitude pruning to eta, penalty-free finetuning of the survivors.
    RunResult run_diffpruning(const ParamGroups& pretrained,
                              const std::filesystem::path* out_dir = nullptr) const;

    // Fig-4 stacked procedure: E_t via run_diffpruning (task loss only),
    // then E_d trained adversarially on top of the frozen E_t, pruned to eta
    // and finetuned. Evaluation reports metrics with and without E_d.
    RunResult run_debias(const ParamGroups& pretrained,
                         const std::filesystem::path* out_dir = nullptr) const;

    RunResult run_baseline(const ParamGroups& pretrained, BaselineKind kind,
                           const std::filesystem::path* out_dir = nullptr) const;

    // Task metrics of a parameter set (optionally with masks applied) on the
    // test split, plus the attribute probe. Used by the eval CLI command.
    nlohmann::json evaluate(const ParamGroups& effective, const Head& task_head) const;

  private:
    TrainPlan plan_;
    Encoder encoder_;
    Dataset dataset_;
};

// Renders RunRecords into the two report formats: CSV rows and a plain-text
// table with acc/bac columns under Task/Adv headings.
std::string report_csv(const std::vector<nlohmann::json>& records);
std::string report_table(const std::vector<nlohmann::json>& records);

}  // namespace diffgate
