#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "diffgate/rng.hpp"

namespace diffgate {

// Synthetic corpus with a planted protected attribute.
//
// Token layout: id 0 is reserved for the mask token used during scripted
// pretraining; ids 1/2 indicate task label 0/1; ids 3/4 indicate attribute
// 0/1; everything above 4 is background drawn from a zipf-like distribution.
// Indicator construction makes the bayes-optimal accuracies computable in
// closed form.
struct SynthSpec {
    std::size_t vocab_size = 64;
    std::size_t seq_len = 16;
    std::size_t n_train = 2000;
    std::size_t n_dev = 500;
    std::size_t n_test = 500;
    double task_signal_strength = 0.9;  // P(task indicator token present)
    double attr_signal_strength = 0.9;
    // corr(y, a) with balanced marginals; realized as P(a = y) = (1 + corr)/2.
    double task_attr_correlation = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Example {
    std::vector<int> tokens;
    int task_label = 0;  // y
    int attr_label = 0;  // a
};

struct Dataset {
    std::vector<Example> train, dev, test;
};

// Pure function of the spec; splits are pairwise disjoint as token-sequence
// sets (enforced by rejection) and balanced in y. Per-example counter-based
// seeding keeps generation deterministic regardless of evaluation order.
Dataset generate(const SynthSpec& spec);

struct Metrics {
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;  // unweighted mean of per-class recalls
};

// Classes absent from `labels` are excluded from balanced accuracy (with a
// warning at log level info).
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// JSON-lines {"tokens":[...],"y":int,"a":int}
void export_jsonl(const std::vector<Example>& split, const std::filesystem::path& path);
std::vector<Example> import_jsonl(const std::filesystem::path& path);

}  // namespace diffgate
