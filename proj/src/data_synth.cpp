#include "diffgate/data_synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "diffgate/log.hpp"
#include "json.hpp"

namespace diffgate {

namespace {

constexpr int kMaskToken = 0;
constexpr int kTaskIndicatorBase = 1;  // ids 1,2
constexpr int kAttrIndicatorBase = 3;  // ids 3,4
constexpr int kBackgroundBase = 5;

// 53-bit fixed-point thresholds so token draws stay on an integer path.
constexpr std::uint64_t kOne = 1ull << 53;

std::uint64_t draw53(Rng& rng) { return rng.next_u64() >> 11; }

}  // namespace

void SynthSpec::validate() const {
    if (vocab_size < kBackgroundBase + 1)
        throw std::invalid_argument("synth spec: vocab_size must be at least " +
                                    std::to_string(kBackgroundBase + 1));
    if (seq_len < 2)
        throw std::invalid_argument("synth spec: seq_len must be >= 2 so task and "
                                    "attribute indicators fit at distinct positions");
    if (n_train < 1 || n_dev < 1 || n_test < 1)
        throw std::invalid_argument("synth spec: split sizes must be >= 1");
    for (double p : {task_signal_strength, attr_signal_strength})
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("synth spec: signal strengths must be in [0,1]");
    if (!(task_attr_correlation >= -1.0 && task_attr_correlation <= 1.0))
        throw std::invalid_argument("synth spec: correlation outside [-1,1] is "
                                    "unsatisfiable for balanced marginals");
}

Dataset generate(const SynthSpec& spec) {
    spec.validate();

    // zipf-like background: weight 1/(k+1), cumulative thresholds in 53-bit
    // fixed point.
    const std::size_t bg = spec.vocab_size - kBackgroundBase;
    std::vector<std::uint64_t> cum(bg);
    {
        double total = 0.0;
        for (std::size_t k = 0; k < bg; ++k) total += 1.0 / static_cast<double>(k + 1);
        double acc = 0.0;
        for (std::size_t k = 0; k < bg; ++k) {
            acc += 1.0 / static_cast<double>(k + 1);
            cum[k] = static_cast<std::uint64_t>(acc / total * static_cast<double>(kOne));
        }
        cum[bg - 1] = kOne;
    }

    const std::uint64_t p_same =
        static_cast<std::uint64_t>((1.0 + spec.task_attr_correlation) / 2.0 *
                                   static_cast<double>(kOne));
    const std::uint64_t p_task =
        static_cast<std::uint64_t>(spec.task_signal_strength * static_cast<double>(kOne));
    const std::uint64_t p_attr =
        static_cast<std::uint64_t>(spec.attr_signal_strength * static_cast<double>(kOne));

    std::set<std::vector<int>> seen;  // cross-split disjointness by rejection

    auto make_example = [&](std::uint64_t split_id, std::uint64_t index) {
        Example ex;
        // Balanced y by construction.
        ex.task_label = static_cast<int>(index % 2);
        for (std::uint64_t nonce = 0;; ++nonce) {
            std::uint64_t mix = spec.seed;
            Rng::splitmix64(mix);
            mix ^= 0x9e3779b97f4a7c15ull * (split_id + 1);
            mix ^= index * 0xff51afd7ed558ccdull;
            mix ^= nonce * 0xc4ceb9fe1a85ec53ull;
            Rng rng(mix);

            ex.attr_label = draw53(rng) < p_same ? ex.task_label : 1 - ex.task_label;

            ex.tokens.assign(spec.seq_len, 0);
            for (auto& t : ex.tokens) {
                const std::uint64_t u = draw53(rng);
                const std::size_t k =
                    std::lower_bound(cum.begin(), cum.end(), u + 1) - cum.begin();
                t = kBackgroundBase + static_cast<int>(std::min(k, bg - 1));
            }
            std::size_t task_pos = spec.seq_len;  // sentinel: absent
            if (draw53(rng) < p_task) {
                task_pos = rng.next_below(spec.seq_len);
                ex.tokens[task_pos] = kTaskIndicatorBase + ex.task_label;
            }
            if (draw53(rng) < p_attr) {
                std::size_t pos = rng.next_below(spec.seq_len);
                while (pos == task_pos) pos = rng.next_below(spec.seq_len);
                ex.tokens[pos] = kAttrIndicatorBase + ex.attr_label;
            }
            if (seen.insert(ex.tokens).second) break;
        }
        return ex;
    };

    Dataset ds;
    for (std::size_t i = 0; i < spec.n_train; ++i) ds.train.push_back(make_example(0, i));
    for (std::size_t i = 0; i < spec.n_dev; ++i) ds.dev.push_back(make_example(1, i));
    for (std::size_t i = 0; i < spec.n_test; ++i) ds.test.push_back(make_example(2, i));
    return ds;
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("metrics: prediction/label length mismatch");
    if (labels.empty()) throw std::invalid_argument("metrics: need at least one example");

    int max_class = 0;
    for (int l : labels) max_class = std::max(max_class, l);
    for (int p : predictions) max_class = std::max(max_class, p);

    std::vector<std::size_t> support(max_class + 1, 0), hits(max_class + 1, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++support[labels[i]];
        if (predictions[i] == labels[i]) {
            ++hits[labels[i]];
            ++correct;
        }
    }

    Metrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (int c = 0; c <= max_class; ++c) {
        if (support[c] == 0) {
            log::info("metrics: class " + std::to_string(c) +
                      " absent from labels; excluded from balanced accuracy");
            continue;
        }
        recall_sum += static_cast<double>(hits[c]) / static_cast<double>(support[c]);
        ++present;
    }
    m.balanced_accuracy = recall_sum / static_cast<double>(present);
    return m;
}

void export_jsonl(const std::vector<Example>& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const auto& ex : split) {
        nlohmann::json j{{"tokens", ex.tokens}, {"y", ex.task_label}, {"a", ex.attr_label}};
        out << j.dump() << "\n";
    }
}

std::vector<Example> import_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::vector<Example> split;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        Example ex;
        ex.tokens = j.at("tokens").get<std::vector<int>>();
        ex.task_label = j.at("y").get<int>();
        ex.attr_label = j.at("a").get<int>();
        split.push_back(std::move(ex));
    }
    return split;
}

}  // namespace diffgate
