#include "diffgate/data_synth.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"

using namespace diffgate;

namespace {

double empirical_corr(const std::vector<Example>& split) {
    double my = 0, ma = 0;
    for (const auto& e : split) {
        my += e.task_label;
        ma += e.attr_label;
    }
    my /= split.size();
    ma /= split.size();
    double cov = 0, vy = 0, va = 0;
    for (const auto& e : split) {
        cov += (e.task_label - my) * (e.attr_label - ma);
        vy += (e.task_label - my) * (e.task_label - my);
        va += (e.attr_label - ma) * (e.attr_label - ma);
    }
    return cov / std::sqrt(vy * va);
}

// Bayes-style classifier on the indicator tokens of the generative process.
int indicator_predict(const Example& e, int base, Rng& tie_rng) {
    for (int t : e.tokens) {
        if (t == base) return 0;
        if (t == base + 1) return 1;
    }
    return static_cast<int>(tie_rng.next_below(2));
}

}  // namespace

TEST_CASE("zero correlation setting yields near-zero empirical correlation") {
    SynthSpec spec;
    spec.n_train = 10000;
    spec.n_dev = 1;
    spec.n_test = 1;
    spec.task_attr_correlation = 0.0;
    spec.seed = 11;
    auto ds = generate(spec);
    CHECK(std::abs(empirical_corr(ds.train)) < 0.03);
}

TEST_CASE("requested correlation is realized") {
    SynthSpec spec;
    spec.n_train = 10000;
    spec.n_dev = 1;
    spec.n_test = 1;
    spec.task_attr_correlation = 0.6;
    spec.seed = 12;
    auto ds = generate(spec);
    CHECK(empirical_corr(ds.train) == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("no attribute signal means no attribute indicators and chance probes") {
    SynthSpec spec;
    spec.n_train = 4000;
    spec.n_dev = 1;
    spec.n_test = 1;
    spec.attr_signal_strength = 0.0;
    spec.seed = 13;
    auto ds = generate(spec);
    Rng tie(99);
    std::vector<int> preds, labels;
    for (const auto& e : ds.train) {
        for (int t : e.tokens) CHECK((t < 3 || t > 4));
        preds.push_back(indicator_predict(e, 3, tie));
        labels.push_back(e.attr_label);
    }
    auto m = compute_metrics(preds, labels);
    CHECK(m.balanced_accuracy == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("full task signal makes the indicator classifier near-perfect") {
    SynthSpec spec;
    spec.n_train = 4000;
    spec.n_dev = 1;
    spec.n_test = 1;
    spec.task_signal_strength = 1.0;
    spec.seed = 14;
    auto ds = generate(spec);
    Rng tie(7);
    std::vector<int> preds, labels;
    for (const auto& e : ds.train) {
        preds.push_back(indicator_predict(e, 1, tie));
        labels.push_back(e.task_label);
    }
    CHECK(compute_metrics(preds, labels).accuracy > 0.95);
}

TEST_CASE("metrics closed forms") {
    CHECK(compute_metrics({0, 1, 0}, {0, 1, 0}).accuracy == 1.0);
    CHECK(compute_metrics({0, 1, 0}, {0, 1, 0}).balanced_accuracy == 1.0);

    // constant predictor on a 90/10 split
    std::vector<int> labels(100, 0), preds(100, 0);
    for (int i = 90; i < 100; ++i) labels[i] = 1;
    auto m = compute_metrics(preds, labels);
    CHECK(m.accuracy == doctest::Approx(0.9));
    CHECK(m.balanced_accuracy == doctest::Approx(0.5));
}

TEST_CASE("random predictions on balanced classes sit at chance") {
    Rng rng(21);
    std::vector<int> labels, preds;
    for (int i = 0; i < 10000; ++i) {
        labels.push_back(i % 2);
        preds.push_back(static_cast<int>(rng.next_below(2)));
    }
    auto m = compute_metrics(preds, labels);
    CHECK(std::abs(m.accuracy - 0.5) < 0.02);
    CHECK(std::abs(m.balanced_accuracy - 0.5) < 0.02);
}

TEST_CASE("metrics validation") {
    CHECK_THROWS_AS(compute_metrics({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics({0}, {0, 1}), std::invalid_argument);
}

TEST_CASE("generation is deterministic and splits are disjoint and balanced") {
    SynthSpec spec;
    spec.n_train = 500;
    spec.n_dev = 200;
    spec.n_test = 200;
    spec.seed = 31;
    auto a = generate(spec);
    auto b = generate(spec);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].tokens == b.train[i].tokens);
        CHECK(a.train[i].task_label == b.train[i].task_label);
        CHECK(a.train[i].attr_label == b.train[i].attr_label);
    }

    std::set<std::vector<int>> tr, dv, te;
    int y_sum = 0;
    for (const auto& e : a.train) {
        tr.insert(e.tokens);
        y_sum += e.task_label;
    }
    CHECK(y_sum * 2 == static_cast<int>(a.train.size()));
    for (const auto& e : a.dev) dv.insert(e.tokens);
    for (const auto& e : a.test) te.insert(e.tokens);
    CHECK(tr.size() == a.train.size());
    for (const auto& t : dv) CHECK(tr.count(t) == 0);
    for (const auto& t : te) {
        CHECK(tr.count(t) == 0);
        CHECK(dv.count(t) == 0);
    }
}

TEST_CASE("spec validation") {
    SynthSpec spec;
    spec.task_attr_correlation = 1.5;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
    spec = SynthSpec{};
    spec.vocab_size = 4;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
    spec = SynthSpec{};
    spec.task_signal_strength = -0.1;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("jsonl round trip") {
    SynthSpec spec;
    spec.n_train = 50;
    spec.n_dev = 1;
    spec.n_test = 1;
    spec.seed = 5;
    auto ds = generate(spec);
    auto dir = std::filesystem::temp_directory_path() / "diffgate_test_data";
    std::filesystem::create_directories(dir);
    auto p = dir / "train.jsonl";
    export_jsonl(ds.train, p);
    auto back = import_jsonl(p);
    REQUIRE(back.size() == ds.train.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].tokens == ds.train[i].tokens);
        CHECK(back[i].task_label == ds.train[i].task_label);
        CHECK(back[i].attr_label == ds.train[i].attr_label);
    }
}
