#include "diffgate/diff_subnetwork.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "diffgate/optimizer.hpp"
#include "diffgate/serialize.hpp"
#include "doctest.h"

using namespace diffgate;

namespace {

const HardConcreteConfig kCfg{1.0, -0.1, 1.1};

ParamGroups tiny_pretrained() {
    ParamGroups p;
    p.emplace("a", Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    p.emplace("b", Tensor::from({3}, {-1.0, 0.0, 1.0}));
    return p;
}

void set_all(Tensor& t, double v) { std::fill(t.data().begin(), t.data().end(), v); }

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("zero w leaves pretrained untouched") {
    auto theta = tiny_pretrained();
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    for (auto& [name, g] : net.groups()) set_all(g.w, 0.0);
    Rng srng(2);
    auto eff = net.effective_params(theta, true, &srng);
    for (const auto& [name, t] : eff)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] == theta.at(name).data()[i]);
}

TEST_CASE("all-ones frozen mask gives dense theta + w") {
    auto theta = tiny_pretrained();
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    net.magnitude_prune(1.0);
    for (auto& [name, g] : net.groups()) {
        for (double v : g.frozen_mask.data()) CHECK(v == 1.0);
        set_all(g.w, 0.25);
    }
    auto eff = net.effective_params(theta, false, nullptr);
    for (const auto& [name, t] : eff)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] == theta.at(name).data()[i] + 0.25);
}

TEST_CASE("closed structured group gate zeros the whole group") {
    auto theta = tiny_pretrained();
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, true, PenaltyCombination::additive, kCfg, rng);
    for (auto& [name, g] : net.groups()) {
        set_all(g.w, 0.7);
        set_all(g.gate->log_alpha(), 5.0);          // elementwise gates open
        set_all(g.group_gate->log_alpha(), -20.0);  // group gate closed
    }
    auto eff = net.effective_params(theta, false, nullptr);
    for (const auto& [name, t] : eff)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] == theta.at(name).data()[i]);
}

TEST_CASE("l0_loss closed forms") {
    ParamGroups theta;
    theta.emplace("g", Tensor::zeros({10}));
    Rng rng(1);

    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    set_all(net.groups().at("g").gate->log_alpha(), 0.0);
    CHECK(net.l0_loss(1.0).item() == doctest::Approx(10.0 * 11.0 / 12.0).epsilon(1e-12));
    CHECK(net.l0_loss(0.0).item() == 0.0);

    ParamGroups one;
    one.emplace("g", Tensor::zeros({1}));
    auto mult =
        DiffSubnetwork::create(one, true, PenaltyCombination::multiplicative, kCfg, rng);
    set_all(mult.groups().at("g").gate->log_alpha(), 0.0);
    set_all(mult.groups().at("g").group_gate->log_alpha(), 0.0);
    CHECK(mult.l0_loss(1.0).item() ==
          doctest::Approx((11.0 / 12.0) * (11.0 / 12.0)).epsilon(1e-12));

    auto addv = DiffSubnetwork::create(one, true, PenaltyCombination::additive, kCfg, rng);
    set_all(addv.groups().at("g").gate->log_alpha(), 0.0);
    set_all(addv.groups().at("g").group_gate->log_alpha(), 0.0);
    CHECK(addv.l0_loss(1.0).item() == doctest::Approx(2.0 * 11.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("both penalty combinations are reduced by closing gates") {
    ParamGroups theta;
    theta.emplace("g", Tensor::zeros({4}));
    for (auto combo : {PenaltyCombination::multiplicative, PenaltyCombination::additive}) {
        Rng rng(1);
        auto net = DiffSubnetwork::create(theta, true, combo, kCfg, rng);
        set_all(net.groups().at("g").gate->log_alpha(), -5.0);
        set_all(net.groups().at("g").group_gate->log_alpha(), -5.0);
        auto loss = net.l0_loss(1.0);
        backward(loss);
        // positive gradient: descent keeps pushing log_alpha further down
        CHECK(net.groups().at("g").gate->log_alpha().grad()[0] > 0.0);
        CHECK(net.groups().at("g").group_gate->log_alpha().grad()[0] > 0.0);
    }
}

TEST_CASE("magnitude_prune hand ranking") {
    ParamGroups theta;
    theta.emplace("g", Tensor::zeros({4}));
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    auto& g = net.groups().at("g");
    set_all(g.gate->log_alpha(), 20.0);  // z = 1 everywhere
    g.w.data()[0] = 0.5;
    g.w.data()[1] = -0.9;
    g.w.data()[2] = 0.1;
    g.w.data()[3] = 0.3;
    auto report = net.magnitude_prune(0.5);
    CHECK(report.nonzero_diff == 2);
    CHECK(g.frozen_mask.data()[0] == 1.0);
    CHECK(g.frozen_mask.data()[1] == 1.0);
    CHECK(g.frozen_mask.data()[2] == 0.0);
    CHECK(g.frozen_mask.data()[3] == 0.0);
}

TEST_CASE("magnitude_prune argument validation and exact kept count") {
    ParamGroups theta;
    theta.emplace("g", Tensor::zeros({100}));
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    CHECK_THROWS_AS(net.magnitude_prune(0.0), std::invalid_argument);
    CHECK_THROWS_AS(net.magnitude_prune(1.5), std::invalid_argument);
    auto report = net.magnitude_prune(0.034);  // ceil(3.4) = 4
    CHECK(report.nonzero_diff == 4);
    CHECK(report.sparsity_rate == doctest::Approx(0.04));
    std::size_t per_group_sum = 0;
    for (auto& [k, v] : report.per_group) per_group_sum += v;
    CHECK(per_group_sum == report.nonzero_diff);
    CHECK_THROWS_AS(net.l0_loss(1.0), std::logic_error);
    CHECK_THROWS_AS(net.magnitude_prune(0.5), std::logic_error);
}

TEST_CASE("tie break matches brute-force ranking oracle") {
    // Two groups with deliberately tied |z*w| scores; the oracle sorts by
    // (|score| desc, group asc, index asc) with a full stable sort.
    ParamGroups theta;
    theta.emplace("p", Tensor::zeros({4}));
    theta.emplace("q", Tensor::zeros({4}));
    Rng rng(1);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    const std::vector<double> vals{0.3, 0.5, 0.3, 0.1};
    for (auto& [name, g] : net.groups()) {
        set_all(g.gate->log_alpha(), 20.0);
        std::copy(vals.begin(), vals.end(), g.w.data().begin());
    }

    struct Key {
        double score;
        std::string group;
        std::size_t idx;
    };
    std::vector<Key> oracle;
    for (const auto& name : {"p", "q"})
        for (std::size_t i = 0; i < 4; ++i) oracle.push_back({std::abs(vals[i]), name, i});
    std::sort(oracle.begin(), oracle.end(), [](const Key& a, const Key& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.group != b.group) return a.group < b.group;
        return a.idx < b.idx;
    });

    auto report = net.magnitude_prune(0.5);  // keep 4 of 8
    CHECK(report.nonzero_diff == 4);
    for (std::size_t r = 0; r < oracle.size(); ++r) {
        const double expect = r < 4 ? 1.0 : 0.0;
        CHECK(net.groups().at(oracle[r].group).frozen_mask.data()[oracle[r].idx] == expect);
    }
}

TEST_CASE("frozen-mask zero positions receive no gradient and never move") {
    auto theta = tiny_pretrained();
    Rng rng(9);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    net.magnitude_prune(0.3);

    Adam opt;
    opt.add_params(net.trainable());
    std::map<std::string, std::vector<double>> w_before;
    for (auto& [name, g] : net.groups())
        w_before[name].assign(g.w.data().begin(), g.w.data().end());

    for (int it = 0; it < 5; ++it) {
        opt.zero_grad();
        auto eff = net.effective_params(theta, false, nullptr);
        Tensor loss;
        for (auto& [name, t] : eff) {
            auto term = sum(mul(t, t));
            loss = loss.defined() ? add(loss, term) : term;
        }
        backward(loss);
        for (auto& [name, g] : net.groups())
            for (std::size_t i = 0; i < g.w.numel(); ++i)
                if (g.frozen_mask.data()[i] == 0.0) CHECK(g.w.grad()[i] == 0.0);
        opt.step();
    }
    for (auto& [name, g] : net.groups())
        for (std::size_t i = 0; i < g.w.numel(); ++i)
            if (g.frozen_mask.data()[i] == 0.0)
                CHECK(g.w.data()[i] == w_before[name][i]);
}

TEST_CASE("eval-mode effective params are a pure function") {
    auto theta = tiny_pretrained();
    Rng rng(3);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    auto a = net.effective_params(theta, false, nullptr);
    auto b = net.effective_params(theta, false, nullptr);
    for (const auto& [name, t] : a)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] == b.at(name).data()[i]);
}

TEST_CASE("mask save/load round trip") {
    auto theta = tiny_pretrained();
    Rng rng(5);
    auto net = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    net.magnitude_prune(0.5);

    ConfigHash hash{};
    hash[0] = 0xab;
    auto dir = std::filesystem::temp_directory_path() / "diffgate_test_masks";
    std::filesystem::create_directories(dir);
    auto p1 = dir / "m1.dgm", p2 = dir / "m2.dgm";

    save_mask(net, p1, hash);
    auto loaded = load_mask(p1, theta, &hash);
    CHECK(loaded.frozen());
    for (const auto& [name, g] : net.groups()) {
        const auto& lg = loaded.groups().at(name);
        for (std::size_t i = 0; i < g.w.numel(); ++i) {
            CHECK(lg.frozen_mask.data()[i] == g.frozen_mask.data()[i]);
            if (g.frozen_mask.data()[i] != 0.0) CHECK(lg.w.data()[i] == g.w.data()[i]);
        }
    }
    save_mask(loaded, p2, hash);
    CHECK(slurp(p1) == slurp(p2));  // byte-identical after a round trip

    ConfigHash other{};
    other[0] = 0xcd;
    CHECK_THROWS_AS(load_mask(p1, theta, &other), IncompatibleError);

    // truncated file
    auto bytes = slurp(p1);
    bytes.resize(bytes.size() / 2);
    auto p3 = dir / "trunc.dgm";
    std::ofstream(p3, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_mask(p3, theta, &hash), FormatError);
}

TEST_CASE("empty mask loads to zero delta") {
    auto theta = tiny_pretrained();
    std::map<std::string, DiffSubnetwork::Group> groups;
    for (const auto& [name, t] : theta) {
        DiffSubnetwork::Group g;
        g.w = Tensor::zeros(t.shape(), true);
        g.frozen_mask = Tensor::zeros(t.shape());
        groups.emplace(name, std::move(g));
    }
    auto net = DiffSubnetwork::from_frozen(std::move(groups));

    ConfigHash hash{};
    auto dir = std::filesystem::temp_directory_path() / "diffgate_test_masks";
    std::filesystem::create_directories(dir);
    auto p = dir / "empty.dgm";
    save_mask(net, p, hash);
    auto loaded = load_mask(p, theta, &hash);
    auto eff = loaded.effective_params(theta, false, nullptr);
    for (const auto& [name, t] : eff)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] == theta.at(name).data()[i]);
}

TEST_CASE("checkpoint round trip") {
    auto theta = tiny_pretrained();
    ConfigHash hash{};
    hash[31] = 0x7f;
    auto dir = std::filesystem::temp_directory_path() / "diffgate_test_masks";
    std::filesystem::create_directories(dir);
    auto p = dir / "ck.dgc";
    save_checkpoint(theta, p, hash);
    CHECK(checkpoint_hash(p) == hash);
    auto loaded = load_checkpoint(p, &hash);
    CHECK(loaded.size() == theta.size());
    for (const auto& [name, t] : theta) {
        CHECK(loaded.at(name).shape() == t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(loaded.at(name).data()[i] == t.data()[i]);
    }
}

TEST_CASE("stacked deltas compose additively and removably") {
    auto theta = tiny_pretrained();
    Rng rng(8);
    auto et = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    auto ed = DiffSubnetwork::create(theta, false, PenaltyCombination::additive, kCfg, rng);
    et.magnitude_prune(0.5);
    ed.magnitude_prune(0.5);

    auto both = apply_deltas(theta, {&et, &ed}, false, nullptr);
    auto et_only = apply_deltas(theta, {&et}, false, nullptr);
    auto ed_deltas = ed.deltas(false, nullptr);
    for (const auto& [name, t] : both)
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data()[i] ==
                  et_only.at(name).data()[i] + ed_deltas.at(name).data()[i]);
}
