// diffgate: command-line front end for the diff-subnetwork toolkit.
//
// Subcommands: pretrain, train, prune, debias, eval, export-mask,
// apply-mask, report. Exit codes: 0 success, 2 configuration/usage error,
// 3 runtime error. Logging verbosity via DIFFGATE_LOG={error,info,debug}.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffgate/optimizer.hpp"
#include "diffgate/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffgate;

namespace {

// Errors attributable to user input (bad config, bad flags) exit with 2;
// everything else with 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TrainPlan load_plan_checked(const fs::path& path, std::optional<std::uint64_t> seed) {
    TrainPlan plan;
    try {
        plan = load_plan(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    if (seed) plan.seed = *seed;
    return plan;
}

ConfigHash parse_hex(const std::string& hex) {
    if (hex.size() != 64) throw ConfigError("config hash must be 64 hex characters");
    ConfigHash out{};
    for (std::size_t i = 0; i < 32; ++i)
        out[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
    return out;
}

void save_head(const Head& head, const fs::path& path, const ConfigHash& hash) {
    ParamGroups g{{"weights", head.weights}, {"bias", head.bias}};
    save_checkpoint(g, path, hash);
}

Head load_head(const fs::path& path, const ConfigHash* hash) {
    ParamGroups g = load_checkpoint(path, hash);
    return Head{HeadKind::task, g.at("weights"), g.at("bias")};
}

// Gate state (unfrozen subnetwork) as a dense checkpoint: per group the
// trainable w and log_alpha leaves under "<group>#w", "<group>#log_alpha"
// and, for structured nets, "<group>#group_log_alpha".
void save_gate_state(const DiffSubnetwork& net, const fs::path& path,
                     const ConfigHash& hash) {
    ParamGroups flat;
    for (const auto& [name, g] : net.groups()) {
        flat.emplace(name + "#w", g.w);
        flat.emplace(name + "#log_alpha", g.gate->log_alpha());
        if (g.group_gate) flat.emplace(name + "#group_log_alpha", g.group_gate->log_alpha());
    }
    save_checkpoint(flat, path, hash);
}

DiffSubnetwork load_gate_state(const fs::path& path, const TrainPlan& plan,
                               const ConfigHash* hash) {
    ParamGroups flat = load_checkpoint(path, hash);
    std::map<std::string, DiffSubnetwork::Group> groups;
    for (const auto& [key, t] : flat) {
        const auto sep = key.rfind('#');
        if (sep == std::string::npos)
            throw FormatError("gate state entry without '#' separator: " + key);
        const std::string name = key.substr(0, sep), part = key.substr(sep + 1);
        auto leaf = Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, true);
        auto& g = groups[name];
        if (part == "w")
            g.w = leaf;
        else if (part == "log_alpha")
            g.gate.emplace(leaf, plan.gate);
        else if (part == "group_log_alpha")
            g.group_gate.emplace(leaf, plan.gate);
        else
            throw FormatError("unknown gate state part '" + part + "'");
    }
    return DiffSubnetwork::from_gate_state(std::move(groups), plan.structured,
                                           plan.penalty_combination, plan.gate);
}

ParamGroups pretrained_for(Pipeline& pipe, const std::string& checkpoint, bool force) {
    if (checkpoint.empty()) return pipe.pretrain_encoder();
    const ConfigHash hash = config_hash(pipe.plan());
    return load_checkpoint(checkpoint, force ? nullptr : &hash);
}

void save_run_masks(const RunResult& run, const fs::path& out, const ConfigHash& hash) {
    if (run.subnetwork_t && run.subnetwork_t->frozen())
        save_mask(*run.subnetwork_t, out / "mask_task.dgm", hash);
    else if (run.subnetwork_t)
        save_gate_state(*run.subnetwork_t, out / "gates.ckpt", hash);
    if (run.subnetwork_d && run.subnetwork_d->frozen())
        save_mask(*run.subnetwork_d, out / "mask_debias.dgm", hash);
}

// A fresh linear head fit on the train split against frozen features; used
// by `eval` when no trained head file is supplied.
Head fit_eval_head(const Pipeline& pipe, const ParamGroups& effective) {
    const auto& train = pipe.dataset().train;
    const Encoder encoder(pipe.plan().encoder);
    std::vector<double> feats;
    std::vector<int> y;
    const std::size_t bs = 64;
    for (std::size_t start = 0; start < train.size(); start += bs) {
        TokenBatch toks;
        for (std::size_t i = start; i < std::min(train.size(), start + bs); ++i) {
            toks.push_back(train[i].tokens);
            y.push_back(train[i].task_label);
        }
        Tensor h = encoder.encode(effective, toks);
        feats.insert(feats.end(), h.data().begin(), h.data().end());
    }
    Tensor h_all = Tensor::from({train.size(), pipe.plan().encoder.hidden_dim},
                                std::move(feats));
    Rng rng = Rng::stream(pipe.plan().seed, "eval.head");
    Head head = Head::init(HeadKind::task, pipe.plan().encoder.hidden_dim, 2, rng);
    Adam opt(AdamConfig{.lr = 1e-2});
    opt.add_param(head.weights);
    opt.add_param(head.bias);
    for (std::size_t e = 0; e < pipe.plan().probe_epochs; ++e) {
        opt.zero_grad();
        backward(softmax_cross_entropy(head_forward(head, h_all), y));
        opt.step();
    }
    return head;
}

nlohmann::json mask_to_json(const DiffSubnetwork& net, const ConfigHash& hash) {
    nlohmann::json j;
    j["config_hash"] = hash_hex(hash);
    auto& groups = j["groups"] = nlohmann::json::object();
    for (const auto& [name, g] : net.groups()) {
        nlohmann::json entries = nlohmann::json::array();
        for (std::size_t i = 0; i < g.w.numel(); ++i)
            if (g.frozen_mask.data()[i] != 0.0)
                entries.push_back({i, g.w.data()[i]});
        groups[name] = {{"shape", g.w.shape()}, {"entries", std::move(entries)}};
    }
    return j;
}

std::pair<DiffSubnetwork, ConfigHash> mask_from_json(const nlohmann::json& j) {
    const ConfigHash hash = parse_hex(j.at("config_hash").get<std::string>());
    std::map<std::string, DiffSubnetwork::Group> groups;
    for (auto it = j.at("groups").begin(); it != j.at("groups").end(); ++it) {
        const auto shape = it.value().at("shape").get<std::vector<std::size_t>>();
        std::size_t numel = 1;
        for (auto d : shape) numel *= d;
        std::vector<double> w(numel, 0.0), mask(numel, 0.0);
        for (const auto& e : it.value().at("entries")) {
            const auto idx = e.at(0).get<std::size_t>();
            if (idx >= numel) throw FormatError("mask entry index out of range");
            w[idx] = e.at(1).get<double>();
            mask[idx] = 1.0;
        }
        DiffSubnetwork::Group g;
        g.w = Tensor::from(shape, std::move(w));
        g.frozen_mask = Tensor::from(shape, std::move(mask));
        groups.emplace(it.key(), std::move(g));
    }
    return {DiffSubnetwork::from_frozen(std::move(groups)), hash};
}

void print_final_metrics(const nlohmann::json& final) {
    std::cout << final.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diff-subnetwork training, pruning, debiasing and reporting"};
    app.require_subcommand(1);

    std::string config, out, checkpoint, gates, head_file, mask_file;
    std::vector<std::string> masks, records;
    std::optional<std::uint64_t> seed;
    std::optional<double> eta;
    bool force = false;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--config", config, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        auto* o = cmd->add_option("--out", out, "output directory");
        if (needs_out) o->required();
        cmd->add_option("--seed", seed, "override the config seed");
        return cmd;
    };

    auto* c_pretrain = add_common(app.add_subcommand(
        "pretrain", "train the encoder on the synthetic corpus, write encoder.ckpt"), true);

    auto* c_train = add_common(app.add_subcommand(
        "train", "two-step diff training; writes record.json, the mask (or the "
                 "gate state when the plan stops before pruning) and the task head"), true);
    c_train->add_option("--checkpoint", checkpoint, "pretrained encoder checkpoint "
                        "(pretrains in-process when omitted)")->check(CLI::ExistingFile);
    c_train->add_flag("--force", force, "skip config-hash verification");

    auto* c_prune = add_common(app.add_subcommand(
        "prune", "standalone magnitude pruning of a saved gate state"), true);
    c_prune->add_option("--gates", gates, "gate-state checkpoint from `train`")
        ->required()
        ->check(CLI::ExistingFile);
    c_prune->add_option("--eta", eta, "kept fraction override (default: config)");
    c_prune->add_flag("--force", force, "skip config-hash verification");

    auto* c_debias = add_common(app.add_subcommand(
        "debias", "stacked task + adversarial debias subnetworks"), true);
    c_debias->add_option("--checkpoint", checkpoint, "pretrained encoder checkpoint "
                         "(pretrains in-process when omitted)")->check(CLI::ExistingFile);
    c_debias->add_flag("--force", force, "skip config-hash verification");

    auto* c_eval = add_common(app.add_subcommand(
        "eval", "metrics for a checkpoint plus optional masks"), false);
    c_eval->add_option("--checkpoint", checkpoint, "encoder checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    c_eval->add_option("--mask", masks, "mask file(s) to apply, in order")
        ->check(CLI::ExistingFile);
    c_eval->add_option("--head", head_file, "trained task head checkpoint (a fresh "
                       "linear head is fit on the train split when omitted)")
        ->check(CLI::ExistingFile);
    c_eval->add_flag("--force", force, "skip config-hash verification");

    auto* c_export = app.add_subcommand(
        "export-mask", "convert a mask between binary (.dgm) and JSON");
    c_export->add_option("--mask", mask_file, "input mask (.dgm or .json)")
        ->required()
        ->check(CLI::ExistingFile);
    c_export->add_option("--checkpoint", checkpoint,
                         "checkpoint providing shapes (required for .dgm input)")
        ->check(CLI::ExistingFile);
    c_export->add_option("--out", out, "output directory")->required();

    auto* c_apply = app.add_subcommand(
        "apply-mask", "bake mask diffs into a dense checkpoint (applied.ckpt)");
    c_apply->add_option("--checkpoint", checkpoint, "encoder checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    c_apply->add_option("--mask", masks, "mask file(s) to apply, in order")
        ->required()
        ->check(CLI::ExistingFile);
    c_apply->add_option("--out", out, "output directory")->required();
    c_apply->add_flag("--force", force, "skip config-hash verification");

    auto* c_report = app.add_subcommand(
        "report", "render run records as CSV and a plain-text table");
    c_report->add_option("--records", records, "record.json files")
        ->required()
        ->check(CLI::ExistingFile);
    c_report->add_option("--out", out, "directory for report.csv / report.txt");

    try {
        app.parse(argc, argv);

        if (!out.empty()) fs::create_directories(out);

        if (*c_pretrain) {
            TrainPlan plan = load_plan_checked(config, seed);
            Pipeline pipe(plan);
            ParamGroups params = pipe.pretrain_encoder();
            save_checkpoint(params, fs::path(out) / "encoder.ckpt", config_hash(plan));
            std::cout << "wrote " << (fs::path(out) / "encoder.ckpt").string() << "\n";
        } else if (*c_train || *c_debias) {
            TrainPlan plan = load_plan_checked(config, seed);
            Pipeline pipe(plan);
            ParamGroups params = pretrained_for(pipe, checkpoint, force);
            const fs::path dir(out);
            RunResult run = *c_train ? pipe.run_diffpruning(params, &dir)
                                     : pipe.run_debias(params, &dir);
            const ConfigHash hash = config_hash(plan);
            save_run_masks(run, dir, hash);
            // The trained head travels with the run so `eval` can reproduce
            // the recorded metrics.
            if (run.task_head) save_head(*run.task_head, dir / "head_task.ckpt", hash);
            std::cout << report_table({run.record});
            std::cout << "record hash: " << run.record_hash << "\n";
        } else if (*c_prune) {
            TrainPlan plan = load_plan_checked(config, seed);
            const ConfigHash hash = config_hash(plan);
            DiffSubnetwork net = load_gate_state(gates, plan, force ? nullptr : &hash);
            SparsityReport report = net.magnitude_prune(eta.value_or(plan.target_sparsity));
            save_mask(net, fs::path(out) / "mask_task.dgm", hash);
            std::cout << "kept " << report.nonzero_diff << " of " << report.total_params
                      << " (" << report.sparsity_rate << ")\n";
        } else if (*c_eval) {
            TrainPlan plan = load_plan_checked(config, seed);
            Pipeline pipe(plan);
            const ConfigHash hash = config_hash(plan);
            ParamGroups params = load_checkpoint(checkpoint, force ? nullptr : &hash);
            std::vector<DiffSubnetwork> nets;
            for (const auto& m : masks)
                nets.push_back(load_mask(m, params, force ? nullptr : &hash));
            std::vector<const DiffSubnetwork*> ptrs;
            for (const auto& n : nets) ptrs.push_back(&n);
            ParamGroups effective = apply_deltas(params, ptrs, false, nullptr);
            Head head = head_file.empty() ? fit_eval_head(pipe, effective)
                                          : load_head(head_file, force ? nullptr : &hash);
            nlohmann::json metrics = pipe.evaluate(effective, head);
            print_final_metrics(metrics);
            if (!out.empty()) {
                std::ofstream f(fs::path(out) / "eval.json");
                f << metrics.dump(2) << "\n";
            }
        } else if (*c_export) {
            const fs::path in(mask_file);
            if (in.extension() == ".json") {
                std::ifstream f(in);
                auto [net, hash] = mask_from_json(nlohmann::json::parse(f));
                const fs::path target = fs::path(out) / (in.stem().string() + ".dgm");
                save_mask(net, target, hash);
                std::cout << "wrote " << target.string() << "\n";
            } else {
                if (checkpoint.empty())
                    throw ConfigError(
                        "--checkpoint is required to export a binary mask (shapes)");
                ParamGroups shapes = load_checkpoint(checkpoint, nullptr);
                const ConfigHash hash = checkpoint_hash(checkpoint);
                DiffSubnetwork net = load_mask(in, shapes, nullptr);
                const fs::path target = fs::path(out) / (in.stem().string() + ".json");
                std::ofstream f(target);
                f << mask_to_json(net, hash).dump(2) << "\n";
                std::cout << "wrote " << target.string() << "\n";
            }
        } else if (*c_apply) {
            const ConfigHash hash = checkpoint_hash(checkpoint);
            ParamGroups params = load_checkpoint(checkpoint, nullptr);
            std::vector<DiffSubnetwork> nets;
            for (const auto& m : masks)
                nets.push_back(load_mask(m, params, force ? nullptr : &hash));
            std::vector<const DiffSubnetwork*> ptrs;
            for (const auto& n : nets) ptrs.push_back(&n);
            ParamGroups effective = apply_deltas(params, ptrs, false, nullptr);
            // Re-materialize as constants before writing.
            ParamGroups dense;
            for (const auto& [name, t] : effective)
                dense.emplace(name, Tensor::from(t.shape(),
                                                 {t.data().begin(), t.data().end()}));
            save_checkpoint(dense, fs::path(out) / "applied.ckpt", hash);
            std::cout << "wrote " << (fs::path(out) / "applied.ckpt").string() << "\n";
        } else if (*c_report) {
            std::vector<nlohmann::json> docs;
            for (const auto& r : records) {
                std::ifstream f(r);
                docs.push_back(nlohmann::json::parse(f));
            }
            const std::string csv = report_csv(docs), table = report_table(docs);
            std::cout << table;
            if (!out.empty()) {
                std::ofstream(fs::path(out) / "report.csv") << csv;
                std::ofstream(fs::path(out) / "report.txt") << table;
            }
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
