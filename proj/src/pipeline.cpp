#include "diffgate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffgate/log.hpp"
#include "diffgate/optimizer.hpp"

namespace diffgate {

namespace {

struct Batch {
    TokenBatch tokens;
    std::vector<int> y, a;
};

Batch make_batch(const std::vector<Example>& split, std::size_t begin, std::size_t end,
                 const std::vector<std::size_t>* order) {
    Batch b;
    for (std::size_t i = begin; i < end; ++i) {
        const Example& e = split[order ? (*order)[i] : i];
        b.tokens.push_back(e.tokens);
        b.y.push_back(e.task_label);
        b.a.push_back(e.attr_label);
    }
    return b;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    return idx;
}

AdamConfig adam_config(const OptimizerSettings& s) {
    return AdamConfig{s.lr, s.beta1, s.beta2, s.eps, s.weight_decay};
}

std::string theta_hash(const ParamGroups& params) {
    std::string bytes;
    for (const auto& [name, t] : params) {
        bytes += name;
        bytes.append(reinterpret_cast<const char*>(t.data().data()),
                     t.numel() * sizeof(double));
    }
    return hash_hex(sha256(bytes));
}

// Constants snapshot of an effective-parameter expression, so evaluation
// never backpropagates into training leaves.
ParamGroups detach(const ParamGroups& params) {
    ParamGroups out;
    for (const auto& [name, t] : params)
        out.emplace(name,
                    Tensor::from(t.shape(), {t.data().begin(), t.data().end()}));
    return out;
}

nlohmann::json sparsity_json(const SparsityReport* r) {
    if (!r)
        return {{"present", false},
                {"total_params", 0},
                {"nonzero_diff", 0},
                {"sparsity_rate", 0.0}};
    return {{"present", true},
            {"total_params", r->total_params},
            {"nonzero_diff", r->nonzero_diff},
            {"sparsity_rate", r->sparsity_rate}};
}

void write_record(const nlohmann::json& record, const std::filesystem::path* out_dir) {
    if (!out_dir) return;
    std::filesystem::create_directories(*out_dir);
    std::ofstream out(*out_dir / "record.json");
    out << record.dump(2) << "\n";
}

std::string finalize_hash(nlohmann::json& record) {
    record.erase("record_hash");
    const std::string hex = hash_hex(sha256(record.dump()));
    record["record_hash"] = hex;
    return hex;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data().data() + i * c;
        out[i] = static_cast<int>(std::max_element(row, row + c) - row);
    }
    return out;
}

struct EpochStats {
    double task_loss = 0.0, adv_loss = 0.0, penalty = 0.0;
};

// One pass over the training split in shuffled minibatches. `make_effective`
// rebuilds the effective-parameter expression every step (gate sampling
// happens inside it); `make_loss` builds the loss graph, calls backward and
// reports the decomposed values.
template <typename MakeEffective, typename MakeLoss>
EpochStats run_train_epoch(const Encoder& encoder, const std::vector<Example>& split,
                           std::size_t batch_size, Rng& order_rng,
                           std::initializer_list<Adam*> opts,
                           MakeEffective&& make_effective, MakeLoss&& make_loss) {
    auto order = shuffled_indices(split.size(), order_rng);
    EpochStats stats;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        Batch batch = make_batch(split, start, end, &order);
        for (Adam* opt : opts) opt->zero_grad();
        ParamGroups eff = make_effective();
        Tensor h = encoder.encode(eff, batch.tokens);
        EpochStats step = make_loss(h, batch);
        stats.task_loss += step.task_loss;
        stats.adv_loss += step.adv_loss;
        stats.penalty += step.penalty;
        ++n_batches;
        for (Adam* opt : opts) opt->step();
    }
    stats.task_loss /= static_cast<double>(n_batches);
    stats.adv_loss /= static_cast<double>(n_batches);
    stats.penalty /= static_cast<double>(n_batches);
    return stats;
}

void log_epoch(nlohmann::json& record, const std::filesystem::path* out_dir,
               const char* phase, const char* subnetwork, std::size_t epoch,
               const EpochStats& stats) {
    if (!std::isfinite(stats.task_loss + stats.adv_loss + stats.penalty))
        throw std::runtime_error(std::string("training aborted: non-finite loss in phase '") +
                                 phase + "', epoch " + std::to_string(epoch));
    record["epochs"].push_back({{"phase", phase},
                                {"subnetwork", subnetwork},
                                {"epoch", epoch},
                                {"task_loss", stats.task_loss},
                                {"adv_loss", stats.adv_loss},
                                {"penalty", stats.penalty}});
    char msg[160];
    std::snprintf(msg, sizeof(msg), "%s[%s] epoch %zu: task=%.4f adv=%.4f penalty=%.6f",
                  phase, subnetwork, epoch, stats.task_loss, stats.adv_loss, stats.penalty);
    log::info(msg);
    write_record(record, out_dir);
}

void init_record(nlohmann::json& record, const TrainPlan& plan, const char* kind,
                 const ParamGroups& pretrained, double lambda) {
    record["kind"] = kind;
    record["config"] = plan;
    record["config_hash"] = hash_hex(config_hash(plan));
    record["theta_hash_before"] = theta_hash(pretrained);
    record["lambda_sparsity_resolved"] = lambda;
    record["epochs"] = nlohmann::json::array();
}

std::size_t param_count(const ParamGroups& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

// The two-step schedule for the task subnetwork (gate training with the
// penalty, magnitude pruning, penalty-free finetuning); shared by
// run_diffpruning and the first half of run_debias. Appends epoch entries to
// `record`. Phase stream names are keyed by the phase's position in the plan
// so repeated phases of the same kind stay independent.
struct TaskStepResult {
    DiffSubnetwork net;
    Head task_head;
    std::optional<SparsityReport> report;
};

TaskStepResult train_task_subnetwork(const TrainPlan& plan, const Encoder& encoder,
                                     const Dataset& data, const ParamGroups& pretrained,
                                     double lambda, nlohmann::json& record,
                                     const std::filesystem::path* out_dir) {
    TaskStepResult result;
    Rng head_rng = Rng::stream(plan.seed, "task_head");
    result.task_head =
        Head::init(HeadKind::task, encoder.config().hidden_dim, 2, head_rng);
    Rng net_rng = Rng::stream(plan.seed, "et.init");
    result.net = DiffSubnetwork::create(pretrained, plan.structured,
                                        plan.penalty_combination, plan.gate, net_rng);
    DiffSubnetwork& net = result.net;
    Head& head = result.task_head;

    for (std::size_t pi = 0; pi < plan.phases.size(); ++pi) {
        const Phase& phase = plan.phases[pi];
        if (phase.which_subnetwork != SubnetworkId::E_t) continue;
        const std::string tag = "phase" + std::to_string(pi);
        switch (phase.kind) {
            case PhaseKind::diff_train: {
                Adam opt(adam_config(plan.optimizer));
                opt.add_params(net.trainable());
                opt.add_param(head.weights);
                opt.add_param(head.bias);
                Rng order = Rng::stream(plan.seed, "data." + tag);
                Rng gates = Rng::stream(plan.seed, "gates." + tag);
                for (std::size_t e = 0; e < phase.epochs; ++e) {
                    auto stats = run_train_epoch(
                        encoder, data.train, plan.batch_size, order, {&opt},
                        [&] { return net.effective_params(pretrained, true, &gates); },
                        [&](const Tensor& h, const Batch& b) {
                            Tensor task =
                                softmax_cross_entropy(head_forward(head, h), b.y);
                            Tensor penalty = net.l0_loss(lambda);
                            EpochStats s{task.item(), 0.0, penalty.item()};
                            backward(add(task, penalty));
                            return s;
                        });
                    log_epoch(record, out_dir, "diff_train", "E_t", e, stats);
                }
                break;
            }
            case PhaseKind::magnitude_prune: {
                result.report = net.magnitude_prune(plan.target_sparsity);
                log_epoch(record, out_dir, "magnitude_prune", "E_t", 0, {});
                break;
            }
            case PhaseKind::diff_finetune: {
                Adam opt(adam_config(plan.optimizer));
                opt.add_params(net.trainable());
                opt.add_param(head.weights);
                opt.add_param(head.bias);
                Rng order = Rng::stream(plan.seed, "data." + tag);
                for (std::size_t e = 0; e < phase.epochs; ++e) {
                    auto stats = run_train_epoch(
                        encoder, data.train, plan.batch_size, order, {&opt},
                        [&] { return net.effective_params(pretrained, false, nullptr); },
                        [&](const Tensor& h, const Batch& b) {
                            Tensor task =
                                softmax_cross_entropy(head_forward(head, h), b.y);
                            EpochStats s{task.item(), 0.0, 0.0};
                            backward(task);
                            return s;
                        });
                    log_epoch(record, out_dir, "diff_finetune", "E_t", e, stats);
                }
                break;
            }
            default:
                break;  // pretrain runs upstream; the final evaluation always runs
        }
    }
    return result;
}

}  // namespace

Pipeline::Pipeline(TrainPlan plan)
    : plan_(std::move(plan)), encoder_(plan_.encoder), dataset_(generate(plan_.synth)) {
    plan_.validate();
}

ParamGroups Pipeline::pretrain_encoder() const {
    std::vector<std::vector<int>> corpus;
    for (const auto& e : dataset_.train) corpus.push_back(e.tokens);
    return pretrain(plan_.encoder, corpus, plan_.pretrain_steps, plan_.batch_size).params;
}

nlohmann::json Pipeline::evaluate(const ParamGroups& effective, const Head& task_head) const {
    const std::size_t eval_bs = 64;
    auto features_of = [&](const std::vector<Example>& split, std::vector<int>& ys,
                           std::vector<int>& as) {
        std::vector<double> feats;
        ys.clear();
        as.clear();
        for (std::size_t start = 0; start < split.size(); start += eval_bs) {
            const std::size_t end = std::min(split.size(), start + eval_bs);
            Batch batch = make_batch(split, start, end, nullptr);
            Tensor h = encoder_.encode(effective, batch.tokens);
            feats.insert(feats.end(), h.data().begin(), h.data().end());
            ys.insert(ys.end(), batch.y.begin(), batch.y.end());
            as.insert(as.end(), batch.a.begin(), batch.a.end());
        }
        return Tensor::from({split.size(), plan_.encoder.hidden_dim}, std::move(feats));
    };

    std::vector<int> y_test, a_test, y_dev, a_dev;
    Tensor h_test = features_of(dataset_.test, y_test, a_test);
    Tensor h_dev = features_of(dataset_.dev, y_dev, a_dev);

    Metrics task = compute_metrics(argmax_rows(head_forward(task_head, h_test)), y_test);
    // The attribute probe trains on dev features and is scored on test
    // features, both from the same effective parameters.
    Metrics probe = probe_attribute_full(h_dev, a_dev, h_test, a_test,
                                         plan_.probe_epochs, plan_.seed);

    return {{"task", {{"acc", task.accuracy}, {"bac", task.balanced_accuracy}}},
            {"adv_probe", {{"acc", probe.accuracy}, {"bac", probe.balanced_accuracy}}}};
}

RunResult Pipeline::run_diffpruning(const ParamGroups& pretrained,
                                    const std::filesystem::path* out_dir) const {
    const double lambda = plan_.resolved_lambda(param_count(pretrained));
    RunResult result;
    auto& record = result.record;
    init_record(record, plan_, "diffpruning", pretrained, lambda);

    TaskStepResult step = train_task_subnetwork(plan_, encoder_, dataset_, pretrained,
                                                lambda, record, out_dir);

    ParamGroups eval_params =
        detach(step.net.effective_params(pretrained, false, nullptr));
    nlohmann::json metrics = evaluate(eval_params, step.task_head);
    record["final"] = {{"task", metrics["task"]},
                       {"adv_probe", metrics["adv_probe"]},
                       {"task_sans_debias", metrics["task"]},
                       {"adv_probe_sans_debias", metrics["adv_probe"]}};
    record["sparsity"] = {
        {"E_t", sparsity_json(step.report ? &*step.report : nullptr)},
        {"E_d", sparsity_json(nullptr)}};
    record["theta_hash_after"] = theta_hash(pretrained);
    result.record_hash = finalize_hash(record);
    write_record(record, out_dir);
    result.subnetwork_t = std::move(step.net);
    result.task_head = std::move(step.task_head);
    return result;
}

RunResult Pipeline::run_debias(const ParamGroups& pretrained,
                               const std::filesystem::path* out_dir) const {
    const bool has_adv_phase =
        std::any_of(plan_.phases.begin(), plan_.phases.end(), [](const Phase& p) {
            return p.kind == PhaseKind::adv_diff_train &&
                   p.which_subnetwork == SubnetworkId::E_d;
        });
    if (!has_adv_phase)
        throw std::invalid_argument(
            "run_debias: the plan has no adversarial phase for the debias "
            "subnetwork (expected E_t diff phases followed by E_d adv phases)");

    const double lambda = plan_.resolved_lambda(param_count(pretrained));
    RunResult result;
    auto& record = result.record;
    init_record(record, plan_, "debias", pretrained, lambda);

    // Step one: the task subnetwork, task loss only.
    TaskStepResult step1 = train_task_subnetwork(plan_, encoder_, dataset_, pretrained,
                                                 lambda, record, out_dir);
    DiffSubnetwork& et = step1.net;
    if (!et.frozen())
        throw std::invalid_argument(
            "run_debias: the plan must prune the task subnetwork before the "
            "adversarial phases (E_d stacks on a frozen E_t)");

    // Step two: the debias subnetwork, trained adversarially on top of the
    // frozen task subnetwork. The task head stays fixed; only E_d and the
    // adversarial head receive updates.
    Rng adv_rng = Rng::stream(plan_.seed, "adv_head");
    AdversarialObjective obj;
    obj.lambda_adv = plan_.lambda_adv;
    obj.include_task_loss = plan_.adv_include_task_loss;
    obj.task_head = step1.task_head;
    obj.adv_head = Head::init(HeadKind::adversarial, plan_.encoder.hidden_dim, 2, adv_rng);

    // Warm-up: fit the adversarial head on the frozen task-only features
    // before any reversed gradient flows. An unfit head gives reversal
    // gradients that add attribute structure instead of removing it.
    if (plan_.adv_head_warmup > 0) {
        ParamGroups et_eff = detach(et.effective_params(pretrained, false, nullptr));
        std::vector<double> feats;
        std::vector<int> attrs;
        const std::size_t bs = 64;
        for (std::size_t start = 0; start < dataset_.train.size(); start += bs) {
            const std::size_t end = std::min(dataset_.train.size(), start + bs);
            Batch b = make_batch(dataset_.train, start, end, nullptr);
            Tensor h = encoder_.encode(et_eff, b.tokens);
            feats.insert(feats.end(), h.data().begin(), h.data().end());
            attrs.insert(attrs.end(), b.a.begin(), b.a.end());
        }
        Tensor h_all = Tensor::from({dataset_.train.size(), plan_.encoder.hidden_dim},
                                    std::move(feats));
        Adam warm(AdamConfig{.lr = plan_.adv_head_lr});
        warm.add_param(obj.adv_head.weights);
        warm.add_param(obj.adv_head.bias);
        for (std::size_t s = 0; s < plan_.adv_head_warmup; ++s) {
            warm.zero_grad();
            backward(softmax_cross_entropy(head_forward(obj.adv_head, h_all), attrs));
            warm.step();
        }
    }

    Rng ed_rng = Rng::stream(plan_.seed, "ed.init");
    DiffSubnetwork ed = DiffSubnetwork::create(pretrained, plan_.structured,
                                               plan_.penalty_combination, plan_.gate,
                                               ed_rng);
    std::optional<SparsityReport> ed_report;

    // The attribute head is trained by alternation, never by the joint step:
    // before each reversed-gradient batch it is refit to (near) best response
    // on the detached features. A head updated through the joint loss lags
    // the encoder, and the encoder then profits from flipping predictions
    // across the stale boundary instead of erasing the attribute.
    Adam opt_adv(AdamConfig{.lr = plan_.adv_head_lr});
    opt_adv.add_param(obj.adv_head.weights);
    opt_adv.add_param(obj.adv_head.bias);
    auto refit_head = [&](const Tensor& h, const std::vector<int>& attrs) {
        if (plan_.adv_head_steps == 0) return;
        Tensor h_const = Tensor::from(h.shape(), {h.data().begin(), h.data().end()});
        for (std::size_t s = 0; s < plan_.adv_head_steps; ++s) {
            opt_adv.zero_grad();
            backward(softmax_cross_entropy(head_forward(obj.adv_head, h_const), attrs));
            opt_adv.step();
        }
    };

    for (std::size_t pi = 0; pi < plan_.phases.size(); ++pi) {
        const Phase& phase = plan_.phases[pi];
        if (phase.which_subnetwork != SubnetworkId::E_d) continue;
        const std::string tag = "phase" + std::to_string(pi);
        // E_t is frozen, so the stochastic flag only reaches E_d's gates.
        auto effective = [&](bool stochastic, Rng* rng) {
            return apply_deltas(pretrained, {&et, &ed}, stochastic, rng);
        };
        switch (phase.kind) {
            case PhaseKind::adv_diff_train: {
                Adam opt(adam_config(plan_.optimizer));
                opt.add_params(ed.trainable());
                Rng order = Rng::stream(plan_.seed, "data." + tag);
                Rng gates = Rng::stream(plan_.seed, "gates." + tag);
                for (std::size_t e = 0; e < phase.epochs; ++e) {
                    auto stats = run_train_epoch(
                        encoder_, dataset_.train, plan_.batch_size, order,
                        {&opt}, [&] { return effective(true, &gates); },
                        [&](const Tensor& h, const Batch& b) {
                            refit_head(h, b.a);
                            AdversarialLoss loss = adversarial_loss(obj, h, b.y, b.a);
                            Tensor penalty = ed.l0_loss(lambda);
                            EpochStats s{loss.task_loss, loss.adv_loss, penalty.item()};
                            backward(add(loss.total, penalty));
                            return s;
                        });
                    log_epoch(record, out_dir, "adv_diff_train", "E_d", e, stats);
                }
                break;
            }
            case PhaseKind::magnitude_prune: {
                ed_report = ed.magnitude_prune(plan_.target_sparsity);
                log_epoch(record, out_dir, "magnitude_prune", "E_d", 0, {});
                break;
            }
            case PhaseKind::diff_finetune: {
                Adam opt(adam_config(plan_.optimizer));
                opt.add_params(ed.trainable());
                Rng order = Rng::stream(plan_.seed, "data." + tag);
                for (std::size_t e = 0; e < phase.epochs; ++e) {
                    auto stats = run_train_epoch(
                        encoder_, dataset_.train, plan_.batch_size, order,
                        {&opt}, [&] { return effective(false, nullptr); },
                        [&](const Tensor& h, const Batch& b) {
                            refit_head(h, b.a);
                            AdversarialLoss loss = adversarial_loss(obj, h, b.y, b.a);
                            EpochStats s{loss.task_loss, loss.adv_loss, 0.0};
                            backward(loss.total);
                            return s;
                        });
                    log_epoch(record, out_dir, "diff_finetune", "E_d", e, stats);
                }
                break;
            }
            default:
                break;
        }
    }

    ParamGroups with_ed = detach(apply_deltas(pretrained, {&et, &ed}, false, nullptr));
    ParamGroups sans_ed = detach(et.effective_params(pretrained, false, nullptr));
    nlohmann::json m_with = evaluate(with_ed, step1.task_head);
    nlohmann::json m_sans = evaluate(sans_ed, step1.task_head);
    record["final"] = {{"task", m_with["task"]},
                       {"adv_probe", m_with["adv_probe"]},
                       {"task_sans_debias", m_sans["task"]},
                       {"adv_probe_sans_debias", m_sans["adv_probe"]}};
    record["sparsity"] = {
        {"E_t", sparsity_json(step1.report ? &*step1.report : nullptr)},
        {"E_d", sparsity_json(ed_report ? &*ed_report : nullptr)}};
    record["theta_hash_after"] = theta_hash(pretrained);
    result.record_hash = finalize_hash(record);
    write_record(record, out_dir);
    result.subnetwork_t = std::move(et);
    result.subnetwork_d = std::move(ed);
    result.task_head = std::move(step1.task_head);
    return result;
}

RunResult Pipeline::run_baseline(const ParamGroups& pretrained, BaselineKind kind,
                                 const std::filesystem::path* out_dir) const {
    RunResult result;
    auto& record = result.record;
    init_record(record, plan_,
                kind == BaselineKind::full_finetune ? "baseline.full_finetune"
                                                    : "baseline.frozen_linear_head",
                pretrained, 0.0);

    Rng head_rng = Rng::stream(plan_.seed, "task_head");
    Head head = Head::init(HeadKind::task, plan_.encoder.hidden_dim, 2, head_rng);

    // Full finetuning trains copies; the pretrained store itself is never
    // touched by any run kind.
    ParamGroups params;
    for (const auto& [name, t] : pretrained)
        params.emplace(name,
                       Tensor::from(t.shape(), {t.data().begin(), t.data().end()},
                                    kind == BaselineKind::full_finetune));

    Adam opt(adam_config(plan_.dense_optimizer));
    if (kind == BaselineKind::full_finetune)
        for (auto& [name, t] : params) opt.add_param(t);
    opt.add_param(head.weights);
    opt.add_param(head.bias);

    // Train for as many epochs as the diff schedule spends on E_t.
    std::size_t total_epochs = 0;
    for (const auto& ph : plan_.phases)
        if (ph.which_subnetwork == SubnetworkId::E_t &&
            (ph.kind == PhaseKind::diff_train || ph.kind == PhaseKind::diff_finetune))
            total_epochs += ph.epochs;

    Rng order = Rng::stream(plan_.seed, "data.baseline");
    for (std::size_t e = 0; e < total_epochs; ++e) {
        auto stats = run_train_epoch(
            encoder_, dataset_.train, plan_.batch_size, order, {&opt},
            [&] { return params; },
            [&](const Tensor& h, const Batch& b) {
                Tensor task = softmax_cross_entropy(head_forward(head, h), b.y);
                EpochStats s{task.item(), 0.0, 0.0};
                backward(task);
                return s;
            });
        log_epoch(record, out_dir, "baseline_train", "none", e, stats);
    }

    nlohmann::json metrics = evaluate(detach(params), head);
    record["final"] = {{"task", metrics["task"]},
                       {"adv_probe", metrics["adv_probe"]},
                       {"task_sans_debias", metrics["task"]},
                       {"adv_probe_sans_debias", metrics["adv_probe"]}};
    record["sparsity"] = {{"E_t", sparsity_json(nullptr)}, {"E_d", sparsity_json(nullptr)}};
    record["theta_hash_after"] = theta_hash(pretrained);
    result.record_hash = finalize_hash(record);
    write_record(record, out_dir);
    result.task_head = std::move(head);
    return result;
}

std::string report_csv(const std::vector<nlohmann::json>& records) {
    std::ostringstream out;
    out << "kind,task_acc,task_bac,adv_acc,adv_bac,sparsity_Et,sparsity_Ed\n";
    for (const auto& r : records) {
        const auto& f = r.at("final");
        out << r.at("kind").get<std::string>() << ","
            << f.at("task").at("acc").get<double>() << ","
            << f.at("task").at("bac").get<double>() << ","
            << f.at("adv_probe").at("acc").get<double>() << ","
            << f.at("adv_probe").at("bac").get<double>() << ","
            << r.at("sparsity").at("E_t").at("sparsity_rate").get<double>() << ","
            << r.at("sparsity").at("E_d").at("sparsity_rate").get<double>() << "\n";
    }
    return out.str();
}

std::string report_table(const std::vector<nlohmann::json>& records) {
    std::ostringstream out;
    char line[160];
    out << "run                            Task          Attr probe\n";
    out << "                               acc    bac    acc    bac\n";
    for (const auto& r : records) {
        const auto& f = r.at("final");
        std::snprintf(line, sizeof(line), "%-28s  %5.3f  %5.3f  %5.3f  %5.3f\n",
                      r.at("kind").get<std::string>().c_str(),
                      f.at("task").at("acc").get<double>(),
                      f.at("task").at("bac").get<double>(),
                      f.at("adv_probe").at("acc").get<double>(),
                      f.at("adv_probe").at("bac").get<double>());
        out << line;
    }
    return out.str();
}

}  // namespace diffgate
