#include "diffgate/config.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace diffgate {

namespace {

const char* phase_kind_name(PhaseKind k) {
    switch (k) {
        case PhaseKind::pretrain: return "pretrain";
        case PhaseKind::diff_train: return "diff_train";
        case PhaseKind::magnitude_prune: return "magnitude_prune";
        case PhaseKind::diff_finetune: return "diff_finetune";
        case PhaseKind::adv_diff_train: return "adv_diff_train";
        case PhaseKind::evaluate: return "evaluate";
    }
    throw std::logic_error("unknown phase kind");
}

PhaseKind phase_kind_from(const std::string& s) {
    for (auto k : {PhaseKind::pretrain, PhaseKind::diff_train, PhaseKind::magnitude_prune,
                   PhaseKind::diff_finetune, PhaseKind::adv_diff_train, PhaseKind::evaluate})
        if (s == phase_kind_name(k)) return k;
    throw std::invalid_argument("unknown phase kind '" + s + "'");
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void TrainPlan::validate() const {
    encoder.validate();
    synth.validate();
    if (phases.empty()) throw std::invalid_argument("plan: phases must be nonempty");
    if (!(target_sparsity > 0.0 && target_sparsity <= 1.0))
        throw std::invalid_argument("plan: target_sparsity must be in (0,1]");
    if (lambda_adv < 0.0) throw std::invalid_argument("plan: lambda_adv must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("plan: batch_size must be >= 1");

    // A prune phase must follow gate training on the same subnetwork.
    std::array<bool, 2> gate_trained{false, false};
    for (const auto& ph : phases) {
        const auto idx = static_cast<std::size_t>(ph.which_subnetwork);
        if (ph.kind == PhaseKind::diff_train || ph.kind == PhaseKind::adv_diff_train)
            gate_trained[idx] = true;
        if (ph.kind == PhaseKind::magnitude_prune && !gate_trained[idx])
            throw std::invalid_argument(
                "plan: magnitude_prune must follow gate training on the same subnetwork");
    }
}

double TrainPlan::resolved_lambda(std::size_t param_count) const {
    if (lambda_sparsity >= 0.0) return lambda_sparsity;
    return 1.25e-7 * (110e6 / static_cast<double>(param_count));
}

std::vector<Phase> default_diffpruning_phases(std::size_t train_epochs,
                                              std::size_t finetune_epochs) {
    return {
        {PhaseKind::diff_train, train_epochs, SubnetworkId::E_t},
        {PhaseKind::magnitude_prune, 0, SubnetworkId::E_t},
        {PhaseKind::diff_finetune, finetune_epochs, SubnetworkId::E_t},
        {PhaseKind::evaluate, 0, SubnetworkId::E_t},
    };
}

std::vector<Phase> default_debias_phases(std::size_t train_epochs,
                                         std::size_t finetune_epochs) {
    auto phases = default_diffpruning_phases(train_epochs, finetune_epochs);
    phases.pop_back();  // evaluate moves to the end
    phases.push_back({PhaseKind::adv_diff_train, train_epochs, SubnetworkId::E_d});
    phases.push_back({PhaseKind::magnitude_prune, 0, SubnetworkId::E_d});
    phases.push_back({PhaseKind::diff_finetune, finetune_epochs, SubnetworkId::E_d});
    phases.push_back({PhaseKind::evaluate, 0, SubnetworkId::E_d});
    return phases;
}

void to_json(nlohmann::json& j, const TrainPlan& p) {
    j = nlohmann::json{
        {"encoder",
         {{"vocab_size", p.encoder.vocab_size},
          {"max_seq_len", p.encoder.max_seq_len},
          {"num_layers", p.encoder.num_layers},
          {"hidden_dim", p.encoder.hidden_dim},
          {"num_heads", p.encoder.num_heads},
          {"ffn_dim", p.encoder.ffn_dim},
          {"seed", p.encoder.seed}}},
        {"synth",
         {{"vocab_size", p.synth.vocab_size},
          {"seq_len", p.synth.seq_len},
          {"n_train", p.synth.n_train},
          {"n_dev", p.synth.n_dev},
          {"n_test", p.synth.n_test},
          {"task_signal_strength", p.synth.task_signal_strength},
          {"attr_signal_strength", p.synth.attr_signal_strength},
          {"task_attr_correlation", p.synth.task_attr_correlation},
          {"seed", p.synth.seed}}},
        {"optimizer",
         {{"lr", p.optimizer.lr},
          {"beta1", p.optimizer.beta1},
          {"beta2", p.optimizer.beta2},
          {"eps", p.optimizer.eps},
          {"weight_decay", p.optimizer.weight_decay}}},
        {"dense_optimizer",
         {{"lr", p.dense_optimizer.lr},
          {"beta1", p.dense_optimizer.beta1},
          {"beta2", p.dense_optimizer.beta2},
          {"eps", p.dense_optimizer.eps},
          {"weight_decay", p.dense_optimizer.weight_decay}}},
        {"lambda_sparsity", p.lambda_sparsity},
        {"lambda_adv", p.lambda_adv},
        {"target_sparsity", p.target_sparsity},
        {"structured", p.structured},
        {"penalty_combination",
         p.penalty_combination == PenaltyCombination::multiplicative ? "multiplicative"
                                                                     : "additive"},
        {"gate", {{"beta", p.gate.beta}, {"gamma", p.gate.gamma}, {"zeta", p.gate.zeta}}},
        {"adv_include_task_loss", p.adv_include_task_loss},
        {"adv_head_warmup", p.adv_head_warmup},
        {"adv_head_lr", p.adv_head_lr},
        {"adv_head_steps", p.adv_head_steps},
        {"batch_size", p.batch_size},
        {"pretrain_steps", p.pretrain_steps},
        {"probe_epochs", p.probe_epochs},
        {"seed", p.seed},
    };
    auto& phases = j["phases"] = nlohmann::json::array();
    for (const auto& ph : p.phases)
        phases.push_back({{"kind", phase_kind_name(ph.kind)},
                          {"epochs", ph.epochs},
                          {"which_subnetwork",
                           ph.which_subnetwork == SubnetworkId::E_t ? "E_t" : "E_d"}});
}

void from_json(const nlohmann::json& j, TrainPlan& p) {
    p = TrainPlan{};  // all defaults first; absent keys keep them
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        maybe(e, "vocab_size", p.encoder.vocab_size);
        maybe(e, "max_seq_len", p.encoder.max_seq_len);
        maybe(e, "num_layers", p.encoder.num_layers);
        maybe(e, "hidden_dim", p.encoder.hidden_dim);
        maybe(e, "num_heads", p.encoder.num_heads);
        maybe(e, "ffn_dim", p.encoder.ffn_dim);
        maybe(e, "seed", p.encoder.seed);
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        maybe(s, "vocab_size", p.synth.vocab_size);
        maybe(s, "seq_len", p.synth.seq_len);
        maybe(s, "n_train", p.synth.n_train);
        maybe(s, "n_dev", p.synth.n_dev);
        maybe(s, "n_test", p.synth.n_test);
        maybe(s, "task_signal_strength", p.synth.task_signal_strength);
        maybe(s, "attr_signal_strength", p.synth.attr_signal_strength);
        maybe(s, "task_attr_correlation", p.synth.task_attr_correlation);
        maybe(s, "seed", p.synth.seed);
    }
    for (auto key : {"optimizer", "dense_optimizer"}) {
        if (!j.contains(key)) continue;
        auto& o = key == std::string("optimizer") ? p.optimizer : p.dense_optimizer;
        const auto& js = j.at(key);
        maybe(js, "lr", o.lr);
        maybe(js, "beta1", o.beta1);
        maybe(js, "beta2", o.beta2);
        maybe(js, "eps", o.eps);
        maybe(js, "weight_decay", o.weight_decay);
    }
    maybe(j, "lambda_sparsity", p.lambda_sparsity);
    maybe(j, "lambda_adv", p.lambda_adv);
    maybe(j, "target_sparsity", p.target_sparsity);
    maybe(j, "structured", p.structured);
    if (j.contains("penalty_combination")) {
        const auto s = j.at("penalty_combination").get<std::string>();
        if (s == "multiplicative")
            p.penalty_combination = PenaltyCombination::multiplicative;
        else if (s == "additive")
            p.penalty_combination = PenaltyCombination::additive;
        else
            throw std::invalid_argument("unknown penalty_combination '" + s + "'");
    }
    if (j.contains("gate")) {
        const auto& g = j.at("gate");
        maybe(g, "beta", p.gate.beta);
        maybe(g, "gamma", p.gate.gamma);
        maybe(g, "zeta", p.gate.zeta);
    }
    maybe(j, "adv_include_task_loss", p.adv_include_task_loss);
    maybe(j, "adv_head_warmup", p.adv_head_warmup);
    maybe(j, "adv_head_lr", p.adv_head_lr);
    maybe(j, "adv_head_steps", p.adv_head_steps);
    maybe(j, "batch_size", p.batch_size);
    maybe(j, "pretrain_steps", p.pretrain_steps);
    maybe(j, "probe_epochs", p.probe_epochs);
    maybe(j, "seed", p.seed);
    if (j.contains("phases")) {
        p.phases.clear();
        for (const auto& jp : j.at("phases")) {
            Phase ph;
            ph.kind = phase_kind_from(jp.at("kind").get<std::string>());
            maybe(jp, "epochs", ph.epochs);
            if (jp.contains("which_subnetwork")) {
                const auto s = jp.at("which_subnetwork").get<std::string>();
                if (s == "E_t")
                    ph.which_subnetwork = SubnetworkId::E_t;
                else if (s == "E_d")
                    ph.which_subnetwork = SubnetworkId::E_d;
                else
                    throw std::invalid_argument("unknown subnetwork '" + s + "'");
            }
            p.phases.push_back(ph);
        }
    }
    // The default schedule is the full stacked one; run_diffpruning only
    // consumes its E_t prefix, so one config drives both run kinds.
    if (p.phases.empty()) p.phases = default_debias_phases();
}

std::string canonical_json(const TrainPlan& plan) {
    nlohmann::json j = plan;
    return j.dump();  // nlohmann objects keep keys sorted
}

ConfigHash sha256(std::string_view bytes) {
    ConfigHash out{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

ConfigHash config_hash(const TrainPlan& plan) { return sha256(canonical_json(plan)); }

TrainPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    TrainPlan plan = j;
    plan.validate();
    return plan;
}

void save_plan(const TrainPlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path.string());
    nlohmann::json j = plan;
    out << j.dump(2) << "\n";
}

}  // namespace diffgate
