#include "mtda/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>

#include "mtda/checkpoint.hpp"
#include "mtda/eval.hpp"

namespace mtda {

std::string mode_tag(RunMode mode) {
    switch (mode) {
        case RunMode::full: return "full";
        case RunMode::combined: return "combined";
        case RunMode::pairwise: return "pairwise";
        case RunMode::wo_reconstruction: return "woR";
        case RunMode::wo_entropy: return "woE";
        case RunMode::wo_domain: return "woD";
        case RunMode::wo_private: return "woP";
        case RunMode::source_only: return "source_only";
    }
    throw ContractError("unknown run mode");
}

RunMode mode_from_tag(const std::string& tag) {
    for (RunMode m : {RunMode::full, RunMode::combined, RunMode::pairwise, RunMode::wo_reconstruction,
                      RunMode::wo_entropy, RunMode::wo_domain, RunMode::wo_private, RunMode::source_only}) {
        if (mode_tag(m) == tag) return m;
    }
    throw ConfigError("unknown mode '" + tag + "'");
}

HyperParams TrainConfig::effective_hp() const {
    HyperParams e = hp;
    if (mode == RunMode::wo_reconstruction) e.lambda_r = 0.0;
    if (mode == RunMode::wo_domain) e.lambda_d = 0.0;
    if (mode == RunMode::source_only) {
        e.lambda_r = 0.0;
        e.lambda_d = 0.0;
    }
    return e;
}

LossOptions TrainConfig::loss_options() const {
    LossOptions o;
    o.adversarial = adversarial;
    o.entropy_terms = mode != RunMode::wo_entropy && mode != RunMode::source_only;
    o.private_path = mode != RunMode::wo_private;
    return o;
}

std::vector<RunSpec> mode_expand(const TrainConfig& base, std::size_t num_domains) {
    if (num_domains < 2) throw ConfigError("need a source and at least one target domain");

    auto make = [&](std::vector<std::size_t> idx, std::vector<int> labels, std::size_t m_eff,
                    std::string tag) {
        RunSpec r;
        r.config = base;
        r.config.nets.domain_classifier.layer_widths.back() = m_eff;
        r.dataset_indices = std::move(idx);
        r.domain_label_of = std::move(labels);
        r.num_domain_labels = m_eff;
        r.tag = std::move(tag);
        return r;
    };

    std::vector<std::size_t> all(num_domains);
    std::vector<int> identity(num_domains);
    for (std::size_t i = 0; i < num_domains; ++i) {
        all[i] = i;
        identity[i] = static_cast<int>(i);
    }

    switch (base.mode) {
        case RunMode::combined: {
            if (num_domains == 2) {
                std::fprintf(stderr, "notice: combined mode with M = 2 degenerates to full\n");
            }
            std::vector<int> labels(num_domains, 1);
            labels[0] = 0;
            return {make(all, labels, 2, "combined")};
        }
        case RunMode::pairwise: {
            std::vector<RunSpec> runs;
            for (std::size_t t = 1; t < num_domains; ++t) {
                runs.push_back(make({0, t}, {0, 1}, 2, "pairwise:" + std::to_string(t)));
            }
            return runs;
        }
        default:
            return {make(all, identity, num_domains, mode_tag(base.mode))};
    }
}

TrainState init_train_state(const TrainConfig& config) {
    TrainState s;
    s.params = init_params(config.nets, config.seed);
    auto adam = [&](const Mlp& g) {
        return AdamState::for_group(g.tensors(), config.beta1, config.beta2, config.adam_eps);
    };
    s.opt_shared = adam(s.params.shared_encoder);
    s.opt_private = adam(s.params.private_encoder);
    s.opt_label = adam(s.params.label_classifier);
    s.opt_decoder = adam(s.params.decoder);
    s.opt_domain = adam(s.params.domain_classifier);
    return s;
}

namespace {

// -(1/n_s) sum over source rows of y . ln C(E_s(x)); the source-only
// baseline trains the shared encoder and label classifier with this alone.
Tensor build_source_ce(Tape& tape, const ModelParams& params, const Batch& batch) {
    if (batch.n_source == 0) throw ContractError("source-only training needs source rows");
    Tensor xs = tape.slice_rows(batch.x, 0, batch.n_source);
    Tensor log_probs = tape.log_softmax(label_logits(tape, params, encode_shared(tape, params, xs)));
    Tensor picked = tape.mul(batch.y, log_probs);
    return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(batch.n_source));
}

double sub_update(const char* name, std::uint64_t step, const ModelParams& params,
                  const std::function<Tensor(Tape&)>& build, const std::vector<Tensor>& group,
                  AdamState& adam, const TrainConfig& config) {
    Tape tape;
    Tensor loss = build(tape);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw NumericError(std::string("non-finite ") + name + " at step " + std::to_string(step));
    }
    params.zero_all_grads();
    tape.backward(loss);
    if (config.optimizer == OptimizerKind::adam) {
        adam_step(group, adam, config.hp.eta);
    } else {
        sgd_step(group, config.hp.eta);
    }
    return value;
}

}  // namespace

double apply_sub_update(TrainState& state, const Batch& batch, const TrainConfig& config,
                        SubUpdate which) {
    const HyperParams hp = config.effective_hp();
    const LossOptions opts = config.loss_options();
    ModelParams& p = state.params;

    if (config.mode == RunMode::source_only) {
        auto ce = [&](Tape& t) { return build_source_ce(t, p, batch); };
        switch (which) {
            case SubUpdate::shared_encoder:
                return sub_update("source CE (shared encoder)", state.step, p, ce,
                                  p.shared_encoder.tensors(), state.opt_shared, config);
            case SubUpdate::label_classifier:
                return sub_update("source CE (label classifier)", state.step, p, ce,
                                  p.label_classifier.tensors(), state.opt_label, config);
            default:
                return 0.0;  // the other groups are not trained in this mode
        }
    }

    switch (which) {
        case SubUpdate::shared_encoder:
            return sub_update(
                "shared encoder loss", state.step, p,
                [&](Tape& t) { return build_shared_encoder_loss(t, p, batch, hp, opts); },
                p.shared_encoder.tensors(), state.opt_shared, config);
        case SubUpdate::private_encoder:
            if (!opts.private_path) return 0.0;  // woP skips the private pathway
            return sub_update(
                "private encoder loss", state.step, p,
                [&](Tape& t) { return build_private_encoder_loss(t, p, batch, hp, opts); },
                p.private_encoder.tensors(), state.opt_private, config);
        case SubUpdate::label_classifier:
            return sub_update(
                "label classifier loss", state.step, p,
                [&](Tape& t) { return build_label_classifier_loss(t, p, batch, hp, opts); },
                p.label_classifier.tensors(), state.opt_label, config);
        case SubUpdate::decoder:
            return sub_update(
                "decoder loss", state.step, p,
                [&](Tape& t) { return build_decoder_loss(t, p, batch, hp, opts); },
                p.decoder.tensors(), state.opt_decoder, config);
        case SubUpdate::domain_classifier:
            return sub_update(
                "domain classifier loss", state.step, p,
                [&](Tape& t) { return build_domain_classifier_loss(t, p, batch, hp, opts); },
                p.domain_classifier.tensors(), state.opt_domain, config);
    }
    throw ContractError("unknown sub-update");
}

StepLosses train_step(TrainState& state, const Batch& batch, const TrainConfig& config) {
    StepLosses out;
    out.shared_encoder = apply_sub_update(state, batch, config, SubUpdate::shared_encoder);
    out.private_encoder = apply_sub_update(state, batch, config, SubUpdate::private_encoder);
    out.label_classifier = apply_sub_update(state, batch, config, SubUpdate::label_classifier);
    out.decoder = apply_sub_update(state, batch, config, SubUpdate::decoder);
    out.domain_classifier = apply_sub_update(state, batch, config, SubUpdate::domain_classifier);
    state.step += 1;
    state.loss_trace.push_back(out);
    return out;
}

namespace {

std::string config_digest(const TrainConfig& c) {
    std::ostringstream os;
    os << mode_tag(c.mode) << '|' << c.hp.lambda_r << '|' << c.hp.lambda_c << '|' << c.hp.lambda_d
       << '|' << c.hp.eta << '|' << c.steps << '|' << c.batch_per_domain << '|' << c.seed << '|'
       << (c.optimizer == OptimizerKind::adam ? "adam" : "sgd") << '|'
       << (c.adversarial == AdversarialForm::confusion ? "confusion" : "sign_flip");
    for (const auto* net :
         {&c.nets.shared_encoder, &c.nets.private_encoder, &c.nets.decoder, &c.nets.domain_classifier,
          &c.nets.label_classifier}) {
        os << '|';
        for (std::size_t w : net->layer_widths) os << w << ',';
    }
    const std::string s = os.str();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

std::pair<TrainState, RunReport> train_loop(const std::vector<DomainDataset>& datasets,
                                            const RunSpec& run) {
    if (datasets.empty()) throw ConfigError("no datasets");
    const TrainConfig& config = run.config;
    if (config.num_classes < 2) throw ConfigError("num_classes must be at least 2");

    std::vector<DomainDataset> selected;
    for (std::size_t idx : run.dataset_indices) {
        if (idx >= datasets.size()) throw ConfigError("run references dataset beyond the list");
        selected.push_back(datasets[idx]);
    }
    if (selected.empty()) throw ConfigError("run selects no datasets");

    TrainState state = init_train_state(config);
    BatchStream stream(selected, config.batch_per_domain, config.num_classes, run.domain_label_of,
                       run.num_domain_labels, config.seed ^ 0x9e3779b97f4a7c15ull);

    RunReport report;
    report.mode = run.tag;
    report.seed = config.seed;
    report.config_digest = config_digest(config);

    auto evaluate = [&](std::uint64_t step) {
        EvalRecord rec;
        rec.step = step;
        double target_sum = 0.0;
        std::size_t target_count = 0;
        for (std::size_t i = 0; i < selected.size(); ++i) {
            if (!selected[i].has_labels()) continue;
            const double acc = eval_accuracy(state.params, selected[i]);
            rec.per_domain_accuracy[selected[i].domain_id()] = acc;
            if (i > 0) {
                target_sum += acc;
                ++target_count;
            }
        }
        rec.mean_target_accuracy = target_count ? target_sum / double(target_count) : 0.0;
        if (!state.loss_trace.empty()) rec.losses = state.loss_trace.back();
        report.evals.push_back(rec);
    };

    const bool want_checkpoints = !config.checkpoint_dir.empty();
    if (want_checkpoints) std::filesystem::create_directories(config.checkpoint_dir);
    auto checkpoint_path = [&](std::uint64_t step) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "checkpoint_%06llu.bin", static_cast<unsigned long long>(step));
        return config.checkpoint_dir + "/" + buf;
    };

    evaluate(0);
    for (std::size_t s = 0; s < config.steps; ++s) {
        Batch batch = stream.next();
        train_step(state, batch, config);
        if (config.eval_every > 0 && state.step % config.eval_every == 0 && s + 1 < config.steps) {
            evaluate(state.step);
        }
        if (want_checkpoints && config.checkpoint_every > 0 &&
            state.step % config.checkpoint_every == 0) {
            save_checkpoint(checkpoint_path(state.step), state, config.optimizer);
        }
    }
    if (config.steps > 0) evaluate(state.step);
    if (want_checkpoints) save_checkpoint(config.checkpoint_dir + "/checkpoint.bin", state, config.optimizer);

    const EvalRecord& last = report.evals.back();
    report.per_domain_accuracy = last.per_domain_accuracy;
    report.mean_target_accuracy = last.mean_target_accuracy;
    return {std::move(state), std::move(report)};
}

std::pair<TrainState, RunReport> train_loop(const std::vector<DomainDataset>& datasets,
                                            const TrainConfig& config) {
    auto runs = mode_expand(config, datasets.size());
    if (runs.size() != 1) {
        throw ConfigError("mode '" + mode_tag(config.mode) +
                          "' expands to several runs; use mode_expand and run each");
    }
    return train_loop(datasets, runs.front());
}

}  // namespace mtda
