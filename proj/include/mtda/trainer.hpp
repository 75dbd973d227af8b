#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtda/data.hpp"
#include "mtda/losses.hpp"
#include "mtda/optim.hpp"

namespace mtda {

// Run modes: the three domain-label layouts (full, combined targets,
// pairwise source-target) plus the four single-component ablations and the
// source-only baseline.
enum class RunMode {
    full,
    combined,
    pairwise,
    wo_reconstruction,  // "woR": lambda_r = 0
    wo_entropy,         // "woE": target entropy + balance terms off
    wo_domain,          // "woD": lambda_d = 0
    wo_private,         // "woP": private encoder disabled, zeros into F
    source_only,
};

std::string mode_tag(RunMode mode);
RunMode mode_from_tag(const std::string& tag);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    HyperParams hp;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t steps = 3000;
    std::size_t batch_per_domain = 16;
    RunMode mode = RunMode::full;
    AdversarialForm adversarial = AdversarialForm::confusion;
    std::uint64_t seed = 0;
    std::size_t eval_every = 250;
    std::size_t checkpoint_every = 0;  // 0 = only the final checkpoint
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    NetConfigSet nets;
    std::size_t num_classes = 0;
    std::string checkpoint_dir;  // empty = no checkpoints written

    // Ablation flags fold into the hyperparameters and loss options.
    HyperParams effective_hp() const;
    LossOptions loss_options() const;
};

// Per-step record of the five losses, in update order.
struct StepLosses {
    double shared_encoder = 0.0;
    double private_encoder = 0.0;
    double label_classifier = 0.0;
    double decoder = 0.0;
    double domain_classifier = 0.0;
};

struct TrainState {
    ModelParams params;
    // one independent optimizer state per parameter group
    AdamState opt_shared, opt_private, opt_label, opt_decoder, opt_domain;
    std::uint64_t step = 0;
    std::vector<StepLosses> loss_trace;
};

struct EvalRecord {
    std::uint64_t step = 0;
    std::map<int, double> per_domain_accuracy;
    double mean_target_accuracy = 0.0;
    StepLosses losses;
};

struct RunReport {
    std::string mode;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::map<int, double> per_domain_accuracy;
    double mean_target_accuracy = 0.0;
    // domain-probe accuracies on frozen features; negative until measured
    double shared_probe_accuracy = -1.0;
    double private_probe_accuracy = -1.0;
    std::vector<EvalRecord> evals;
};

// One concrete training run: which datasets participate and how their
// domain ids map onto classifier labels.
struct RunSpec {
    TrainConfig config;
    std::vector<std::size_t> dataset_indices;
    std::vector<int> domain_label_of;
    std::size_t num_domain_labels = 0;
    std::string tag;
};

// Expands a config into concrete runs: full/ablations -> one run over all
// domains; combined -> one run with a single target label; pairwise ->
// M - 1 source/target runs.
std::vector<RunSpec> mode_expand(const TrainConfig& base, std::size_t num_domains);

TrainState init_train_state(const TrainConfig& config);

// The five sub-updates of one training step, in schedule order.
enum class SubUpdate {
    shared_encoder,
    private_encoder,
    label_classifier,
    decoder,
    domain_classifier,
};

// Runs one sub-update: fresh forward pass of that loss on the batch, then an
// optimizer step on that parameter group alone. Returns the loss value.
double apply_sub_update(TrainState& state, const Batch& batch, const TrainConfig& config,
                        SubUpdate which);

// One step of the alternating schedule: update the shared encoder, private
// encoder, label classifier, decoder, and domain classifier, each with a
// fresh forward pass on the same batch and an optimizer step that touches
// only its own group.
StepLosses train_step(TrainState& state, const Batch& batch, const TrainConfig& config);

std::pair<TrainState, RunReport> train_loop(const std::vector<DomainDataset>& datasets,
                                            const RunSpec& run);
// Convenience for non-pairwise modes.
std::pair<TrainState, RunReport> train_loop(const std::vector<DomainDataset>& datasets,
                                            const TrainConfig& config);

}  // namespace mtda
