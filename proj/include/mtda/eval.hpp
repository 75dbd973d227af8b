#pragma once

#include <array>
#include <string>
#include <vector>

#include "mtda/trainer.hpp"

namespace mtda {

// Fraction of rows where argmax C(E_s(x)) equals the ground-truth label.
// Ties break toward the lowest class index.
double eval_accuracy(const ModelParams& params, const DomainDataset& dataset);

// Trains only the label classifier on top of the shared encoder with the
// plain source cross-entropy, then evaluates on every labeled domain.
RunReport baseline_source_only(const std::vector<DomainDataset>& datasets, const TrainConfig& config);

// Nearest source neighbour in raw input space (Euclidean, lowest-index
// tie-breaking); no training.
RunReport baseline_1nn(const std::vector<DomainDataset>& datasets);

struct ProbeResult {
    double shared_accuracy = 0.0;
    double private_accuracy = 0.0;
};

// Freezes the encoders and trains a fresh softmax probe to predict the
// domain id from z_s, and another from z_p, on held-out splits. The probe
// never sees class labels.
ProbeResult probe_disentanglement(const ModelParams& params,
                                  const std::vector<DomainDataset>& datasets, std::uint64_t seed);

// Writes one CSV row per (sample, feature kind): domain id, true label,
// kind, raw feature coordinates, then a 2-component PCA projection fitted
// on the pooled shared + private features. Byte-deterministic.
void export_features(const ModelParams& params, const std::vector<DomainDataset>& datasets,
                     const std::string& path);

// Principal components with a fixed sign convention (the entry of largest
// magnitude in each component is positive).
struct Pca2 {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> components;
    std::array<double, 2> eigenvalues{};
    double total_variance = 0.0;

    std::array<double, 2> project(std::span<const double> row) const;
};
Pca2 fit_pca2(const std::vector<std::vector<double>>& rows);

// Runs full, woR, woE, woD, woP, source_only, 1-NN, combined and pairwise
// with a shared seed and collects one report per mode.
std::vector<RunReport> ablation_suite(const std::vector<DomainDataset>& datasets,
                                      const TrainConfig& base);

std::string comparison_table(const std::vector<RunReport>& reports);

}  // namespace mtda
