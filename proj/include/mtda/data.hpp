#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mtda/losses.hpp"

namespace mtda {

// One domain's samples. Class labels for target domains are retained for
// evaluation only; training code must go through training_labels(), which
// refuses to hand them out.
class DomainDataset {
  public:
    DomainDataset(int domain_id, Tensor inputs, std::vector<int> labels, bool is_source);

    int domain_id() const { return domain_id_; }
    const Tensor& inputs() const { return inputs_; }
    std::size_t size() const { return inputs_.rows(); }
    bool is_source() const { return is_source_; }
    bool has_labels() const { return !labels_.empty(); }

    // Labels usable during training: source domain only.
    std::span<const int> training_labels() const;
    // Evaluation-only accessor; valid for any labeled domain.
    std::span<const int> evaluation_labels() const;

  private:
    int domain_id_;
    Tensor inputs_;
    std::vector<int> labels_;
    bool is_source_;
};

struct SyntheticSpec {
    std::size_t domains = 3;
    std::size_t classes = 3;
    std::size_t n_per_domain = 600;
    std::vector<std::array<double, 2>> base_means;  // one point per class
    double rotation_per_domain_deg = 25.0;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;

    static std::vector<std::array<double, 2>> default_means(std::size_t classes);
};

// Domain j draws class-k points from N(R(j * rotation) * base_means[k],
// sigma^2 I), then the pooled data is rescaled isotropically into [-1, 1].
// Domain 0 is the source; targets keep their labels for evaluation only.
std::vector<DomainDataset> gen_synthetic_domains(const SyntheticSpec& spec);

// IDX container ingestion (big-endian magic 0x803 for images, 0x801 for
// labels). Pixels map to [-1, 1] via 2 p / 255 - 1; downsample_to > 0
// block-averages each image to downsample_to x downsample_to first.
DomainDataset load_idx(std::istream& images, std::istream& labels, int domain_id,
                       bool is_source, std::size_t downsample_to = 0);
DomainDataset load_idx_files(const std::string& images_path, const std::string& labels_path,
                             int domain_id, bool is_source, std::size_t downsample_to = 0);

Tensor onehot(std::span<const int> indices, std::size_t width);

// Draws batch_size rows from every domain per step, source rows first,
// without replacement inside each per-domain epoch. `domain_label_of` maps
// dataset index -> effective domain label (lets combined/pairwise modes
// relabel without touching the data).
class BatchStream {
  public:
    BatchStream(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                std::size_t num_classes, std::vector<int> domain_label_of,
                std::size_t num_domain_labels, std::uint64_t seed);

    Batch next();

  private:
    const std::vector<DomainDataset>& datasets_;
    std::size_t batch_size_;
    std::size_t num_classes_;
    std::vector<int> domain_label_of_;
    std::size_t num_domain_labels_;
    std::mt19937_64 eng_;
    std::vector<std::vector<std::size_t>> order_;   // per-dataset shuffled indices
    std::vector<std::size_t> cursor_;

    void reshuffle(std::size_t d);
};

}  // namespace mtda
