#include "mtda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>

namespace mtda {

DomainDataset::DomainDataset(int domain_id, Tensor inputs, std::vector<int> labels, bool is_source)
    : domain_id_(domain_id), inputs_(std::move(inputs)), labels_(std::move(labels)), is_source_(is_source) {
    if (!labels_.empty() && labels_.size() != inputs_.rows()) {
        throw DimensionError("dataset has " + std::to_string(inputs_.rows()) + " rows but " +
                             std::to_string(labels_.size()) + " labels");
    }
    for (double v : inputs_.values()) {
        if (v < -1.0 || v > 1.0) throw ContractError("dataset inputs must lie in [-1, 1]");
    }
}

std::span<const int> DomainDataset::training_labels() const {
    if (!is_source_) throw ContractError("target domain labels are not available for training");
    if (labels_.empty()) throw ContractError("source domain has no labels");
    return labels_;
}

std::span<const int> DomainDataset::evaluation_labels() const {
    if (labels_.empty()) throw ContractError("domain has no ground-truth labels");
    return labels_;
}

std::vector<std::array<double, 2>> SyntheticSpec::default_means(std::size_t classes) {
    // Uneven angular spacing and two radii: a rotation large enough moves a
    // cluster into another class's angular sector without support overlap.
    const double angles_deg[3] = {0.0, 65.0, 195.0};
    const double radii[3] = {1.0, 1.0, 0.55};
    std::vector<std::array<double, 2>> means;
    for (std::size_t k = 0; k < classes; ++k) {
        const double angle_deg =
            k < 3 ? angles_deg[k] : 360.0 * static_cast<double>(k) / static_cast<double>(classes);
        const double radius = k < 3 ? radii[k] : (k % 2 == 0 ? 1.0 : 0.55);
        const double a = angle_deg * std::numbers::pi / 180.0;
        means.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return means;
}

std::vector<DomainDataset> gen_synthetic_domains(const SyntheticSpec& spec) {
    if (spec.domains < 2 || spec.classes < 2) throw ConfigError("need at least 2 domains and 2 classes");
    if (spec.noise_sigma <= 0.0) throw ConfigError("noise_sigma must be positive");
    if (spec.n_per_domain < spec.classes) throw ConfigError("n_per_domain smaller than class count");
    auto means = spec.base_means.empty() ? SyntheticSpec::default_means(spec.classes) : spec.base_means;
    if (means.size() != spec.classes) {
        throw ConfigError("base_means lists " + std::to_string(means.size()) + " points for " +
                          std::to_string(spec.classes) + " classes");
    }
    for (std::size_t a = 0; a < means.size(); ++a)
        for (std::size_t b = a + 1; b < means.size(); ++b) {
            const double dx = means[a][0] - means[b][0], dy = means[a][1] - means[b][1];
            if (std::sqrt(dx * dx + dy * dy) < 3.0 * spec.noise_sigma)
                std::fprintf(stderr,
                             "warning: base means %zu and %zu are within 3 sigma; classes will overlap\n",
                             a, b);
        }

    std::mt19937_64 eng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);

    std::vector<std::vector<double>> raw(spec.domains);
    std::vector<std::vector<int>> labels(spec.domains);
    double max_abs = 0.0;
    for (std::size_t j = 0; j < spec.domains; ++j) {
        const double theta = static_cast<double>(j) * spec.rotation_per_domain_deg * std::numbers::pi / 180.0;
        const double c = std::cos(theta), s = std::sin(theta);
        raw[j].reserve(spec.n_per_domain * 2);
        for (std::size_t i = 0; i < spec.n_per_domain; ++i) {
            const std::size_t k = i % spec.classes;
            const double mx = c * means[k][0] - s * means[k][1];
            const double my = s * means[k][0] + c * means[k][1];
            const double x = mx + noise(eng);
            const double y = my + noise(eng);
            raw[j].push_back(x);
            raw[j].push_back(y);
            labels[j].push_back(static_cast<int>(k));
            max_abs = std::max({max_abs, std::abs(x), std::abs(y)});
        }
    }

    std::vector<DomainDataset> out;
    for (std::size_t j = 0; j < spec.domains; ++j) {
        for (auto& v : raw[j]) v /= max_abs;
        out.emplace_back(static_cast<int>(j),
                         Tensor::from_values({spec.n_per_domain, 2}, std::move(raw[j])),
                         std::move(labels[j]), j == 0);
    }
    return out;
}

namespace {

std::uint32_t read_u32_be(std::istream& in, std::size_t& offset, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw FormatError(std::string("truncated ") + what + " at byte offset " + std::to_string(offset));
    }
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t count, std::size_t& offset,
                                      const char* what) {
    std::vector<unsigned char> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw FormatError(std::string("truncated ") + what + " at byte offset " +
                          std::to_string(offset + static_cast<std::size_t>(in.gcount())));
    }
    offset += count;
    return buf;
}

}  // namespace

DomainDataset load_idx(std::istream& images, std::istream& labels, int domain_id,
                       bool is_source, std::size_t downsample_to) {
    std::size_t img_off = 0;
    const std::uint32_t img_magic = read_u32_be(images, img_off, "image stream");
    if (img_magic != 0x00000803) {
        throw FormatError("bad image magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", img_magic);
            return std::string(buf);
        }() + " at byte offset 0");
    }
    const std::uint32_t n = read_u32_be(images, img_off, "image stream");
    const std::uint32_t h = read_u32_be(images, img_off, "image stream");
    const std::uint32_t w = read_u32_be(images, img_off, "image stream");

    std::size_t lab_off = 0;
    const std::uint32_t lab_magic = read_u32_be(labels, lab_off, "label stream");
    if (lab_magic != 0x00000801) {
        throw FormatError("bad label magic at byte offset 0");
    }
    const std::uint32_t n_lab = read_u32_be(labels, lab_off, "label stream");
    if (n_lab != n) {
        throw FormatError("image stream holds " + std::to_string(n) + " items but label stream holds " +
                          std::to_string(n_lab));
    }

    const std::size_t side = downsample_to > 0 ? downsample_to : 0;
    if (side > h || side > w) throw ConfigError("downsample size exceeds the image size");
    const std::size_t out_h = side ? side : h;
    const std::size_t out_w = side ? side : w;

    std::vector<double> vals;
    vals.reserve(std::size_t(n) * out_h * out_w);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto pix = read_bytes(images, std::size_t(h) * w, img_off, "image stream");
        if (!side) {
            for (unsigned char p : pix) vals.push_back(2.0 * double(p) / 255.0 - 1.0);
            continue;
        }
        // block average with edges at floor(r * h / side)
        for (std::size_t br = 0; br < side; ++br) {
            const std::size_t r0 = br * h / side, r1 = (br + 1) * h / side;
            for (std::size_t bc = 0; bc < side; ++bc) {
                const std::size_t c0 = bc * w / side, c1 = (bc + 1) * w / side;
                double acc = 0.0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t c = c0; c < c1; ++c) acc += double(pix[r * w + c]);
                acc /= double((r1 - r0) * (c1 - c0));
                vals.push_back(2.0 * acc / 255.0 - 1.0);
            }
        }
    }
    auto lab_bytes = read_bytes(labels, n, lab_off, "label stream");
    std::vector<int> lab(lab_bytes.begin(), lab_bytes.end());

    return DomainDataset(domain_id, Tensor::from_values({n, out_h * out_w}, std::move(vals)),
                         std::move(lab), is_source);
}

DomainDataset load_idx_files(const std::string& images_path, const std::string& labels_path,
                             int domain_id, bool is_source, std::size_t downsample_to) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw ConfigError("cannot open image file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw ConfigError("cannot open label file " + labels_path);
    return load_idx(img, lab, domain_id, is_source, downsample_to);
}

Tensor onehot(std::span<const int> indices, std::size_t width) {
    Tensor out = Tensor::zeros({indices.size(), width});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const int v = indices[r];
        if (v < 0 || static_cast<std::size_t>(v) >= width) {
            throw ContractError("index " + std::to_string(v) + " out of range for width " +
                                std::to_string(width));
        }
        out.at(r, static_cast<std::size_t>(v)) = 1.0;
    }
    return out;
}

BatchStream::BatchStream(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                         std::size_t num_classes, std::vector<int> domain_label_of,
                         std::size_t num_domain_labels, std::uint64_t seed)
    : datasets_(datasets),
      batch_size_(batch_size),
      num_classes_(num_classes),
      domain_label_of_(std::move(domain_label_of)),
      num_domain_labels_(num_domain_labels),
      eng_(seed),
      order_(datasets.size()),
      cursor_(datasets.size(), 0) {
    if (datasets_.empty()) throw ConfigError("no datasets to batch from");
    if (domain_label_of_.size() != datasets_.size())
        throw ConfigError("domain label map does not cover every dataset");
    if (!datasets_.front().is_source()) throw ConfigError("dataset 0 must be the source domain");
    for (const auto& d : datasets_) {
        if (d.size() < batch_size_) {
            throw ConfigError("batch size " + std::to_string(batch_size_) + " exceeds domain " +
                              std::to_string(d.domain_id()) + " size " + std::to_string(d.size()));
        }
    }
    for (std::size_t d = 0; d < datasets_.size(); ++d) reshuffle(d);
}

void BatchStream::reshuffle(std::size_t d) {
    auto& ord = order_[d];
    ord.resize(datasets_[d].size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::shuffle(ord.begin(), ord.end(), eng_);
    cursor_[d] = 0;
}

Batch BatchStream::next() {
    const std::size_t d_x = datasets_.front().inputs().cols();
    const std::size_t n = batch_size_ * datasets_.size();

    Batch b;
    b.x = Tensor::zeros({n, d_x});
    b.n_source = batch_size_;
    b.d_lab = Tensor::zeros({n, num_domain_labels_});
    b.y = Tensor::zeros({batch_size_, num_classes_});

    std::size_t row = 0;
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
        const auto& ds = datasets_[d];
        for (std::size_t i = 0; i < batch_size_; ++i, ++row) {
            if (cursor_[d] == ds.size()) reshuffle(d);  // epoch boundary
            const std::size_t src_row = order_[d][cursor_[d]++];
            for (std::size_t c = 0; c < d_x; ++c) b.x.at(row, c) = ds.inputs()(src_row, c);
            b.d_lab.at(row, static_cast<std::size_t>(domain_label_of_[d])) = 1.0;
            if (d == 0) {
                const int label = ds.training_labels()[src_row];
                if (label < 0 || static_cast<std::size_t>(label) >= num_classes_)
                    throw ContractError("source label out of range");
                b.y.at(row, static_cast<std::size_t>(label)) = 1.0;
            }
        }
    }
    return b;
}

}  // namespace mtda
