#include "mtda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace mtda {

double eval_accuracy(const ModelParams& params, const DomainDataset& dataset) {
    auto labels = dataset.evaluation_labels();
    Tensor probs = classify_label(params, encode_shared(params, dataset.inputs()));
    std::size_t hits = 0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, arg)) arg = c;  // ties keep the lowest index
        if (static_cast<int>(arg) == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

RunReport baseline_source_only(const std::vector<DomainDataset>& datasets, const TrainConfig& config) {
    TrainConfig c = config;
    c.mode = RunMode::source_only;
    auto [state, report] = train_loop(datasets, c);
    return report;
}

RunReport baseline_1nn(const std::vector<DomainDataset>& datasets) {
    if (datasets.empty() || !datasets.front().is_source()) throw ConfigError("dataset 0 must be the source");
    const auto& source = datasets.front();
    if (source.size() == 0) throw ContractError("empty source domain");
    auto source_labels = source.training_labels();
    const std::size_t d = source.inputs().cols();

    RunReport report;
    report.mode = "1nn";
    double target_sum = 0.0;
    std::size_t target_count = 0;
    for (std::size_t t = 0; t < datasets.size(); ++t) {
        const auto& ds = datasets[t];
        if (!ds.has_labels()) continue;
        auto truth = ds.evaluation_labels();
        std::size_t hits = 0;
        for (std::size_t r = 0; r < ds.size(); ++r) {
            double best = 1e300;
            std::size_t best_row = 0;
            for (std::size_t s = 0; s < source.size(); ++s) {
                double dist = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = ds.inputs()(r, c) - source.inputs()(s, c);
                    dist += diff * diff;
                }
                if (dist < best) {  // strict: ties keep the lowest source index
                    best = dist;
                    best_row = s;
                }
            }
            if (source_labels[best_row] == truth[r]) ++hits;
        }
        const double acc = double(hits) / double(ds.size());
        report.per_domain_accuracy[ds.domain_id()] = acc;
        if (t > 0) {
            target_sum += acc;
            ++target_count;
        }
    }
    report.mean_target_accuracy = target_count ? target_sum / double(target_count) : 0.0;
    return report;
}

namespace {

struct ProbeData {
    Tensor train_x, test_x;
    std::vector<int> train_dom, test_dom;
};

ProbeData split_features(const std::vector<Tensor>& per_domain_features, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::vector<std::vector<double>> train_rows, test_rows;
    std::vector<int> train_dom, test_dom;
    for (std::size_t dom = 0; dom < per_domain_features.size(); ++dom) {
        const Tensor& f = per_domain_features[dom];
        std::vector<std::size_t> order(f.rows());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), eng);
        const std::size_t half = f.rows() / 2;
        for (std::size_t i = 0; i < f.rows(); ++i) {
            std::vector<double> row(f.cols());
            for (std::size_t c = 0; c < f.cols(); ++c) row[c] = f(order[i], c);
            if (i < half) {
                train_rows.push_back(std::move(row));
                train_dom.push_back(int(dom));
            } else {
                test_rows.push_back(std::move(row));
                test_dom.push_back(int(dom));
            }
        }
    }
    auto pack = [](const std::vector<std::vector<double>>& rows) {
        std::vector<double> flat;
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        return Tensor::from_values({rows.size(), rows[0].size()}, std::move(flat));
    };
    return {pack(train_rows), pack(test_rows), std::move(train_dom), std::move(test_dom)};
}

double probe_accuracy(const ProbeData& data, std::size_t num_domains, std::uint64_t seed) {
    const std::size_t d = data.train_x.cols();
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    std::vector<double> w0(d * num_domains);
    for (auto& v : w0) v = dist(eng);
    Tensor w = Tensor::from_values({d, num_domains}, std::move(w0), true);
    Tensor b = Tensor::zeros({1, num_domains}, true);
    Tensor targets = onehot(data.train_dom, num_domains);
    auto state = AdamState::for_group({w, b}, 0.9, 0.999, 1e-8);

    for (int step = 0; step < 300; ++step) {
        Tape tape;
        Tensor log_probs = tape.log_softmax(tape.add_row_bias(tape.matmul(data.train_x, w), b));
        Tensor loss = tape.scale(tape.sum(tape.mul(targets, log_probs)),
                                 -1.0 / double(data.train_x.rows()));
        w.zero_grad();
        b.zero_grad();
        tape.backward(loss);
        adam_step({w, b}, state, 0.05);
    }

    Tape tape;
    Tensor logits = tape.add_row_bias(tape.matmul(data.test_x, w), b);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, arg)) arg = c;
        if (int(arg) == data.test_dom[r]) ++hits;
    }
    return double(hits) / double(logits.rows());
}

}  // namespace

ProbeResult probe_disentanglement(const ModelParams& params,
                                  const std::vector<DomainDataset>& datasets, std::uint64_t seed) {
    std::vector<Tensor> shared, priv;
    for (const auto& ds : datasets) {
        shared.push_back(encode_shared(params, ds.inputs()));
        priv.push_back(encode_private(params, ds.inputs()));
    }
    ProbeResult out;
    out.shared_accuracy =
        probe_accuracy(split_features(shared, seed ^ 0x5851f42d4c957f2dull), datasets.size(), seed + 1);
    out.private_accuracy =
        probe_accuracy(split_features(priv, seed ^ 0x5851f42d4c957f2dull), datasets.size(), seed + 2);
    return out;
}

Pca2 fit_pca2(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ContractError("PCA needs at least one row");
    const std::size_t n = rows.size(), d = rows[0].size();
    Pca2 out;
    out.mean.assign(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < d; ++c) out.mean[c] += r[c] / double(n);

    // covariance (population normalization)
    std::vector<double> cov(d * d, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) {
            const double vi = r[i] - out.mean[i];
            for (std::size_t j = i; j < d; ++j) cov[i * d + j] += vi * (r[j] - out.mean[j]) / double(n);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) cov[i * d + j] = cov[j * d + i];

    // cyclic Jacobi eigendecomposition; deterministic sweep order
    std::vector<double> a = cov;
    std::vector<double> v(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t x, std::size_t y) { return a[x * d + x] > a[y * d + y]; });

    for (std::size_t i = 0; i < d; ++i) out.total_variance += cov[i * d + i];
    for (int comp = 0; comp < 2 && comp < int(d); ++comp) {
        const std::size_t col = idx[std::size_t(comp)];
        std::vector<double> vec(d);
        for (std::size_t k = 0; k < d; ++k) vec[k] = v[k * d + col];
        // sign convention: the entry of largest magnitude is positive
        std::size_t big = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (std::abs(vec[k]) > std::abs(vec[big])) big = k;
        if (vec[big] < 0.0)
            for (auto& x : vec) x = -x;
        out.components[std::size_t(comp)] = std::move(vec);
        out.eigenvalues[std::size_t(comp)] = a[col * d + col];
    }
    if (d == 1) {
        out.components[1].assign(1, 0.0);
        out.eigenvalues[1] = 0.0;
    }
    return out;
}

std::array<double, 2> Pca2::project(std::span<const double> row) const {
    std::array<double, 2> out{0.0, 0.0};
    for (std::size_t c = 0; c < 2; ++c) {
        if (components[c].empty()) continue;
        for (std::size_t k = 0; k < row.size(); ++k)
            out[c] += (row[k] - mean[k]) * components[c][k];
    }
    return out;
}

void export_features(const ModelParams& params, const std::vector<DomainDataset>& datasets,
                     const std::string& path) {
    struct Row {
        int domain;
        int label;
        const char* kind;
        std::vector<double> coords;
    };
    std::vector<Row> rows;
    std::vector<std::vector<double>> pooled;
    for (const auto& ds : datasets) {
        Tensor zs = encode_shared(params, ds.inputs());
        Tensor zp = encode_private(params, ds.inputs());
        for (std::size_t r = 0; r < ds.size(); ++r) {
            const int label = ds.has_labels() ? ds.evaluation_labels()[r] : -1;
            for (auto [kind, z] : {std::pair{"shared", &zs}, std::pair{"private", &zp}}) {
                std::vector<double> coords(z->cols());
                for (std::size_t c = 0; c < z->cols(); ++c) coords[c] = (*z)(r, c);
                pooled.push_back(coords);
                rows.push_back({ds.domain_id(), label, kind, std::move(coords)});
            }
        }
    }
    const Pca2 pca = fit_pca2(pooled);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write feature export to " + path);
    out << "domain,label,kind";
    for (std::size_t c = 0; c < rows.front().coords.size(); ++c) out << ",f" << c;
    out << ",pc1,pc2\n";
    char buf[64];
    for (const auto& row : rows) {
        out << row.domain << ',' << row.label << ',' << row.kind;
        for (double v : row.coords) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        const auto pc = pca.project(row.coords);
        std::snprintf(buf, sizeof buf, "%.17g", pc[0]);
        out << ',' << buf;
        std::snprintf(buf, sizeof buf, "%.17g", pc[1]);
        out << ',' << buf << '\n';
    }
    if (!out) throw ConfigError("failed while writing " + path);
}

std::vector<RunReport> ablation_suite(const std::vector<DomainDataset>& datasets,
                                      const TrainConfig& base) {
    if (datasets.size() < 3) throw ConfigError("the ablation suite needs at least 3 domains");
    std::vector<RunReport> reports;

    auto run_mode = [&](RunMode mode) {
        TrainConfig c = base;
        c.mode = mode;
        auto runs = mode_expand(c, datasets.size());
        if (runs.size() == 1) {
            auto [state, report] = train_loop(datasets, runs.front());
            if (mode != RunMode::source_only) {
                auto probe = probe_disentanglement(state.params, datasets, base.seed);
                report.shared_probe_accuracy = probe.shared_accuracy;
                report.private_probe_accuracy = probe.private_accuracy;
            }
            reports.push_back(std::move(report));
            return;
        }
        // pairwise: aggregate the per-target runs into one report
        RunReport agg;
        agg.mode = "pairwise";
        agg.seed = base.seed;
        double sum = 0.0;
        for (const auto& r : runs) {
            auto [state, report] = train_loop(datasets, r);
            agg.config_digest = report.config_digest;
            for (const auto& [dom, acc] : report.per_domain_accuracy) {
                if (dom != datasets.front().domain_id()) {
                    agg.per_domain_accuracy[dom] = acc;
                    sum += acc;
                }
            }
        }
        agg.mean_target_accuracy = sum / double(runs.size());
        reports.push_back(std::move(agg));
    };

    run_mode(RunMode::full);
    run_mode(RunMode::wo_reconstruction);
    run_mode(RunMode::wo_entropy);
    run_mode(RunMode::wo_domain);
    run_mode(RunMode::wo_private);
    run_mode(RunMode::source_only);
    reports.push_back(baseline_1nn(datasets));
    reports.back().seed = base.seed;
    run_mode(RunMode::combined);
    run_mode(RunMode::pairwise);
    return reports;
}

std::string comparison_table(const std::vector<RunReport>& reports) {
    std::ostringstream os;
    os << "mode          mean_target_acc  per_domain";
    os << "                          shared_probe  private_probe\n";
    for (const auto& r : reports) {
        char line[256];
        std::snprintf(line, sizeof line, "%-13s %15.4f  ", r.mode.c_str(), r.mean_target_accuracy);
        os << line;
        std::ostringstream dom;
        for (const auto& [id, acc] : r.per_domain_accuracy) {
            char cell[48];
            std::snprintf(cell, sizeof cell, "d%d=%.4f ", id, acc);
            dom << cell;
        }
        std::snprintf(line, sizeof line, "%-36s", dom.str().c_str());
        os << line;
        if (r.shared_probe_accuracy >= 0.0) {
            std::snprintf(line, sizeof line, "%12.4f  %13.4f", r.shared_probe_accuracy,
                          r.private_probe_accuracy);
            os << line;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace mtda
