// Command-line front end: train / ablate / eval / export.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mtda/checkpoint.hpp"
#include "mtda/config.hpp"
#include "mtda/eval.hpp"
#include "mtda/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir_override;
    std::optional<std::uint64_t> seed_override;
    std::string checkpoint_path;  // eval / export
    std::string export_path;      // export
};

mtda::AppConfig load_app_config(const CliOptions& opt) {
    mtda::AppConfig cfg = mtda::parse_config_file(opt.config_path);
    if (opt.seed_override) cfg.train.seed = *opt.seed_override;
    if (!opt.out_dir_override.empty()) cfg.out_dir = opt.out_dir_override;
    return cfg;
}

json losses_json(const mtda::StepLosses& l) {
    return json{{"shared_encoder", l.shared_encoder},
                {"private_encoder", l.private_encoder},
                {"label_classifier", l.label_classifier},
                {"decoder", l.decoder},
                {"domain_classifier", l.domain_classifier}};
}

json report_record(const mtda::RunReport& report, const mtda::EvalRecord& rec) {
    json acc = json::object();
    for (const auto& [dom, a] : rec.per_domain_accuracy) acc[std::to_string(dom)] = a;
    return json{{"step", rec.step},
                {"mode", report.mode},
                {"seed", report.seed},
                {"config", report.config_digest},
                {"accuracy", acc},
                {"mean_target_accuracy", rec.mean_target_accuracy},
                {"losses", losses_json(rec.losses)}};
}

void append_metrics(const fs::path& path, const mtda::RunReport& report) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw mtda::ConfigError("cannot write metrics log " + path.string());
    for (const auto& rec : report.evals) out << report_record(report, rec).dump() << '\n';
}

void write_summary_line(std::ostream& os, const mtda::RunReport& r) {
    os << "mode " << r.mode << "  seed " << r.seed
       << "  mean target accuracy " << r.mean_target_accuracy << "\n";
    for (const auto& [dom, acc] : r.per_domain_accuracy)
        os << "  domain " << dom << ": " << acc << "\n";
    if (r.shared_probe_accuracy >= 0.0) {
        os << "  domain probe on shared features:  " << r.shared_probe_accuracy << "\n";
        os << "  domain probe on private features: " << r.private_probe_accuracy << "\n";
    }
}

int cmd_train(const CliOptions& opt) {
    mtda::AppConfig cfg = load_app_config(opt);
    auto datasets = cfg.load_datasets();
    mtda::TrainConfig train = cfg.finalize_train_config(datasets);

    fs::create_directories(cfg.out_dir);
    auto runs = mtda::mode_expand(train, datasets.size());

    std::ofstream summary(fs::path(cfg.out_dir) / "summary.txt", std::ios::trunc);
    for (auto& run : runs) {
        mtda::RunSpec spec = run;
        spec.config.checkpoint_dir =
            (fs::path(cfg.out_dir) / ("checkpoints_" + spec.tag)).string();
        auto [state, report] = mtda::train_loop(datasets, spec);
        if (spec.config.mode != mtda::RunMode::source_only) {
            auto probe = mtda::probe_disentanglement(state.params, datasets, train.seed);
            report.shared_probe_accuracy = probe.shared_accuracy;
            report.private_probe_accuracy = probe.private_accuracy;
        }
        append_metrics(fs::path(cfg.out_dir) / "metrics.jsonl", report);
        write_summary_line(summary, report);
        write_summary_line(std::cout, report);
    }
    return 0;
}

int cmd_ablate(const CliOptions& opt) {
    mtda::AppConfig cfg = load_app_config(opt);
    auto datasets = cfg.load_datasets();
    mtda::TrainConfig train = cfg.finalize_train_config(datasets);

    fs::create_directories(cfg.out_dir);
    auto reports = mtda::ablation_suite(datasets, train);
    for (const auto& r : reports) append_metrics(fs::path(cfg.out_dir) / "metrics.jsonl", r);

    const std::string table = mtda::comparison_table(reports);
    std::ofstream out(fs::path(cfg.out_dir) / "ablation_table.txt", std::ios::trunc);
    out << table;
    std::cout << table;
    return 0;
}

int cmd_eval(const CliOptions& opt) {
    mtda::AppConfig cfg = load_app_config(opt);
    auto datasets = cfg.load_datasets();
    auto loaded = mtda::load_checkpoint(opt.checkpoint_path);

    mtda::RunReport report;
    report.mode = "eval";
    report.seed = cfg.train.seed;
    double target_sum = 0.0;
    std::size_t targets = 0;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        if (!datasets[i].has_labels()) continue;
        const double acc = mtda::eval_accuracy(loaded.state.params, datasets[i]);
        report.per_domain_accuracy[datasets[i].domain_id()] = acc;
        if (i > 0) {
            target_sum += acc;
            ++targets;
        }
    }
    report.mean_target_accuracy = targets ? target_sum / double(targets) : 0.0;
    auto probe = mtda::probe_disentanglement(loaded.state.params, datasets, cfg.train.seed);
    report.shared_probe_accuracy = probe.shared_accuracy;
    report.private_probe_accuracy = probe.private_accuracy;

    write_summary_line(std::cout, report);
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        append_metrics(fs::path(cfg.out_dir) / "metrics.jsonl", report);
    }
    return 0;
}

int cmd_export(const CliOptions& opt) {
    mtda::AppConfig cfg = load_app_config(opt);
    auto datasets = cfg.load_datasets();
    auto loaded = mtda::load_checkpoint(opt.checkpoint_path);
    fs::path out = opt.export_path.empty() ? fs::path(cfg.out_dir) / "features.csv"
                                           : fs::path(opt.export_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    mtda::export_features(loaded.state.params, datasets, out.string());
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"single-source multi-target domain adaptation via shared/private feature factorization"};
    app.require_subcommand(1);

    CliOptions opt;
    std::uint64_t seed_value = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--config", opt.config_path, "run configuration file")->required();
        sub->add_option("--out", opt.out_dir_override, "override the configured output directory");
        sub->add_option("--seed", seed_value, "override the configured seed")
            ->each([&](const std::string&) { seed_set = true; });
        if (needs_checkpoint)
            sub->add_option("--checkpoint", opt.checkpoint_path, "checkpoint file")->required();
    };

    CLI::App* train = app.add_subcommand("train", "run the training loop defined by the config");
    add_common(train, false);
    CLI::App* ablate = app.add_subcommand("ablate", "run the full ablation suite");
    add_common(ablate, false);
    CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the configured data");
    add_common(evalc, true);
    CLI::App* exportc = app.add_subcommand("export", "export shared/private features to CSV");
    add_common(exportc, true);
    exportc->add_option("--out-file", opt.export_path, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (seed_set) opt.seed_override = seed_value;

    try {
        if (train->parsed()) return cmd_train(opt);
        if (ablate->parsed()) return cmd_ablate(opt);
        if (evalc->parsed()) return cmd_eval(opt);
        if (exportc->parsed()) return cmd_export(opt);
        return 2;
    } catch (const mtda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mtda::FormatError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 4;
    } catch (const mtda::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
