#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mtda/checkpoint.hpp"
#include "mtda/eval.hpp"
#include "mtda/trainer.hpp"
#include "test_util.hpp"

using namespace mtda;

namespace {

TrainConfig small_config(RunMode mode = RunMode::full, std::uint64_t seed = 1) {
    TrainConfig c;
    c.nets = NetConfigSet::standard(2, 8, 3, 3, 16);
    c.num_classes = 3;
    c.mode = mode;
    c.seed = seed;
    c.steps = 40;
    c.batch_per_domain = 8;
    c.eval_every = 20;
    return c;
}

std::vector<DomainDataset> small_task(std::uint64_t seed = 3, double rotation = 25.0) {
    SyntheticSpec spec;
    spec.n_per_domain = 60;
    spec.rotation_per_domain_deg = rotation;
    spec.seed = seed;
    return gen_synthetic_domains(spec);
}

std::vector<std::vector<double>> snapshot(const Mlp& g) {
    std::vector<std::vector<double>> out;
    for (const auto& t : g.tensors()) out.emplace_back(t.values().begin(), t.values().end());
    return out;
}

bool equals(const Mlp& g, const std::vector<std::vector<double>>& snap) {
    auto ts = g.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        auto v = ts[i].values();
        if (!std::equal(v.begin(), v.end(), snap[i].begin(), snap[i].end())) return false;
    }
    return true;
}

Batch one_batch(const std::vector<DomainDataset>& ds, const TrainConfig& c) {
    BatchStream stream(ds, c.batch_per_domain, c.num_classes, {0, 1, 2}, 3, 17);
    return stream.next();
}

}  // namespace

TEST_CASE("each sub-update touches only its own parameter group") {
    auto ds = small_task();
    auto c = small_config();
    auto state = init_train_state(c);
    Batch b = one_batch(ds, c);

    const Mlp* groups[5] = {&state.params.shared_encoder, &state.params.private_encoder,
                            &state.params.label_classifier, &state.params.decoder,
                            &state.params.domain_classifier};
    const SubUpdate updates[5] = {SubUpdate::shared_encoder, SubUpdate::private_encoder,
                                  SubUpdate::label_classifier, SubUpdate::decoder,
                                  SubUpdate::domain_classifier};
    for (int step = 0; step < 5; ++step) {
        for (int u = 0; u < 5; ++u) {
            std::vector<std::vector<std::vector<double>>> snaps;
            for (auto* g : groups) snaps.push_back(snapshot(*g));
            apply_sub_update(state, b, c, updates[u]);
            for (int g = 0; g < 5; ++g) {
                if (g == u) {
                    CHECK_FALSE(equals(*groups[g], snaps[g]));  // gradients are nonzero here
                } else {
                    CHECK(equals(*groups[g], snaps[g]));
                }
            }
        }
    }
}

TEST_CASE("zeroed lambdas give zero-gradient updates under sgd") {
    auto ds = small_task();
    auto c = small_config();
    c.optimizer = OptimizerKind::sgd;
    c.hp.lambda_r = 0.0;
    c.hp.lambda_c = 0.0;
    c.hp.lambda_d = 0.0;
    auto state = init_train_state(c);
    Batch b = one_batch(ds, c);

    auto priv = snapshot(state.params.private_encoder);
    auto dec = snapshot(state.params.decoder);
    auto dom = snapshot(state.params.domain_classifier);
    auto shared = snapshot(state.params.shared_encoder);
    auto label = snapshot(state.params.label_classifier);
    train_step(state, b, c);
    CHECK(equals(state.params.private_encoder, priv));
    CHECK(equals(state.params.decoder, dec));
    CHECK(equals(state.params.domain_classifier, dom));
    CHECK(equals(state.params.shared_encoder, shared));       // its CE term carries lambda_c = 0
    CHECK_FALSE(equals(state.params.label_classifier, label));  // source CE has unit weight
}

TEST_CASE("eta = 0 leaves parameters unchanged but records losses") {
    auto ds = small_task();
    auto c = small_config();
    c.hp.eta = 0.0;
    auto state = init_train_state(c);
    Batch b = one_batch(ds, c);
    auto all = snapshot(state.params.shared_encoder);
    auto losses = train_step(state, b, c);
    CHECK(equals(state.params.shared_encoder, all));
    CHECK(state.loss_trace.size() == 1);
    CHECK(losses.shared_encoder > 0.0);
    CHECK(losses.domain_classifier > 0.0);
}

TEST_CASE("steps = 0 returns initial params and a single evaluation") {
    auto ds = small_task();
    auto c = small_config();
    c.steps = 0;
    auto [state, report] = train_loop(ds, c);
    CHECK(state.step == 0);
    CHECK(report.evals.size() == 1);
    CHECK(report.evals[0].step == 0);
    auto fresh = init_train_state(c);
    CHECK(equals(state.params.shared_encoder, snapshot(fresh.params.shared_encoder)));
}

TEST_CASE("same seed gives identical loss traces") {
    auto ds = small_task();
    auto c = small_config();
    auto [s1, r1] = train_loop(ds, c);
    auto [s2, r2] = train_loop(ds, c);
    REQUIRE(s1.loss_trace.size() == s2.loss_trace.size());
    for (std::size_t i = 0; i < s1.loss_trace.size(); ++i) {
        CHECK(s1.loss_trace[i].shared_encoder == s2.loss_trace[i].shared_encoder);
        CHECK(s1.loss_trace[i].domain_classifier == s2.loss_trace[i].domain_classifier);
    }
    CHECK(r1.mean_target_accuracy == r2.mean_target_accuracy);
}

TEST_CASE("woR zeroes every reconstruction component in the trace") {
    auto ds = small_task();
    auto c = small_config(RunMode::wo_reconstruction);
    auto [state, report] = train_loop(ds, c);
    for (const auto& l : state.loss_trace) CHECK(l.decoder == 0.0);
    // the private loss keeps only its domain term; reconstruction is gone
    HyperParams hp = c.effective_hp();
    CHECK(hp.lambda_r == 0.0);
}

TEST_CASE("woP trains without the private pathway") {
    auto ds = small_task();
    auto c = small_config(RunMode::wo_private);
    auto state = init_train_state(c);
    Batch b = one_batch(ds, c);
    auto priv = snapshot(state.params.private_encoder);
    for (int i = 0; i < 3; ++i) train_step(state, b, c);
    CHECK(equals(state.params.private_encoder, priv));
    for (const auto& l : state.loss_trace) CHECK(l.private_encoder == 0.0);
}

TEST_CASE("mode_expand counts and labeling") {
    auto c = small_config(RunMode::pairwise);
    auto runs = mode_expand(c, 4);
    CHECK(runs.size() == 3);
    for (const auto& r : runs) {
        CHECK(r.dataset_indices.size() == 2);
        CHECK(r.dataset_indices[0] == 0);
        CHECK(r.num_domain_labels == 2);
        CHECK(r.config.nets.domain_classifier.layer_widths.back() == 2);
    }

    auto full_runs = mode_expand(small_config(RunMode::full), 4);
    CHECK(full_runs.size() == 1);
    CHECK(full_runs[0].num_domain_labels == 4);

    auto comb = mode_expand(small_config(RunMode::combined), 4);
    CHECK(comb.size() == 1);
    CHECK(comb[0].num_domain_labels == 2);
    CHECK(comb[0].domain_label_of == std::vector<int>{0, 1, 1, 1});
}

TEST_CASE("full and combined draw bitwise-identical inputs, only labels differ") {
    auto ds = small_task();
    auto c = small_config();
    auto full = mode_expand(small_config(RunMode::full), 3)[0];
    auto comb = mode_expand(small_config(RunMode::combined), 3)[0];

    BatchStream sf(ds, c.batch_per_domain, c.num_classes, full.domain_label_of,
                   full.num_domain_labels, 5);
    BatchStream sc(ds, c.batch_per_domain, c.num_classes, comb.domain_label_of,
                   comb.num_domain_labels, 5);
    for (int i = 0; i < 4; ++i) {
        Batch a = sf.next();
        Batch b = sc.next();
        auto va = a.x.values();
        auto vb = b.x.values();
        CHECK(std::equal(va.begin(), va.end(), vb.begin()));
        CHECK(a.d_lab.cols() == 3);
        CHECK(b.d_lab.cols() == 2);
    }
}

TEST_CASE("checkpoint round-trips byte-identically") {
    auto ds = small_task();
    auto c = small_config();
    c.steps = 10;
    auto [state, report] = train_loop(ds, c);

    const std::string dir = "test_ckpt_tmp";
    std::filesystem::create_directories(dir);
    const std::string p1 = dir + "/a.bin", p2 = dir + "/b.bin";
    save_checkpoint(p1, state, c.optimizer);
    auto loaded = load_checkpoint(p1);
    CHECK(loaded.state.step == state.step);
    CHECK(loaded.optimizer == c.optimizer);
    save_checkpoint(p2, loaded.state, loaded.optimizer);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());

    // loaded parameters continue training exactly like the originals
    Batch b = one_batch(ds, c);
    TrainState resumed = std::move(loaded.state);
    auto l1 = train_step(state, b, c);
    auto l2 = train_step(resumed, b, c);
    CHECK(l1.shared_encoder == l2.shared_encoder);
    CHECK(l1.domain_classifier == l2.domain_classifier);

    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const std::string dir = "test_ckpt_tmp2";
    std::filesystem::create_directories(dir);
    {
        std::ofstream bad(dir + "/bad.bin", std::ios::binary);
        bad << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(dir + "/bad.bin"), FormatError);
    {
        auto c = small_config();
        c.steps = 0;
        auto state = init_train_state(c);
        save_checkpoint(dir + "/trunc.bin", state, c.optimizer);
        auto size = std::filesystem::file_size(dir + "/trunc.bin");
        std::filesystem::resize_file(dir + "/trunc.bin", size / 2);
    }
    CHECK_THROWS_AS(load_checkpoint(dir + "/trunc.bin"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir + "/missing.bin"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("zero-rotation control: source-only and full agree") {
    SyntheticSpec spec;
    spec.n_per_domain = 120;
    spec.rotation_per_domain_deg = 0.0;
    spec.seed = 21;
    auto ds = gen_synthetic_domains(spec);

    auto c = small_config();
    c.steps = 1500;
    c.eval_every = 1500;
    auto [state, full] = train_loop(ds, c);
    auto src = baseline_source_only(ds, c);
    CHECK(std::abs(full.mean_target_accuracy - src.mean_target_accuracy) <= 0.03 + 1e-9);
    CHECK(src.mode == "source_only");
}
