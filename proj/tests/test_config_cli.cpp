#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtda/config.hpp"

using namespace mtda;
namespace fs = std::filesystem;

namespace {

AppConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

#ifdef MTDA_BIN
const char* kBin = MTDA_BIN;

int run_cli(const std::string& args) {
    const std::string cmd = std::string(kBin) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string minimal_config(const std::string& out_dir, int steps = 25) {
    std::ostringstream os;
    os << "data.samples_per_domain = 48\n"
       << "train.steps = " << steps << "\n"
       << "train.batch_per_domain = 8\n"
       << "train.eval_every = 10\n"
       << "nets.encoder_hidden = 16\n"
       << "nets.decoder_hidden = 16\n"
       << "nets.domain_hidden = 16,16\n"
       << "nets.label_hidden = 16\n"
       << "seed = 3\n"
       << "out_dir = " << out_dir << "\n";
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}
#endif

}  // namespace

TEST_CASE("minimal config parses with defaults") {
    auto cfg = parse_text("out_dir = runs/x\n");
    CHECK(cfg.data_kind == AppConfig::DataKind::synthetic);
    CHECK(cfg.synthetic.domains == 3);
    CHECK(cfg.synthetic.classes == 3);
    CHECK(cfg.synthetic.n_per_domain == 600);
    CHECK(cfg.train.hp.lambda_r == 1.0);
    CHECK(cfg.train.hp.lambda_c == 0.01);
    CHECK(cfg.train.hp.lambda_d == 0.20);
    CHECK(cfg.train.hp.eta == 2e-4);
    CHECK(cfg.train.optimizer == OptimizerKind::adam);
    CHECK(cfg.train.beta1 == 0.5);
    CHECK(cfg.train.beta2 == 0.999);
    CHECK(cfg.train.steps == 3000);
    CHECK(cfg.train.batch_per_domain == 16);
    CHECK(cfg.train.mode == RunMode::full);
    CHECK(cfg.out_dir == "runs/x");
}

TEST_CASE("config errors are line-precise and name the offender") {
    CHECK_THROWS_WITH_AS(parse_text("out_dir = x\nnope.key = 1\n"),
                         doctest::Contains("unknown key 'nope.key'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("out_dir = x\nnope.key = 1\n"), doctest::Contains(":2:"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("seed = 1\nseed = 2\nout_dir = x\n"),
                         doctest::Contains("duplicate key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("hyper.eta = abc\nout_dir = x\n"),
                         doctest::Contains("expected a number"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("train.steps = 10\n"), doctest::Contains("out_dir"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("garbage line\nout_dir = x\n"),
                         doctest::Contains("key = value"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("train.mode = bogus\nout_dir = x\n"),
                         doctest::Contains("train.mode"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_text("hyper.lambda_d = -1\nout_dir = x\n"),
                         doctest::Contains("non-negative"), ConfigError);
}

TEST_CASE("mean lists and hidden lists parse") {
    auto cfg = parse_text(
        "data.base_means = 0.6,0 ; 0.78,0.17 ; 0.98,-0.21\n"
        "nets.domain_hidden = 96,96,96\n"
        "out_dir = x\n");
    REQUIRE(cfg.synthetic.base_means.size() == 3);
    CHECK(cfg.synthetic.base_means[1][0] == 0.78);
    CHECK(cfg.synthetic.base_means[2][1] == -0.21);
    CHECK(cfg.domain_hidden == std::vector<std::size_t>{96, 96, 96});

    auto nets = cfg.make_nets(2, 3, 3);
    CHECK(nets.domain_classifier.layer_widths ==
          std::vector<std::size_t>{cfg.feature_dim, 96, 96, 96, 3});
}

TEST_CASE("idx config needs image and label pairs") {
    CHECK_THROWS_WITH_AS(parse_text("data.kind = idx\nout_dir = x\n"), doctest::Contains("domain0"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_text("data.kind = idx\ndata.idx.domain0.images = a\nout_dir = x\n"),
        doctest::Contains("both"), ConfigError);
}

#ifdef MTDA_BIN

TEST_CASE("cli: happy path writes checkpoint and metrics; rerun is byte-identical") {
    const fs::path dir = fs::path("cli_tmp_train");
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << minimal_config((dir / "out").string());
    }
    CHECK(run_cli("train --config " + (dir / "run.cfg").string()) == 0);
    CHECK(fs::exists(dir / "out" / "checkpoints_full" / "checkpoint.bin"));
    CHECK(fs::exists(dir / "out" / "metrics.jsonl"));
    CHECK(fs::exists(dir / "out" / "summary.txt"));

    const std::string first = slurp(dir / "out" / "metrics.jsonl");
    fs::remove_all(dir / "out");
    CHECK(run_cli("train --config " + (dir / "run.cfg").string()) == 0);
    CHECK(slurp(dir / "out" / "metrics.jsonl") == first);
    CHECK(!first.empty());

    fs::remove_all(dir);
}

TEST_CASE("cli: config errors exit 2, corrupt checkpoints exit 4") {
    const fs::path dir = fs::path("cli_tmp_err");
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "bogus.key = 1\nout_dir = " << (dir / "out").string() << "\n";
    }
    CHECK(run_cli("train --config " + (dir / "bad.cfg").string()) == 2);
    CHECK(run_cli("train --config " + (dir / "missing.cfg").string()) == 2);
    CHECK(run_cli("train") == 2);  // missing required --config

    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << minimal_config((dir / "out").string());
        std::ofstream bad(dir / "corrupt.bin", std::ios::binary);
        bad << "NOTACKPT garbage";
    }
    CHECK(run_cli("export --config " + (dir / "run.cfg").string() + " --checkpoint " +
                  (dir / "corrupt.bin").string()) == 4);

    fs::remove_all(dir);
}

TEST_CASE("cli: export round-trips through eval and produces identical csv on rerun") {
    const fs::path dir = fs::path("cli_tmp_export");
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << minimal_config((dir / "out").string(), 20);
    }
    REQUIRE(run_cli("train --config " + (dir / "run.cfg").string()) == 0);
    const std::string ckpt = (dir / "out" / "checkpoints_full" / "checkpoint.bin").string();
    CHECK(run_cli("eval --config " + (dir / "run.cfg").string() + " --checkpoint " + ckpt) == 0);
    CHECK(run_cli("export --config " + (dir / "run.cfg").string() + " --checkpoint " + ckpt +
                  " --out-file " + (dir / "f1.csv").string()) == 0);
    CHECK(run_cli("export --config " + (dir / "run.cfg").string() + " --checkpoint " + ckpt +
                  " --out-file " + (dir / "f2.csv").string()) == 0);
    CHECK(slurp(dir / "f1.csv") == slurp(dir / "f2.csv"));
    CHECK(!slurp(dir / "f1.csv").empty());

    fs::remove_all(dir);
}

#endif
