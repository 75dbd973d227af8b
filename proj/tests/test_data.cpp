#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "mtda/data.hpp"
#include "test_util.hpp"

using namespace mtda;

namespace {

std::array<double, 2> class_mean(const DomainDataset& d, int cls) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    auto labels = d.evaluation_labels();
    for (std::size_t r = 0; r < d.size(); ++r) {
        if (labels[r] != cls) continue;
        sx += d.inputs()(r, 0);
        sy += d.inputs()(r, 1);
        ++n;
    }
    return {sx / double(n), sy / double(n)};
}

void append_be32(std::string& s, std::uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
}

std::string idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                       const std::vector<unsigned char>& pixels, std::uint32_t magic = 0x803) {
    std::string s;
    append_be32(s, magic);
    append_be32(s, n);
    append_be32(s, h);
    append_be32(s, w);
    s.append(pixels.begin(), pixels.end());
    return s;
}

std::string idx_labels(std::uint32_t n, const std::vector<unsigned char>& labels,
                       std::uint32_t magic = 0x801) {
    std::string s;
    append_be32(s, magic);
    append_be32(s, n);
    s.append(labels.begin(), labels.end());
    return s;
}

}  // namespace

TEST_CASE("zero rotation leaves domains identically distributed") {
    SyntheticSpec spec;
    spec.rotation_per_domain_deg = 0.0;
    spec.seed = 5;
    auto ds = gen_synthetic_domains(spec);
    REQUIRE(ds.size() == 3);
    for (int k = 0; k < 3; ++k) {
        auto m0 = class_mean(ds[0], k);
        auto m1 = class_mean(ds[2], k);
        // per-class n = 200; conservative scaled-sigma bound
        const double se = spec.noise_sigma * std::sqrt(2.0 / 200.0);
        CHECK(std::abs(m0[0] - m1[0]) < 3.0 * se);
        CHECK(std::abs(m0[1] - m1[1]) < 3.0 * se);
    }
}

TEST_CASE("rotation by 90 degrees moves x-axis means onto the y-axis") {
    SyntheticSpec spec;
    spec.domains = 2;
    spec.classes = 2;
    spec.n_per_domain = 400;
    spec.base_means = {{0.6, 0.0}, {1.0, 0.0}};
    spec.rotation_per_domain_deg = 90.0;
    spec.noise_sigma = 0.05;
    spec.seed = 6;
    auto ds = gen_synthetic_domains(spec);
    for (int k = 0; k < 2; ++k) {
        auto m = class_mean(ds[1], k);
        CHECK(std::abs(m[0]) < 0.02);  // on the y-axis
        CHECK(std::abs(m[1]) > 0.3);
    }
}

TEST_CASE("class-conditional means land on the rotated grid up to the pooled rescale") {
    SyntheticSpec spec;
    spec.seed = 7;
    auto ds = gen_synthetic_domains(spec);
    auto means = SyntheticSpec::default_means(3);
    const double theta = spec.rotation_per_domain_deg * M_PI / 180.0;

    // one unknown isotropic scale; fit it, then check every residual
    double num = 0.0, den = 0.0;
    std::vector<std::array<double, 2>> expected, observed;
    for (std::size_t j = 0; j < 3; ++j) {
        const double c = std::cos(theta * double(j)), s = std::sin(theta * double(j));
        for (int k = 0; k < 3; ++k) {
            std::array<double, 2> e = {c * means[k][0] - s * means[k][1],
                                       s * means[k][0] + c * means[k][1]};
            auto o = class_mean(ds[j], k);
            expected.push_back(e);
            observed.push_back(o);
            num += e[0] * o[0] + e[1] * o[1];
            den += e[0] * e[0] + e[1] * e[1];
        }
    }
    const double inv_scale = num / den;  // = 1 / max_abs
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const double sigma_scaled = spec.noise_sigma * inv_scale;
        const double bound = 4.0 * sigma_scaled / std::sqrt(200.0);
        CHECK(std::abs(observed[i][0] - expected[i][0] * inv_scale) < bound);
        CHECK(std::abs(observed[i][1] - expected[i][1] * inv_scale) < bound);
    }
}

TEST_CASE("rotation 25 degrees separates domains by more than 5 standard errors") {
    SyntheticSpec spec;
    spec.seed = 8;
    auto ds = gen_synthetic_domains(spec);
    const double se = spec.noise_sigma * std::sqrt(2.0 / 200.0);
    for (int k = 0; k < 3; ++k) {
        auto a = class_mean(ds[0], k);
        auto b = class_mean(ds[1], k);
        const double disp = std::hypot(a[0] - b[0], a[1] - b[1]);
        CHECK(disp > 5.0 * se);
    }
}

TEST_CASE("inputs stay inside [-1, 1] and labels are quarantined") {
    SyntheticSpec spec;
    spec.seed = 9;
    auto ds = gen_synthetic_domains(spec);
    for (const auto& d : ds)
        for (double v : d.inputs().values()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    CHECK(ds[0].is_source());
    CHECK(ds[0].training_labels().size() == 600);
    CHECK_THROWS_AS(ds[1].training_labels(), ContractError);
    CHECK(ds[1].evaluation_labels().size() == 600);
}

TEST_CASE("generator is deterministic in the seed") {
    SyntheticSpec spec;
    spec.seed = 10;
    auto a = gen_synthetic_domains(spec);
    auto b = gen_synthetic_domains(spec);
    for (std::size_t j = 0; j < a.size(); ++j) {
        auto va = a[j].inputs().values();
        auto vb = b[j].inputs().values();
        CHECK(std::equal(va.begin(), va.end(), vb.begin()));
    }
}

TEST_CASE("onehot encodes and round-trips") {
    std::vector<int> idx = {0};
    Tensor t = onehot(idx, 3);
    CHECK(t(0, 0) == 1.0);
    CHECK(t(0, 1) == 0.0);
    CHECK(t(0, 2) == 0.0);

    auto eng = testutil::rng(11);
    std::uniform_int_distribution<int> d(0, 6);
    std::vector<int> v(40);
    for (auto& x : v) x = d(eng);
    Tensor m = onehot(v, 7);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        std::size_t argmax = 0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            sum += m(r, c);
            if (m(r, c) > m(r, argmax)) argmax = c;
        }
        CHECK(sum == 1.0);
        CHECK(int(argmax) == v[r]);
    }

    std::vector<int> bad = {3};
    CHECK_THROWS_AS(onehot(bad, 3), ContractError);
}

TEST_CASE("batch stream shape contract: M=3, b=16 gives n=48, n_s=16") {
    SyntheticSpec spec;
    spec.seed = 12;
    spec.n_per_domain = 64;
    auto ds = gen_synthetic_domains(spec);
    BatchStream stream(ds, 16, 3, {0, 1, 2}, 3, 99);
    Batch b = stream.next();
    CHECK(b.size() == 48);
    CHECK(b.n_source == 16);
    CHECK(b.d_lab.cols() == 3);
    b.validate();
    // first 16 rows are source rows with class labels
    for (std::size_t r = 0; r < 16; ++r) CHECK(b.d_lab(r, 0) == 1.0);
}

TEST_CASE("each epoch consumes every source row exactly once") {
    // one-dimensional inputs encode the row index, so batches identify rows
    std::vector<double> vals(48);
    std::vector<int> labels(48);
    for (int i = 0; i < 48; ++i) {
        vals[i] = double(i) / 48.0;
        labels[i] = i % 3;
    }
    std::vector<DomainDataset> ds;
    ds.emplace_back(0, Tensor::from_values({48, 1}, vals), labels, true);
    ds.emplace_back(1, Tensor::from_values({48, 1}, vals), labels, false);

    BatchStream stream(ds, 16, 3, {0, 1}, 2, 13);
    std::map<double, int> seen;
    for (int epoch = 0; epoch < 2; ++epoch) {
        seen.clear();
        for (int step = 0; step < 3; ++step) {
            Batch b = stream.next();
            for (std::size_t r = 0; r < 16; ++r) seen[b.x(r, 0)]++;
        }
        CHECK(seen.size() == 48);
        for (auto& [_, count] : seen) CHECK(count == 1);
    }
}

TEST_CASE("batch stream is deterministic and rejects oversized batches") {
    SyntheticSpec spec;
    spec.seed = 14;
    spec.n_per_domain = 32;
    auto ds = gen_synthetic_domains(spec);

    BatchStream s1(ds, 8, 3, {0, 1, 2}, 3, 7);
    BatchStream s2(ds, 8, 3, {0, 1, 2}, 3, 7);
    for (int i = 0; i < 10; ++i) {
        Batch a = s1.next();
        Batch b = s2.next();
        auto va = a.x.values();
        auto vb = b.x.values();
        CHECK(std::equal(va.begin(), va.end(), vb.begin()));
    }

    CHECK_THROWS_AS(BatchStream(ds, 33, 3, {0, 1, 2}, 3, 7), ConfigError);
}

TEST_CASE("idx loader maps the crafted 2x2 image exactly") {
    std::istringstream img(idx_images(1, 2, 2, {0, 255, 128, 64}));
    std::istringstream lab(idx_labels(1, {2}));
    auto d = load_idx(img, lab, 0, true);
    CHECK(d.size() == 1);
    CHECK(d.inputs().cols() == 4);
    CHECK(d.inputs()(0, 0) == -1.0);
    CHECK(d.inputs()(0, 1) == 1.0);
    CHECK(d.inputs()(0, 2) == 2.0 * 128.0 / 255.0 - 1.0);  // 0.00392157...
    CHECK(d.inputs()(0, 3) == 2.0 * 64.0 / 255.0 - 1.0);   // -0.49803922...
    CHECK(d.inputs()(0, 2) == doctest::Approx(0.00392157).epsilon(1e-6));
    CHECK(d.inputs()(0, 3) == doctest::Approx(-0.49803922).epsilon(1e-6));
    CHECK(d.evaluation_labels()[0] == 2);
}

TEST_CASE("idx loader rejects the three malformed stream classes") {
    // wrong magic
    {
        std::istringstream img(idx_images(1, 2, 2, {0, 0, 0, 0}, 0x804));
        std::istringstream lab(idx_labels(1, {0}));
        CHECK_THROWS_WITH_AS(load_idx(img, lab, 0, true), doctest::Contains("magic"), FormatError);
    }
    // truncated pixel data
    {
        std::istringstream img(idx_images(2, 2, 2, {0, 0, 0, 0, 9}));
        std::istringstream lab(idx_labels(2, {0, 1}));
        CHECK_THROWS_WITH_AS(load_idx(img, lab, 0, true), doctest::Contains("offset"), FormatError);
    }
    // count mismatch
    {
        std::istringstream img(idx_images(2, 2, 2, std::vector<unsigned char>(8, 0)));
        std::istringstream lab(idx_labels(3, {0, 1, 2}));
        CHECK_THROWS_AS(load_idx(img, lab, 0, true), FormatError);
    }
}

TEST_CASE("idx block-average downsampling") {
    // 4x4 image with constant 2x2 blocks 0, 64, 128, 255
    std::vector<unsigned char> pix = {0,   0,   64,  64,  0,   0,   64,  64,
                                      128, 128, 255, 255, 128, 128, 255, 255};
    std::istringstream img(idx_images(1, 4, 4, pix));
    std::istringstream lab(idx_labels(1, {0}));
    auto d = load_idx(img, lab, 1, false, 2);
    CHECK(d.inputs().cols() == 4);
    CHECK(d.inputs()(0, 0) == -1.0);
    CHECK(d.inputs()(0, 1) == 2.0 * 64.0 / 255.0 - 1.0);
    CHECK(d.inputs()(0, 2) == 2.0 * 128.0 / 255.0 - 1.0);
    CHECK(d.inputs()(0, 3) == 1.0);
}
