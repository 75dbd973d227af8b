#include "mtda/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mtda {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct RawConfig {
    std::map<std::string, std::pair<std::string, int>> entries;  // key -> (value, line)
    std::string origin;

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
    }
};

RawConfig read_pairs(std::istream& in, const std::string& origin) {
    RawConfig raw;
    raw.origin = origin;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) raw.fail(lineno, "expected 'key = value', got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) raw.fail(lineno, "empty key");
        if (value.empty()) raw.fail(lineno, "key '" + key + "' has no value");
        if (raw.entries.count(key)) raw.fail(lineno, "duplicate key '" + key + "'");
        raw.entries[key] = {value, lineno};
    }
    return raw;
}

class ConfigReader {
  public:
    explicit ConfigReader(RawConfig raw) : raw_(std::move(raw)) {}

    bool has(const std::string& key) {
        return raw_.entries.count(key) != 0;
    }

    std::optional<std::string> take(const std::string& key) {
        auto it = raw_.entries.find(key);
        if (it == raw_.entries.end()) return std::nullopt;
        consumed_.insert(key);
        line_ = it->second.second;
        return it->second.first;
    }

    template <typename T>
    T value_or(const std::string& key, T fallback);

    std::string require(const std::string& key) {
        auto v = take(key);
        if (!v) throw ConfigError(raw_.origin + ": missing required key '" + key + "'");
        return *v;
    }

    [[noreturn]] void fail(const std::string& msg) const { raw_.fail(line_, msg); }

    void reject_unknown() const {
        for (const auto& [key, value] : raw_.entries) {
            if (!consumed_.count(key)) {
                raw_.fail(value.second, "unknown key '" + key + "'");
            }
        }
    }

  private:
    RawConfig raw_;
    std::set<std::string> consumed_;
    int line_ = 0;
};

template <>
double ConfigReader::value_or(const std::string& key, double fallback) {
    auto v = take(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const double d = std::stod(*v, &pos);
        if (pos != v->size()) fail("key '" + key + "': trailing characters in number '" + *v + "'");
        return d;
    } catch (const std::logic_error&) {
        fail("key '" + key + "': expected a number, got '" + *v + "'");
    }
}

template <>
std::size_t ConfigReader::value_or(const std::string& key, std::size_t fallback) {
    auto v = take(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(*v, &pos);
        if (pos != v->size() || n < 0) fail("key '" + key + "': expected a non-negative integer");
        return static_cast<std::size_t>(n);
    } catch (const std::logic_error&) {
        fail("key '" + key + "': expected an integer, got '" + *v + "'");
    }
}

template <>
std::string ConfigReader::value_or(const std::string& key, std::string fallback) {
    auto v = take(key);
    return v ? *v : fallback;
}

std::vector<std::size_t> parse_size_list(ConfigReader& r, const std::string& key,
                                         std::vector<std::size_t> fallback) {
    auto v = r.take(key);
    if (!v) return fallback;
    std::vector<std::size_t> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) r.fail("key '" + key + "': empty list entry");
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(item)));
        } catch (const std::logic_error&) {
            r.fail("key '" + key + "': expected integers, got '" + item + "'");
        }
    }
    if (out.empty()) r.fail("key '" + key + "': empty list");
    return out;
}

// "x0,y0 ; x1,y1 ; ..." -> class mean points
std::vector<std::array<double, 2>> parse_means(ConfigReader& r, const std::string& key) {
    auto v = r.take(key);
    if (!v) return {};
    std::vector<std::array<double, 2>> out;
    std::stringstream ss(*v);
    std::string point;
    while (std::getline(ss, point, ';')) {
        point = trim(point);
        if (point.empty()) continue;
        const auto comma = point.find(',');
        if (comma == std::string::npos) r.fail("key '" + key + "': point '" + point + "' needs 'x,y'");
        try {
            out.push_back({std::stod(trim(point.substr(0, comma))),
                           std::stod(trim(point.substr(comma + 1)))});
        } catch (const std::logic_error&) {
            r.fail("key '" + key + "': bad coordinates in '" + point + "'");
        }
    }
    return out;
}

}  // namespace

AppConfig parse_config(std::istream& in, const std::string& origin) {
    ConfigReader r(read_pairs(in, origin));
    AppConfig cfg;

    const std::string kind = r.value_or<std::string>("data.kind", "synthetic");
    if (kind == "synthetic") {
        cfg.data_kind = AppConfig::DataKind::synthetic;
    } else if (kind == "idx") {
        cfg.data_kind = AppConfig::DataKind::idx;
    } else {
        r.fail("data.kind must be 'synthetic' or 'idx', got '" + kind + "'");
    }

    cfg.synthetic.domains = r.value_or<std::size_t>("data.domains", 3);
    cfg.synthetic.classes = r.value_or<std::size_t>("data.classes", 3);
    cfg.synthetic.n_per_domain = r.value_or<std::size_t>("data.samples_per_domain", 600);
    cfg.synthetic.rotation_per_domain_deg = r.value_or<double>("data.rotation_deg", 25.0);
    cfg.synthetic.noise_sigma = r.value_or<double>("data.noise_sigma", 0.05);
    cfg.synthetic.seed = r.value_or<std::size_t>("data.seed", 0);
    cfg.synthetic.base_means = parse_means(r, "data.base_means");

    cfg.idx_downsample = r.value_or<std::size_t>("data.idx.downsample", 0);
    for (std::size_t d = 0;; ++d) {
        const std::string prefix = "data.idx.domain" + std::to_string(d);
        const bool has_images = r.has(prefix + ".images");
        const bool has_labels = r.has(prefix + ".labels");
        if (!has_images && !has_labels) break;
        if (!has_images || !has_labels)
            throw ConfigError(origin + ": " + prefix + " needs both .images and .labels");
        IdxSource src;
        src.images_path = *r.take(prefix + ".images");
        src.labels_path = *r.take(prefix + ".labels");
        cfg.idx_domains.push_back(std::move(src));
    }
    if (cfg.data_kind == AppConfig::DataKind::idx && cfg.idx_domains.size() < 2) {
        throw ConfigError(origin + ": idx data needs at least domain0 (source) and domain1");
    }

    cfg.feature_dim = r.value_or<std::size_t>("nets.feature_dim", 2);
    cfg.encoder_hidden = r.value_or<std::size_t>("nets.encoder_hidden", 128);
    cfg.private_encoder_hidden =
        r.value_or<std::size_t>("nets.private_encoder_hidden", cfg.encoder_hidden);
    cfg.decoder_hidden = r.value_or<std::size_t>("nets.decoder_hidden", 64);
    cfg.domain_hidden = parse_size_list(r, "nets.domain_hidden", {64, 64, 64});
    cfg.label_hidden = r.value_or<std::size_t>("nets.label_hidden", 64);

    cfg.train.hp.lambda_r = r.value_or<double>("hyper.lambda_r", 1.0);
    cfg.train.hp.lambda_c = r.value_or<double>("hyper.lambda_c", 0.01);
    cfg.train.hp.lambda_d = r.value_or<double>("hyper.lambda_d", 0.20);
    cfg.train.hp.eta = r.value_or<double>("hyper.eta", 2e-4);
    if (cfg.train.hp.lambda_r < 0 || cfg.train.hp.lambda_c < 0 || cfg.train.hp.lambda_d < 0)
        throw ConfigError(origin + ": lambda values must be non-negative");
    if (cfg.train.hp.eta < 0) throw ConfigError(origin + ": hyper.eta must be non-negative");

    const std::string opt = r.value_or<std::string>("optimizer.kind", "adam");
    if (opt == "adam") {
        cfg.train.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd") {
        cfg.train.optimizer = OptimizerKind::sgd;
    } else {
        r.fail("optimizer.kind must be 'adam' or 'sgd', got '" + opt + "'");
    }
    cfg.train.beta1 = r.value_or<double>("optimizer.beta1", 0.5);
    cfg.train.beta2 = r.value_or<double>("optimizer.beta2", 0.999);
    cfg.train.adam_eps = r.value_or<double>("optimizer.eps", 1e-8);

    const std::string mode = r.value_or<std::string>("train.mode", "full");
    try {
        cfg.train.mode = mode_from_tag(mode);
    } catch (const ConfigError&) {
        r.fail("train.mode '" + mode +
               "' is not one of full/combined/pairwise/woR/woE/woD/woP/source_only");
    }
    const std::string adv = r.value_or<std::string>("train.adversarial", "confusion");
    if (adv == "confusion") {
        cfg.train.adversarial = AdversarialForm::confusion;
    } else if (adv == "sign_flip") {
        cfg.train.adversarial = AdversarialForm::sign_flip;
    } else {
        r.fail("train.adversarial must be 'confusion' or 'sign_flip', got '" + adv + "'");
    }
    cfg.train.steps = r.value_or<std::size_t>("train.steps", 3000);
    cfg.train.batch_per_domain = r.value_or<std::size_t>("train.batch_per_domain", 16);
    cfg.train.eval_every = r.value_or<std::size_t>("train.eval_every", 250);
    cfg.train.checkpoint_every = r.value_or<std::size_t>("train.checkpoint_every", 0);
    cfg.train.seed = r.value_or<std::size_t>("seed", 0);

    cfg.out_dir = r.require("out_dir");

    r.reject_unknown();
    return cfg;
}

AppConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in, path);
}

NetConfigSet AppConfig::make_nets(std::size_t input_dim, std::size_t classes,
                                  std::size_t domains) const {
    NetConfigSet s;
    s.shared_encoder = {{input_dim, encoder_hidden, feature_dim}, OutputActivation::linear};
    s.private_encoder = {{input_dim, private_encoder_hidden, feature_dim}, OutputActivation::linear};
    s.decoder = {{2 * feature_dim, decoder_hidden, input_dim}, OutputActivation::tanh_squash};
    std::vector<std::size_t> dom = {feature_dim};
    dom.insert(dom.end(), domain_hidden.begin(), domain_hidden.end());
    dom.push_back(domains);
    s.domain_classifier = {dom, OutputActivation::softmax};
    s.label_classifier = {{feature_dim, label_hidden, classes}, OutputActivation::softmax};
    return s;
}

std::vector<DomainDataset> AppConfig::load_datasets() const {
    if (data_kind == DataKind::synthetic) {
        SyntheticSpec spec = synthetic;
        if (spec.seed == 0) spec.seed = train.seed * 1000 + 17;
        return gen_synthetic_domains(spec);
    }
    std::vector<DomainDataset> out;
    for (std::size_t d = 0; d < idx_domains.size(); ++d) {
        out.push_back(load_idx_files(idx_domains[d].images_path, idx_domains[d].labels_path,
                                     static_cast<int>(d), d == 0, idx_downsample));
    }
    return out;
}

TrainConfig AppConfig::finalize_train_config(const std::vector<DomainDataset>& datasets) const {
    if (datasets.empty()) throw ConfigError("no datasets configured");
    TrainConfig c = train;
    std::size_t classes = 0;
    for (const auto& d : datasets) {
        if (!d.has_labels()) continue;
        for (int v : d.evaluation_labels()) classes = std::max(classes, std::size_t(v) + 1);
    }
    if (data_kind == DataKind::synthetic) classes = synthetic.classes;
    if (classes < 2) throw ConfigError("could not infer at least 2 classes from the data");
    c.num_classes = classes;
    c.nets = make_nets(datasets.front().inputs().cols(), classes, datasets.size());
    return c;
}

}  // namespace mtda
