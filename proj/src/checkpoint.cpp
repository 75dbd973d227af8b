#include "mtda/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mtda {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'D', 'A', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

std::uint64_t read_u64(std::istream& in, const char* what) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& in, const char* what) {
    const std::uint64_t bits = read_u64(in, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_group(std::ostream& out, const Mlp& g) {
    write_u64(out, g.config.layer_widths.size());
    for (std::size_t w : g.config.layer_widths) write_u64(out, w);
    write_u64(out, static_cast<std::uint64_t>(g.config.output_activation));
    for (const auto& layer : g.layers) {
        for (double v : layer.weight.values()) write_f64(out, v);
        for (double v : layer.bias.values()) write_f64(out, v);
    }
}

NetConfig read_group_config(std::istream& in) {
    NetConfig c;
    const std::uint64_t n = read_u64(in, "layer widths");
    if (n < 2 || n > 64) throw FormatError("checkpoint lists an implausible layer count");
    for (std::uint64_t i = 0; i < n; ++i) c.layer_widths.push_back(read_u64(in, "layer width"));
    const std::uint64_t act = read_u64(in, "output activation");
    if (act > 2) throw FormatError("checkpoint has an unknown output activation");
    c.output_activation = static_cast<OutputActivation>(act);
    return c;
}

Mlp read_group(std::istream& in) {
    Mlp g;
    g.config = read_group_config(in);
    const auto& w = g.config.layer_widths;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        LayerParams layer;
        layer.weight = Tensor::zeros({w[i], w[i + 1]}, true);
        layer.bias = Tensor::zeros({1, w[i + 1]}, true);
        for (auto& v : layer.weight.values_mut()) v = read_f64(in, "weight");
        for (auto& v : layer.bias.values_mut()) v = read_f64(in, "bias");
        g.layers.push_back(std::move(layer));
    }
    return g;
}

void write_adam(std::ostream& out, const AdamState& s) {
    write_u64(out, s.t);
    write_f64(out, s.beta1);
    write_f64(out, s.beta2);
    write_f64(out, s.eps);
    write_u64(out, s.m.size());
    for (std::size_t k = 0; k < s.m.size(); ++k) {
        write_u64(out, s.m[k].size());
        for (double v : s.m[k]) write_f64(out, v);
        for (double v : s.v[k]) write_f64(out, v);
    }
}

AdamState read_adam(std::istream& in) {
    AdamState s;
    s.t = read_u64(in, "optimizer step");
    s.beta1 = read_f64(in, "beta1");
    s.beta2 = read_f64(in, "beta2");
    s.eps = read_f64(in, "eps");
    const std::uint64_t groups = read_u64(in, "moment count");
    if (groups > 1024) throw FormatError("checkpoint lists an implausible moment count");
    for (std::uint64_t k = 0; k < groups; ++k) {
        const std::uint64_t n = read_u64(in, "moment size");
        std::vector<double> m(n), v(n);
        for (auto& x : m) x = read_f64(in, "first moment");
        for (auto& x : v) x = read_f64(in, "second moment");
        s.m.push_back(std::move(m));
        s.v.push_back(std::move(v));
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, OptimizerKind optimizer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof kMagic);
    write_u64(out, state.step);
    write_u64(out, optimizer == OptimizerKind::adam ? 1 : 0);
    for (const Mlp* g : {&state.params.shared_encoder, &state.params.private_encoder,
                         &state.params.label_classifier, &state.params.decoder,
                         &state.params.domain_classifier}) {
        write_group(out, *g);
    }
    for (const AdamState* s : {&state.opt_shared, &state.opt_private, &state.opt_label,
                               &state.opt_decoder, &state.opt_domain}) {
        write_adam(out, *s);
    }
    if (!out) throw ConfigError("failed while writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError("checkpoint " + path + " has a bad magic header");
    }

    LoadedCheckpoint loaded;
    loaded.state.step = read_u64(in, "step");
    loaded.optimizer = read_u64(in, "optimizer") == 1 ? OptimizerKind::adam : OptimizerKind::sgd;

    // group order mirrors save_checkpoint
    loaded.state.params.shared_encoder = read_group(in);
    loaded.state.params.private_encoder = read_group(in);
    loaded.state.params.label_classifier = read_group(in);
    loaded.state.params.decoder = read_group(in);
    loaded.state.params.domain_classifier = read_group(in);

    loaded.state.opt_shared = read_adam(in);
    loaded.state.opt_private = read_adam(in);
    loaded.state.opt_label = read_adam(in);
    loaded.state.opt_decoder = read_adam(in);
    loaded.state.opt_domain = read_adam(in);

    // sanity: moments must mirror their parameter shapes
    const Mlp* mlps[5] = {&loaded.state.params.shared_encoder, &loaded.state.params.private_encoder,
                          &loaded.state.params.label_classifier, &loaded.state.params.decoder,
                          &loaded.state.params.domain_classifier};
    const AdamState* states[5] = {&loaded.state.opt_shared, &loaded.state.opt_private,
                                  &loaded.state.opt_label, &loaded.state.opt_decoder,
                                  &loaded.state.opt_domain};
    for (int g = 0; g < 5; ++g) {
        auto tensors = mlps[g]->tensors();
        if (states[g]->m.size() != tensors.size())
            throw FormatError("checkpoint optimizer state does not match its parameter group");
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            if (states[g]->m[k].size() != tensors[k].size())
                throw FormatError("checkpoint optimizer state does not match its parameter group");
        }
    }
    return loaded;
}

}  // namespace mtda
