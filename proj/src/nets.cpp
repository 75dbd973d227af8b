#include "mtda/nets.hpp"

#include <cmath>
#include <random>

namespace mtda {

std::size_t NetConfig::input_width() const {
    if (layer_widths.empty()) throw ConfigError("network needs at least input and output widths");
    return layer_widths.front();
}

std::size_t NetConfig::output_width() const {
    if (layer_widths.size() < 2) throw ConfigError("network needs at least input and output widths");
    return layer_widths.back();
}

std::vector<Tensor> Mlp::tensors() const {
    std::vector<Tensor> out;
    out.reserve(layers.size() * 2);
    for (const auto& l : layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

NetConfigSet NetConfigSet::standard(std::size_t input_dim, std::size_t feature_dim,
                                    std::size_t classes, std::size_t domains,
                                    std::size_t hidden) {
    NetConfigSet s;
    s.shared_encoder = {{input_dim, hidden, feature_dim}, OutputActivation::linear};
    s.private_encoder = {{input_dim, hidden, feature_dim}, OutputActivation::linear};
    s.decoder = {{2 * feature_dim, hidden, input_dim}, OutputActivation::tanh_squash};
    s.domain_classifier = {{feature_dim, hidden, domains}, OutputActivation::softmax};
    s.label_classifier = {{feature_dim, hidden, classes}, OutputActivation::softmax};
    return s;
}

void NetConfigSet::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("network configuration: " + msg); };

    for (const auto* c : {&shared_encoder, &private_encoder, &decoder, &domain_classifier, &label_classifier}) {
        if (c->layer_widths.size() < 2) fail("every network needs at least [input, output] widths");
        for (std::size_t w : c->layer_widths)
            if (w == 0) fail("layer widths must be positive");
    }
    const std::size_t d_x = shared_encoder.input_width();
    const std::size_t d_s = shared_encoder.output_width();
    const std::size_t d_p = private_encoder.output_width();
    if (private_encoder.input_width() != d_x)
        fail("private encoder input " + std::to_string(private_encoder.input_width()) +
             " != shared encoder input " + std::to_string(d_x));
    // One domain classifier serves both feature kinds, so the widths must agree.
    if (d_s != d_p)
        fail("shared width " + std::to_string(d_s) + " != private width " + std::to_string(d_p));
    if (decoder.input_width() != d_s + d_p)
        fail("decoder input " + std::to_string(decoder.input_width()) + " != d_s + d_p = " +
             std::to_string(d_s + d_p));
    if (decoder.output_width() != d_x)
        fail("decoder output " + std::to_string(decoder.output_width()) + " != input dim " +
             std::to_string(d_x));
    if (domain_classifier.input_width() != d_s)
        fail("domain classifier input " + std::to_string(domain_classifier.input_width()) +
             " != feature width " + std::to_string(d_s));
    if (label_classifier.input_width() != d_s)
        fail("label classifier input " + std::to_string(label_classifier.input_width()) +
             " != shared width " + std::to_string(d_s));
    if (domain_classifier.output_width() < 2) fail("domain classifier needs at least 2 outputs");
    if (label_classifier.output_width() < 2) fail("label classifier needs at least 2 outputs");
    if (decoder.output_activation != OutputActivation::tanh_squash)
        fail("decoder output activation must be tanh");
}

std::vector<Tensor> ModelParams::all_tensors() const {
    std::vector<Tensor> out;
    for (const auto* g : {&shared_encoder, &private_encoder, &label_classifier, &decoder, &domain_classifier}) {
        auto t = g->tensors();
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

void ModelParams::zero_all_grads() const {
    for (auto& t : all_tensors()) const_cast<Tensor&>(t).zero_grad();
}

namespace {

Mlp init_mlp(const NetConfig& config, std::mt19937_64& eng) {
    Mlp net;
    net.config = config;
    for (std::size_t i = 0; i + 1 < config.layer_widths.size(); ++i) {
        const std::size_t fan_in = config.layer_widths[i];
        const std::size_t fan_out = config.layer_widths[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> w(fan_in * fan_out);
        for (auto& v : w) v = dist(eng);
        LayerParams layer;
        layer.weight = Tensor::from_values({fan_in, fan_out}, std::move(w), true);
        layer.bias = Tensor::zeros({1, fan_out}, true);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Tensor mlp_forward(Tape& tape, const Mlp& net, const Tensor& x) {
    if (x.shape().size() != 2 || x.shape()[1] != net.config.input_width()) {
        throw DimensionError("network input " + shape_str(x.shape()) + " does not match expected width " +
                             std::to_string(net.config.input_width()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        h = tape.add_row_bias(tape.matmul(h, net.layers[i].weight), net.layers[i].bias);
        const bool last = (i + 1 == net.layers.size());
        if (!last) {
            h = tape.relu(h);
        } else if (net.config.output_activation == OutputActivation::tanh_squash) {
            h = tape.tanh(h);
        }
        // linear and softmax outputs leave the logits as-is here
    }
    return h;
}

Tensor softmax_probs(Tape& tape, const Tensor& logits) {
    return tape.exp(tape.log_softmax(logits));
}

}  // namespace

ModelParams init_params(const NetConfigSet& configs, std::uint64_t seed) {
    configs.validate();
    std::mt19937_64 eng(seed);
    ModelParams p;
    // fixed draw order keeps the result a pure function of the seed
    p.shared_encoder = init_mlp(configs.shared_encoder, eng);
    p.private_encoder = init_mlp(configs.private_encoder, eng);
    p.label_classifier = init_mlp(configs.label_classifier, eng);
    p.decoder = init_mlp(configs.decoder, eng);
    p.domain_classifier = init_mlp(configs.domain_classifier, eng);
    return p;
}

Tensor encode_shared(Tape& tape, const ModelParams& params, const Tensor& x) {
    return mlp_forward(tape, params.shared_encoder, x);
}

Tensor encode_private(Tape& tape, const ModelParams& params, const Tensor& x) {
    return mlp_forward(tape, params.private_encoder, x);
}

Tensor decode(Tape& tape, const ModelParams& params, const Tensor& z_shared, const Tensor& z_private) {
    return mlp_forward(tape, params.decoder, tape.concat_cols(z_shared, z_private));
}

Tensor domain_logits(Tape& tape, const ModelParams& params, const Tensor& z) {
    return mlp_forward(tape, params.domain_classifier, z);
}

Tensor label_logits(Tape& tape, const ModelParams& params, const Tensor& z_shared) {
    return mlp_forward(tape, params.label_classifier, z_shared);
}

Tensor encode_shared(const ModelParams& params, const Tensor& x) {
    Tape t;
    return encode_shared(t, params, x);
}

Tensor encode_private(const ModelParams& params, const Tensor& x) {
    Tape t;
    return encode_private(t, params, x);
}

Tensor decode(const ModelParams& params, const Tensor& z_shared, const Tensor& z_private) {
    Tape t;
    return decode(t, params, z_shared, z_private);
}

Tensor classify_domain(const ModelParams& params, const Tensor& z) {
    Tape t;
    return softmax_probs(t, domain_logits(t, params, z));
}

Tensor classify_label(const ModelParams& params, const Tensor& z_shared) {
    Tape t;
    return softmax_probs(t, label_logits(t, params, z_shared));
}

}  // namespace mtda
