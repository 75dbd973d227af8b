#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtda/autodiff.hpp"

namespace mtda {

enum class OutputActivation { linear, tanh_squash, softmax };

// Fully-connected network description: input width, hidden widths, output
// width. Hidden layers use ReLU; the output activation depends on the role.
struct NetConfig {
    std::vector<std::size_t> layer_widths;
    OutputActivation output_activation = OutputActivation::linear;

    std::size_t input_width() const;
    std::size_t output_width() const;
};

struct LayerParams {
    Tensor weight;  // [in x out]
    Tensor bias;    // [1 x out]
};

struct Mlp {
    NetConfig config;
    std::vector<LayerParams> layers;

    std::vector<Tensor> tensors() const;
};

// Configurations of the five networks: shared encoder, private encoder,
// decoder, domain classifier, label classifier.
struct NetConfigSet {
    NetConfig shared_encoder;    // d_x -> d_s, linear output
    NetConfig private_encoder;   // d_x -> d_p, linear output
    NetConfig decoder;           // (d_s + d_p) -> d_x, tanh output
    NetConfig domain_classifier; // d_z -> M, softmax output
    NetConfig label_classifier;  // d_s -> K, softmax output

    // Standard layout: one hidden layer of `hidden` units in each network.
    static NetConfigSet standard(std::size_t input_dim, std::size_t feature_dim,
                                 std::size_t classes, std::size_t domains,
                                 std::size_t hidden = 64);
    void validate() const;
};

// The five trainable parameter groups.
struct ModelParams {
    Mlp shared_encoder;
    Mlp private_encoder;
    Mlp label_classifier;
    Mlp decoder;
    Mlp domain_classifier;

    std::size_t input_dim() const { return shared_encoder.config.input_width(); }
    std::size_t shared_dim() const { return shared_encoder.config.output_width(); }
    std::size_t private_dim() const { return private_encoder.config.output_width(); }
    std::size_t num_classes() const { return label_classifier.config.output_width(); }
    std::size_t num_domains() const { return domain_classifier.config.output_width(); }

    std::vector<Tensor> all_tensors() const;
    void zero_all_grads() const;
};

// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero; deterministic
// in the seed. Throws ConfigError when the five configs do not line up.
ModelParams init_params(const NetConfigSet& configs, std::uint64_t seed);

// Forward passes on a tape (gradient-recording). The *_logits variants stop
// before the softmax so losses can go through log_softmax directly.
Tensor encode_shared(Tape& tape, const ModelParams& params, const Tensor& x);
Tensor encode_private(Tape& tape, const ModelParams& params, const Tensor& x);
Tensor decode(Tape& tape, const ModelParams& params, const Tensor& z_shared, const Tensor& z_private);
Tensor domain_logits(Tape& tape, const ModelParams& params, const Tensor& z);
Tensor label_logits(Tape& tape, const ModelParams& params, const Tensor& z_shared);

// Plain-value forwards (no gradient bookkeeping); classifiers return
// probability rows.
Tensor encode_shared(const ModelParams& params, const Tensor& x);
Tensor encode_private(const ModelParams& params, const Tensor& x);
Tensor decode(const ModelParams& params, const Tensor& z_shared, const Tensor& z_private);
Tensor classify_domain(const ModelParams& params, const Tensor& z);
Tensor classify_label(const ModelParams& params, const Tensor& z_shared);

}  // namespace mtda
