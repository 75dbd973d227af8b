#include "mtda/losses.hpp"

#include <cmath>

namespace mtda {

void Batch::validate() const {
    const std::size_t n = x.rows();
    if (n == 0) throw ContractError("batch is empty");
    if (n_source > n) throw ContractError("batch has more source rows than rows");
    if (d_lab.rows() != n) {
        throw DimensionError("domain labels " + shape_str(d_lab.shape()) + " do not cover batch of " +
                             std::to_string(n));
    }
    auto check_onehot = [](const Tensor& t, const char* what) {
        for (std::size_t r = 0; r < t.rows(); ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < t.cols(); ++c) {
                const double v = t(r, c);
                if (v != 0.0 && v != 1.0)
                    throw ContractError(std::string(what) + " row " + std::to_string(r) + " is not one-hot");
                sum += v;
            }
            if (sum != 1.0)
                throw ContractError(std::string(what) + " row " + std::to_string(r) + " does not sum to 1");
        }
    };
    check_onehot(d_lab, "domain label");
    if (n_source > 0) {
        if (y.rows() != n_source)
            throw DimensionError("class labels cover " + std::to_string(y.rows()) + " rows, expected " +
                                 std::to_string(n_source));
        check_onehot(y, "class label");
    }
}

namespace {

constexpr double kLogFloor = 1e-12;

struct ForwardPass {
    Tensor z_s;
    Tensor z_p;  // zeros when the private path is disabled
    Tensor xhat;
};

ForwardPass reconstruct(Tape& tape, const ModelParams& params, const Batch& batch,
                        const LossOptions& opts) {
    ForwardPass f;
    f.z_s = encode_shared(tape, params, batch.x);
    f.z_p = opts.private_path ? encode_private(tape, params, batch.x)
                              : Tensor::zeros({batch.size(), params.private_dim()});
    f.xhat = decode(tape, params, f.z_s, f.z_p);
    return f;
}

// -(1/n) sum over rows of labels . log_probs, as a tape node
Tensor nll(Tape& tape, const Tensor& onehot, const Tensor& log_probs, std::size_t n) {
    Tensor picked = tape.mul(onehot, log_probs);
    return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(n));
}

Tensor entropy_node(Tape& tape, const Tensor& probs) {
    Tensor plogp = tape.mul(probs, tape.log_clamped(probs, kLogFloor));
    return tape.scale(tape.sum(plogp), -1.0 / static_cast<double>(probs.rows()));
}

Tensor balance_node(Tape& tape, const Tensor& probs) {
    const std::size_t n = probs.rows();
    Tensor marginal = tape.mean_rows(probs);
    Tensor log_marginal = tape.log_clamped(marginal, kLogFloor);
    // tile the row vector over the batch through a constant ones column
    Tensor ones = Tensor::full({n, 1}, 1.0);
    Tensor tiled = tape.matmul(ones, log_marginal);
    return tape.scale(tape.sum(tape.mul(probs, tiled)), 1.0 / static_cast<double>(n));
}

// entropy + balance regularizer over the target rows of the label
// classifier output; null when there are no target rows
Tensor target_regularizer(Tape& tape, const Tensor& label_log_probs, const Batch& batch) {
    const std::size_t n = batch.size();
    Tensor target_probs = tape.exp(tape.slice_rows(label_log_probs, batch.n_source, n));
    return tape.add(entropy_node(tape, target_probs), balance_node(tape, target_probs));
}

}  // namespace

Tensor build_decoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                          const HyperParams& hp, const LossOptions& opts) {
    batch.validate();
    auto f = reconstruct(tape, params, batch, opts);
    return tape.scale(tape.l1_distance(batch.x, f.xhat), hp.lambda_r);
}

Tensor build_domain_classifier_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                    const HyperParams& hp, const LossOptions& opts) {
    batch.validate();
    const std::size_t n = batch.size();
    Tensor z_s = encode_shared(tape, params, batch.x);
    Tensor loss = nll(tape, batch.d_lab, tape.log_softmax(domain_logits(tape, params, z_s)), n);
    if (opts.private_path) {
        Tensor z_p = encode_private(tape, params, batch.x);
        Tensor priv = nll(tape, batch.d_lab, tape.log_softmax(domain_logits(tape, params, z_p)), n);
        loss = tape.add(loss, priv);
    }
    return tape.scale(loss, hp.lambda_d);
}

Tensor build_label_classifier_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                   const HyperParams& hp, const LossOptions& opts) {
    batch.validate();
    if (batch.n_source == 0) throw ContractError("label classifier loss needs source rows");
    const std::size_t n = batch.size();
    Tensor z_s = encode_shared(tape, params, batch.x);
    Tensor log_probs = tape.log_softmax(label_logits(tape, params, z_s));
    Tensor loss = nll(tape, batch.y, tape.slice_rows(log_probs, 0, batch.n_source), n);
    if (opts.entropy_terms && batch.n_source < n) {
        loss = tape.add(loss, tape.scale(target_regularizer(tape, log_probs, batch), hp.lambda_c));
    }
    return loss;
}

Tensor build_private_encoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                  const HyperParams& hp, const LossOptions& opts) {
    batch.validate();
    if (!opts.private_path) throw ContractError("private encoder loss is disabled in this mode");
    const std::size_t n = batch.size();
    auto f = reconstruct(tape, params, batch, opts);
    Tensor loss = tape.scale(tape.l1_distance(batch.x, f.xhat), hp.lambda_r);
    // domain term carries the log, mirroring the domain classifier loss
    Tensor dom = nll(tape, batch.d_lab, tape.log_softmax(domain_logits(tape, params, f.z_p)), n);
    return tape.add(loss, tape.scale(dom, hp.lambda_d));
}

Tensor build_shared_encoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                 const HyperParams& hp, const LossOptions& opts) {
    batch.validate();
    if (batch.n_source == 0) throw ContractError("shared encoder loss needs source rows");
    const std::size_t n = batch.size();
    const std::size_t m = params.num_domains();

    auto f = reconstruct(tape, params, batch, opts);
    Tensor loss = tape.scale(tape.l1_distance(batch.x, f.xhat), hp.lambda_r);

    Tensor label_log_probs = tape.log_softmax(label_logits(tape, params, f.z_s));
    Tensor source_ce = nll(tape, batch.y, tape.slice_rows(label_log_probs, 0, batch.n_source), n);
    loss = tape.add(loss, tape.scale(source_ce, hp.lambda_c));

    Tensor domain_log_probs = tape.log_softmax(domain_logits(tape, params, f.z_s));
    Tensor adversarial;
    if (opts.adversarial == AdversarialForm::confusion) {
        // cross-entropy of D(z_s) against the uniform domain distribution
        adversarial = tape.scale(tape.sum(domain_log_probs),
                                 -1.0 / static_cast<double>(n * m));
    } else {
        adversarial = tape.neg(nll(tape, batch.d_lab, domain_log_probs, n));
    }
    loss = tape.add(loss, tape.scale(adversarial, hp.lambda_d));

    if (opts.entropy_terms && batch.n_source < n) {
        loss = tape.add(loss, tape.scale(target_regularizer(tape, label_log_probs, batch), hp.lambda_c));
    }
    return loss;
}

namespace {

template <typename Builder>
double loss_value(Builder&& build) {
    Tape tape;
    return build(tape).item();
}

}  // namespace

double decoder_loss(const ModelParams& p, const Batch& b, const HyperParams& hp, const LossOptions& o) {
    return loss_value([&](Tape& t) { return build_decoder_loss(t, p, b, hp, o); });
}
double domain_classifier_loss(const ModelParams& p, const Batch& b, const HyperParams& hp,
                              const LossOptions& o) {
    return loss_value([&](Tape& t) { return build_domain_classifier_loss(t, p, b, hp, o); });
}
double label_classifier_loss(const ModelParams& p, const Batch& b, const HyperParams& hp,
                             const LossOptions& o) {
    return loss_value([&](Tape& t) { return build_label_classifier_loss(t, p, b, hp, o); });
}
double private_encoder_loss(const ModelParams& p, const Batch& b, const HyperParams& hp,
                            const LossOptions& o) {
    return loss_value([&](Tape& t) { return build_private_encoder_loss(t, p, b, hp, o); });
}
double shared_encoder_loss(const ModelParams& p, const Batch& b, const HyperParams& hp,
                           const LossOptions& o) {
    return loss_value([&](Tape& t) { return build_shared_encoder_loss(t, p, b, hp, o); });
}

namespace {

void check_probability_rows(const Tensor& predictions) {
    for (std::size_t r = 0; r < predictions.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < predictions.cols(); ++c) {
            if (predictions(r, c) < 0.0)
                throw ContractError("prediction row " + std::to_string(r) + " has a negative entry");
            sum += predictions(r, c);
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ContractError("prediction row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
}

}  // namespace

double entropy_term(const Tensor& predictions) {
    check_probability_rows(predictions);
    Tape tape;
    return entropy_node(tape, predictions).item();
}

double balance_term(const Tensor& predictions) {
    check_probability_rows(predictions);
    Tape tape;
    return balance_node(tape, predictions).item();
}

MiBound mi_lower_bound_gap(const Tensor& joint, const Tensor& q_conditional) {
    const std::size_t nx = joint.rows(), nz = joint.cols();
    if (q_conditional.rows() != nx || q_conditional.cols() != nz) {
        throw DimensionError("q table " + shape_str(q_conditional.shape()) + " does not match joint " +
                             shape_str(joint.shape()));
    }

    double total = 0.0;
    for (double v : joint.values()) {
        if (v < 0.0) throw ContractError("joint has a negative entry");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("joint does not sum to 1");
    for (std::size_t z = 0; z < nz; ++z) {
        double col = 0.0;
        for (std::size_t x = 0; x < nx; ++x) {
            if (q_conditional(x, z) < 0.0) throw ContractError("q has a negative entry");
            col += q_conditional(x, z);
        }
        if (std::abs(col - 1.0) > 1e-9)
            throw ContractError("q column " + std::to_string(z) + " does not sum to 1");
    }

    std::vector<double> px(nx, 0.0), pz(nz, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t z = 0; z < nz; ++z) {
            px[x] += joint(x, z);
            pz[z] += joint(x, z);
        }

    MiBound out{0.0, 0.0};
    double hx = 0.0;
    for (double p : px)
        if (p > 0.0) hx -= p * std::log(p);
    out.bound_value = hx;
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t z = 0; z < nz; ++z) {
            const double j = joint(x, z);
            if (j <= 0.0) continue;
            out.exact_mi += j * std::log(j / (px[x] * pz[z]));
            const double q = q_conditional(x, z);
            out.bound_value += j * std::log(q < kLogFloor ? kLogFloor : q);
        }
    }
    return out;
}

}  // namespace mtda
