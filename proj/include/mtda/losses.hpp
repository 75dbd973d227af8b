#pragma once

#include "mtda/autodiff.hpp"
#include "mtda/nets.hpp"

namespace mtda {

struct HyperParams {
    double lambda_r = 1.0;
    double lambda_c = 0.01;
    double lambda_d = 0.20;
    double eta = 2e-4;
};

// Per-step sample block. Source rows come first and are the only ones with
// class labels; d_lab carries the one-hot domain label of every row.
struct Batch {
    Tensor x;      // [n x d_x], entries in [-1, 1]
    Tensor y;      // [n_s x K] one-hot class labels for the source rows
    Tensor d_lab;  // [n x M] one-hot domain labels
    std::size_t n_source = 0;

    std::size_t size() const { return x.rows(); }
    void validate() const;
};

// How the shared encoder works against the domain classifier. `confusion`
// scores D's output against the uniform domain distribution; `sign_flip`
// negates the domain classifier's own cross-entropy term instead (kept for
// comparison; unbounded below).
enum class AdversarialForm { confusion, sign_flip };

struct LossOptions {
    AdversarialForm adversarial = AdversarialForm::confusion;
    bool entropy_terms = true;  // target entropy + balance regularizers
    bool private_path = true;   // when false the decoder sees zeros for z_p
};

// Graph builders: evaluate one loss on the tape and return the scalar node,
// so the caller decides whether to run backward. Each call is a fresh
// forward pass.
Tensor build_decoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                          const HyperParams& hp, const LossOptions& opts = {});
Tensor build_domain_classifier_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                    const HyperParams& hp, const LossOptions& opts = {});
Tensor build_label_classifier_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                   const HyperParams& hp, const LossOptions& opts = {});
Tensor build_private_encoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                  const HyperParams& hp, const LossOptions& opts = {});
Tensor build_shared_encoder_loss(Tape& tape, const ModelParams& params, const Batch& batch,
                                 const HyperParams& hp, const LossOptions& opts = {});

// Value-only conveniences.
double decoder_loss(const ModelParams&, const Batch&, const HyperParams&, const LossOptions& = {});
double domain_classifier_loss(const ModelParams&, const Batch&, const HyperParams&, const LossOptions& = {});
double label_classifier_loss(const ModelParams&, const Batch&, const HyperParams&, const LossOptions& = {});
double private_encoder_loss(const ModelParams&, const Batch&, const HyperParams&, const LossOptions& = {});
double shared_encoder_loss(const ModelParams&, const Batch&, const HyperParams&, const LossOptions& = {});

// -(1/n) sum_i p_i . ln p_i over probability rows; in [0, ln K].
double entropy_term(const Tensor& predictions);
// (1/n) sum_i p_i . ln pbar, pbar the row mean; equals -H(pbar), in [-ln K, 0].
double balance_term(const Tensor& predictions);

// Exact mutual information of a discrete joint p(x,z) next to the
// variational lower bound H(x) + E_p [ln q(x|z)]. bound_value <= exact_mi
// for any conditional table q, with equality at q = p(x|z).
struct MiBound {
    double exact_mi;
    double bound_value;
};
MiBound mi_lower_bound_gap(const Tensor& joint, const Tensor& q_conditional);

}  // namespace mtda
