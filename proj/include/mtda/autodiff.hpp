#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mtda/errors.hpp"

namespace mtda {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Storage {
    Shape shape;
    std::vector<double> vals;
    std::vector<double> grad;  // empty until first backward touches it
    std::vector<double> adj;   // per-backward scratch adjoint
    bool requires_grad = false;
};

}  // namespace detail

// Dense 64-bit real tensor with shared value/gradient storage. Copies are
// shallow: they alias the same buffer, which is what lets a parameter keep
// its identity across training steps while tapes come and go.
class Tensor {
  public:
    Tensor() : st_(std::make_shared<detail::Storage>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return st_->shape; }
    std::size_t size() const { return st_->vals.size(); }

    // 2-D accessors; most of the library works with [rows x cols] matrices.
    std::size_t rows() const;
    std::size_t cols() const;
    double operator()(std::size_t r, std::size_t c) const { return st_->vals[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return st_->vals[r * cols() + c]; }

    std::span<const double> values() const { return st_->vals; }
    std::span<double> values_mut() { return st_->vals; }

    bool requires_grad() const { return st_->requires_grad; }
    void set_requires_grad(bool on) { st_->requires_grad = on; }

    bool has_grad() const { return !st_->grad.empty(); }
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    double item() const;

    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

  private:
    friend class Tape;
    std::shared_ptr<detail::Storage> st_;
};

// Records one operation: inputs, output, and the rule that pulls the
// output adjoint back into the input adjoints.
struct TapeNode {
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    std::shared_ptr<detail::Storage> output;
    std::function<void(const TapeNode&)> pull;
};

// Reverse-mode tape. Operations append nodes in execution order, so the
// node list is already topologically sorted; backward() is one reverse
// sweep that visits each node exactly once. A tape is single-threaded.
class Tape {
  public:
    // binary elementwise (equal shapes, no broadcasting)
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);

    Tensor matmul(const Tensor& a, const Tensor& b);
    // x: [n x d], bias: [1 x d]; adds the bias row to every row of x
    Tensor add_row_bias(const Tensor& x, const Tensor& bias);

    // unary
    Tensor relu(const Tensor& x);   // derivative at exactly 0 is 0
    Tensor tanh(const Tensor& x);
    Tensor neg(const Tensor& x);
    Tensor scale(const Tensor& x, double s);
    Tensor exp(const Tensor& x);
    // ln(max(x, floor)); derivative 0 where the clamp is active
    Tensor log_clamped(const Tensor& x, double floor = 1e-12);

    // row-wise log(softmax), stable under large logits
    Tensor log_softmax(const Tensor& logits);

    // mean over batch rows of the per-row L1 distance; subgradient 0 at ties
    Tensor l1_distance(const Tensor& x, const Tensor& xhat);

    Tensor sum(const Tensor& x);        // -> scalar {1}
    Tensor mean_rows(const Tensor& x);  // [n x d] -> [1 x d]
    Tensor slice_rows(const Tensor& x, std::size_t row_begin, std::size_t row_end);
    Tensor concat_cols(const Tensor& a, const Tensor& b);

    // Accumulates d(root)/d(t) into t.grad() for every requires_grad tensor
    // reachable from root. Repeated calls accumulate.
    void backward(const Tensor& root);

    std::size_t node_count() const { return nodes_.size(); }
    void clear();

  private:
    Tensor unary_op(const Tensor& x, const std::function<double(double)>& f,
                    const std::function<double(double, double)>& df_from_in_out);
    Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                              const std::function<double(double, double)>& f,
                              const std::function<double(double, double, double)>& da,
                              const std::function<double(double, double, double)>& db);
    bool tracked(const Tensor& t) const;
    void record(TapeNode node);

    std::vector<TapeNode> nodes_;
    std::unordered_set<const detail::Storage*> produced_;
};

// Scalar-valued function of a set of input tensors, built on the given tape.
using ScalarFn = std::function<Tensor(Tape&, std::span<Tensor>)>;

// Central finite-difference check of the tape gradients of f at `inputs`.
// Returns the max over all input coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace mtda
