#include "mtda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mtda {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor shape must have positive extents, got " + shape_str(shape));
    }
    Tensor t;
    t.st_->shape = std::move(shape);
    t.st_->vals.assign(shape_numel(t.st_->shape), value);
    t.st_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.st_->shape = std::move(shape);
    t.st_->vals = std::move(values);
    t.st_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_values({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (st_->shape.size() != 2) throw ContractError("rows() needs a rank-2 tensor, got " + shape_str(st_->shape));
    return st_->shape[0];
}

std::size_t Tensor::cols() const {
    if (st_->shape.size() != 2) throw ContractError("cols() needs a rank-2 tensor, got " + shape_str(st_->shape));
    return st_->shape[1];
}

std::span<const double> Tensor::grad() const {
    if (st_->grad.empty()) throw ContractError("tensor has no gradient; run backward first");
    return st_->grad;
}

std::span<double> Tensor::grad_mut() {
    if (st_->grad.empty()) st_->grad.assign(st_->vals.size(), 0.0);
    return st_->grad;
}

void Tensor::zero_grad() {
    st_->grad.assign(st_->vals.size(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() needs a scalar, got shape " + shape_str(st_->shape));
    return st_->vals[0];
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

}  // namespace

bool Tape::tracked(const Tensor& t) const {
    return t.requires_grad() || produced_.count(t.st_.get()) != 0;
}

void Tape::record(TapeNode node) {
    produced_.insert(node.output.get());
    nodes_.push_back(std::move(node));
}

void Tape::clear() {
    nodes_.clear();
    produced_.clear();
}

Tensor Tape::binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                                const std::function<double(double, double)>& f,
                                const std::function<double(double, double, double)>& da,
                                const std::function<double(double, double, double)>& db) {
    check_same_shape(a, b, name);
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.st_->vals;
    const auto& bv = b.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i], bv[i]);

    if (tracked(a) || tracked(b)) {
        const bool pull_a = tracked(a);
        const bool pull_b = tracked(b);
        record({{a.st_, b.st_},
                out.st_,
                [da, db, pull_a, pull_b](const TapeNode& n) {
                    const auto& g = n.output->adj;
                    const auto& av = n.inputs[0]->vals;
                    const auto& bv = n.inputs[1]->vals;
                    if (pull_a) {
                        auto& ga = n.inputs[0]->adj;
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da(av[i], bv[i], g[i]);
                    }
                    if (pull_b) {
                        auto& gb = n.inputs[1]->adj;
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db(av[i], bv[i], g[i]);
                    }
                }});
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y, double g) { return g * y; },
        [](double x, double, double g) { return g * x; });
}

Tensor Tape::unary_op(const Tensor& x, const std::function<double(double)>& f,
                      const std::function<double(double, double)>& df_from_in_out) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(xv[i]);

    if (tracked(x)) {
        record({{x.st_},
                out.st_,
                [df_from_in_out](const TapeNode& n) {
                    const auto& g = n.output->adj;
                    const auto& xv = n.inputs[0]->vals;
                    const auto& ov = n.output->vals;
                    auto& gx = n.inputs[0]->adj;
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df_from_in_out(xv[i], ov[i]);
                }});
    }
    return out;
}

Tensor Tape::relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Tape::tanh(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double o) { return 1.0 - o * o; });
}

Tensor Tape::neg(const Tensor& x) {
    return unary_op(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor Tape::scale(const Tensor& x, double s) {
    return unary_op(
        x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor Tape::exp(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Tensor Tape::log_clamped(const Tensor& x, double floor) {
    return unary_op(
        x, [floor](double v) { return std::log(v < floor ? floor : v); },
        [floor](double v, double) { return v < floor ? 0.0 : 1.0 / v; });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    const double* av = a.st_->vals.data();
    const double* bv = b.st_->vals.data();
    double* ov = out.st_->vals.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv + p * n;
            double* orow = ov + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }

    if (tracked(a) || tracked(b)) {
        const bool pull_a = tracked(a);
        const bool pull_b = tracked(b);
        record({{a.st_, b.st_},
                out.st_,
                [m, k, n, pull_a, pull_b](const TapeNode& nd) {
                    const double* g = nd.output->adj.data();
                    const double* av = nd.inputs[0]->vals.data();
                    const double* bv = nd.inputs[1]->vals.data();
                    if (pull_a) {  // dA += dC * B^T
                        double* ga = nd.inputs[0]->adj.data();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) {
                                const double gij = g[i * n + j];
                                for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * n + j];
                            }
                    }
                    if (pull_b) {  // dB += A^T * dC
                        double* gb = nd.inputs[1]->adj.data();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                                const double aip = av[i * k + p];
                                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                            }
                    }
                }});
    }
    return out;
}

Tensor Tape::add_row_bias(const Tensor& x, const Tensor& bias) {
    check_rank2(x, "add_row_bias");
    check_rank2(bias, "add_row_bias");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (bias.shape()[0] != 1 || bias.shape()[1] != d) {
        throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) +
                             " does not match row width of " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({n, d});
    const auto& xv = x.st_->vals;
    const auto& bv = bias.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) ov[r * d + c] = xv[r * d + c] + bv[c];

    if (tracked(x) || tracked(bias)) {
        const bool pull_x = tracked(x);
        const bool pull_b = tracked(bias);
        record({{x.st_, bias.st_},
                out.st_,
                [n, d, pull_x, pull_b](const TapeNode& nd) {
                    const auto& g = nd.output->adj;
                    if (pull_x) {
                        auto& gx = nd.inputs[0]->adj;
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                    }
                    if (pull_b) {
                        auto& gb = nd.inputs[1]->adj;
                        for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
                    }
                }});
    }
    return out;
}

Tensor Tape::log_softmax(const Tensor& logits) {
    check_rank2(logits, "log_softmax");
    const std::size_t n = logits.shape()[0], k = logits.shape()[1];
    if (k < 2) throw DimensionError("log_softmax: needs at least 2 columns, got " + shape_str(logits.shape()));
    Tensor out = Tensor::zeros({n, k});
    const auto& xv = logits.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = xv.data() + r * k;
        double mx = row[0];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += std::exp(row[c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < k; ++c) ov[r * k + c] = row[c] - lse;
    }

    if (tracked(logits)) {
        record({{logits.st_},
                out.st_,
                [n, k](const TapeNode& nd) {
                    const auto& g = nd.output->adj;
                    const auto& ov = nd.output->vals;
                    auto& gx = nd.inputs[0]->adj;
                    for (std::size_t r = 0; r < n; ++r) {
                        double gsum = 0.0;
                        for (std::size_t c = 0; c < k; ++c) gsum += g[r * k + c];
                        for (std::size_t c = 0; c < k; ++c)
                            gx[r * k + c] += g[r * k + c] - std::exp(ov[r * k + c]) * gsum;
                    }
                }});
    }
    return out;
}

Tensor Tape::l1_distance(const Tensor& x, const Tensor& xhat) {
    check_rank2(x, "l1_distance");
    check_same_shape(x, xhat, "l1_distance");
    const std::size_t n = x.shape()[0];
    const auto& xv = x.st_->vals;
    const auto& hv = xhat.st_->vals;
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += std::abs(xv[i] - hv[i]);
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));

    if (tracked(x) || tracked(xhat)) {
        const bool pull_x = tracked(x);
        const bool pull_h = tracked(xhat);
        record({{x.st_, xhat.st_},
                out.st_,
                [n, pull_x, pull_h](const TapeNode& nd) {
                    const double g = nd.output->adj[0] / static_cast<double>(n);
                    const auto& xv = nd.inputs[0]->vals;
                    const auto& hv = nd.inputs[1]->vals;
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                        const double d = xv[i] - hv[i];
                        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                        if (pull_x) nd.inputs[0]->adj[i] += g * s;
                        if (pull_h) nd.inputs[1]->adj[i] -= g * s;
                    }
                }});
    }
    return out;
}

Tensor Tape::sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.st_->vals) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (tracked(x)) {
        record({{x.st_}, out.st_, [](const TapeNode& nd) {
                    const double g = nd.output->adj[0];
                    for (auto& a : nd.inputs[0]->adj) a += g;
                }});
    }
    return out;
}

Tensor Tape::mean_rows(const Tensor& x) {
    check_rank2(x, "mean_rows");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    Tensor out = Tensor::zeros({1, d});
    const auto& xv = x.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) ov[c] += xv[r * d + c];
    for (std::size_t c = 0; c < d; ++c) ov[c] /= static_cast<double>(n);

    if (tracked(x)) {
        record({{x.st_}, out.st_, [n, d](const TapeNode& nd) {
                    const auto& g = nd.output->adj;
                    auto& gx = nd.inputs[0]->adj;
                    for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[c] / static_cast<double>(n);
                }});
    }
    return out;
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t row_begin, std::size_t row_end) {
    check_rank2(x, "slice_rows");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (row_begin >= row_end || row_end > n) {
        throw DimensionError("slice_rows: range [" + std::to_string(row_begin) + ", " +
                             std::to_string(row_end) + ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t m = row_end - row_begin;
    Tensor out = Tensor::zeros({m, d});
    std::copy_n(x.st_->vals.data() + row_begin * d, m * d, out.st_->vals.data());

    if (tracked(x)) {
        record({{x.st_}, out.st_, [row_begin, m, d](const TapeNode& nd) {
                    const auto& g = nd.output->adj;
                    auto& gx = nd.inputs[0]->adj;
                    for (std::size_t i = 0; i < m * d; ++i) gx[row_begin * d + i] += g[i];
                }});
    }
    return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    check_rank2(a, "concat_cols");
    check_rank2(b, "concat_cols");
    const std::size_t n = a.shape()[0];
    if (b.shape()[0] != n) {
        throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const std::size_t da = a.shape()[1], db = b.shape()[1];
    Tensor out = Tensor::zeros({n, da + db});
    const auto& av = a.st_->vals;
    const auto& bv = b.st_->vals;
    auto& ov = out.st_->vals;
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(av.data() + r * da, da, ov.data() + r * (da + db));
        std::copy_n(bv.data() + r * db, db, ov.data() + r * (da + db) + da);
    }

    if (tracked(a) || tracked(b)) {
        const bool pull_a = tracked(a);
        const bool pull_b = tracked(b);
        record({{a.st_, b.st_},
                out.st_,
                [n, da, db, pull_a, pull_b](const TapeNode& nd) {
                    const auto& g = nd.output->adj;
                    for (std::size_t r = 0; r < n; ++r) {
                        if (pull_a)
                            for (std::size_t c = 0; c < da; ++c)
                                nd.inputs[0]->adj[r * da + c] += g[r * (da + db) + c];
                        if (pull_b)
                            for (std::size_t c = 0; c < db; ++c)
                                nd.inputs[1]->adj[r * db + c] += g[r * (da + db) + da + c];
                    }
                }});
    }
    return out;
}

void Tape::backward(const Tensor& root) {
    if (root.size() != 1) {
        throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    }

    // Zero the adjoint scratch of every storage this sweep can touch, then
    // seed the root. Fresh adjoints per call keep repeated backwards additive
    // in the persistent .grad buffers.
    auto reset = [](detail::Storage* s) { s->adj.assign(s->vals.size(), 0.0); };
    for (auto& node : nodes_) {
        for (auto& in : node.inputs) reset(in.get());
        reset(node.output.get());
    }
    reset(root.st_.get());
    root.st_->adj[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull(*it);

    std::unordered_set<detail::Storage*> flushed;
    auto flush = [&flushed](detail::Storage* s) {
        if (!s->requires_grad || !flushed.insert(s).second) return;
        if (s->grad.empty()) s->grad.assign(s->vals.size(), 0.0);
        for (std::size_t i = 0; i < s->adj.size(); ++i) s->grad[i] += s->adj[i];
    };
    for (auto& node : nodes_) {
        for (auto& in : node.inputs) flush(in.get());
        flush(node.output.get());
    }
    flush(root.st_.get());
}

double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h) {
    for (auto& t : inputs) t.set_requires_grad(true);

    Tape tape;
    Tensor out = f(tape, inputs);
    for (auto& t : inputs) t.zero_grad();
    tape.backward(out);

    double worst = 0.0;
    for (auto& t : inputs) {
        auto g = t.grad();
        auto vals = t.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            Tape tp;
            const double fp = f(tp, inputs).item();
            vals[i] = keep - h;
            Tape tm;
            const double fm = f(tm, inputs).item();
            vals[i] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = g[i];
            const double err = std::abs(analytic - numeric) /
                               std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace mtda
