#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace t2v {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Counter-based RNG: every draw is a pure function of (seed, counter), so a
// stream can be replayed or resumed from its two integers alone.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    uint64_t next_u64();
    double next_uniform();          // [0, 1)
    float next_normal();            // Box-Muller, consumes two counter draws
    uint64_t next_below(uint64_t n);  // uniform in [0, n)

    // Derives an independent stream; children of distinct ids do not collide.
    Rng split(uint64_t stream_id) const;

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t seed_;
    uint64_t counter_;
};

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<float> grad;  // allocated on first accumulation, same numel as data
    double acc64 = 0.0;       // 64-bit value of a scalar reduction output
    bool has_acc64 = false;
};

class GradTape;

// Rank-N float32 tensor. Value type with shared storage; treated as immutable
// after construction except for gradient accumulation on leaves.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor ones(const Shape& shape);
    static Tensor full(const Shape& shape, float value);
    static Tensor scalar(float value);  // shape {1}
    static Tensor from_data(const Shape& shape, std::vector<float> data);
    static Tensor randn(const Shape& shape, Rng& rng);
    static Tensor randu(const Shape& shape, Rng& rng, float lo = 0.0f, float hi = 1.0f);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    size_t rank() const { return impl_->shape.size(); }
    size_t numel() const { return impl_->data.size(); }
    size_t dim(size_t i) const { return impl_->shape[i]; }

    const std::vector<float>& values() const { return impl_->data; }
    float item() const;    // requires numel == 1
    double item64() const;  // 64-bit reduction value when available, else item()
    float at(const std::vector<size_t>& index) const;

    Tensor& set_requires_grad(bool flag);
    bool requires_grad() const { return impl_->requires_grad; }
    bool is_leaf() const { return impl_->is_leaf; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<float>& grad() const;
    void zero_grad();

    Tensor detach() const;  // copies data, drops graph membership
    Tensor clone() const { return detach(); }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<TensorImpl> impl) { Tensor t; t.impl_ = std::move(impl); return t; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. RAII scope: ops record while a tape is active and any
// input requires grad. One tape per logical thread; nesting is an error.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    // Populates dLoss/dLeaf on every requires_grad leaf, then clears the tape.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }

    struct Node {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        // Accumulates into grads[i] for each input that wants grad; a null
        // slot means that input does not need a gradient.
        std::function<void(const std::vector<float>& gout, const std::vector<std::vector<float>*>& gins)> backward;
    };

    static GradTape* active();
    void record(Node node) { nodes_.push_back(std::move(node)); }

private:
    std::vector<Node> nodes_;
};

// ---- elementwise (NumPy-style broadcasting: trailing dims equal or 1) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // throws if any denominator is 0
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, float b);
Tensor mul(const Tensor& a, float b);
Tensor div(const Tensor& a, float b);

Tensor silu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);

// ---- matmul: a [..., m, k] x b [..., k, n]; leading dims broadcast ----
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- reductions (64-bit accumulation) ----
Tensor reduce_sum(const Tensor& x, const std::vector<size_t>& axes = {}, bool keepdim = false);
Tensor reduce_mean(const Tensor& x, const std::vector<size_t>& axes = {}, bool keepdim = false);
Tensor reduce_max(const Tensor& x, const std::vector<size_t>& axes = {}, bool keepdim = false);

Tensor softmax(const Tensor& x, size_t axis);

// ---- shape ops ----
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len);
Tensor expand(const Tensor& x, size_t axis, size_t n);  // x.shape[axis] must be 1

// ---- lookup ----
Tensor embedding(const Tensor& weight, const std::vector<int>& ids);  // weight [V, C] -> [len(ids), C]

// Runs backward on the active tape.
void backward(const Tensor& loss);

// Max over coordinates of x of |analytic - central difference| / (|central| + 1e-8).
// f must be a pure deterministic map from tensor to scalar.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step);

}  // namespace t2v
