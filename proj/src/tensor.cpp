#include "t2v/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace t2v {

size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------- Rng

namespace {

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t Rng::next_u64() {
    return mix64(seed_ ^ mix64(counter_++));
}

double Rng::next_uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::next_normal() {
    double u1 = 1.0 - next_uniform();  // (0, 1]
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return float(r * std::cos(2.0 * M_PI * u2));
}

uint64_t Rng::next_below(uint64_t n) {
    return uint64_t((static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

Rng Rng::split(uint64_t stream_id) const {
    return Rng(mix64(seed_ + 0x632be59bd9b4e019ull * (stream_id + 1)), 0);
}

// ---------------------------------------------------------------- Tensor

namespace {

std::shared_ptr<TensorImpl> make_impl(const Shape& shape) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->data.assign(shape_numel(shape), 0.0f);
    return impl;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape) { return wrap(make_impl(shape)); }

Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0f); }

Tensor Tensor::full(const Shape& shape, float value) {
    auto impl = make_impl(shape);
    std::fill(impl->data.begin(), impl->data.end(), value);
    return wrap(impl);
}

Tensor Tensor::scalar(float value) { return full({1}, value); }

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data) {
    if (data.size() != shape_numel(shape))
        throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                    " values for shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(data);
    return wrap(impl);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng) {
    auto impl = make_impl(shape);
    for (float& v : impl->data) v = rng.next_normal();
    return wrap(impl);
}

Tensor Tensor::randu(const Shape& shape, Rng& rng, float lo, float hi) {
    auto impl = make_impl(shape);
    for (float& v : impl->data) v = lo + float(rng.next_uniform()) * (hi - lo);
    return wrap(impl);
}

float Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

double Tensor::item64() const {
    if (numel() != 1) throw std::invalid_argument("item64: tensor has " + std::to_string(numel()) + " elements");
    return impl_->has_acc64 ? impl_->acc64 : double(impl_->data[0]);
}

float Tensor::at(const std::vector<size_t>& index) const {
    if (index.size() != rank()) throw std::invalid_argument("at: index rank mismatch");
    size_t off = 0;
    for (size_t d = 0; d < index.size(); ++d) {
        if (index[d] >= impl_->shape[d]) throw std::out_of_range("at: index out of range");
        off = off * impl_->shape[d] + index[d];
    }
    return impl_->data[off];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    if (flag && !impl_->is_leaf)
        throw std::invalid_argument("set_requires_grad: only leaf tensors can be marked");
    impl_->requires_grad = flag;
    return *this;
}

const std::vector<float>& Tensor::grad() const {
    if (impl_->grad.empty()) throw std::runtime_error("grad: no gradient has been accumulated");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return wrap(impl);
}

// ---------------------------------------------------------------- GradTape

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape::GradTape() {
    if (g_active_tape) throw std::logic_error("GradTape: a tape is already active on this thread");
    g_active_tape = this;
}

GradTape::~GradTape() { g_active_tape = nullptr; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar");
    bool found = false;
    for (const auto& n : nodes_)
        if (n.output == loss.impl()) { found = true; break; }
    if (loss.is_leaf() || !found)
        throw std::runtime_error("backward: loss is detached from this tape");

    std::unordered_map<TensorImpl*, std::vector<float>> grads;
    grads[loss.impl().get()] = {1.0f};

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto gout = grads.find(it->output.get());
        if (gout == grads.end()) continue;
        std::vector<std::vector<float>*> gins(it->inputs.size(), nullptr);
        for (size_t i = 0; i < it->inputs.size(); ++i) {
            TensorImpl* in = it->inputs[i].get();
            if (!in->requires_grad) continue;
            auto& buf = grads[in];
            if (buf.empty()) buf.assign(in->data.size(), 0.0f);
            gins[i] = &buf;
        }
        it->backward(gout->second, gins);
    }

    for (const auto& node : nodes_) {
        for (const auto& in : node.inputs) {
            if (!in->is_leaf || !in->requires_grad) continue;
            auto g = grads.find(in.get());
            if (g == grads.end()) continue;
            if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0f);
            for (size_t i = 0; i < g->second.size(); ++i) in->grad[i] += g->second[i];
            grads.erase(g);  // a leaf may feed several nodes; accumulate once
        }
    }
    nodes_.clear();
}

void backward(const Tensor& loss) {
    GradTape* tape = GradTape::active();
    if (!tape) throw std::runtime_error("backward: no active tape");
    tape->backward(loss);
}

// ---------------------------------------------------------------- op plumbing

namespace {

std::vector<size_t> row_strides(const Shape& s) {
    std::vector<size_t> st(s.size(), 1);
    for (size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
    return st;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `s` aligned to a broadcast target of rank r; 0 on broadcast dims.
std::vector<size_t> bcast_strides(const Shape& s, size_t r) {
    auto st = row_strides(s);
    std::vector<size_t> out(r, 0);
    for (size_t i = 0; i < s.size(); ++i)
        out[r - s.size() + i] = (s[i] == 1) ? 0 : st[i];
    return out;
}

template <class F>
void bcast_loop(const Shape& out, const std::vector<size_t>& sa, const std::vector<size_t>& sb, F&& f) {
    size_t total = shape_numel(out);
    size_t r = out.size();
    if (r == 0) { if (total) f(0, 0, 0); return; }
    std::vector<size_t> idx(r, 0);
    size_t ia = 0, ib = 0;
    for (size_t io = 0; io < total; ++io) {
        f(ia, ib, io);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

bool want_record(std::initializer_list<const Tensor*> ins) {
    if (!GradTape::active()) return false;
    for (const Tensor* t : ins)
        if ((*t).requires_grad()) return true;
    return false;
}

void record(std::vector<Tensor> ins, Tensor& out,
            std::function<void(const std::vector<float>&, const std::vector<std::vector<float>*>&)> fn) {
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    GradTape::Node node;
    node.output = out.impl();
    for (auto& t : ins) node.inputs.push_back(t.impl());
    node.backward = std::move(fn);
    GradTape::active()->record(std::move(node));
}

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind) {
    if (kind == BinKind::Div) {
        for (float v : b.values())
            if (v == 0.0f) throw std::invalid_argument("div: zero denominator");
    }
    Shape os = broadcast_shapes(a.shape(), b.shape());
    auto sa = bcast_strides(a.shape(), os.size());
    auto sb = bcast_strides(b.shape(), os.size());
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& ad = a.values();
    const auto& bd = b.values();
    switch (kind) {
        case BinKind::Add: bcast_loop(os, sa, sb, [&](size_t ia, size_t ib, size_t io) { od[io] = ad[ia] + bd[ib]; }); break;
        case BinKind::Sub: bcast_loop(os, sa, sb, [&](size_t ia, size_t ib, size_t io) { od[io] = ad[ia] - bd[ib]; }); break;
        case BinKind::Mul: bcast_loop(os, sa, sb, [&](size_t ia, size_t ib, size_t io) { od[io] = ad[ia] * bd[ib]; }); break;
        case BinKind::Div: bcast_loop(os, sa, sb, [&](size_t ia, size_t ib, size_t io) { od[io] = ad[ia] / bd[ib]; }); break;
    }
    if (want_record({&a, &b})) {
        record({a, b}, out, [a, b, os, sa, sb, kind](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            const auto& ad = a.values();
            const auto& bd = b.values();
            bcast_loop(os, sa, sb, [&](size_t ia, size_t ib, size_t io) {
                switch (kind) {
                    case BinKind::Add:
                        if (gi[0]) (*gi[0])[ia] += g[io];
                        if (gi[1]) (*gi[1])[ib] += g[io];
                        break;
                    case BinKind::Sub:
                        if (gi[0]) (*gi[0])[ia] += g[io];
                        if (gi[1]) (*gi[1])[ib] -= g[io];
                        break;
                    case BinKind::Mul:
                        if (gi[0]) (*gi[0])[ia] += g[io] * bd[ib];
                        if (gi[1]) (*gi[1])[ib] += g[io] * ad[ia];
                        break;
                    case BinKind::Div:
                        if (gi[0]) (*gi[0])[ia] += g[io] / bd[ib];
                        if (gi[1]) (*gi[1])[ib] -= g[io] * ad[ia] / (bd[ib] * bd[ib]);
                        break;
                }
            });
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Div); }
Tensor add(const Tensor& a, float b) { return binary_op(a, Tensor::scalar(b), BinKind::Add); }
Tensor sub(const Tensor& a, float b) { return binary_op(a, Tensor::scalar(b), BinKind::Sub); }
Tensor mul(const Tensor& a, float b) { return binary_op(a, Tensor::scalar(b), BinKind::Mul); }
Tensor div(const Tensor& a, float b) { return binary_op(a, Tensor::scalar(b), BinKind::Div); }

// ---------------------------------------------------------------- unary

Tensor silu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t i = 0; i < xd.size(); ++i) {
        float s = 1.0f / (1.0f + std::exp(-xd[i]));
        od[i] = xd[i] * s;
    }
    if (want_record({&x})) {
        record({x}, out, [x](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            const auto& xd = x.values();
            for (size_t i = 0; i < xd.size(); ++i) {
                float s = 1.0f / (1.0f + std::exp(-xd[i]));
                (*gi[0])[i] += g[i] * s * (1.0f + xd[i] * (1.0f - s));
            }
        });
    }
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t i = 0; i < xd.size(); ++i) od[i] = std::exp(xd[i]);
    if (want_record({&x})) {
        record({x}, out, [out](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            const auto& od = out.values();
            for (size_t i = 0; i < od.size(); ++i) (*gi[0])[i] += g[i] * od[i];
        });
    }
    return out;
}

Tensor sqrt(const Tensor& x) {
    for (float v : x.values())
        if (v < 0.0f) throw std::invalid_argument("sqrt: negative input");
    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t i = 0; i < xd.size(); ++i) od[i] = std::sqrt(xd[i]);
    if (want_record({&x})) {
        record({x}, out, [out](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            const auto& od = out.values();
            for (size_t i = 0; i < od.size(); ++i) (*gi[0])[i] += g[i] * 0.5f / od[i];
        });
    }
    return out;
}

Tensor clamp(const Tensor& x, float lo, float hi) {
    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t i = 0; i < xd.size(); ++i) od[i] = std::min(hi, std::max(lo, xd[i]));
    if (want_record({&x})) {
        record({x}, out, [x, lo, hi](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            const auto& xd = x.values();
            for (size_t i = 0; i < xd.size(); ++i)
                if (xd[i] > lo && xd[i] < hi) (*gi[0])[i] += g[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw std::invalid_argument("matmul: both operands must have rank >= 2");
    size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (k != kb)
        throw std::invalid_argument("matmul: inner dims disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    Shape obatch = broadcast_shapes(abatch, bbatch);
    auto sa = bcast_strides(abatch, obatch.size());
    auto sb = bcast_strides(bbatch, obatch.size());
    for (auto& s : sa) s *= m * k;
    for (auto& s : sb) s *= k * n;

    Shape os = obatch;
    os.push_back(m);
    os.push_back(n);
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& ad = a.values();
    const auto& bd = b.values();

    std::vector<double> row(n);
    bcast_loop(obatch, sa, sb, [&](size_t ba, size_t bb, size_t bo) {
        size_t oo = bo * m * n;
        for (size_t i = 0; i < m; ++i) {
            std::fill(row.begin(), row.end(), 0.0);
            for (size_t l = 0; l < k; ++l) {
                double av = ad[ba + i * k + l];
                const float* brow = &bd[bb + l * n];
                for (size_t j = 0; j < n; ++j) row[j] += av * brow[j];
            }
            for (size_t j = 0; j < n; ++j) od[oo + i * n + j] = float(row[j]);
        }
    });

    if (want_record({&a, &b})) {
        record({a, b}, out, [a, b, obatch, sa, sb, m, n, k](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            const auto& ad = a.values();
            const auto& bd = b.values();
            bcast_loop(obatch, sa, sb, [&](size_t ba, size_t bb, size_t bo) {
                size_t oo = bo * m * n;
                if (gi[0]) {  // dA = g . B^T
                    for (size_t i = 0; i < m; ++i)
                        for (size_t l = 0; l < k; ++l) {
                            double acc = 0;
                            const float* grow = &g[oo + i * n];
                            const float* brow = &bd[bb + l * n];
                            for (size_t j = 0; j < n; ++j) acc += double(grow[j]) * brow[j];
                            (*gi[0])[ba + i * k + l] += float(acc);
                        }
                }
                if (gi[1]) {  // dB = A^T . g
                    for (size_t l = 0; l < k; ++l)
                        for (size_t j = 0; j < n; ++j) {
                            double acc = 0;
                            for (size_t i = 0; i < m; ++i) acc += double(ad[ba + i * k + l]) * g[oo + i * n + j];
                            (*gi[1])[bb + l * n + j] += float(acc);
                        }
                }
            });
        });
    }
    return out;
}

// ---------------------------------------------------------------- reductions

namespace {

struct ReducePlan {
    Shape out_shape;               // after reduction (keepdim applied)
    std::vector<size_t> out_map;   // for each x dim: out stride, 0 if reduced
    size_t count = 1;              // elements folded into each output cell
};

ReducePlan reduce_plan(const Shape& xs, const std::vector<size_t>& axes_in, bool keepdim) {
    std::vector<bool> reduced(xs.size(), false);
    if (axes_in.empty()) {
        std::fill(reduced.begin(), reduced.end(), true);
    } else {
        for (size_t a : axes_in) {
            if (a >= xs.size()) throw std::invalid_argument("reduce: axis " + std::to_string(a) + " out of range");
            if (reduced[a]) throw std::invalid_argument("reduce: duplicate axis");
            reduced[a] = true;
        }
    }
    ReducePlan p;
    Shape kept;
    for (size_t d = 0; d < xs.size(); ++d) {
        if (reduced[d]) {
            p.count *= xs[d];
            if (keepdim) kept.push_back(1);
        } else {
            kept.push_back(xs[d]);
        }
    }
    if (kept.empty()) kept.push_back(1);
    p.out_shape = kept;

    // out strides over the un-reduced dims, in x-dim order
    p.out_map.assign(xs.size(), 0);
    size_t stride = 1;
    for (size_t d = xs.size(); d-- > 0;) {
        if (!reduced[d]) {
            p.out_map[d] = stride;
            stride *= xs[d];
        }
    }
    return p;
}

template <class F>
void reduce_loop(const Shape& xs, const std::vector<size_t>& out_map, F&& f) {
    size_t total = shape_numel(xs);
    size_t r = xs.size();
    std::vector<size_t> idx(r, 0);
    size_t io = 0;
    for (size_t ix = 0; ix < total; ++ix) {
        f(ix, io);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            io += out_map[d];
            if (idx[d] < xs[d]) break;
            io -= out_map[d] * xs[d];
            idx[d] = 0;
        }
    }
}

enum class RedKind { Sum, Mean, Max };

Tensor reduce_impl(const Tensor& x, const std::vector<size_t>& axes, bool keepdim, RedKind kind) {
    ReducePlan p = reduce_plan(x.shape(), axes, keepdim);
    Tensor out = Tensor::zeros(p.out_shape);
    auto& od = out.impl()->data;
    const auto& xd = x.values();

    if (kind == RedKind::Max) {
        std::vector<size_t> argmax(od.size(), size_t(-1));
        std::vector<float> best(od.size(), -std::numeric_limits<float>::infinity());
        reduce_loop(x.shape(), p.out_map, [&](size_t ix, size_t io) {
            if (xd[ix] > best[io]) { best[io] = xd[ix]; argmax[io] = ix; }
        });
        for (size_t i = 0; i < od.size(); ++i) od[i] = best[i];
        if (want_record({&x})) {
            record({x}, out, [argmax](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
                if (!gi[0]) return;
                for (size_t io = 0; io < argmax.size(); ++io) (*gi[0])[argmax[io]] += g[io];
            });
        }
        return out;
    }

    std::vector<double> acc(od.size(), 0.0);
    reduce_loop(x.shape(), p.out_map, [&](size_t ix, size_t io) { acc[io] += xd[ix]; });
    double scale = (kind == RedKind::Mean) ? 1.0 / double(p.count) : 1.0;
    for (size_t i = 0; i < od.size(); ++i) od[i] = float(acc[i] * scale);
    if (od.size() == 1) {
        out.impl()->acc64 = acc[0] * scale;
        out.impl()->has_acc64 = true;
    }

    if (want_record({&x})) {
        Shape xs = x.shape();
        auto out_map = p.out_map;
        float fscale = float(scale);
        record({x}, out, [xs, out_map, fscale](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            reduce_loop(xs, out_map, [&](size_t ix, size_t io) { (*gi[0])[ix] += g[io] * fscale; });
        });
    }
    return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& x, const std::vector<size_t>& axes, bool keepdim) {
    return reduce_impl(x, axes, keepdim, RedKind::Sum);
}
Tensor reduce_mean(const Tensor& x, const std::vector<size_t>& axes, bool keepdim) {
    return reduce_impl(x, axes, keepdim, RedKind::Mean);
}
Tensor reduce_max(const Tensor& x, const std::vector<size_t>& axes, bool keepdim) {
    return reduce_impl(x, axes, keepdim, RedKind::Max);
}

// ---------------------------------------------------------------- softmax

Tensor softmax(const Tensor& x, size_t axis) {
    if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
    size_t len = x.dim(axis);
    size_t inner = 1, outer = 1;
    for (size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    for (size_t d = 0; d < axis; ++d) outer *= x.dim(d);

    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t o = 0; o < outer; ++o) {
        for (size_t i = 0; i < inner; ++i) {
            size_t base = o * len * inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t l = 0; l < len; ++l) mx = std::max(mx, double(xd[base + l * inner]));
            double sum = 0;
            for (size_t l = 0; l < len; ++l) sum += std::exp(double(xd[base + l * inner]) - mx);
            for (size_t l = 0; l < len; ++l)
                od[base + l * inner] = float(std::exp(double(xd[base + l * inner]) - mx) / sum);
        }
    }
    if (want_record({&x})) {
        record({x}, out, [out, outer, inner, len](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            const auto& yd = out.values();
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < inner; ++i) {
                    size_t base = o * len * inner + i;
                    double dot = 0;
                    for (size_t l = 0; l < len; ++l) dot += double(g[base + l * inner]) * yd[base + l * inner];
                    for (size_t l = 0; l < len; ++l) {
                        size_t p = base + l * inner;
                        (*gi[0])[p] += yd[p] * (g[p] - float(dot));
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------- shape ops

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor out = Tensor::from_data(shape, x.values());
    if (want_record({&x})) {
        record({x}, out, [](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            for (size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
        });
    }
    return out;
}

namespace {

// flat index mapping out -> x for a permutation (out dim d == x dim perm[d])
template <class F>
void permute_loop(const Shape& os, const std::vector<size_t>& x_stride_for_out_dim, F&& f) {
    size_t total = shape_numel(os);
    size_t r = os.size();
    std::vector<size_t> idx(r, 0);
    size_t ix = 0;
    for (size_t io = 0; io < total; ++io) {
        f(io, ix);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            ix += x_stride_for_out_dim[d];
            if (idx[d] < os[d]) break;
            ix -= x_stride_for_out_dim[d] * os[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<size_t>& perm) {
    if (perm.size() != x.rank()) throw std::invalid_argument("permute: rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (size_t p : perm) {
        if (p >= perm.size() || seen[p]) throw std::invalid_argument("permute: invalid permutation");
        seen[p] = true;
    }
    Shape os(perm.size());
    auto xst = row_strides(x.shape());
    std::vector<size_t> map(perm.size());
    for (size_t d = 0; d < perm.size(); ++d) {
        os[d] = x.dim(perm[d]);
        map[d] = xst[perm[d]];
    }
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    permute_loop(os, map, [&](size_t io, size_t ix) { od[io] = xd[ix]; });
    if (want_record({&x})) {
        record({x}, out, [os, map](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            permute_loop(os, map, [&](size_t io, size_t ix) { (*gi[0])[ix] += g[io]; });
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw std::invalid_argument("concat: axis out of range");
    size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
        for (size_t d = 0; d < s0.size(); ++d)
            if (d != axis && p.dim(d) != s0[d]) throw std::invalid_argument("concat: shape mismatch");
        axis_total += p.dim(axis);
    }
    Shape os = s0;
    os[axis] = axis_total;
    size_t inner = 1, outer = 1;
    for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    for (size_t d = 0; d < axis; ++d) outer *= s0[d];

    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    size_t row_out = axis_total * inner;
    size_t off = 0;
    std::vector<size_t> part_rows;
    for (const auto& p : parts) {
        size_t row_p = p.dim(axis) * inner;
        part_rows.push_back(row_p);
        const auto& pd = p.values();
        for (size_t o = 0; o < outer; ++o)
            std::memcpy(&od[o * row_out + off], &pd[o * row_p], row_p * sizeof(float));
        off += row_p;
    }

    bool rec = false;
    if (GradTape::active())
        for (const auto& p : parts)
            if (p.requires_grad()) { rec = true; break; }
    if (rec) {
        record(parts, out, [outer, row_out, part_rows](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            size_t off = 0;
            for (size_t pi = 0; pi < part_rows.size(); ++pi) {
                size_t row_p = part_rows[pi];
                if (gi[pi]) {
                    for (size_t o = 0; o < outer; ++o)
                        for (size_t i = 0; i < row_p; ++i)
                            (*gi[pi])[o * row_p + i] += g[o * row_out + off + i];
                }
                off += row_p;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& x, size_t axis, size_t start, size_t len) {
    if (axis >= x.rank()) throw std::invalid_argument("slice: axis out of range");
    if (start + len > x.dim(axis)) throw std::invalid_argument("slice: range out of bounds");
    size_t inner = 1, outer = 1;
    for (size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    for (size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    Shape os = x.shape();
    os[axis] = len;
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    size_t row_x = x.dim(axis) * inner, row_o = len * inner, off = start * inner;
    for (size_t o = 0; o < outer; ++o)
        std::memcpy(&od[o * row_o], &xd[o * row_x + off], row_o * sizeof(float));
    if (want_record({&x})) {
        record({x}, out, [outer, row_x, row_o, off](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < row_o; ++i)
                    (*gi[0])[o * row_x + off + i] += g[o * row_o + i];
        });
    }
    return out;
}

Tensor expand(const Tensor& x, size_t axis, size_t n) {
    if (axis >= x.rank()) throw std::invalid_argument("expand: axis out of range");
    if (x.dim(axis) != 1) throw std::invalid_argument("expand: axis size must be 1");
    size_t inner = 1, outer = 1;
    for (size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    for (size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    Shape os = x.shape();
    os[axis] = n;
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t o = 0; o < outer; ++o)
        for (size_t r = 0; r < n; ++r)
            std::memcpy(&od[(o * n + r) * inner], &xd[o * inner], inner * sizeof(float));
    if (want_record({&x})) {
        record({x}, out, [outer, inner, n](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            for (size_t o = 0; o < outer; ++o)
                for (size_t r = 0; r < n; ++r)
                    for (size_t i = 0; i < inner; ++i)
                        (*gi[0])[o * inner + i] += g[(o * n + r) * inner + i];
        });
    }
    return out;
}

Tensor embedding(const Tensor& weight, const std::vector<int>& ids) {
    if (weight.rank() != 2) throw std::invalid_argument("embedding: weight must be [V, C]");
    size_t V = weight.dim(0), C = weight.dim(1);
    for (int id : ids)
        if (id < 0 || size_t(id) >= V)
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(V));
    Tensor out = Tensor::zeros({ids.size(), C});
    auto& od = out.impl()->data;
    const auto& wd = weight.values();
    for (size_t l = 0; l < ids.size(); ++l)
        std::memcpy(&od[l * C], &wd[size_t(ids[l]) * C], C * sizeof(float));
    if (want_record({&weight})) {
        record({weight}, out, [ids, C](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            for (size_t l = 0; l < ids.size(); ++l)
                for (size_t c = 0; c < C; ++c)
                    (*gi[0])[size_t(ids[l]) * C + c] += g[l * C + c];
        });
    }
    return out;
}

// ---------------------------------------------------------------- finite differences

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
    Tensor xg = x.detach();
    xg.set_requires_grad(true);
    std::vector<float> analytic;
    {
        GradTape tape;
        Tensor loss = f(xg);
        if (loss.numel() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
        tape.backward(loss);
        analytic = xg.grad();
    }

    const std::vector<float> base = x.values();
    double max_err = 0.0;
    for (size_t i = 0; i < base.size(); ++i) {
        auto eval = [&](float v) {
            std::vector<float> d = base;
            d[i] = v;
            return f(Tensor::from_data(x.shape(), std::move(d))).item64();
        };
        // use the float-representable perturbations as the actual step
        float xp = float(double(base[i]) + step);
        float xm = float(double(base[i]) - step);
        double central = (eval(xp) - eval(xm)) / (double(xp) - double(xm));
        double err = std::abs(double(analytic[i]) - central) / (std::abs(central) + 1e-8);
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace t2v
