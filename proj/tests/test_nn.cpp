#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "t2v/nn.hpp"

using namespace t2v;

TEST_CASE("conv2d: centered delta kernel is identity") {
    Rng rng(1);
    Tensor x = Tensor::randn({1, 1, 4, 4}, rng);
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    w.impl()->data[4] = 1.0f;  // center tap
    Tensor y = conv2d(x, w, Tensor::zeros({1}));
    CHECK(oracle::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d: all-ones kernel on all-ones input sums 9 at interior") {
    Tensor x = Tensor::ones({1, 1, 4, 4});
    Tensor w = Tensor::ones({1, 1, 3, 3});
    Tensor y = conv2d(x, w, Tensor::zeros({1}));
    CHECK(y.at({0, 0, 1, 1}) == doctest::Approx(9.0));
    CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(4.0));  // corner sees 2x2
}

TEST_CASE("conv2d matches brute-force oracle on random shapes") {
    Rng rng(7);
    for (auto [N, Ci, Co, H, W] : std::vector<std::array<size_t, 5>>{
             {2, 3, 4, 5, 5}, {1, 1, 1, 3, 4}, {2, 2, 3, 4, 3}}) {
        Tensor x = Tensor::randn({N, Ci, H, W}, rng);
        Tensor w = Tensor::randn({Co, Ci, 3, 3}, rng);
        Tensor b = Tensor::randn({Co}, rng);
        CHECK(oracle::max_abs_diff(conv2d(x, w, b), oracle::conv2d_naive(x, w, b)) < 1e-5);
    }
    // stride 2 path (used by downsampling)
    Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
    Tensor w = Tensor::randn({4, 3, 3, 3}, rng);
    Tensor b = Tensor::randn({4}, rng);
    Tensor y = conv2d(x, w, b, 2, 1);
    CHECK(y.shape() == Shape{2, 4, 2, 2});
    CHECK(oracle::max_abs_diff(y, oracle::conv2d_naive(x, w, b, 2, 1)) < 1e-5);
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor w = Tensor::zeros({1, 3, 3, 3});
    CHECK_THROWS(conv2d(x, w, Tensor::zeros({1})));
}

TEST_CASE("conv1d_temporal: [0,1,0] kernel is identity") {
    Rng rng(2);
    Tensor x = Tensor::randn({2, 2, 5, 2, 2}, rng);
    Tensor w = Tensor::zeros({2, 2, 3});
    for (size_t c = 0; c < 2; ++c) w.impl()->data[(c * 2 + c) * 3 + 1] = 1.0f;
    Tensor y = conv1d_temporal(x, w, Tensor::zeros({2}));
    CHECK(oracle::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv1d_temporal: F=1 only the center tap contributes") {
    Rng rng(3);
    Tensor x = Tensor::randn({1, 1, 1, 2, 2}, rng);
    Tensor w = Tensor::from_data({1, 1, 3}, {5, 2, 7});  // ends hit zero padding
    Tensor y = conv1d_temporal(x, w, Tensor::zeros({1}));
    for (size_t i = 0; i < 4; ++i)
        CHECK(y.values()[i] == doctest::Approx(2.0f * x.values()[i]));
}

TEST_CASE("conv1d_temporal matches brute-force oracle") {
    Rng rng(11);
    Tensor x = Tensor::randn({2, 3, 5, 2, 3}, rng);
    Tensor w = Tensor::randn({4, 3, 3}, rng);
    Tensor b = Tensor::randn({4}, rng);
    CHECK(oracle::max_abs_diff(conv1d_temporal(x, w, b), oracle::conv1d_temporal_naive(x, w, b)) < 1e-5);
}

TEST_CASE("group_norm: constant input maps to beta") {
    Tensor x = Tensor::full({2, 4, 3}, 5.0f);
    Tensor y = group_norm(x, 2, Tensor::ones({4}), Tensor::zeros({4}));
    for (float v : y.values()) CHECK(std::abs(v) < 1e-3);  // 0 up to eps scaling
}

TEST_CASE("group_norm: per-group statistics are normalized") {
    Rng rng(5);
    Tensor x = Tensor::randn({2, 8, 6}, rng);
    Tensor y = group_norm(x, 4, Tensor::ones({8}), Tensor::zeros({8}));
    // each (sample, group) slice: mean ~ 0, var ~ 1
    for (size_t n = 0; n < 2; ++n)
        for (size_t g = 0; g < 4; ++g) {
            double sum = 0, sq = 0;
            for (size_t c = 0; c < 2; ++c)
                for (size_t s = 0; s < 6; ++s) {
                    double v = y.at({n, g * 2 + c, s});
                    sum += v;
                    sq += v * v;
                }
            double mean = sum / 12.0, var = sq / 12.0 - mean * mean;
            CHECK(std::abs(mean) < 1e-6);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
        }
}

TEST_CASE("group_norm: two-element group [1,3] -> [-1,1]") {
    Tensor x = Tensor::from_data({1, 1, 2}, {1, 3});
    Tensor y = group_norm(x, 1, Tensor::ones({1}), Tensor::zeros({1}));
    CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("group_norm rejects indivisible channels") {
    CHECK_THROWS(group_norm(Tensor::zeros({1, 6, 2}), 4, Tensor::ones({6}), Tensor::zeros({6})));
}

TEST_CASE("attention: single key returns projected value for any query") {
    Rng rng(9);
    AttentionParams p = make_attention(8, 8, 2, rng);
    Tensor ctx = Tensor::randn({1, 1, 8}, rng);
    Tensor q1 = Tensor::randn({1, 3, 8}, rng);
    Tensor q2 = Tensor::randn({1, 3, 8}, rng);
    Tensor y1 = multi_head_attention(q1, ctx, p);
    Tensor y2 = multi_head_attention(q2, ctx, p);
    CHECK(oracle::max_abs_diff(y1, y2) < 1e-6);
    // every query row equals the same projected value
    for (size_t l = 1; l < 3; ++l)
        for (size_t c = 0; c < 8; ++c)
            CHECK(y1.at({0, l, c}) == doctest::Approx(y1.at({0, 0, c})).epsilon(1e-6));
}

TEST_CASE("attention: identical keys average the values") {
    Rng rng(13);
    size_t dim = 4;
    AttentionParams p = make_attention(dim, dim, 1, rng);
    // identity value/output projections expose the raw mean of values
    p.wv = Tensor::from_data({dim, dim}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    p.wo = p.wv.clone();
    Tensor ctx = Tensor::randn({1, 5, dim}, rng);
    // overwrite keys by making all context rows project to the same key:
    // zero key projection => all keys equal => uniform weights
    p.wk = Tensor::zeros({dim, dim});
    Tensor q = Tensor::randn({1, 2, dim}, rng);
    Tensor y = multi_head_attention(q, ctx, p);
    for (size_t c = 0; c < dim; ++c) {
        double mean = 0;
        for (size_t j = 0; j < 5; ++j) mean += ctx.at({0, j, c});
        mean /= 5.0;
        CHECK(y.at({0, 0, c}) == doctest::Approx(mean).epsilon(1e-5));
        CHECK(y.at({0, 1, c}) == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("attention matches scalar oracle, 1 head d=2 L=2") {
    size_t dim = 2;
    AttentionParams p;
    p.heads = 1;
    p.head_dim = 2;
    // identity projections: attention acts on raw inputs
    p.wq = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    p.wk = p.wq.clone();
    p.wv = p.wq.clone();
    p.wo = p.wq.clone();
    p.bq = Tensor::zeros({2});
    p.bk = Tensor::zeros({2});
    p.bv = Tensor::zeros({2});
    p.bo = Tensor::zeros({2});
    Tensor x = Tensor::from_data({1, 2, 2}, {0.5f, -1.0f, 2.0f, 0.25f});
    Tensor y = multi_head_attention(x, x, p);

    std::vector<double> xd(x.values().begin(), x.values().end());
    auto ref = oracle::attention_naive(xd, xd, xd, 2, 2, dim);
    for (size_t i = 0; i < 4; ++i)
        CHECK(double(y.values()[i]) == doctest::Approx(ref[i]).epsilon(1e-6));
}

TEST_CASE("attention matches scalar oracle with random projections") {
    Rng rng(21);
    AttentionParams p = make_attention(4, 4, 1, rng);
    Tensor x = Tensor::randn({1, 3, 4}, rng);
    Tensor y = multi_head_attention(x, x, p);

    // oracle path: project with doubles, run naive attention, project out
    auto project = [&](const Tensor& w, const Tensor& b) {
        std::vector<double> out(3 * 4, 0.0);
        for (size_t l = 0; l < 3; ++l)
            for (size_t j = 0; j < 4; ++j) {
                double acc = b.values()[j];
                for (size_t i = 0; i < 4; ++i) acc += double(x.at({0, l, i})) * w.at({i, j});
                out[l * 4 + j] = acc;
            }
        return out;
    };
    auto q = project(p.wq, p.bq), k = project(p.wk, p.bk), v = project(p.wv, p.bv);
    auto att = oracle::attention_naive(q, k, v, 3, 3, 4);
    for (size_t l = 0; l < 3; ++l)
        for (size_t j = 0; j < 4; ++j) {
            double acc = p.bo.values()[j];
            for (size_t i = 0; i < 4; ++i) acc += att[l * 4 + i] * p.wo.at({i, j});
            CHECK(double(y.at({0, l, j})) == doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("self-attention is permutation-equivariant over positions") {
    Rng rng(31);
    AttentionParams p = make_attention(8, 8, 2, rng);
    Tensor x = Tensor::randn({1, 5, 8}, rng);
    Tensor y = multi_head_attention(x, x, p);

    std::vector<size_t> perm{3, 0, 4, 1, 2};
    std::vector<float> px(5 * 8);
    for (size_t l = 0; l < 5; ++l)
        for (size_t c = 0; c < 8; ++c) px[l * 8 + c] = x.at({0, perm[l], c});
    Tensor xp = Tensor::from_data({1, 5, 8}, std::move(px));
    Tensor yp = multi_head_attention(xp, xp, p);
    for (size_t l = 0; l < 5; ++l)
        for (size_t c = 0; c < 8; ++c)
            CHECK(yp.at({0, l, c}) == doctest::Approx(y.at({0, perm[l], c})).epsilon(1e-5));
}

TEST_CASE("cross-attention output is invariant to permuting context rows") {
    Rng rng(37);
    AttentionParams p = make_attention(8, 6, 2, rng);
    Tensor q = Tensor::randn({1, 4, 8}, rng);
    Tensor ctx = Tensor::randn({1, 5, 6}, rng);
    Tensor y = multi_head_attention(q, ctx, p);

    std::vector<size_t> perm{4, 2, 0, 3, 1};
    std::vector<float> pc(5 * 6);
    for (size_t l = 0; l < 5; ++l)
        for (size_t c = 0; c < 6; ++c) pc[l * 6 + c] = ctx.at({0, perm[l], c});
    Tensor yp = multi_head_attention(q, Tensor::from_data({1, 5, 6}, std::move(pc)), p);
    CHECK(oracle::max_abs_diff(y, yp) < 1e-5);
}

TEST_CASE("attention and norms pass finite differences") {
    Rng rng(41);
    AttentionParams p = make_attention(4, 4, 2, rng);
    Tensor x0 = Tensor::randn({1, 3, 4}, rng);
    Tensor wsum = Tensor::randn({1, 3, 4}, rng);
    CHECK(finite_diff_check(
              [&](const Tensor& x) { return reduce_mean(mul(multi_head_attention(x, x, p), wsum)); },
              x0, 1e-3) < 1e-3);

    Tensor g0 = Tensor::randn({2, 4, 3}, rng);
    Tensor gamma = Tensor::randu({4}, rng, 0.5f, 1.5f);
    Tensor beta = Tensor::randn({4}, rng);
    Tensor wg = Tensor::randn({2, 4, 3}, rng);
    CHECK(finite_diff_check(
              [&](const Tensor& x) { return reduce_mean(mul(group_norm(x, 2, gamma, beta), wg)); },
              g0, 1e-3) < 1e-3);
    // affine params too
    CHECK(finite_diff_check(
              [&](const Tensor& ga) { return reduce_mean(mul(group_norm(g0, 2, ga, beta), wg)); },
              gamma, 1e-3) < 1e-3);
}

TEST_CASE("convs pass finite differences wrt input, weight and bias") {
    Rng rng(43);
    Tensor x0 = Tensor::randn({1, 2, 3, 3}, rng);
    Tensor w0 = Tensor::randn({2, 2, 3, 3}, rng);
    Tensor b0 = Tensor::randn({2}, rng);
    Tensor ws = Tensor::randn({1, 2, 3, 3}, rng);
    auto wrap2 = [&](const Tensor& y) { return reduce_mean(mul(y, ws)); };
    // the probe is linear in each argument, so a large step has zero
    // truncation error and keeps float32 quantization out of the quotient
    CHECK(finite_diff_check([&](const Tensor& x) { return wrap2(conv2d(x, w0, b0)); }, x0, 0.25) < 1e-3);
    CHECK(finite_diff_check([&](const Tensor& w) { return wrap2(conv2d(x0, w, b0)); }, w0, 0.25) < 1e-3);
    CHECK(finite_diff_check([&](const Tensor& b) { return wrap2(conv2d(x0, w0, b)); }, b0, 0.25) < 1e-3);

    Tensor xt = Tensor::randn({1, 2, 4, 2, 2}, rng);
    Tensor wt = Tensor::randn({2, 2, 3}, rng);
    Tensor wst = Tensor::randn({1, 2, 4, 2, 2}, rng);
    auto wrap1 = [&](const Tensor& y) { return reduce_mean(mul(y, wst)); };
    CHECK(finite_diff_check([&](const Tensor& x) { return wrap1(conv1d_temporal(x, wt, b0)); }, xt, 0.25) < 1e-3);
    CHECK(finite_diff_check([&](const Tensor& w) { return wrap1(conv1d_temporal(xt, w, b0)); }, wt, 0.25) < 1e-3);

    Tensor xu = Tensor::randn({1, 2, 2, 2}, rng);
    Tensor wsu = Tensor::randn({1, 2, 4, 4}, rng);
    CHECK(finite_diff_check(
              [&](const Tensor& x) { return reduce_mean(mul(upsample_nearest2x(x), wsu)); }, xu, 0.25) < 1e-3);
}

TEST_CASE("timestep embedding: t=0 gives zeros and ones") {
    Tensor e = timestep_embedding({0}, 8);
    for (size_t i = 0; i < 4; ++i) CHECK(e.values()[i] == 0.0f);
    for (size_t i = 4; i < 8; ++i) CHECK(e.values()[i] == 1.0f);
}

TEST_CASE("timestep embedding: frequency-0 component at t=1 is sin(1)") {
    Tensor e = timestep_embedding({1}, 16);
    CHECK(e.values()[0] == doctest::Approx(0.8414709848078965).epsilon(1e-6));
    CHECK(e.values()[8] == doctest::Approx(std::cos(1.0)).epsilon(1e-6));
}

TEST_CASE("timestep embedding is injective over [0,1000)") {
    std::vector<int> ts(1000);
    for (int i = 0; i < 1000; ++i) ts[i] = i;
    Tensor e = timestep_embedding(ts, 32);
    std::set<std::vector<float>> seen;
    for (size_t j = 0; j < 1000; ++j) {
        std::vector<float> row(e.values().begin() + j * 32, e.values().begin() + (j + 1) * 32);
        CHECK(seen.insert(row).second);
    }
    CHECK_THROWS(timestep_embedding({0}, 7));  // odd dim
}

TEST_CASE("upsample_nearest2x duplicates pixels") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = upsample_nearest2x(x);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    CHECK(y.at({0, 0, 0, 1}) == 1.0f);
    CHECK(y.at({0, 0, 1, 0}) == 1.0f);
    CHECK(y.at({0, 0, 3, 3}) == 4.0f);
}
