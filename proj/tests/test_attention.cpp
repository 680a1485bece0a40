#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "micap/gradcheck.hpp"
#include "micap/nn.hpp"

using namespace micap;

namespace {

Tensor identity_mat(int n) {
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    return Tensor::from_data({n, n}, std::move(v));
}

// Plain-loop reference that materializes each head separately; no Eigen, no
// shared code with the implementation.
std::vector<double> mha_reference(const Tensor& x, const Tensor& z, const AttentionConfig& cfg,
                                  const MhaParams& p) {
    const int n = x.rows(), m = z.rows(), big_d = cfg.model_dim, heads = cfg.num_heads;
    const int d = big_d / heads;
    std::vector<double> cat(static_cast<size_t>(n) * big_d, 0.0);
    for (int h = 0; h < heads; ++h) {
        std::vector<double> q(static_cast<size_t>(n) * d, 0.0), k(static_cast<size_t>(m) * d, 0.0),
            v(static_cast<size_t>(m) * d, 0.0);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c)
                for (int j = 0; j < big_d; ++j)
                    q[static_cast<size_t>(i) * d + c] += x.at(i, j) * p.wq[h].at(j, c);
        for (int i = 0; i < m; ++i)
            for (int c = 0; c < d; ++c)
                for (int j = 0; j < big_d; ++j) {
                    k[static_cast<size_t>(i) * d + c] += z.at(i, j) * p.wk[h].at(j, c);
                    v[static_cast<size_t>(i) * d + c] += z.at(i, j) * p.wv[h].at(j, c);
                }
        for (int i = 0; i < n; ++i) {
            std::vector<double> s(m, 0.0);
            double mx = -1e300;
            for (int j = 0; j < m; ++j) {
                for (int c = 0; c < d; ++c)
                    s[j] += q[static_cast<size_t>(i) * d + c] * k[static_cast<size_t>(j) * d + c];
                s[j] /= std::sqrt(static_cast<double>(d));
                mx = std::max(mx, s[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < m; ++j) {
                s[j] = std::exp(s[j] - mx);
                sum += s[j];
            }
            for (int j = 0; j < m; ++j) s[j] /= sum;
            for (int c = 0; c < d; ++c) {
                double acc = 0.0;
                for (int j = 0; j < m; ++j) acc += s[j] * v[static_cast<size_t>(j) * d + c];
                cat[static_cast<size_t>(i) * big_d + h * d + c] = acc;
            }
        }
    }
    std::vector<double> out(static_cast<size_t>(n) * big_d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < big_d; ++j) {
            double acc = p.bo.values()[j];
            for (int c = 0; c < big_d; ++c)
                acc += cat[static_cast<size_t>(i) * big_d + c] * p.wo.at(c, j);
            out[static_cast<size_t>(i) * big_d + j] = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("scaled_dot_attention: uniform softmax when scores vanish", "[attention]") {
    // Q orthogonal to all K rows -> QK^T all zeros
    Tensor q = Tensor::from_data({1, 2}, {0.0, 0.0});
    Tensor k = Tensor::from_data({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor v = Tensor::from_data({3, 2}, {3, 6, 0, 9, 6, 0});
    auto r = scaled_dot_attention(q, k, v);
    REQUIRE(r.out.at(0, 0) == Catch::Approx(3.0));  // column means of V
    REQUIRE(r.out.at(0, 1) == Catch::Approx(5.0));
    for (int j = 0; j < 3; ++j) REQUIRE(r.weights.at(0, j) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("scaled_dot_attention: single key takes all the weight", "[attention]") {
    Rng rng(4);
    Tensor q = Tensor::randn(rng, {3, 4}, 1.0);
    Tensor k = Tensor::randn(rng, {1, 4}, 1.0);
    Tensor v = Tensor::randn(rng, {1, 4}, 1.0);
    auto r = scaled_dot_attention(q, k, v);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(r.weights.at(i, 0) == 1.0);
        for (int j = 0; j < 4; ++j) REQUIRE(r.out.at(i, j) == Catch::Approx(v.at(0, j)));
    }
}

TEST_CASE("scaled_dot_attention: hand-evaluated 1x2 case", "[attention]") {
    Tensor q = Tensor::from_data({1, 2}, {1, 0});
    Tensor k = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor v = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto r = scaled_dot_attention(q, k, v);
    // scalar hand evaluation: scores = [1/sqrt(2), 0]
    double s0 = 1.0 / std::sqrt(2.0), s1 = 0.0;
    double e0 = std::exp(s0), e1 = std::exp(s1);
    double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    REQUIRE(r.weights.at(0, 0) == Catch::Approx(w0).epsilon(1e-14));
    REQUIRE(r.weights.at(0, 1) == Catch::Approx(w1).epsilon(1e-14));
    REQUIRE(r.out.at(0, 0) == Catch::Approx(w0 * 1.0 + w1 * 3.0).epsilon(1e-14));
    REQUIRE(r.out.at(0, 1) == Catch::Approx(w0 * 2.0 + w1 * 4.0).epsilon(1e-14));
}

TEST_CASE("scaled_dot_attention: shape errors name the operand", "[attention]") {
    Tensor q = Tensor::zeros({2, 3});
    Tensor k = Tensor::zeros({2, 4});
    Tensor v = Tensor::zeros({3, 4});
    REQUIRE_THROWS_WITH(scaled_dot_attention(q, k, Tensor::zeros({2, 4})),
                        Catch::Matchers::ContainsSubstring("operand K"));
    Tensor k2 = Tensor::zeros({2, 3});
    REQUIRE_THROWS_WITH(scaled_dot_attention(q, k2, v),
                        Catch::Matchers::ContainsSubstring("operand V"));
    Mask bad = Mask::causal(5);
    REQUIRE_THROWS_WITH(scaled_dot_attention(q, k2, Tensor::zeros({2, 3}), bad),
                        Catch::Matchers::ContainsSubstring("operand mask"));
}

TEST_CASE("attention weights are row-stochastic on randomized calls", "[attention][property]") {
    Rng rng(123);
    for (int it = 0; it < 200; ++it) {
        int nq = 1 + static_cast<int>(rng.uniform_int(6));
        int nv = 1 + static_cast<int>(rng.uniform_int(6));
        int d = 1 + static_cast<int>(rng.uniform_int(8));
        Tensor q = Tensor::randn(rng, {nq, d}, 3.0);
        Tensor k = Tensor::randn(rng, {nv, d}, 3.0);
        Tensor v = Tensor::randn(rng, {nv, d}, 3.0);
        auto r = scaled_dot_attention(q, k, v);
        for (int i = 0; i < nq; ++i) {
            double sum = 0.0;
            for (int j = 0; j < nv; ++j) {
                double w = r.weights.at(i, j);
                REQUIRE(w >= 0.0);
                REQUIRE(w <= 1.0);
                sum += w;
            }
            REQUIRE(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("multi_head_attention: single identity head degenerates to plain attention",
          "[attention]") {
    Rng rng(9);
    const int d = 4;
    AttentionConfig cfg{d, 1, 0.0};
    MhaParams p;
    p.wq = {identity_mat(d)};
    p.wk = {identity_mat(d)};
    p.wv = {identity_mat(d)};
    p.wo = identity_mat(d);
    p.bo = Tensor::zeros({d});
    Tensor x = Tensor::randn(rng, {3, d}, 1.0);
    Tensor z = Tensor::randn(rng, {5, d}, 1.0);
    auto got = multi_head_attention(x, z, cfg, p);
    auto expect = scaled_dot_attention(x, z, z);
    REQUIRE(got.out.values() == expect.out.values());
    REQUIRE(got.head_weights.size() == 1);
    REQUIRE(got.head_weights[0].values() == expect.weights.values());
}

TEST_CASE("multi_head_attention: causal self-attention at t=0 sees only row 0", "[attention]") {
    Rng rng(10);
    AttentionConfig cfg{8, 2, 0.0};
    ParamStore ps;
    MhaParams p = make_mha(ps, rng, "mha", cfg);
    Tensor z = Tensor::randn(rng, {4, 8}, 1.0);
    auto base = multi_head_attention(z, z, cfg, p, Mask::causal(4));

    Tensor z2 = z.detached_copy();
    for (int i = 1; i < 4; ++i)
        for (int j = 0; j < 8; ++j) z2.values()[static_cast<size_t>(i) * 8 + j] += rng.normal();
    auto perturbed = multi_head_attention(z2, z2, cfg, p, Mask::causal(4));
    for (int j = 0; j < 8; ++j) REQUIRE(base.out.at(0, j) == perturbed.out.at(0, j));
}

TEST_CASE("multi_head_attention: matches per-head brute-force oracle", "[attention]") {
    Rng rng(21);
    AttentionConfig cfg{8, 2, 0.0};
    ParamStore ps;
    MhaParams p = make_mha(ps, rng, "mha", cfg);
    Tensor x = Tensor::randn(rng, {3, 8}, 1.0);
    Tensor z = Tensor::randn(rng, {3, 8}, 1.0);
    auto got = multi_head_attention(x, z, cfg, p);
    auto expect = mha_reference(x, z, cfg, p);
    REQUIRE(got.out.values().size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i)
        REQUIRE(got.out.values()[i] == Catch::Approx(expect[i]).margin(1e-12));
    REQUIRE(static_cast<int>(got.head_weights.size()) == cfg.num_heads);
}

TEST_CASE("multi_head_attention: indivisible head count is a config error", "[attention]") {
    AttentionConfig cfg{6, 4, 0.0};
    REQUIRE_THROWS_AS(cfg.head_dim(), ConfigError);
}

TEST_CASE("transformer_block: zero-initialized outputs reduce to identity", "[attention]") {
    Rng rng(31);
    AttentionConfig cfg{4, 2, 0.0};
    ParamStore ps;
    TransformerBlockParams p = make_transformer_block(ps, rng, "blk", cfg, 16);
    // zero the attention output projection and the second FFB affine
    std::fill(p.mha.wo.values().begin(), p.mha.wo.values().end(), 0.0);
    std::fill(p.ffn.fc2.w.values().begin(), p.ffn.fc2.w.values().end(), 0.0);
    Tensor x = Tensor::randn(rng, {3, 4}, 1.0);
    Tensor z = Tensor::randn(rng, {5, 4}, 1.0);
    auto r = transformer_block(x, z, cfg, p);
    REQUIRE(r.out.values() == x.values());
}

TEST_CASE("transformer_block: composition oracle is bitwise equal", "[attention]") {
    Rng rng(32);
    AttentionConfig cfg{4, 2, 0.0};
    ParamStore ps;
    TransformerBlockParams p = make_transformer_block(ps, rng, "blk", cfg, 16);
    Tensor x = Tensor::randn(rng, {2, 4}, 1.0);
    Tensor z = Tensor::randn(rng, {3, 4}, 1.0);
    auto blk = transformer_block(x, z, cfg, p);

    // step-by-step composition out of the public sub-operations
    auto att = multi_head_attention(layer_norm(x, p.ln_q), layer_norm(z, p.ln_kv), cfg, p.mha);
    Tensor a = add(x, att.out);
    Tensor manual = add(a, feed_forward(layer_norm(a, p.ln_f), p.ffn));
    REQUIRE(blk.out.values() == manual.values());
}

TEST_CASE("transformer_block: X==Z reduces to a self-attention encoder block", "[attention]") {
    Rng rng(33);
    AttentionConfig cfg{4, 1, 0.0};
    ParamStore ps;
    TransformerBlockParams p = make_transformer_block(ps, rng, "blk", cfg, 8);
    Tensor x = Tensor::randn(rng, {3, 4}, 1.0);
    auto cross = transformer_block(x, x, cfg, p);
    auto att = multi_head_attention(layer_norm(x, p.ln_q), layer_norm(x, p.ln_kv), cfg, p.mha);
    Tensor a = add(x, att.out);
    Tensor self_block = add(a, feed_forward(layer_norm(a, p.ln_f), p.ffn));
    REQUIRE(cross.out.values() == self_block.values());
}

TEST_CASE("causal mask is lower-triangular", "[attention]") {
    Mask m = Mask::causal(5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) REQUIRE(m.at(i, j) == (j <= i));
}

TEST_CASE("causal stack: perturbing position j>i leaves output i unchanged",
          "[attention][property]") {
    Rng rng(77);
    AttentionConfig cfg{8, 2, 0.0};
    ParamStore ps;
    auto b1 = make_transformer_block(ps, rng, "b1", cfg, 32);
    auto b2 = make_transformer_block(ps, rng, "b2", cfg, 32);
    const int n = 5;
    Tensor x = Tensor::randn(rng, {n, 8}, 1.0);
    auto run = [&](const Tensor& in) {
        auto h1 = transformer_block(in, in, cfg, b1, Mask::causal(n));
        auto h2 = transformer_block(h1.out, h1.out, cfg, b2, Mask::causal(n));
        return h2.out;
    };
    Tensor base = run(x);
    for (int j = 1; j < n; ++j) {
        Tensor xp = x.detached_copy();
        for (int c = 0; c < 8; ++c) xp.values()[static_cast<size_t>(j) * 8 + c] += 1.0;
        Tensor out = run(xp);
        for (int i = 0; i < j; ++i)
            for (int c = 0; c < 8; ++c) REQUIRE(out.at(i, c) == base.at(i, c));
    }
}

TEST_CASE("grad_check through attention and a transformer block", "[attention][grad]") {
    Rng rng(55);
    SECTION("scaled_dot_attention composed with sum") {
        auto op = [](const std::vector<Tensor>& in) {
            return sum_all(scaled_dot_attention(in[0], in[1], in[2]).out);
        };
        double err = grad_check(
            op, {Tensor::randn(rng, {3, 4}, 1.0), Tensor::randn(rng, {5, 4}, 1.0),
                 Tensor::randn(rng, {5, 4}, 1.0)});
        REQUIRE(err < 1e-4);
    }
    SECTION("full block w.r.t. inputs and every parameter") {
        AttentionConfig cfg{4, 2, 0.0};
        ParamStore ps;
        auto p = make_transformer_block(ps, rng, "blk", cfg, 8);
        Tensor x = Tensor::randn(rng, {2, 4}, 1.0);
        Tensor z = Tensor::randn(rng, {3, 4}, 1.0);
        Tensor probe = Tensor::randn(rng, {2, 4}, 1.0);
        std::vector<Tensor> inputs = {x, z};
        for (auto& [name, t] : ps.items()) inputs.push_back(t);
        auto op = [&](const std::vector<Tensor>& in) {
            return mean_all(mul(transformer_block(in[0], in[1], cfg, p).out, probe));
        };
        REQUIRE(grad_check(op, inputs) < 1e-4);
    }
}
