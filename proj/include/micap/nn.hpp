#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "micap/ops.hpp"
#include "micap/params.hpp"

namespace micap {

struct AttentionConfig {
    int model_dim = 64;
    int num_heads = 4;
    double dropout_rate = 0.0;

    int head_dim() const {
        if (model_dim <= 0 || num_heads <= 0)
            throw ConfigError("AttentionConfig: model_dim and num_heads must be positive");
        if (model_dim % num_heads != 0)
            throw ConfigError("AttentionConfig: model_dim " + std::to_string(model_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
        return model_dim / num_heads;
    }
};

// Carries training-time randomness; a null context means eval semantics
// (dropout off), which is also the desk-scale default.
struct ForwardCtx {
    double dropout_rate = 0.0;
    Rng* rng = nullptr;

    bool dropout_active() const { return rng != nullptr && dropout_rate > 0.0; }
};

// ---------------------------------------------------------------------------
// Parameter bundles

struct LinearParams {
    Tensor w;  // [in x out]
    Tensor b;  // [out]
};

inline LinearParams make_linear(ParamStore& ps, Rng& rng, const std::string& prefix, int in,
                                int out, double stddev = 0.02) {
    return {ps.randn(rng, prefix + ".w", {in, out}, stddev), ps.zeros(prefix + ".b", {out})};
}

inline Tensor linear(const Tensor& x, const LinearParams& p) {
    return add_row_broadcast(matmul(x, p.w), p.b);
}

struct LayerNormParams {
    Tensor gain;  // [d]
    Tensor bias;  // [d]
};

inline LayerNormParams make_layer_norm(ParamStore& ps, const std::string& prefix, int d) {
    return {ps.ones(prefix + ".gain", {d}), ps.zeros(prefix + ".bias", {d})};
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return layer_norm_rows(x, gain, bias, 1e-5);
}

inline Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
    return layer_norm_rows(x, p.gain, p.bias, 1e-5);
}

struct MhaParams {
    std::vector<Tensor> wq, wk, wv;  // per head [D x d]
    Tensor wo;                       // [D x D]
    Tensor bo;                       // [D]
};

inline MhaParams make_mha(ParamStore& ps, Rng& rng, const std::string& prefix,
                          const AttentionConfig& cfg) {
    const int d = cfg.head_dim();
    MhaParams p;
    for (int h = 0; h < cfg.num_heads; ++h) {
        std::string hp = prefix + ".h" + std::to_string(h);
        p.wq.push_back(ps.randn(rng, hp + ".wq", {cfg.model_dim, d}, 0.02));
        p.wk.push_back(ps.randn(rng, hp + ".wk", {cfg.model_dim, d}, 0.02));
        p.wv.push_back(ps.randn(rng, hp + ".wv", {cfg.model_dim, d}, 0.02));
    }
    p.wo = ps.randn(rng, prefix + ".wo", {cfg.model_dim, cfg.model_dim}, 0.02);
    p.bo = ps.zeros(prefix + ".bo", {cfg.model_dim});
    return p;
}

struct FfnParams {
    LinearParams fc1;  // [D x hidden]
    LinearParams fc2;  // [hidden x D]
};

inline FfnParams make_ffn(ParamStore& ps, Rng& rng, const std::string& prefix, int d,
                          int hidden) {
    return {make_linear(ps, rng, prefix + ".fc1", d, hidden),
            make_linear(ps, rng, prefix + ".fc2", hidden, d)};
}

// two affine maps with GELU between
inline Tensor feed_forward(const Tensor& x, const FfnParams& p, const ForwardCtx* ctx = nullptr) {
    Tensor h = gelu(linear(x, p.fc1));
    if (ctx && ctx->dropout_active()) h = dropout(h, ctx->dropout_rate, *ctx->rng);
    return linear(h, p.fc2);
}

struct TransformerBlockParams {
    LayerNormParams ln_q;   // norm on the query-side input
    LayerNormParams ln_kv;  // norm on the key/value-side input
    LayerNormParams ln_f;   // norm before the feed-forward block
    MhaParams mha;
    FfnParams ffn;
};

inline TransformerBlockParams make_transformer_block(ParamStore& ps, Rng& rng,
                                                     const std::string& prefix,
                                                     const AttentionConfig& cfg,
                                                     int ffn_hidden) {
    TransformerBlockParams p;
    p.ln_q = make_layer_norm(ps, prefix + ".ln_q", cfg.model_dim);
    p.ln_kv = make_layer_norm(ps, prefix + ".ln_kv", cfg.model_dim);
    p.ln_f = make_layer_norm(ps, prefix + ".ln_f", cfg.model_dim);
    p.mha = make_mha(ps, rng, prefix + ".mha", cfg);
    p.ffn = make_ffn(ps, rng, prefix + ".ffn", cfg.model_dim, ffn_hidden);
    return p;
}

// ---------------------------------------------------------------------------
// Attention

struct AttentionResult {
    Tensor out;      // [Nq x d]
    Tensor weights;  // [Nq x Nv], row-stochastic
};

// out = softmax(Q K^T / sqrt(d)) V, masked entries dropped pre-softmax.
inline AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                            const Mask& mask = Mask::none(),
                                            const ForwardCtx* ctx = nullptr) {
    if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2)
        throw ShapeError("scaled_dot_attention: operands must be 2-D");
    if (q.cols() != k.cols())
        throw ShapeError("scaled_dot_attention: operand K inner dim " + std::to_string(k.cols()) +
                         " != Q inner dim " + std::to_string(q.cols()));
    if (k.rows() != v.rows())
        throw ShapeError("scaled_dot_attention: operand V row count " + std::to_string(v.rows()) +
                         " != K row count " + std::to_string(k.rows()));
    if (!mask.is_none() && (mask.q_len != q.rows() || mask.k_len != k.rows()))
        throw ShapeError("scaled_dot_attention: operand mask dims (" + std::to_string(mask.q_len) +
                         "x" + std::to_string(mask.k_len) + ") != (Nq x Nv)");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
    Tensor weights = softmax_rows(scores, mask);
    Tensor applied = weights;
    if (ctx && ctx->dropout_active()) applied = dropout(weights, ctx->dropout_rate, *ctx->rng);
    return {matmul(applied, v), weights};
}

struct MhaResult {
    Tensor out;                        // [n x D]
    std::vector<Tensor> head_weights;  // per head [n x m]
};

inline MhaResult multi_head_attention(const Tensor& x, const Tensor& z,
                                      const AttentionConfig& cfg, const MhaParams& p,
                                      const Mask& mask = Mask::none(),
                                      const ForwardCtx* ctx = nullptr) {
    const int d = cfg.head_dim();
    (void)d;
    if (x.cols() != cfg.model_dim)
        throw ShapeError("multi_head_attention: operand X last dim != model_dim");
    if (z.cols() != cfg.model_dim)
        throw ShapeError("multi_head_attention: operand Z last dim != model_dim");
    std::vector<Tensor> head_outs, head_weights;
    head_outs.reserve(cfg.num_heads);
    for (int h = 0; h < cfg.num_heads; ++h) {
        auto att = scaled_dot_attention(matmul(x, p.wq[h]), matmul(z, p.wk[h]),
                                        matmul(z, p.wv[h]), mask, ctx);
        head_outs.push_back(att.out);
        head_weights.push_back(att.weights);
    }
    Tensor cat = cfg.num_heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return {add_row_broadcast(matmul(cat, p.wo), p.bo), std::move(head_weights)};
}

struct BlockResult {
    Tensor out;
    std::vector<Tensor> head_weights;
};

// Pre-norm residual cross-attention block: FFB(MHA(X, Z, Z)) with
// norm -> sublayer -> add around both sublayers.
inline BlockResult transformer_block(const Tensor& x, const Tensor& z,
                                     const AttentionConfig& cfg,
                                     const TransformerBlockParams& p,
                                     const Mask& mask = Mask::none(),
                                     const ForwardCtx* ctx = nullptr) {
    auto att = multi_head_attention(layer_norm(x, p.ln_q), layer_norm(z, p.ln_kv), cfg, p.mha,
                                    mask, ctx);
    Tensor a = add(x, att.out);
    Tensor out = add(a, feed_forward(layer_norm(a, p.ln_f), p.ffn, ctx));
    return {out, std::move(att.head_weights)};
}

}  // namespace micap
