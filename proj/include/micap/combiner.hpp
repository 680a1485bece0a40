#pragma once

#include <string>
#include <utility>
#include <vector>

#include "micap/capture.hpp"
#include "micap/nn.hpp"

namespace micap {

// ---------------------------------------------------------------------------
// Parameters

struct CombinerParams {
    Tensor vcls;  // [1 x D] learned video summary token, prepended to x_v
    std::vector<TransformerBlockParams> video_blocks;  // video queries over audio keys
    std::vector<TransformerBlockParams> audio_blocks;  // audio queries over video keys
    LayerNormParams agg_ln;
    LinearParams pool_video;  // [D x D]
    LinearParams pool_audio;
};

inline CombinerParams make_combiner(ParamStore& ps, Rng& rng, const std::string& prefix,
                                    const AttentionConfig& cfg, int num_layers,
                                    int ffn_hidden) {
    if (num_layers < 1) throw ConfigError("combiner: num_layers must be >= 1");
    CombinerParams p;
    p.vcls = ps.randn(rng, prefix + ".vcls", {1, cfg.model_dim}, 0.02);
    for (int l = 0; l < num_layers; ++l) {
        p.video_blocks.push_back(make_transformer_block(
            ps, rng, prefix + ".v" + std::to_string(l), cfg, ffn_hidden));
        p.audio_blocks.push_back(make_transformer_block(
            ps, rng, prefix + ".a" + std::to_string(l), cfg, ffn_hidden));
    }
    p.agg_ln = make_layer_norm(ps, prefix + ".agg_ln", cfg.model_dim);
    p.pool_video = make_linear(ps, rng, prefix + ".pool_v", cfg.model_dim, cfg.model_dim);
    p.pool_audio = make_linear(ps, rng, prefix + ".pool_a", cfg.model_dim, cfg.model_dim);
    return p;
}

// ---------------------------------------------------------------------------
// Operations

struct CoAttendResult {
    Tensor z_v;
    Tensor z_a;
};

// Symmetric co-attention, repeated num_layers times with a simultaneous
// update: both branches of layer l read the layer l-1 state of the opposite
// branch. Key-validity vectors mark which rows may be attended (empty = all).
inline CoAttendResult co_attend(const Tensor& x_v, const Tensor& x_a, int num_layers,
                                const AttentionConfig& cfg,
                                const std::vector<TransformerBlockParams>& video_blocks,
                                const std::vector<TransformerBlockParams>& audio_blocks,
                                const std::vector<uint8_t>& audio_key_valid = {},
                                const std::vector<uint8_t>& video_key_valid = {},
                                CoAttnCapture* capture = nullptr,
                                const ForwardCtx* ctx = nullptr) {
    if (num_layers < 1) throw ConfigError("co_attend: num_layers must be >= 1");
    if (static_cast<int>(video_blocks.size()) != num_layers ||
        static_cast<int>(audio_blocks.size()) != num_layers)
        throw ConfigError("co_attend: parameter layer count != num_layers");
    if (x_v.cols() != x_a.cols()) throw ShapeError("co_attend: modality dims differ");

    Mask video_branch_mask = audio_key_valid.empty()
                                 ? Mask::none()
                                 : Mask::padding(x_v.rows(), audio_key_valid);
    Mask audio_branch_mask = video_key_valid.empty()
                                 ? Mask::none()
                                 : Mask::padding(x_a.rows(), video_key_valid);

    Tensor z_v = x_v, z_a = x_a;
    for (int l = 0; l < num_layers; ++l) {
        auto v_next = transformer_block(z_v, z_a, cfg, video_blocks[l], video_branch_mask, ctx);
        auto a_next = transformer_block(z_a, z_v, cfg, audio_blocks[l], audio_branch_mask, ctx);
        if (capture) {
            capture->layers.emplace_back();
            auto& slot = capture->layers.back();
            for (const auto& hw : v_next.head_weights)
                slot[CoAttnCapture::kVideoQueries].push_back(RawMatrix::from_tensor(hw));
            for (const auto& hw : a_next.head_weights)
                slot[CoAttnCapture::kAudioQueries].push_back(RawMatrix::from_tensor(hw));
        }
        z_v = v_next.out;
        z_a = a_next.out;
    }
    return {z_v, z_a};
}

// z_va = norm([z_v; z_a]): concatenation along the sequence axis, layer norm
// over features. Either side may be left undefined for the single-modality
// variants.
inline Tensor aggregate(const Tensor& z_v, const Tensor& z_a, const LayerNormParams& p) {
    if (!z_v.defined() && !z_a.defined())
        throw ShapeError("aggregate: both modalities empty");
    if (!z_a.defined()) return layer_norm(z_v, p);
    if (!z_v.defined()) return layer_norm(z_a, p);
    if (z_v.cols() != z_a.cols()) throw ShapeError("aggregate: feature dims differ");
    return layer_norm(concat_rows({z_v, z_a}), p);
}

// c_m = tanh(W_pool_m * first_row(z_m) + b_m)
inline std::pair<Tensor, Tensor> pool_modalities(const Tensor& z_v, const Tensor& z_a,
                                                 const LinearParams& pool_video,
                                                 const LinearParams& pool_audio) {
    if (!z_v.defined() || z_v.rows() < 1 || !z_a.defined() || z_a.rows() < 1)
        throw ContractError("pool_modalities: empty modality branch");
    Tensor c_v = tanh_op(linear(first_row(z_v), pool_video));
    Tensor c_a = tanh_op(linear(first_row(z_a), pool_audio));
    return {c_v, c_a};
}

// ---------------------------------------------------------------------------
// Full fusion pass

struct FusionOutput {
    Tensor z_v;   // [(1 + T*P) x D], row 0 is the [VCLS] summary token
    Tensor z_a;   // [S x D]
    Tensor z_va;  // [(1 + T*P + S) x D]
    Tensor c_v;   // [1 x D]
    Tensor c_a;   // [1 x D]
    std::vector<uint8_t> z_va_key_valid;  // pads of the audio block flagged 0
    CoAttnCapture capture;                // filled only when requested
};

inline FusionOutput fuse_modalities(const Tensor& x_v, const Tensor& x_a,
                                    const std::vector<uint8_t>& audio_valid,
                                    const AttentionConfig& cfg, const CombinerParams& p,
                                    bool want_capture = false,
                                    const ForwardCtx* ctx = nullptr) {
    FusionOutput out;
    Tensor v_in = concat_rows({p.vcls, x_v});
    auto co = co_attend(v_in, x_a, static_cast<int>(p.video_blocks.size()), cfg,
                        p.video_blocks, p.audio_blocks, audio_valid, {},
                        want_capture ? &out.capture : nullptr, ctx);
    out.z_v = co.z_v;
    out.z_a = co.z_a;
    out.z_va = aggregate(out.z_v, out.z_a, p.agg_ln);
    auto pooled = pool_modalities(out.z_v, out.z_a, p.pool_video, p.pool_audio);
    out.c_v = pooled.first;
    out.c_a = pooled.second;
    out.z_va_key_valid.assign(static_cast<size_t>(out.z_v.rows()), 1);
    if (audio_valid.empty())
        out.z_va_key_valid.insert(out.z_va_key_valid.end(), out.z_a.rows(), 1);
    else
        out.z_va_key_valid.insert(out.z_va_key_valid.end(), audio_valid.begin(),
                                  audio_valid.end());
    return out;
}

}  // namespace micap
