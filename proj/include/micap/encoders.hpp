#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "micap/nn.hpp"

namespace micap {

// ---------------------------------------------------------------------------
// Input types

struct VideoClip {
    int frames = 0;  // T
    int h = 0, w = 0;
    std::vector<uint8_t> pixels;  // T*h*w*3 bytes, frame-major, row-major RGB

    void validate() const {
        if (frames < 1) throw ContractError("VideoClip: frame count must be >= 1");
        if (pixels.size() != static_cast<size_t>(frames) * h * w * 3)
            throw ContractError("VideoClip: pixel buffer size does not match T*h*w*3");
    }

    // one frame as a float tensor [h x w*3], values scaled to [0,1]
    Tensor frame_tensor(int t) const {
        std::vector<double> v(static_cast<size_t>(h) * w * 3);
        size_t base = static_cast<size_t>(t) * h * w * 3;
        for (size_t i = 0; i < v.size(); ++i) v[i] = pixels[base + i] / 255.0;
        return Tensor::from_data({h, w * 3}, std::move(v));
    }
};

struct AudioCaption {
    std::vector<int> token_ids;   // length S, [CLS] ... [EOS] [PAD]*
    std::vector<uint8_t> valid;   // 1 = real token, 0 = pad (suffix only)

    void validate() const {
        if (token_ids.size() != valid.size())
            throw ContractError("AudioCaption: ids and mask lengths differ");
        bool seen_pad = false;
        for (uint8_t v : valid) {
            if (!v) seen_pad = true;
            else if (seen_pad)
                throw ContractError("AudioCaption: pad tokens must form a suffix");
        }
    }
};

struct VideoFeatures {
    Tensor tokens;  // [(T*P) x D], frame-major: row t*P+p is patch p of frame t
    int frames = 0;
    int patches_per_frame = 0;
};

// ---------------------------------------------------------------------------
// Parameters

struct PatchEmbedParams {
    LinearParams proj;  // [p*p*3 x D]
    Tensor pos;         // [P x D] learned spatial position embeddings
};

struct VideoEncoderParams {
    PatchEmbedParams patch;
    std::vector<TransformerBlockParams> blocks;  // per-frame self-attention stack
    Tensor temporal;  // [max_T x D] learnable per-frame-index embeddings
};

struct AudioEncoderParams {
    Tensor tok_embed;  // [V x D]
    Tensor pos_embed;  // [S x D]
    std::vector<TransformerBlockParams> blocks;
};

inline VideoEncoderParams make_video_encoder(ParamStore& ps, Rng& rng,
                                             const std::string& prefix,
                                             const AttentionConfig& cfg, int h, int w,
                                             int patch, int layers, int max_frames,
                                             int ffn_hidden) {
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        throw ConfigError("video encoder: frame dims must be divisible by patch size");
    const int p_rows = (h / patch) * (w / patch);
    VideoEncoderParams vp;
    vp.patch.proj =
        make_linear(ps, rng, prefix + ".patch.proj", patch * patch * 3, cfg.model_dim);
    vp.patch.pos = ps.randn(rng, prefix + ".patch.pos", {p_rows, cfg.model_dim}, 0.02);
    for (int l = 0; l < layers; ++l)
        vp.blocks.push_back(make_transformer_block(
            ps, rng, prefix + ".block" + std::to_string(l), cfg, ffn_hidden));
    vp.temporal = ps.randn(rng, prefix + ".temporal", {max_frames, cfg.model_dim}, 0.02);
    return vp;
}

inline AudioEncoderParams make_audio_encoder(ParamStore& ps, Rng& rng,
                                             const std::string& prefix,
                                             const AttentionConfig& cfg, int vocab,
                                             int seq_len, int layers, int ffn_hidden) {
    AudioEncoderParams ap;
    ap.tok_embed = ps.randn(rng, prefix + ".tok_embed", {vocab, cfg.model_dim}, 0.02);
    ap.pos_embed = ps.randn(rng, prefix + ".pos_embed", {seq_len, cfg.model_dim}, 0.02);
    for (int l = 0; l < layers; ++l)
        ap.blocks.push_back(make_transformer_block(
            ps, rng, prefix + ".block" + std::to_string(l), cfg, ffn_hidden));
    return ap;
}

// ---------------------------------------------------------------------------
// Forward

// One frame -> P = (h/p)*(w/p) tokens: affine projection of each flattened
// p x p x 3 patch plus its learned spatial position embedding.
inline Tensor patch_embed(const Tensor& frame, int h, int w, int patch,
                          const PatchEmbedParams& p) {
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        throw ConfigError("patch_embed: dims " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by patch size " + std::to_string(patch));
    if (frame.size() != static_cast<int64_t>(h) * w * 3)
        throw ShapeError("patch_embed: frame tensor size != h*w*3");
    const int gy = h / patch, gx = w / patch;
    const int p_rows = gy * gx, p_cols = patch * patch * 3;
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(p_rows) * p_cols);
    for (int pr = 0; pr < gy; ++pr)
        for (int pc = 0; pc < gx; ++pc)
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    for (int c = 0; c < 3; ++c)
                        idx.push_back((static_cast<int64_t>(pr) * patch + y) * (w * 3) +
                                      (static_cast<int64_t>(pc) * patch + x) * 3 + c);
    Tensor patches = reindex(frame, idx, {p_rows, p_cols});
    return add(linear(patches, p.proj), p.pos);
}

// x_v[t,p] = SelfAttnEncoder(patch_embed(frame_t))[p] + Omega_t, flattened to
// (T*P) x D in frame-major order. Frames are given as float tensors so a
// caller may wire gradients back to pixels.
inline VideoFeatures encode_video_frames(const std::vector<Tensor>& frame_tensors, int h,
                                         int w, int patch, const AttentionConfig& cfg,
                                         const VideoEncoderParams& p,
                                         const ForwardCtx* ctx = nullptr) {
    const int t_count = static_cast<int>(frame_tensors.size());
    if (t_count < 1) throw ContractError("encode_video: clip has no frames");
    if (t_count > p.temporal.rows())
        throw CapacityError("encode_video: T=" + std::to_string(t_count) +
                            " exceeds max_T=" + std::to_string(p.temporal.rows()));
    std::vector<Tensor> per_frame;
    per_frame.reserve(t_count);
    int p_rows = 0;
    for (int t = 0; t < t_count; ++t) {
        Tensor tokens = patch_embed(frame_tensors[t], h, w, patch, p.patch);
        p_rows = tokens.rows();
        for (const auto& blk : p.blocks)
            tokens = transformer_block(tokens, tokens, cfg, blk, Mask::none(), ctx).out;
        Tensor omega_t = slice_rows(p.temporal, t, t + 1);
        // add Omega_t to every token of frame t
        per_frame.push_back(add(tokens, concat_rows(std::vector<Tensor>(p_rows, omega_t))));
    }
    VideoFeatures out;
    out.tokens = t_count == 1 ? per_frame[0] : concat_rows(per_frame);
    out.frames = t_count;
    out.patches_per_frame = p_rows;
    return out;
}

inline VideoFeatures encode_video(const VideoClip& clip, int patch, const AttentionConfig& cfg,
                                  const VideoEncoderParams& p, const ForwardCtx* ctx = nullptr) {
    clip.validate();
    std::vector<Tensor> frames;
    frames.reserve(clip.frames);
    for (int t = 0; t < clip.frames; ++t) frames.push_back(clip.frame_tensor(t));
    return encode_video_frames(frames, clip.h, clip.w, patch, cfg, p, ctx);
}

// Audio-token embedding lookup as a standalone node; input_saliency uses this
// to read gradients at the embedded tokens.
inline Tensor embed_audio_tokens(const AudioCaption& ac, const AudioEncoderParams& p) {
    ac.validate();
    if (static_cast<int>(ac.token_ids.size()) != p.pos_embed.rows())
        throw ShapeError("encode_audio_caption: sequence length != configured S");
    return gather_rows(p.tok_embed, ac.token_ids);
}

// `embedded` must be the [S x D] output of embed_audio_tokens.
inline Tensor encode_audio_from_embedded(const Tensor& embedded, const AudioCaption& ac,
                                         const AttentionConfig& cfg,
                                         const AudioEncoderParams& p,
                                         const ForwardCtx* ctx = nullptr) {
    Tensor h = add(embedded, p.pos_embed);
    Mask m = Mask::padding(static_cast<int>(ac.token_ids.size()), ac.valid);
    for (const auto& blk : p.blocks) h = transformer_block(h, h, cfg, blk, m, ctx).out;
    return h;
}

// Token + position embeddings through the self-attention stack; pad positions
// are excluded from every key set and flagged downstream via ac.valid.
inline Tensor encode_audio_caption(const AudioCaption& ac, const AttentionConfig& cfg,
                                   const AudioEncoderParams& p,
                                   const ForwardCtx* ctx = nullptr) {
    return encode_audio_from_embedded(embed_audio_tokens(ac, p), ac, cfg, p, ctx);
}

}  // namespace micap
