#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "micap/capture.hpp"
#include "micap/nn.hpp"

namespace micap {

// Special token ids, fixed across the project.
namespace tokens {
constexpr int kPad = 0;
constexpr int kCls = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
}  // namespace tokens

// ---------------------------------------------------------------------------
// Parameters

struct DecoderLayerParams {
    LayerNormParams ln_self;
    MhaParams self_attn;
    LayerNormParams ln_cross_q;
    LayerNormParams ln_cross_kv;
    MhaParams cross_attn;
    LayerNormParams ln_f;
    FfnParams ffn;
};

struct DecoderParams {
    Tensor tok_embed;  // [V x D]
    Tensor pos_embed;  // [capacity x D]; capacity bounds prefix length
    std::vector<DecoderLayerParams> layers;
    LayerNormParams ln_final;
    LinearParams vocab_proj;  // W: [D x V]
};

inline DecoderParams make_decoder(ParamStore& ps, Rng& rng, const std::string& prefix,
                                  const AttentionConfig& cfg, int vocab, int capacity,
                                  int num_layers, int ffn_hidden) {
    DecoderParams p;
    p.tok_embed = ps.randn(rng, prefix + ".tok_embed", {vocab, cfg.model_dim}, 0.02);
    p.pos_embed = ps.randn(rng, prefix + ".pos_embed", {capacity, cfg.model_dim}, 0.02);
    for (int l = 0; l < num_layers; ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        DecoderLayerParams lay;
        lay.ln_self = make_layer_norm(ps, lp + ".ln_self", cfg.model_dim);
        lay.self_attn = make_mha(ps, rng, lp + ".self", cfg);
        lay.ln_cross_q = make_layer_norm(ps, lp + ".ln_cross_q", cfg.model_dim);
        lay.ln_cross_kv = make_layer_norm(ps, lp + ".ln_cross_kv", cfg.model_dim);
        lay.cross_attn = make_mha(ps, rng, lp + ".cross", cfg);
        lay.ln_f = make_layer_norm(ps, lp + ".ln_f", cfg.model_dim);
        lay.ffn = make_ffn(ps, rng, lp + ".ffn", cfg.model_dim, ffn_hidden);
        p.layers.push_back(std::move(lay));
    }
    p.ln_final = make_layer_norm(ps, prefix + ".ln_final", cfg.model_dim);
    p.vocab_proj = make_linear(ps, rng, prefix + ".vocab_proj", cfg.model_dim, vocab);
    return p;
}

// ---------------------------------------------------------------------------
// Forward

// Causal self-attention, cross-attention over z_va, FFB, then projection to
// vocabulary logits. Logits at position t depend only on prefix[0..t] and
// z_va.
inline Tensor decode_step(const std::vector<int>& prefix, const Tensor& z_va,
                          const std::vector<uint8_t>& ctx_key_valid,
                          const AttentionConfig& cfg, const DecoderParams& p,
                          DecoderCapture* capture = nullptr,
                          const ForwardCtx* ctx = nullptr) {
    if (prefix.empty()) throw ContractError("decode_step: empty prefix");
    if (prefix.front() != tokens::kCls)
        throw ContractError("decode_step: prefix must begin with [CLS]");
    const int n = static_cast<int>(prefix.size());
    if (n > p.pos_embed.rows())
        throw CapacityError("decode_step: prefix length " + std::to_string(n) +
                            " exceeds max_len " + std::to_string(p.pos_embed.rows()));

    Tensor h = add(gather_rows(p.tok_embed, prefix), slice_rows(p.pos_embed, 0, n));
    Mask causal = Mask::causal(n);
    Mask cross = ctx_key_valid.empty() ? Mask::none() : Mask::padding(n, ctx_key_valid);
    for (const auto& lay : p.layers) {
        Tensor hn = layer_norm(h, lay.ln_self);
        auto self_att = multi_head_attention(hn, hn, cfg, lay.self_attn, causal, ctx);
        h = add(h, self_att.out);
        auto cross_att = multi_head_attention(layer_norm(h, lay.ln_cross_q),
                                              layer_norm(z_va, lay.ln_cross_kv), cfg,
                                              lay.cross_attn, cross, ctx);
        h = add(h, cross_att.out);
        h = add(h, feed_forward(layer_norm(h, lay.ln_f), lay.ffn, ctx));
        if (capture) {
            capture->self_heads.emplace_back();
            for (const auto& hw : self_att.head_weights)
                capture->self_heads.back().push_back(RawMatrix::from_tensor(hw));
            capture->cross_heads.emplace_back();
            for (const auto& hw : cross_att.head_weights)
                capture->cross_heads.back().push_back(RawMatrix::from_tensor(hw));
        }
    }
    return linear(layer_norm(h, p.ln_final), p.vocab_proj);
}

// ---------------------------------------------------------------------------
// Generation

struct Hypothesis {
    std::vector<int> generated;  // after [CLS]; includes the final [EOS] if emitted
    double log_prob = 0.0;
    bool finished = false;
};

// score desc, then lexicographically smallest token sequence; makes every
// search deterministic.
inline bool hypothesis_better(const Hypothesis& a, const Hypothesis& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.generated < b.generated;
}

namespace detail {

inline std::vector<double> next_token_log_probs(const std::vector<int>& generated,
                                                const Tensor& z_va,
                                                const std::vector<uint8_t>& ctx_key_valid,
                                                const AttentionConfig& cfg,
                                                const DecoderParams& p) {
    std::vector<int> prefix{tokens::kCls};
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    Tensor logits = decode_step(prefix, z_va, ctx_key_valid, cfg, p);
    const int v = logits.cols();
    const int last = logits.rows() - 1;
    std::vector<double> lp(v);
    double mx = logits.at(last, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at(last, j));
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(logits.at(last, j) - mx);
    double log_z = std::log(z) + mx;
    for (int j = 0; j < v; ++j) lp[j] = logits.at(last, j) - log_z;
    return lp;
}

}  // namespace detail

// Appends the argmax token until [EOS] or max_new generated tokens. [PAD] is
// never a candidate; ties break toward the lowest token id. Argmax over raw
// logits: softmax is monotone, so generation skips it.
inline Hypothesis greedy_decode(const Tensor& z_va, const std::vector<uint8_t>& ctx_key_valid,
                                const AttentionConfig& cfg, const DecoderParams& p,
                                int max_new) {
    if (max_new < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
    NoGradGuard ng;
    Hypothesis hyp;
    for (int step = 0; step < max_new; ++step) {
        auto lp = detail::next_token_log_probs(hyp.generated, z_va, ctx_key_valid, cfg, p);
        int best = -1;
        for (int j = 0; j < static_cast<int>(lp.size()); ++j) {
            if (j == tokens::kPad) continue;
            if (best < 0 || lp[j] > lp[best]) best = j;
        }
        hyp.generated.push_back(best);
        hyp.log_prob += lp[best];
        if (best == tokens::kEos) {
            hyp.finished = true;
            break;
        }
    }
    return hyp;
}

// Length-bounded beam search over cumulative log-probabilities, no length
// normalization. Expansions compete for the top `width` slots; an expansion
// emitting [EOS] retires to the finished pool. Returns the highest-scoring
// finished hypothesis, else the best unfinished one at max_new.
inline Hypothesis beam_search(const Tensor& z_va, const std::vector<uint8_t>& ctx_key_valid,
                              const AttentionConfig& cfg, const DecoderParams& p, int width,
                              int max_new) {
    if (width < 1) throw ConfigError("beam_search: width must be >= 1");
    if (max_new < 1) throw ConfigError("beam_search: max_len must be >= 1");
    NoGradGuard ng;

    std::vector<Hypothesis> alive{Hypothesis{}};
    std::vector<Hypothesis> finished;
    for (int step = 0; step < max_new && !alive.empty(); ++step) {
        std::vector<Hypothesis> expansions;
        for (const auto& hyp : alive) {
            auto lp = detail::next_token_log_probs(hyp.generated, z_va, ctx_key_valid, cfg, p);
            for (int j = 0; j < static_cast<int>(lp.size()); ++j) {
                if (j == tokens::kPad) continue;
                Hypothesis next = hyp;
                next.generated.push_back(j);
                next.log_prob += lp[j];
                next.finished = (j == tokens::kEos);
                expansions.push_back(std::move(next));
            }
        }
        std::sort(expansions.begin(), expansions.end(), hypothesis_better);
        if (static_cast<int>(expansions.size()) > width) expansions.resize(width);
        alive.clear();
        for (auto& e : expansions) {
            if (e.finished)
                finished.push_back(std::move(e));
            else
                alive.push_back(std::move(e));
        }
    }
    const std::vector<Hypothesis>& pool = finished.empty() ? alive : finished;
    Hypothesis best = pool.front();
    for (const auto& h : pool)
        if (hypothesis_better(h, best)) best = h;
    return best;
}

// Caption generation never emits [PAD] and strips the leading [CLS]; the
// trailing [EOS] is kept in `generated` for score bookkeeping.
inline std::vector<int> caption_tokens(const Hypothesis& h) {
    std::vector<int> out;
    for (int t : h.generated)
        if (t != tokens::kEos) out.push_back(t);
    return out;
}

}  // namespace micap
