#pragma once

#include <array>
#include <vector>

#include "micap/tensor.hpp"

namespace micap {

// Value-only snapshot of an attention weight matrix; detached from the graph
// so capturing never perturbs the forward pass.
struct RawMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<size_t>(i) * cols + j]; }

    static RawMatrix from_tensor(const Tensor& t) {
        return RawMatrix{t.rows(), t.cols(), t.values()};
    }
};

// Co-attention capture: layers x {video-query branch, audio-query branch} x heads.
struct CoAttnCapture {
    std::vector<std::array<std::vector<RawMatrix>, 2>> layers;

    static constexpr int kVideoQueries = 0;  // video rows attend over audio keys
    static constexpr int kAudioQueries = 1;  // audio rows attend over video keys
};

// Decoder capture: per layer, per head, for one full-sequence decode pass.
struct DecoderCapture {
    std::vector<std::vector<RawMatrix>> self_heads;   // [layer][head], (n x n)
    std::vector<std::vector<RawMatrix>> cross_heads;  // [layer][head], (n x ctx_rows)
};

}  // namespace micap
