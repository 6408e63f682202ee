#pragma once

#include <string>
#include <vector>

#include "streamdit/tensor.hpp"

namespace streamdit {

/// Token layout of the teacher-forcing sequence:
/// [cond blocks | clean frames 1..f | cond blocks (duplicated) | noisy 1..f].
/// cond_sizes lists the condition blocks in causal order (e.g. context,
/// reference, garment).
struct TfMaskSpec {
    std::vector<long> cond_sizes;
    long frames = 0;            // f
    long tokens_per_frame = 1;  // P
    long chunk_frames = 1;

    long cond_total() const {
        long s = 0;
        for (long c : cond_sizes)
            s += c;
        return s;
    }
    long half_len() const { return cond_total() + frames * tokens_per_frame; }
    long total_len() const { return 2 * half_len(); }
};

/// In-context teacher-forcing mask:
///  - noisy frame i attends both condition groups, all clean frames in
///    chunks strictly before its own chunk, and its own noisy chunk;
///  - clean frame i attends its half's conditions and clean frames at chunk
///    granularity up to its own chunk;
///  - condition tokens attend themselves and earlier condition blocks of
///    their own half, never any video token.
BoolMat build_tf_mask(const TfMaskSpec& spec);

/// Row policy for a freshly generated chunk over the live cache: the chunk
/// attends every retained column (conditions, sink, rolling history) and is
/// bidirectional within itself. Columns are [cond | history | chunk].
BoolMat build_inference_mask(long cond_tokens, long history_tokens, long chunk_tokens);

/// Block-causal mask over the condition blocks alone (reference attends
/// itself and earlier blocks; garment attends everything before it).
BoolMat build_condition_mask(const std::vector<long>& cond_sizes);

/// One row per line, '0'/'1' characters; for golden-file tests.
std::string mask_to_grid(const BoolMat& m);
BoolMat mask_from_grid(const std::string& grid);

}  // namespace streamdit
