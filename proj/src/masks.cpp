#include "streamdit/masks.hpp"

#include <sstream>

namespace streamdit {

namespace {
// Token classification within one half of the TF layout.
struct TokenInfo {
    bool is_cond;
    long cond_block;  // index into cond_sizes
    long frame;       // video frame index, 0-based
};

TokenInfo classify(const TfMaskSpec& s, long pos_in_half) {
    long off = 0;
    for (size_t b = 0; b < s.cond_sizes.size(); ++b) {
        if (pos_in_half < off + s.cond_sizes[b])
            return {true, static_cast<long>(b), -1};
        off += s.cond_sizes[b];
    }
    return {false, -1, (pos_in_half - off) / s.tokens_per_frame};
}
}  // namespace

BoolMat build_tf_mask(const TfMaskSpec& s) {
    check(s.frames >= 1 && s.tokens_per_frame >= 1 && s.chunk_frames >= 1,
          "build_tf_mask: bad sizes");
    check(s.frames % s.chunk_frames == 0, "build_tf_mask: frames not divisible by chunk");
    const long half = s.half_len();
    const long total = s.total_len();
    BoolMat m(total, total);

    auto chunk_of = [&](long frame) { return frame / s.chunk_frames; };

    for (long i = 0; i < total; ++i) {
        const long hi = i / half;  // 0 = clean half, 1 = noisy half
        const TokenInfo ti = classify(s, i % half);
        for (long j = 0; j < total; ++j) {
            const long hj = j / half;
            const TokenInfo tj = classify(s, j % half);
            bool allow = false;
            if (ti.is_cond) {
                // conditions see their own half's conditions, own block or earlier
                allow = tj.is_cond && hj == hi && tj.cond_block <= ti.cond_block;
            } else if (hi == 0) {
                // clean frame: own-half conditions + clean frames at chunk granularity
                if (tj.is_cond)
                    allow = hj == 0;
                else
                    allow = hj == 0 && chunk_of(tj.frame) <= chunk_of(ti.frame);
            } else {
                // noisy frame: conditions of both halves, strictly earlier clean
                // chunks, and its own noisy chunk
                if (tj.is_cond)
                    allow = true;
                else if (hj == 0)
                    allow = chunk_of(tj.frame) < chunk_of(ti.frame);
                else
                    allow = chunk_of(tj.frame) == chunk_of(ti.frame);
            }
            if (allow)
                m.at(i, j) = 1;
        }
    }
    return m;
}

BoolMat build_inference_mask(long cond_tokens, long history_tokens, long chunk_tokens) {
    check(cond_tokens >= 0 && history_tokens >= 0 && chunk_tokens >= 1,
          "build_inference_mask: bad sizes");
    return BoolMat::ones(chunk_tokens, cond_tokens + history_tokens + chunk_tokens);
}

BoolMat build_condition_mask(const std::vector<long>& cond_sizes) {
    long total = 0;
    for (long c : cond_sizes)
        total += c;
    BoolMat m(total, total);
    long ro = 0;
    for (size_t bi = 0; bi < cond_sizes.size(); ++bi) {
        long co = 0;
        for (size_t bj = 0; bj <= bi; ++bj) {
            for (long i = 0; i < cond_sizes[bi]; ++i)
                for (long j = 0; j < cond_sizes[bj]; ++j)
                    m.at(ro + i, co + j) = 1;
            co += cond_sizes[bj];
        }
        ro += cond_sizes[bi];
    }
    return m;
}

std::string mask_to_grid(const BoolMat& m) {
    std::string out;
    out.reserve(static_cast<size_t>((m.cols + 1) * m.rows));
    for (long i = 0; i < m.rows; ++i) {
        for (long j = 0; j < m.cols; ++j)
            out.push_back(m.at(i, j) ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

BoolMat mask_from_grid(const std::string& grid) {
    std::vector<std::string> lines;
    std::stringstream ss(grid);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty())
            lines.push_back(line);
    check(!lines.empty(), "mask_from_grid: empty");
    BoolMat m(static_cast<long>(lines.size()), static_cast<long>(lines[0].size()));
    for (long i = 0; i < m.rows; ++i) {
        check(static_cast<long>(lines[static_cast<size_t>(i)].size()) == m.cols,
              "mask_from_grid: ragged rows");
        for (long j = 0; j < m.cols; ++j)
            m.at(i, j) = lines[static_cast<size_t>(i)][static_cast<size_t>(j)] == '1';
    }
    return m;
}

}  // namespace streamdit
