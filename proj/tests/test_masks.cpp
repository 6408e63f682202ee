#include "doctest.h"
#include "streamdit/masks.hpp"
#include "streamdit/rng.hpp"

using namespace streamdit;

namespace {
// Independent reimplementation of the teacher-forcing rules as one predicate
// per (row, col) pair, written with explicit index arithmetic.
struct RefSpec {
    std::vector<long> cond;
    long f, P, chunk;

    long cond_total() const {
        long s = 0;
        for (long c : cond)
            s += c;
        return s;
    }
    long half() const { return cond_total() + f * P; }

    // 0..nblocks-1 condition block id, or -1 for video; frame out-param
    long block_of(long pos_in_half, long& frame) const {
        long off = 0;
        for (size_t b = 0; b < cond.size(); ++b) {
            if (pos_in_half < off + cond[b]) {
                frame = -1;
                return static_cast<long>(b);
            }
            off += cond[b];
        }
        frame = (pos_in_half - off) / P;
        return -1;
    }

    bool allowed(long i, long j) const {
        const long hi = i / half(), hj = j / half();
        long fi = -1, fj = -1;
        const long bi = block_of(i % half(), fi);
        const long bj = block_of(j % half(), fj);
        const bool i_cond = bi >= 0, j_cond = bj >= 0;
        if (i_cond) {
            if (!j_cond || hj != hi)
                return false;
            return bj <= bi;
        }
        const long ci = fi / chunk;
        if (hi == 0) {  // clean
            if (j_cond)
                return hj == 0;
            if (hj != 0)
                return false;
            return fj / chunk <= ci;
        }
        // noisy
        if (j_cond)
            return true;
        if (hj == 0)
            return fj / chunk < ci;
        return fj / chunk == ci;
    }
};

bool masks_equal(const BoolMat& a, const RefSpec& ref) {
    const long n = 2 * ref.half();
    if (a.rows != n || a.cols != n)
        return false;
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j)
            if (a.at(i, j) != ref.allowed(i, j))
                return false;
    return true;
}
}  // namespace

TEST_SUITE("masking") {
    TEST_CASE("first chunk sees no history, only conditions and itself") {
        TfMaskSpec s;
        s.cond_sizes = {1, 1};
        s.frames = 3;
        s.tokens_per_frame = 1;
        s.chunk_frames = 3;
        const BoolMat m = build_tf_mask(s);
        const long half = s.half_len();
        // noisy rows: conditions of both halves + own chunk, no clean video
        for (long i = half + 2; i < 2 * half; ++i) {
            for (long j = 0; j < 2; ++j)
                CHECK(m.at(i, j));  // first-half conditions
            for (long j = half; j < half + 2; ++j)
                CHECK(m.at(i, j));  // second-half conditions
            for (long j = 2; j < half; ++j)
                CHECK_FALSE(m.at(i, j));  // clean frames (same chunk, not history)
            for (long j = half + 2; j < 2 * half; ++j)
                CHECK(m.at(i, j));  // own noisy chunk
        }
    }

    TEST_CASE("noisy chunk 2 sees clean chunk 1 but not clean chunk 2 or noisy chunk 1") {
        TfMaskSpec s;
        s.cond_sizes = {1, 1};
        s.frames = 6;
        s.tokens_per_frame = 1;
        s.chunk_frames = 3;
        const BoolMat m = build_tf_mask(s);
        const long half = s.half_len();
        const long noisy0 = half + 2;  // first noisy video token
        for (long i = noisy0 + 3; i < noisy0 + 6; ++i) {  // noisy chunk 2
            for (long j = 2; j < 5; ++j)
                CHECK(m.at(i, j));  // clean frames 1..3
            for (long j = 5; j < 8; ++j)
                CHECK_FALSE(m.at(i, j));  // clean frames 4..6
            for (long j = noisy0; j < noisy0 + 3; ++j)
                CHECK_FALSE(m.at(i, j));  // noisy chunk 1
        }
    }

    TEST_CASE("condition rows have false on every video column") {
        TfMaskSpec s;
        s.cond_sizes = {1, 2, 2};
        s.frames = 6;
        s.tokens_per_frame = 2;
        s.chunk_frames = 3;
        const BoolMat m = build_tf_mask(s);
        const long half = s.half_len(), S = s.cond_total();
        for (long hi = 0; hi < 2; ++hi)
            for (long i = hi * half; i < hi * half + S; ++i) {
                for (long j = S; j < half; ++j)
                    CHECK_FALSE(m.at(i, j));
                for (long j = half + S; j < 2 * half; ++j)
                    CHECK_FALSE(m.at(i, j));
            }
    }

    TEST_CASE("exhaustive agreement with the loop oracle for small f") {
        for (long f = 1; f <= 9; ++f)
            for (long chunk = 1; chunk <= f; ++chunk) {
                if (f % chunk != 0)
                    continue;
                for (long P : {1L, 2L}) {
                    TfMaskSpec s;
                    s.cond_sizes = {1, P, P};
                    s.frames = f;
                    s.tokens_per_frame = P;
                    s.chunk_frames = chunk;
                    RefSpec ref{{1, P, P}, f, P, chunk};
                    CHECK(masks_equal(build_tf_mask(s), ref));
                }
            }
        TfMaskSpec bad;
        bad.cond_sizes = {1};
        bad.frames = 5;
        bad.tokens_per_frame = 1;
        bad.chunk_frames = 3;
        CHECK_THROWS(build_tf_mask(bad));
    }

    TEST_CASE("randomized agreement plus structural invariants") {
        Rng rng(17);
        for (int iter = 0; iter < 1000; ++iter) {
            const long chunk = 1 + static_cast<long>(rng.next_u64() % 4);
            const long nchunks = 1 + static_cast<long>(rng.next_u64() % 6);
            const long f = chunk * nchunks;
            const long P = 1 + static_cast<long>(rng.next_u64() % 3);
            const long c0 = 1 + static_cast<long>(rng.next_u64() % 2);
            TfMaskSpec s;
            s.cond_sizes = {c0, P, P};
            s.frames = f;
            s.tokens_per_frame = P;
            s.chunk_frames = chunk;
            const BoolMat m = build_tf_mask(s);
            RefSpec ref{{c0, P, P}, f, P, chunk};
            REQUIRE(masks_equal(m, ref));

            const long half = s.half_len(), S = s.cond_total();
            for (long i = 0; i < m.rows; ++i)
                CHECK(m.at(i, i));  // self-attention everywhere
            // clean/noisy isolation
            for (long i = S; i < half; ++i)
                for (long j = half + S; j < 2 * half; ++j)
                    CHECK_FALSE(m.at(i, j));
            // anti-leak: nothing attends a video token in a strictly later chunk
            for (long i = 0; i < m.rows; ++i) {
                long fi = -1;
                const long bi = ref.block_of(i % half, fi);
                const long ci = bi >= 0 ? -1 : fi / chunk;
                for (long hj = 0; hj < 2; ++hj)
                    for (long fj = 0; fj < f; ++fj) {
                        if (bi < 0 && fj / chunk <= ci)
                            continue;
                        if (bi >= 0 || fj / chunk > ci)
                            for (long p = 0; p < P; ++p) {
                                const long j = hj * half + S + fj * P + p;
                                if (fj / chunk > ci || bi >= 0)
                                    CHECK_FALSE(m.at(i, j));
                            }
                    }
            }
        }
    }

    TEST_CASE("inference rows are exact restrictions of the training rows") {
        Rng rng(19);
        for (int iter = 0; iter < 50; ++iter) {
            const long chunk = 1 + static_cast<long>(rng.next_u64() % 3);
            const long nchunks = 2 + static_cast<long>(rng.next_u64() % 4);
            const long f = chunk * nchunks;
            const long P = 1 + static_cast<long>(rng.next_u64() % 2);
            TfMaskSpec s;
            s.cond_sizes = {1, P, P};
            s.frames = f;
            s.tokens_per_frame = P;
            s.chunk_frames = chunk;
            const BoolMat tf = build_tf_mask(s);
            const long half = s.half_len(), S = s.cond_total();

            // generating chunk k with `hist` retained clean frames
            const long k = nchunks - 1;
            const long hist = static_cast<long>(rng.next_u64() % (k * chunk + 1));
            const BoolMat inf = build_inference_mask(S, hist * P, chunk * P);
            // retained history columns map to the last `hist` clean frames
            // strictly before chunk k
            for (long r = 0; r < chunk * P; ++r) {
                const long tf_row = half + S + (k * chunk) * P + r;
                // conditions
                for (long j = 0; j < S; ++j)
                    CHECK(inf.at(r, j) == tf.at(tf_row, j));
                // history: clean frames k*chunk-hist .. k*chunk-1
                for (long hcol = 0; hcol < hist * P; ++hcol) {
                    const long frame = k * chunk - hist + hcol / P;
                    const long tf_col = S + frame * P + hcol % P;
                    CHECK(inf.at(r, S + hcol) == tf.at(tf_row, tf_col));
                }
                // own chunk
                for (long ccol = 0; ccol < chunk * P; ++ccol) {
                    const long tf_col = half + S + (k * chunk) * P + ccol;
                    CHECK(inf.at(r, S + hist * P + ccol) == tf.at(tf_row, tf_col));
                }
            }
        }
    }

    TEST_CASE("grid dump round trip") {
        TfMaskSpec s;
        s.cond_sizes = {1, 1};
        s.frames = 3;
        s.tokens_per_frame = 1;
        s.chunk_frames = 3;
        const BoolMat m = build_tf_mask(s);
        const BoolMat back = mask_from_grid(mask_to_grid(m));
        REQUIRE(back.rows == m.rows);
        REQUIRE(back.cols == m.cols);
        for (long i = 0; i < m.rows; ++i)
            for (long j = 0; j < m.cols; ++j)
                CHECK(back.at(i, j) == m.at(i, j));
    }
}
