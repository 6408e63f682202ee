#include <cmath>

#include "doctest.h"
#include "streamdit/codec.hpp"

using namespace streamdit;

namespace {
Codec make_codec() { return Codec(CodecConfig{}); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (long i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

LatentSequence random_latents(long frames, Rng& rng) {
    LatentSequence z;
    for (long i = 0; i < frames; ++i)
        z.frames.push_back({rng.normal_tensor({4, 16}), 0.0});
    return z;
}
}  // namespace

TEST_SUITE("latent-codec") {
    TEST_CASE("temporal length law") {
        Codec codec = make_codec();
        Rng rng(5);
        for (long F : {1L, 81L, 165L}) {
            PixelVideo v;
            for (long i = 0; i < F; ++i)
                v.frames.push_back(rng.normal_tensor({64}));
            const LatentSequence z = codec.encode(v);
            CHECK(z.size() == (F - 1) / 4 + 1);
        }
        CHECK(Codec::latent_len(81) == 21);
        CHECK(Codec::latent_len(165) == 42);
        CHECK(Codec::pixel_len(21) == 81);

        PixelVideo bad;
        for (long i = 0; i < 6; ++i)
            bad.frames.push_back(rng.normal_tensor({64}));
        CHECK_THROWS(codec.encode(bad));
    }

    TEST_CASE("decode is a right inverse of encode") {
        Codec codec = make_codec();
        Rng rng(6);
        const LatentSequence z = random_latents(6, rng);
        const PixelVideo v = codec.decode(z);
        CHECK(v.size() == 21);
        const LatentSequence z2 = codec.encode(v);
        REQUIRE(z2.size() == z.size());
        for (long i = 0; i < z.size(); ++i)
            CHECK(max_abs_diff(z.frames[static_cast<size_t>(i)].tokens,
                               z2.frames[static_cast<size_t>(i)].tokens) <= 1e-12);

        // single-frame variant
        const Tensor single = rng.normal_tensor({4, 16});
        const Tensor img = codec.decode_image(single);
        CHECK(max_abs_diff(codec.encode_image(img).frames[0].tokens, single) <= 1e-12);
    }

    TEST_CASE("linearity of encode") {
        Codec codec = make_codec();
        Rng rng(7);
        PixelVideo x, y, mix;
        const double a = 1.7, b = -0.4;
        for (long i = 0; i < 9; ++i) {
            x.frames.push_back(rng.normal_tensor({64}));
            y.frames.push_back(rng.normal_tensor({64}));
            Tensor m({64});
            for (long j = 0; j < 64; ++j)
                m.at(j) = a * x.frames.back().at(j) + b * y.frames.back().at(j);
            mix.frames.push_back(std::move(m));
        }
        const LatentSequence zx = codec.encode(x), zy = codec.encode(y), zm = codec.encode(mix);
        for (long i = 0; i < zm.size(); ++i) {
            const Tensor& fx = zx.frames[static_cast<size_t>(i)].tokens;
            const Tensor& fy = zy.frames[static_cast<size_t>(i)].tokens;
            const Tensor& fm = zm.frames[static_cast<size_t>(i)].tokens;
            for (long j = 0; j < fm.numel(); ++j)
                CHECK(std::abs(fm.at(j) - (a * fx.at(j) + b * fy.at(j))) <= 1e-10);
        }
    }

    TEST_CASE("zero frame encodes to zero latent") {
        Codec codec = make_codec();
        const LatentSequence z = codec.encode_image(Tensor({64}));
        for (double v : z.frames[0].tokens.data)
            CHECK(v == 0.0);
    }

    TEST_CASE("disentangled last pixel frame equals a direct matrix product") {
        Codec codec = make_codec();
        Rng rng(8);
        const Tensor group = rng.normal_tensor({4, 16});
        const std::vector<Tensor> pixels = codec.decode_group(group);
        REQUIRE(pixels.size() == 4);

        // oracle: last pixel frame is W times token 3
        const Tensor& W = codec.subframe_map();
        Tensor expect({64});
        for (long i = 0; i < 64; ++i) {
            double s = 0.0;
            for (long c = 0; c < 16; ++c)
                s += W.at(i, c) * group.at(3, c);
            expect.at(i) = s;
        }
        CHECK(max_abs_diff(pixels.back(), expect) <= 1e-12);

        // re-encoding it lands the token content in token 0 with a zero tail
        const Tensor re = codec.encode_image(pixels.back()).frames[0].tokens;
        for (long c = 0; c < 16; ++c)
            CHECK(std::abs(re.at(0, c) - group.at(3, c)) <= 1e-12);
        for (long tok = 1; tok < 4; ++tok)
            for (long c = 0; c < 16; ++c)
                CHECK(std::abs(re.at(tok, c)) <= 1e-12);
    }

    TEST_CASE("video csv round trip") {
        Codec codec = make_codec();
        Rng rng(9);
        PixelVideo v;
        for (long i = 0; i < 5; ++i)
            v.frames.push_back(rng.normal_tensor({64}));
        write_video_csv("video_rt.csv", v);
        const PixelVideo w = read_video_csv("video_rt.csv");
        REQUIRE(w.size() == v.size());
        for (long i = 0; i < v.size(); ++i)
            CHECK(max_abs_diff(v.frames[static_cast<size_t>(i)], w.frames[static_cast<size_t>(i)]) ==
                  0.0);
    }
}
