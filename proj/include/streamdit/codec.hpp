#pragma once

#include <string>
#include <vector>

#include "streamdit/rng.hpp"
#include "streamdit/tensor.hpp"

namespace streamdit {

/// One temporal slice of the compressed representation: P tokens x C channels
/// plus the noise level it currently sits at. Condition-derived frames are
/// always at timestep 0.
struct LatentFrame {
    Tensor tokens;  // [P, C]
    double timestep = 0.0;
};

struct LatentSequence {
    std::vector<LatentFrame> frames;

    long size() const { return static_cast<long>(frames.size()); }
};

/// Reference + garment latents, both clean (t = 0).
struct ConditionSet {
    Tensor reference;  // [P, C]
    Tensor garment;    // [P, C]
};

struct PixelVideo {
    std::vector<Tensor> frames;  // each rank-1 [Dp]

    long size() const { return static_cast<long>(frames.size()); }
};

struct CodecConfig {
    long pixel_dim = 64;        // Dp
    long tokens_per_frame = 4;  // P, equal to the temporal group size
    long channels = 16;         // C
    uint64_t seed = 2024;
};

/// Fixed seeded linear codec with 4:1 temporal compression and an exact
/// decode-encode round trip. The first pixel frame maps alone through an
/// orthogonal matrix; each later group of 4 pixel frames maps one frame per
/// token through a shared orthonormal-column matrix, so re-encoding any
/// decoded pixel frame recovers its token content exactly.
class Codec {
  public:
    explicit Codec(CodecConfig cfg);

    const CodecConfig& config() const { return cfg_; }

    /// F pixel frames (F = 1 mod 4) -> f = (F-1)/4 + 1 latent frames at t=0.
    LatentSequence encode(const PixelVideo& video) const;

    /// Right inverse of encode: latent frame 0 -> 1 pixel frame, every other
    /// latent frame -> 4 pixel frames.
    PixelVideo decode(const LatentSequence& latents) const;

    /// Single image -> 1-frame latent sequence at t=0.
    LatentSequence encode_image(const Tensor& frame) const;

    /// Pixel frame for a single-frame latent (the B1 direction).
    Tensor decode_image(const Tensor& latent_tokens) const;

    /// The 4 pixel frames of a non-initial latent frame, one per token.
    std::vector<Tensor> decode_group(const Tensor& latent_tokens) const;

    /// Per-subframe content map W [Dp, C]; exposed for matrix oracles.
    const Tensor& subframe_map() const { return w_; }
    /// Completion U [Dp, Dp-C] filling the first-frame latent's tail tokens.
    const Tensor& completion_map() const { return u_; }

    static long latent_len(long pixel_frames) { return (pixel_frames - 1) / 4 + 1; }
    static long pixel_len(long latent_frames) { return (latent_frames - 1) * 4 + 1; }

  private:
    CodecConfig cfg_;
    Tensor w_;  // [Dp, C] orthonormal columns
    Tensor u_;  // [Dp, Dp-C] orthonormal completion
};

// Video CSV: one line per pixel frame, "index,v0,...,v{Dp-1}".
void write_video_csv(const std::string& path, const PixelVideo& video);
PixelVideo read_video_csv(const std::string& path);

}  // namespace streamdit
