#pragma once

#include <vector>

#include "streamdit/codec.hpp"
#include "streamdit/rng.hpp"

namespace streamdit {

struct SyntheticConfig {
    long garment_channels = 4;  // channels 0..3 of every token carry the code
    long codebook_size = 8;
    double code_norm = 2.0;
    double code_min_sep = 1.2;
    long frames = 15;  // latent frames per sample
    std::vector<double> motion_freqs = {0.13, 0.23, 0.37};  // rad per pixel step
};

/// One training triplet: a latent video wearing the target garment code, a
/// reference image wearing a different code at the video's starting motion
/// state, and a canonical rendering of the target garment.
struct SyntheticSample {
    long index = 0;
    long garment_id = 0;  // target code
    long worn_id = 0;     // code worn in the reference, always != garment_id
    LatentSequence video_latents;
    Tensor reference;  // [P, C] latent
    Tensor garment;    // [P, C] latent
    Tensor reference_image, garment_image;  // pixels [Dp]
};

/// Deterministic per (seed, index); garment codes come from a fixed seeded
/// codebook. Motion trajectories are stationary sums of seeded sinusoids, so
/// any frame is a valid segment start.
class SyntheticDataset {
  public:
    SyntheticDataset(const Codec& codec, SyntheticConfig cfg, long count, uint64_t seed);

    long size() const { return count_; }
    long train_size() const { return count_ - eval_size_; }
    long eval_size() const { return eval_size_; }

    const std::vector<Tensor>& codebook() const { return codebook_; }

    SyntheticSample make(long index) const;

    /// The motion state of a frame: per-token channels gc..C-1.
    Tensor motion_state(long sample_index, double pixel_time) const;

    /// Garment latent for a codebook entry (canonical zero-motion rendering).
    Tensor garment_latent(long code_id) const;
    Tensor garment_image(long code_id) const;

    PixelVideo decode_sample_video(const SyntheticSample& s) const { return codec_.decode(s.video_latents); }

  private:
    struct MotionParams {
        std::vector<double> amp;    // [channels x harmonics]
        std::vector<double> phase;  // [channels x harmonics]
    };
    MotionParams motion_params(long index) const;
    Tensor content_token(const Tensor& code, const std::vector<double>& motion) const;

    const Codec& codec_;
    SyntheticConfig cfg_;
    long count_;
    long eval_size_;
    uint64_t seed_;
    std::vector<Tensor> codebook_;  // each [garment_channels]
};

std::vector<SyntheticSample> generate_dataset(const Codec& codec, const SyntheticConfig& cfg,
                                              long n, uint64_t seed);

}  // namespace streamdit
