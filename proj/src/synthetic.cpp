#include "streamdit/synthetic.hpp"

#include <cmath>

namespace streamdit {

SyntheticDataset::SyntheticDataset(const Codec& codec, SyntheticConfig cfg, long count,
                                   uint64_t seed)
    : codec_(codec), cfg_(std::move(cfg)), count_(count), seed_(seed) {
    check(count_ >= 1, "dataset: need at least one sample");
    check(cfg_.codebook_size >= 2, "dataset: codebook needs >= 2 codes for a worn mismatch");
    check(cfg_.garment_channels < codec_.config().channels, "dataset: garment channels too wide");
    eval_size_ = std::max<long>(1, count_ / 5);

    Rng rng = Rng(seed_).fork(0xC0DEB00Cull);
    for (long i = 0; i < cfg_.codebook_size; ++i) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            Tensor code = rng.normal_tensor({cfg_.garment_channels});
            double norm = 0.0;
            for (double x : code.data)
                norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-6)
                continue;
            for (auto& x : code.data)
                x *= cfg_.code_norm / norm;
            bool ok = true;
            for (const Tensor& prev : codebook_) {
                double d = 0.0;
                for (long j = 0; j < code.numel(); ++j)
                    d += (code.at(j) - prev.at(j)) * (code.at(j) - prev.at(j));
                if (std::sqrt(d) < cfg_.code_min_sep) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                codebook_.push_back(std::move(code));
                break;
            }
        }
        check(static_cast<long>(codebook_.size()) == i + 1, "dataset: codebook separation failed");
    }
}

SyntheticDataset::MotionParams SyntheticDataset::motion_params(long index) const {
    const long mc = codec_.config().channels - cfg_.garment_channels;
    const long H = static_cast<long>(cfg_.motion_freqs.size());
    Rng rng = Rng(seed_).fork(0x40710ull + static_cast<uint64_t>(index));
    MotionParams mp;
    mp.amp.resize(static_cast<size_t>(mc * H));
    mp.phase.resize(static_cast<size_t>(mc * H));
    for (long j = 0; j < mc; ++j) {
        double sq = 0.0;
        for (long h = 0; h < H; ++h) {
            const double a = rng.normal();
            mp.amp[static_cast<size_t>(j * H + h)] = a;
            sq += a * a;
        }
        const double s = std::sqrt(2.0 / std::max(sq, 1e-12));  // unit variance per channel
        for (long h = 0; h < H; ++h) {
            mp.amp[static_cast<size_t>(j * H + h)] *= s;
            mp.phase[static_cast<size_t>(j * H + h)] = rng.uniform() * 6.283185307179586;
        }
    }
    return mp;
}

Tensor SyntheticDataset::motion_state(long sample_index, double pixel_time) const {
    const long mc = codec_.config().channels - cfg_.garment_channels;
    const long H = static_cast<long>(cfg_.motion_freqs.size());
    const MotionParams mp = motion_params(sample_index);
    Tensor m({mc});
    for (long j = 0; j < mc; ++j) {
        double v = 0.0;
        for (long h = 0; h < H; ++h)
            v += mp.amp[static_cast<size_t>(j * H + h)] *
                 std::sin(cfg_.motion_freqs[static_cast<size_t>(h)] * pixel_time +
                          mp.phase[static_cast<size_t>(j * H + h)]);
        m.at(j) = v;
    }
    return m;
}

namespace {
Tensor first_frame_latent(long P, long C, long gc, const Tensor& code, const Tensor& motion) {
    Tensor z({P, C});
    for (long c = 0; c < gc; ++c)
        z.at(0, c) = code.at(c);
    for (long c = gc; c < C; ++c)
        z.at(0, c) = motion.at(c - gc);
    return z;
}
}  // namespace

Tensor SyntheticDataset::garment_latent(long code_id) const {
    const long P = codec_.config().tokens_per_frame, C = codec_.config().channels;
    const Tensor zero_motion({C - cfg_.garment_channels});
    return first_frame_latent(P, C, cfg_.garment_channels,
                              codebook_.at(static_cast<size_t>(code_id)), zero_motion);
}

Tensor SyntheticDataset::garment_image(long code_id) const {
    return codec_.decode_image(garment_latent(code_id));
}

SyntheticSample SyntheticDataset::make(long index) const {
    check(index >= 0 && index < count_, "dataset: index out of range");
    const long P = codec_.config().tokens_per_frame, C = codec_.config().channels;
    const long gc = cfg_.garment_channels;
    Rng rng = Rng(seed_).fork(0x5A3D0ull + static_cast<uint64_t>(index));

    SyntheticSample s;
    s.index = index;
    s.garment_id = static_cast<long>(rng.next_u64() % static_cast<uint64_t>(codebook_.size()));
    s.worn_id = static_cast<long>(rng.next_u64() % static_cast<uint64_t>(codebook_.size() - 1));
    if (s.worn_id >= s.garment_id)
        ++s.worn_id;  // worn code always differs from the target

    const Tensor& g = codebook_[static_cast<size_t>(s.garment_id)];
    const Tensor& w = codebook_[static_cast<size_t>(s.worn_id)];

    s.video_latents.frames.push_back(
        {first_frame_latent(P, C, gc, g, motion_state(index, 0.0)), 0.0});
    for (long i = 1; i < cfg_.frames; ++i) {
        Tensor z({P, C});
        for (long tok = 0; tok < P; ++tok) {
            const Tensor m = motion_state(index, static_cast<double>(1 + 4 * (i - 1) + tok));
            for (long c = 0; c < gc; ++c)
                z.at(tok, c) = g.at(c);
            for (long c = gc; c < C; ++c)
                z.at(tok, c) = m.at(c - gc);
        }
        s.video_latents.frames.push_back({std::move(z), 0.0});
    }

    s.reference = first_frame_latent(P, C, gc, w, motion_state(index, 0.0));
    s.garment = garment_latent(s.garment_id);
    s.reference_image = codec_.decode_image(s.reference);
    s.garment_image = codec_.decode_image(s.garment);
    return s;
}

std::vector<SyntheticSample> generate_dataset(const Codec& codec, const SyntheticConfig& cfg,
                                              long n, uint64_t seed) {
    SyntheticDataset ds(codec, cfg, n, seed);
    std::vector<SyntheticSample> out;
    for (long i = 0; i < n; ++i)
        out.push_back(ds.make(i));
    return out;
}

}  // namespace streamdit
