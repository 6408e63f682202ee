#include "streamdit/codec.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace streamdit {

namespace {
// Two-pass modified Gram-Schmidt; at fp64 the columns are orthonormal to
// ~1e-15, which the round-trip tolerance of 1e-12 relies on.
Tensor orthonormalize(Tensor m) {
    const long rows = m.rows(), cols = m.cols();
    for (int pass = 0; pass < 2; ++pass) {
        for (long j = 0; j < cols; ++j) {
            for (long p = 0; p < j; ++p) {
                double dot = 0.0;
                for (long i = 0; i < rows; ++i)
                    dot += m.at(i, p) * m.at(i, j);
                for (long i = 0; i < rows; ++i)
                    m.at(i, j) -= dot * m.at(i, p);
            }
            double norm = 0.0;
            for (long i = 0; i < rows; ++i)
                norm += m.at(i, j) * m.at(i, j);
            norm = std::sqrt(norm);
            check(norm > 1e-8, "codec: degenerate random basis");
            for (long i = 0; i < rows; ++i)
                m.at(i, j) /= norm;
        }
    }
    return m;
}

Tensor matvec(const Tensor& m, const std::vector<double>& x) {
    Tensor y({m.rows()});
    for (long i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (long j = 0; j < m.cols(); ++j)
            s += m.at(i, j) * x[static_cast<size_t>(j)];
        y.at(i) = s;
    }
    return y;
}

Tensor matvec_t(const Tensor& m, const Tensor& x) {  // m^T x
    Tensor y({m.cols()});
    for (long j = 0; j < m.cols(); ++j) {
        double s = 0.0;
        for (long i = 0; i < m.rows(); ++i)
            s += m.at(i, j) * x.at(i);
        y.at(j) = s;
    }
    return y;
}
}  // namespace

Codec::Codec(CodecConfig cfg) : cfg_(cfg) {
    check(cfg_.tokens_per_frame == 4, "codec: token count must equal the 4-frame group size");
    check(cfg_.pixel_dim == cfg_.tokens_per_frame * cfg_.channels,
          "codec: pixel_dim must equal tokens_per_frame * channels");
    Rng rng(cfg_.seed);
    Tensor basis = orthonormalize(rng.normal_tensor({cfg_.pixel_dim, cfg_.pixel_dim}));
    w_ = Tensor({cfg_.pixel_dim, cfg_.channels});
    u_ = Tensor({cfg_.pixel_dim, cfg_.pixel_dim - cfg_.channels});
    for (long i = 0; i < cfg_.pixel_dim; ++i) {
        for (long j = 0; j < cfg_.channels; ++j)
            w_.at(i, j) = basis.at(i, j);
        for (long j = cfg_.channels; j < cfg_.pixel_dim; ++j)
            u_.at(i, j - cfg_.channels) = basis.at(i, j);
    }
}

LatentSequence Codec::encode(const PixelVideo& video) const {
    const long F = video.size();
    check(F >= 1 && F % 4 == 1, "encode: frame count must be 1 mod 4");
    for (const auto& f : video.frames)
        check(f.rank() == 1 && f.numel() == cfg_.pixel_dim && f.finite(), "encode: bad pixel frame");

    LatentSequence out;
    out.frames.push_back(encode_image(video.frames[0]).frames[0]);
    const long P = cfg_.tokens_per_frame, C = cfg_.channels;
    for (long g = 1; g < latent_len(F); ++g) {
        LatentFrame lf;
        lf.tokens = Tensor({P, C});
        for (long s = 0; s < P; ++s) {
            const Tensor tok = matvec_t(w_, video.frames[static_cast<size_t>(1 + 4 * (g - 1) + s)]);
            for (long c = 0; c < C; ++c)
                lf.tokens.at(s, c) = tok.at(c);
        }
        out.frames.push_back(std::move(lf));
    }
    return out;
}

PixelVideo Codec::decode(const LatentSequence& latents) const {
    check(latents.size() >= 1, "decode: empty sequence");
    const long P = cfg_.tokens_per_frame, C = cfg_.channels;
    PixelVideo out;
    for (long i = 0; i < latents.size(); ++i) {
        const Tensor& z = latents.frames[static_cast<size_t>(i)].tokens;
        check(z.rank() == 2 && z.rows() == P && z.cols() == C && z.finite(),
              "decode: bad latent frame");
        if (i == 0) {
            out.frames.push_back(decode_image(z));
        } else {
            for (long s = 0; s < P; ++s) {
                std::vector<double> tok(static_cast<size_t>(C));
                for (long c = 0; c < C; ++c)
                    tok[static_cast<size_t>(c)] = z.at(s, c);
                out.frames.push_back(matvec(w_, tok));
            }
        }
    }
    return out;
}

LatentSequence Codec::encode_image(const Tensor& frame) const {
    check(frame.rank() == 1 && frame.numel() == cfg_.pixel_dim && frame.finite(),
          "encode_image: bad pixel frame");
    const long P = cfg_.tokens_per_frame, C = cfg_.channels;
    LatentFrame lf;
    lf.tokens = Tensor({P, C});
    const Tensor head = matvec_t(w_, frame);  // token 0
    for (long c = 0; c < C; ++c)
        lf.tokens.at(0, c) = head.at(c);
    const Tensor tail = matvec_t(u_, frame);  // tokens 1..P-1 row-major
    for (long s = 1; s < P; ++s)
        for (long c = 0; c < C; ++c)
            lf.tokens.at(s, c) = tail.at((s - 1) * C + c);
    LatentSequence out;
    out.frames.push_back(std::move(lf));
    return out;
}

Tensor Codec::decode_image(const Tensor& latent_tokens) const {
    const long P = cfg_.tokens_per_frame, C = cfg_.channels;
    check(latent_tokens.rank() == 2 && latent_tokens.rows() == P && latent_tokens.cols() == C,
          "decode_image: bad latent frame");
    Tensor p({cfg_.pixel_dim});
    for (long i = 0; i < cfg_.pixel_dim; ++i) {
        double s = 0.0;
        for (long c = 0; c < C; ++c)
            s += w_.at(i, c) * latent_tokens.at(0, c);
        for (long t = 1; t < P; ++t)
            for (long c = 0; c < C; ++c)
                s += u_.at(i, (t - 1) * C + c) * latent_tokens.at(t, c);
        p.at(i) = s;
    }
    return p;
}

std::vector<Tensor> Codec::decode_group(const Tensor& latent_tokens) const {
    const long P = cfg_.tokens_per_frame, C = cfg_.channels;
    check(latent_tokens.rank() == 2 && latent_tokens.rows() == P && latent_tokens.cols() == C,
          "decode_group: bad latent frame");
    std::vector<Tensor> out;
    for (long s = 0; s < P; ++s) {
        std::vector<double> tok(static_cast<size_t>(C));
        for (long c = 0; c < C; ++c)
            tok[static_cast<size_t>(c)] = latent_tokens.at(s, c);
        out.push_back(matvec(w_, tok));
    }
    return out;
}

void write_video_csv(const std::string& path, const PixelVideo& video) {
    std::ofstream os(path);
    check(os.good(), "write_video_csv: cannot open");
    char buf[40];
    for (long i = 0; i < video.size(); ++i) {
        os << i;
        for (double v : video.frames[static_cast<size_t>(i)].data) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

PixelVideo read_video_csv(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "read_video_csv: cannot open");
    PixelVideo out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // frame index, implied by order
        std::vector<double> vals;
        while (std::getline(ss, cell, ','))
            vals.push_back(std::stod(cell));
        out.frames.emplace_back(std::vector<long>{static_cast<long>(vals.size())}, std::move(vals));
    }
    return out;
}

}  // namespace streamdit
