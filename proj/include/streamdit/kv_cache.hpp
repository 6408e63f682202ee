#pragma once

#include <optional>
#include <vector>

#include "streamdit/backbone.hpp"
#include "streamdit/codec.hpp"

namespace streamdit {

/// Cache rescheduling events; events due at the same chunk apply in the order
/// Refresh -> Withdraw -> Disentangle.
struct CacheEvent {
    enum class Kind { GarmentRefresh, HistoricalWithdraw, ReferenceDisentangle };
    Kind kind;
    long chunk = 0;
    Tensor new_garment;  // GarmentRefresh only
};

struct AttentionMassReport {
    double conditional_mass = 0.0;
    double historical_mass = 0.0;
    double intra_mass = 0.0;
};

/// Per-layer keyed K/V store over the retention policy
/// {Reference, Garment, Sink(0)} + rolling window {max(1, k-M+4) .. k},
/// where M counts frame-equivalents including the three pinned slots.
/// A cache belongs to one generation session and is mutated only between
/// chunk steps.
class KvCache {
  public:
    KvCache(long layers, long max_frames);

    /// Installs Reference (context+reference tokens) and Garment entries plus
    /// the condition latents needed by later rescheduling.
    void install_conditions(std::vector<KvEntry> entries, Tensor reference_latent,
                            Tensor garment_latent);

    /// Appends per-frame rolling entries ending at frame `latest` and applies
    /// the FIFO policy. The first frame ever appended (or the first after a
    /// withdraw) becomes the Sink. Frames must extend the window contiguously.
    void append_and_evict(std::vector<KvEntry> frames, long latest);

    /// Append without eviction; for the unbounded-cache cost ablation.
    void append_only(std::vector<KvEntry> frames, long latest);

    /// Replace the Garment entry with condition K/V recomputed for
    /// (current reference latent, new garment); nothing else changes.
    void garment_refresh(const Tensor& new_garment, const Backbone& backbone);

    /// Remove all Rolling entries and the Sink; Reference and Garment stay.
    /// Idempotent.
    void historical_withdraw();

    /// Decode the last generated latent frame, re-encode its final pixel
    /// frame as a single-frame latent, and replace the Reference entry with
    /// condition K/V computed from it and the current garment.
    void reference_disentangle(const Tensor& last_latent_frame, const Codec& codec,
                               const Backbone& backbone);

    /// Entries in attention column order: Reference, Garment, Sink, rolling.
    std::vector<const KvEntry*> view() const;

    /// Sink + rolling frame indices, ascending.
    std::vector<long> retained_frames() const;

    long video_tokens() const;
    long total_tokens() const;
    long layers() const { return layers_; }
    long max_frames() const { return max_frames_; }
    bool has_conditions() const { return ref_.has_value() && gar_.has_value(); }
    bool has_sink() const { return sink_.has_value(); }
    const Tensor& reference_latent() const { return ref_latent_; }
    const Tensor& garment_latent() const { return gar_latent_; }

  private:
    void evict(long latest);
    void append_frames(std::vector<KvEntry> frames, long latest);

    long layers_;
    long max_frames_;
    std::optional<KvEntry> ref_, gar_, sink_;
    std::vector<KvEntry> rolling_;
    Tensor ref_latent_, gar_latent_;
};

/// Average softmax mass of the last chunk's queries over conditional vs
/// historical columns; the two plus intra-chunk mass sum to 1.
AttentionMassReport attention_mass(const AttnMassAccum& accum);

/// The retained video-frame set of the retention formula, evaluated directly:
/// {0} U {max(1, k-M+4) .. k}. Shared by tests and telemetry.
std::vector<long> retention_formula(long k, long max_frames);

}  // namespace streamdit
