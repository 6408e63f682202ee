#pragma once

#include <string>

#include "streamdit/distill.hpp"
#include "streamdit/flow.hpp"
#include "streamdit/kv_cache.hpp"

namespace streamdit {

/// A garment switch to apply at a future chunk boundary. Ablation flags
/// disable the withdraw and/or disentangle stages of the rescheduling.
struct SwitchCommand {
    long target_chunk = 0;
    Tensor new_garment;  // [P, C] latent at t = 0
    bool do_withdraw = true;
    bool do_disentangle = true;
};

struct SessionConfig {
    long chunk_frames = 3;
    long cache_frames = 23;  // M
    StepSchedule schedule = StepSchedule::standard();
    bool no_evict = false;  // unbounded-cache ablation for cost experiments
};

/// Chunk-wise autoregressive generation over a distilled generator. Events
/// are drained at chunk boundaries only, in the order refresh -> withdraw ->
/// disentangle; a withdraw starts a new segment whose first frame becomes the
/// new sink.
class Session {
  public:
    Session(const Backbone& model, const Codec& codec, SessionConfig cfg, Tensor reference_latent,
            Tensor garment_latent, uint64_t seed);

    /// Denoise the next chunk, append its K/V, advance the counter. Returns
    /// the chunk's latent frames at t = 0.
    std::vector<Tensor> step();

    /// Queue a switch; the target chunk must be strictly in the future.
    void enqueue_switch(SwitchCommand cmd);

    struct ChunkTrace {
        long chunk = 0;
        std::vector<long> retained;  // after the step
        std::string events;
        double conditional_mass = 0.0;
        double historical_mass = 0.0;
        double intra_mass = 0.0;
        double seconds = 0.0;
        long cache_tokens = 0;
        bool new_segment = false;
    };

    long chunk_count() const { return chunk_; }
    bool failed() const { return failed_; }
    const std::vector<Tensor>& stream() const { return stream_; }
    const std::vector<long>& segment_starts() const { return segment_starts_; }
    const std::vector<ChunkTrace>& trace() const { return trace_; }
    const KvCache& cache() const { return cache_; }

    /// Decode the full stream; each segment decodes as its own 1-then-4
    /// pixel-frame run.
    PixelVideo decode_stream() const;

    void write_trace_csv(const std::string& path) const;

  private:
    void apply_due_events();

    const Backbone& model_;
    const Codec& codec_;
    SessionConfig cfg_;
    KvCache cache_;
    Rng rng_;
    long chunk_ = 0;
    long next_frame_ = 0;  // segment-local frame index
    bool failed_ = false;
    bool pending_new_segment_ = true;
    Tensor last_frame_;  // last generated latent frame
    std::vector<SwitchCommand> queue_;
    std::vector<Tensor> stream_;
    std::vector<long> segment_starts_;  // global frame indices
    std::vector<ChunkTrace> trace_;
    std::string pending_events_;
};

}  // namespace streamdit
