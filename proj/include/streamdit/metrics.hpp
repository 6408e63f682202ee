#pragma once

#include <vector>

#include "streamdit/tensor.hpp"

namespace streamdit {

/// Readouts over a generated latent stream. Frames that start a structural
/// segment use the first-frame layout (content in token 0 only); all other
/// frames carry one motion sub-state per token.
struct StreamReadout {
    long garment_channels = 4;
    long chunk_frames = 3;
    std::vector<long> structural_starts;  // global frame indices of segment-initial frames

    bool is_first_frame(long index) const;
    /// Garment-channel estimate of one frame, [gc].
    Tensor garment_estimate(const Tensor& frame, long index) const;
    /// Motion sub-states of one frame in pixel-time order, each [C - gc].
    std::vector<Tensor> motion_states(const Tensor& frame, long index) const;
};

struct SegmentReport {
    long start_chunk = 0;
    long end_chunk = 0;  // exclusive
    long code_id = -1;   // active garment
    double err_active = 0.0;
    double err_previous = 0.0;  // vs the code active before this segment
};

struct SwitchMetrics {
    std::vector<SegmentReport> segments;
    std::vector<double> boundary_deltas;  // motion jump across each switch
    std::vector<double> intra_deltas;     // consecutive sub-states inside segments
    double median_intra_delta = 0.0;
};

/// Per-segment garment errors against the active and previous codes, plus the
/// motion-continuity deltas around each switch chunk. `active_code_ids` has
/// one entry per logical segment (switch count + 1); `previous` for the first
/// segment is the reference's worn code.
SwitchMetrics evaluate_switch(const std::vector<Tensor>& stream, const StreamReadout& readout,
                              const std::vector<long>& switch_chunks,
                              const std::vector<long>& active_code_ids, long worn_code_id,
                              const std::vector<Tensor>& codebook);

/// Mean garment-channel error of a frame range against every codebook entry.
std::vector<double> garment_errors_to_codebook(const std::vector<Tensor>& stream,
                                               const StreamReadout& readout, long begin_frame,
                                               long end_frame,
                                               const std::vector<Tensor>& codebook);

/// Streaming (frame-at-a-time) accumulation of the same metrics; must agree
/// with the whole-array path to 1e-12.
class StreamingSwitchMetrics {
  public:
    StreamingSwitchMetrics(StreamReadout readout, std::vector<long> switch_chunks,
                           std::vector<long> active_code_ids, long worn_code_id,
                           std::vector<Tensor> codebook);
    void push(const Tensor& frame);
    SwitchMetrics finish();

  private:
    StreamReadout readout_;
    std::vector<long> switch_chunks_, active_code_ids_;
    long worn_code_id_;
    std::vector<Tensor> codebook_;
    long frame_index_ = 0;
    bool has_prev_state_ = false;
    Tensor prev_state_;
    struct SegAccum {
        double err_active = 0.0, err_previous = 0.0;
        long frames = 0;
    };
    std::vector<SegAccum> acc_;
    std::vector<double> boundary_deltas_, intra_deltas_;
};

double median(std::vector<double> xs);

}  // namespace streamdit
