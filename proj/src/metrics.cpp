#include "streamdit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace streamdit {

namespace {
double l2(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (long i = 0; i < a.numel(); ++i)
        s += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
    return std::sqrt(s);
}

long segment_of_chunk(const std::vector<long>& switch_chunks, long chunk) {
    long seg = 0;
    for (long sc : switch_chunks)
        if (chunk >= sc)
            ++seg;
    return seg;
}
}  // namespace

bool StreamReadout::is_first_frame(long index) const {
    for (long s : structural_starts)
        if (s == index)
            return true;
    return false;
}

Tensor StreamReadout::garment_estimate(const Tensor& frame, long index) const {
    const long gc = garment_channels;
    Tensor g({gc});
    if (is_first_frame(index)) {
        for (long c = 0; c < gc; ++c)
            g.at(c) = frame.at(0, c);
        return g;
    }
    for (long c = 0; c < gc; ++c) {
        double s = 0.0;
        for (long tok = 0; tok < frame.rows(); ++tok)
            s += frame.at(tok, c);
        g.at(c) = s / static_cast<double>(frame.rows());
    }
    return g;
}

std::vector<Tensor> StreamReadout::motion_states(const Tensor& frame, long index) const {
    const long gc = garment_channels, C = frame.cols();
    std::vector<Tensor> out;
    const long tokens = is_first_frame(index) ? 1 : frame.rows();
    for (long tok = 0; tok < tokens; ++tok) {
        Tensor m({C - gc});
        for (long c = gc; c < C; ++c)
            m.at(c - gc) = frame.at(tok, c);
        out.push_back(std::move(m));
    }
    return out;
}

SwitchMetrics evaluate_switch(const std::vector<Tensor>& stream, const StreamReadout& readout,
                              const std::vector<long>& switch_chunks,
                              const std::vector<long>& active_code_ids, long worn_code_id,
                              const std::vector<Tensor>& codebook) {
    check(active_code_ids.size() == switch_chunks.size() + 1,
          "evaluate_switch: need one active code per segment");
    const long chunk = readout.chunk_frames;
    const long nseg = static_cast<long>(active_code_ids.size());

    std::vector<double> err_active(static_cast<size_t>(nseg), 0.0);
    std::vector<double> err_prev(static_cast<size_t>(nseg), 0.0);
    std::vector<long> frames(static_cast<size_t>(nseg), 0);

    for (long i = 0; i < static_cast<long>(stream.size()); ++i) {
        const long seg = segment_of_chunk(switch_chunks, i / chunk);
        const Tensor gest = readout.garment_estimate(stream[static_cast<size_t>(i)], i);
        const long active = active_code_ids[static_cast<size_t>(seg)];
        const long prev = seg == 0 ? worn_code_id : active_code_ids[static_cast<size_t>(seg - 1)];
        err_active[static_cast<size_t>(seg)] += l2(gest, codebook.at(static_cast<size_t>(active)));
        err_prev[static_cast<size_t>(seg)] += l2(gest, codebook.at(static_cast<size_t>(prev)));
        ++frames[static_cast<size_t>(seg)];
    }

    SwitchMetrics m;
    long start = 0;
    const long total_chunks = static_cast<long>(stream.size()) / chunk;
    for (long s = 0; s < nseg; ++s) {
        SegmentReport r;
        r.start_chunk = start;
        r.end_chunk = s < nseg - 1 ? switch_chunks[static_cast<size_t>(s)] : total_chunks;
        start = r.end_chunk;
        r.code_id = active_code_ids[static_cast<size_t>(s)];
        if (frames[static_cast<size_t>(s)] > 0) {
            r.err_active = err_active[static_cast<size_t>(s)] / frames[static_cast<size_t>(s)];
            r.err_previous = err_prev[static_cast<size_t>(s)] / frames[static_cast<size_t>(s)];
        }
        m.segments.push_back(r);
    }

    bool has_prev = false;
    Tensor prev;
    for (long i = 0; i < static_cast<long>(stream.size()); ++i) {
        const std::vector<Tensor> states = readout.motion_states(stream[static_cast<size_t>(i)], i);
        for (size_t k = 0; k < states.size(); ++k) {
            if (has_prev) {
                const double d = l2(states[k], prev);
                bool boundary = false;
                if (k == 0)
                    for (long sc : switch_chunks)
                        if (i == sc * chunk)
                            boundary = true;
                if (boundary)
                    m.boundary_deltas.push_back(d);
                else
                    m.intra_deltas.push_back(d);
            }
            prev = states[k];
            has_prev = true;
        }
    }
    m.median_intra_delta = median(m.intra_deltas);
    return m;
}

std::vector<double> garment_errors_to_codebook(const std::vector<Tensor>& stream,
                                               const StreamReadout& readout, long begin_frame,
                                               long end_frame,
                                               const std::vector<Tensor>& codebook) {
    std::vector<double> err(codebook.size(), 0.0);
    long n = 0;
    for (long i = begin_frame; i < end_frame; ++i) {
        const Tensor gest = readout.garment_estimate(stream[static_cast<size_t>(i)], i);
        for (size_t c = 0; c < codebook.size(); ++c)
            err[c] += l2(gest, codebook[c]);
        ++n;
    }
    if (n > 0)
        for (double& e : err)
            e /= static_cast<double>(n);
    return err;
}

StreamingSwitchMetrics::StreamingSwitchMetrics(StreamReadout readout,
                                               std::vector<long> switch_chunks,
                                               std::vector<long> active_code_ids,
                                               long worn_code_id, std::vector<Tensor> codebook)
    : readout_(std::move(readout)),
      switch_chunks_(std::move(switch_chunks)),
      active_code_ids_(std::move(active_code_ids)),
      worn_code_id_(worn_code_id),
      codebook_(std::move(codebook)) {
    check(active_code_ids_.size() == switch_chunks_.size() + 1,
          "streaming metrics: need one active code per segment");
    acc_.resize(active_code_ids_.size());
}

void StreamingSwitchMetrics::push(const Tensor& frame) {
    const long i = frame_index_++;
    const long seg = segment_of_chunk(switch_chunks_, i / readout_.chunk_frames);
    const Tensor gest = readout_.garment_estimate(frame, i);
    const long active = active_code_ids_[static_cast<size_t>(seg)];
    const long prev_code =
        seg == 0 ? worn_code_id_ : active_code_ids_[static_cast<size_t>(seg - 1)];
    acc_[static_cast<size_t>(seg)].err_active += l2(gest, codebook_[static_cast<size_t>(active)]);
    acc_[static_cast<size_t>(seg)].err_previous +=
        l2(gest, codebook_[static_cast<size_t>(prev_code)]);
    ++acc_[static_cast<size_t>(seg)].frames;

    for (size_t k = 0; k < readout_.motion_states(frame, i).size(); ++k) {
        const Tensor state = readout_.motion_states(frame, i)[k];
        if (has_prev_state_) {
            const double d = l2(state, prev_state_);
            bool boundary = false;
            if (k == 0)
                for (long sc : switch_chunks_)
                    if (i == sc * readout_.chunk_frames)
                        boundary = true;
            if (boundary)
                boundary_deltas_.push_back(d);
            else
                intra_deltas_.push_back(d);
        }
        prev_state_ = state;
        has_prev_state_ = true;
    }
}

SwitchMetrics StreamingSwitchMetrics::finish() {
    SwitchMetrics m;
    long start = 0;
    const long total_chunks = frame_index_ / readout_.chunk_frames;
    for (size_t s = 0; s < acc_.size(); ++s) {
        SegmentReport r;
        r.start_chunk = start;
        r.end_chunk = s < switch_chunks_.size() ? switch_chunks_[s] : total_chunks;
        start = r.end_chunk;
        r.code_id = active_code_ids_[s];
        if (acc_[s].frames > 0) {
            r.err_active = acc_[s].err_active / acc_[s].frames;
            r.err_previous = acc_[s].err_previous / acc_[s].frames;
        }
        m.segments.push_back(r);
    }
    m.boundary_deltas = boundary_deltas_;
    m.intra_deltas = intra_deltas_;
    m.median_intra_delta = median(intra_deltas_);
    return m;
}

double median(std::vector<double> xs) {
    if (xs.empty())
        return 0.0;
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace streamdit
