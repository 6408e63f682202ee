#include "streamdit/session.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

namespace streamdit {

Session::Session(const Backbone& model, const Codec& codec, SessionConfig cfg,
                 Tensor reference_latent, Tensor garment_latent, uint64_t seed)
    : model_(model),
      codec_(codec),
      cfg_(std::move(cfg)),
      cache_(model.cfg.layers, cfg_.cache_frames),
      rng_(seed) {
    const long P = model_.cfg.tokens_per_frame, C = model_.cfg.channels;
    check(reference_latent.rank() == 2 && reference_latent.rows() == P &&
              reference_latent.cols() == C,
          "session: reference latent shape");
    check(garment_latent.rank() == 2 && garment_latent.rows() == P && garment_latent.cols() == C,
          "session: garment latent shape");
    ConditionSet cond{reference_latent, garment_latent};
    cache_.install_conditions(model_.condition_kv(cond), std::move(reference_latent),
                              std::move(garment_latent));
}

void Session::enqueue_switch(SwitchCommand cmd) {
    check(cmd.target_chunk > chunk_, "enqueue_switch: target chunk is not in the future");
    const long P = model_.cfg.tokens_per_frame, C = model_.cfg.channels;
    check(cmd.new_garment.rank() == 2 && cmd.new_garment.rows() == P && cmd.new_garment.cols() == C,
          "enqueue_switch: garment latent shape");
    queue_.push_back(std::move(cmd));
}

void Session::apply_due_events() {
    // canonical order at a boundary: refresh -> withdraw -> disentangle
    std::vector<SwitchCommand> due;
    for (auto it = queue_.begin(); it != queue_.end();) {
        if (it->target_chunk == chunk_) {
            due.push_back(std::move(*it));
            it = queue_.erase(it);
        } else {
            ++it;
        }
    }
    pending_events_.clear();
    for (const SwitchCommand& cmd : due) {
        cache_.garment_refresh(cmd.new_garment, model_);
        pending_events_ += "refresh";
        if (cmd.do_withdraw) {
            cache_.historical_withdraw();
            next_frame_ = 0;
            pending_new_segment_ = true;
            pending_events_ += "+withdraw";
        }
        if (cmd.do_disentangle) {
            check(last_frame_.rank() == 2, "session: disentangle before any generated frame");
            cache_.reference_disentangle(last_frame_, codec_, model_);
            pending_events_ += "+disentangle";
        }
    }
}

std::vector<Tensor> Session::step() {
    check(!failed_, "session: failed");
    const auto t0 = std::chrono::steady_clock::now();
    apply_due_events();

    const long P = model_.cfg.tokens_per_frame, C = model_.cfg.channels;
    const long chunk = cfg_.chunk_frames;
    const long first = next_frame_;
    const std::vector<double> ts = cfg_.schedule.ts();

    AttnMassAccum mass;
    Tensor x0;
    {
        Tape tape;
        Backbone::Bound bound = model_.bind(tape);
        Tape::Id z = tape.constant(rng_.normal_tensor({chunk * P, C}));
        Tape::Id x0_id = -1;
        for (size_t si = 0; si < ts.size(); ++si) {
            const double t = ts[si];
            std::vector<Block> blocks;
            for (long i = 0; i < chunk; ++i)
                blocks.push_back({Role::Video, first + i, t, tape.slice_rows(z, i * P, P)});
            const std::vector<const KvEntry*> view = cache_.view();
            long cached = 0;
            for (const KvEntry* e : view)
                cached += e->tokens();
            Backbone::ForwardOut fo = model_.forward_incremental(
                tape, bound, blocks, view, build_inference_mask(0, cached, chunk * P), &mass);
            x0_id = tape.sub(z, tape.scale(fo.video_pred, t));
            if (si + 1 < ts.size()) {
                const double tn = ts[si + 1];
                z = tape.add(tape.scale(x0_id, 1.0 - tn),
                             tape.constant(scale(rng_.normal_tensor({chunk * P, C}), tn)));
            }
        }
        x0 = tape.val(x0_id);
    }
    if (!x0.finite()) {
        failed_ = true;
        throw std::runtime_error("session: model diverged (non-finite chunk)");
    }
    std::vector<Tensor> frames = split_frames(x0, P);

    // cache the chunk from a clean pass
    {
        Tape tape;
        Backbone::Bound bound = model_.bind(tape);
        std::vector<Block> clean;
        for (long i = 0; i < chunk; ++i)
            clean.push_back(
                {Role::Video, first + i, 0.0, tape.constant(frames[static_cast<size_t>(i)])});
        const std::vector<const KvEntry*> view = cache_.view();
        long cached = 0;
        for (const KvEntry* e : view)
            cached += e->tokens();
        Backbone::ForwardOut co = model_.forward_incremental(
            tape, bound, clean, view, build_inference_mask(0, cached, chunk * P), &mass);
        std::vector<KvEntry> entries;
        for (long i = 0; i < chunk; ++i)
            entries.push_back(
                model_.detach_kv(tape, Role::Video, first + i, co.block_kv[static_cast<size_t>(i)]));
        if (cfg_.no_evict)
            cache_.append_only(std::move(entries), first + chunk - 1);
        else
            cache_.append_and_evict(std::move(entries), first + chunk - 1);
    }

    bool started_segment = false;
    if (pending_new_segment_) {
        segment_starts_.push_back(static_cast<long>(stream_.size()));
        pending_new_segment_ = false;
        started_segment = true;
    }
    for (const Tensor& f : frames)
        stream_.push_back(f);
    last_frame_ = frames.back();
    next_frame_ = first + chunk;

    const AttentionMassReport report = attention_mass(mass);
    ChunkTrace tr;
    tr.chunk = chunk_;
    tr.retained = cache_.retained_frames();
    tr.events = pending_events_.empty() ? "-" : pending_events_;
    tr.conditional_mass = report.conditional_mass;
    tr.historical_mass = report.historical_mass;
    tr.intra_mass = report.intra_mass;
    tr.cache_tokens = cache_.total_tokens();
    tr.new_segment = started_segment;
    tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace_.push_back(std::move(tr));

    ++chunk_;
    return frames;
}

PixelVideo Session::decode_stream() const {
    PixelVideo out;
    for (size_t s = 0; s < segment_starts_.size(); ++s) {
        const long begin = segment_starts_[s];
        const long end = s + 1 < segment_starts_.size() ? segment_starts_[s + 1]
                                                        : static_cast<long>(stream_.size());
        LatentSequence seg;
        for (long i = begin; i < end; ++i)
            seg.frames.push_back({stream_[static_cast<size_t>(i)], 0.0});
        for (Tensor& p : codec_.decode(seg).frames)
            out.frames.push_back(std::move(p));
    }
    return out;
}

void Session::write_trace_csv(const std::string& path) const {
    std::ofstream os(path);
    check(os.good(), "session: cannot open trace file");
    os << "chunk,retained,event,conditional_mass,historical_mass\n";
    for (const ChunkTrace& tr : trace_) {
        os << tr.chunk << ',';
        for (size_t i = 0; i < tr.retained.size(); ++i)
            os << (i ? ";" : "") << tr.retained[i];
        os << ',' << tr.events << ',' << tr.conditional_mass << ',' << tr.historical_mass << '\n';
    }
}

}  // namespace streamdit
