#include "streamdit/kv_cache.hpp"

#include <algorithm>

namespace streamdit {

KvCache::KvCache(long layers, long max_frames) : layers_(layers), max_frames_(max_frames) {
    check(layers >= 1, "kv_cache: need at least one layer");
    // three pinned slots (reference, garment, sink) plus room for one frame
    check(max_frames >= 4, "kv_cache: max size must cover pinned slots plus history");
}

void KvCache::install_conditions(std::vector<KvEntry> entries, Tensor reference_latent,
                                 Tensor garment_latent) {
    check(entries.size() == 2, "install_conditions: expected [reference, garment]");
    check(entries[0].role == Role::Reference && entries[1].role == Role::Garment,
          "install_conditions: wrong roles");
    for (const auto& e : entries)
        check(static_cast<long>(e.k.size()) == layers_, "install_conditions: layer mismatch");
    ref_ = std::move(entries[0]);
    gar_ = std::move(entries[1]);
    ref_latent_ = std::move(reference_latent);
    gar_latent_ = std::move(garment_latent);
}

void KvCache::append_frames(std::vector<KvEntry> frames, long latest) {
    check(has_conditions(), "kv_cache: conditions not installed");
    long expect = latest - static_cast<long>(frames.size()) + 1;
    if (sink_.has_value())
        check(expect == (rolling_.empty() ? sink_->frame : rolling_.back().frame) + 1,
              "kv_cache: non-contiguous append");
    else
        check(expect == 0 && rolling_.empty(), "kv_cache: first append must start at frame 0");
    for (auto& f : frames) {
        check(static_cast<long>(f.k.size()) == layers_, "kv_cache: layer mismatch");
        check(f.role == Role::Video && f.frame == expect, "kv_cache: bad frame entry");
        ++expect;
        if (!sink_.has_value())
            sink_ = std::move(f);
        else
            rolling_.push_back(std::move(f));
    }
}

void KvCache::evict(long latest) {
    const long lo = std::max<long>(1, latest - max_frames_ + 4);
    auto it = rolling_.begin();
    while (it != rolling_.end() && it->frame < lo)
        ++it;
    rolling_.erase(rolling_.begin(), it);
}

void KvCache::append_and_evict(std::vector<KvEntry> frames, long latest) {
    append_frames(std::move(frames), latest);
    evict(latest);
}

void KvCache::append_only(std::vector<KvEntry> frames, long latest) {
    append_frames(std::move(frames), latest);
}

void KvCache::garment_refresh(const Tensor& new_garment, const Backbone& backbone) {
    check(gar_.has_value(), "garment_refresh: missing garment slot");
    ConditionSet cond{ref_latent_, new_garment};
    std::vector<KvEntry> entries = backbone.condition_kv(cond);
    gar_ = std::move(entries[1]);
    gar_latent_ = new_garment;
}

void KvCache::historical_withdraw() {
    sink_.reset();
    rolling_.clear();
}

void KvCache::reference_disentangle(const Tensor& last_latent_frame, const Codec& codec,
                                    const Backbone& backbone) {
    check(ref_.has_value(), "reference_disentangle: conditions not installed");
    check(last_latent_frame.rank() == 2, "reference_disentangle: missing last frame");
    const std::vector<Tensor> pixels = codec.decode_group(last_latent_frame);
    const Tensor new_ref = codec.encode_image(pixels.back()).frames[0].tokens;
    ConditionSet cond{new_ref, gar_latent_};
    std::vector<KvEntry> entries = backbone.condition_kv(cond);
    ref_ = std::move(entries[0]);
    ref_latent_ = new_ref;
}

std::vector<const KvEntry*> KvCache::view() const {
    check(has_conditions(), "kv_cache: conditions not installed");
    std::vector<const KvEntry*> v = {&*ref_, &*gar_};
    if (sink_.has_value())
        v.push_back(&*sink_);
    for (const auto& e : rolling_)
        v.push_back(&e);
    return v;
}

std::vector<long> KvCache::retained_frames() const {
    std::vector<long> out;
    if (sink_.has_value())
        out.push_back(sink_->frame);
    for (const auto& e : rolling_)
        out.push_back(e.frame);
    return out;
}

long KvCache::video_tokens() const {
    long n = sink_.has_value() ? sink_->tokens() : 0;
    for (const auto& e : rolling_)
        n += e.tokens();
    return n;
}

long KvCache::total_tokens() const {
    long n = video_tokens();
    if (ref_.has_value())
        n += ref_->tokens();
    if (gar_.has_value())
        n += gar_->tokens();
    return n;
}

AttentionMassReport attention_mass(const AttnMassAccum& accum) {
    check(accum.rows > 0, "attention_mass: no recorded attention");
    return {accum.conditional_mass(), accum.historical_mass(), accum.intra_mass()};
}

std::vector<long> retention_formula(long k, long max_frames) {
    std::vector<long> out = {0};
    for (long i = std::max<long>(1, k - max_frames + 4); i <= k; ++i)
        out.push_back(i);
    return out;
}

}  // namespace streamdit
