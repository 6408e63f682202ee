#pragma once

#include <map>
#include <string>
#include <vector>

#include "streamdit/codec.hpp"
#include "streamdit/masks.hpp"
#include "streamdit/tape.hpp"

namespace streamdit {

struct BackboneConfig {
    long layers = 2;
    long heads = 2;
    long head_dim = 8;
    long tokens_per_frame = 4;  // P
    long channels = 16;         // C
    long pos_slots = 8;         // video position cycle; slot 0 is pinned to frame 0
    double ln_eps = 1e-8;

    long d_model() const { return heads * head_dim; }
    long mlp_hidden() const { return 4 * d_model(); }
    long cond_tokens() const { return 1 + 2 * tokens_per_frame; }  // ctx + ref + gar
};

enum class Role { Context, Reference, Garment, Video };

/// One contiguous block of the unified token sequence. Conditions carry
/// timestep 0; video blocks carry the current noise level and a frame index
/// that selects their learned position slot.
struct Block {
    Role role;
    long frame = -1;
    double timestep = 0.0;
    Tape::Id latent = -1;  // [P, C]; unused for Context
};

/// Detached per-layer K/V for a token span, tagged with its role.
struct KvEntry {
    Role role;
    long frame = -1;
    std::vector<Tensor> k, v;  // per layer, [tokens, d_model]

    long tokens() const { return k.empty() ? 0 : k[0].rows(); }
};

/// Softmax-mass telemetry over the most recent incremental forwards, split by
/// key group. The three averages sum to 1.
struct AttnMassAccum {
    double conditional = 0.0;  // Reference + Garment (+ context) columns
    double historical = 0.0;   // Sink + rolling video columns
    double intra = 0.0;        // the new chunk's own columns
    long rows = 0;             // query-row samples accumulated (layers x heads x rows)

    double conditional_mass() const { return rows ? conditional / rows : 0.0; }
    double historical_mass() const { return rows ? historical / rows : 0.0; }
    double intra_mass() const { return rows ? intra / rows : 0.0; }
};

/// Toy diffusion transformer over the unified sequence: shared q/k/v
/// projections across all roles, pre-norm residual blocks, per-token
/// timestep embedding, learned positions per role slot. Predictions are
/// returned for video tokens only; every block's K/V is exposed per layer.
class Backbone {
  public:
    Backbone(BackboneConfig cfg, uint64_t seed);

    BackboneConfig cfg;
    ParamStore params;

    struct Bound {
        std::map<std::string, Tape::Id> ids;
        Tape::Id operator()(const std::string& name) const { return ids.at(name); }
    };
    Bound bind(Tape& t) const;

    struct BlockKvIds {
        std::vector<std::pair<Tape::Id, Tape::Id>> per_layer;  // (k, v)
    };
    struct ForwardOut {
        Tape::Id video_pred = -1;  // [video_tokens, C]
        std::vector<BlockKvIds> block_kv;
    };

    ForwardOut forward(Tape& t, const Bound& b, const std::vector<Block>& blocks,
                       const BoolMat& mask) const;

    /// New tokens attend all cached K/V plus themselves per `row_mask`
    /// (rows = new tokens, cols = cached + new). Matches the equivalent
    /// full-sequence forward to machine precision.
    ForwardOut forward_incremental(Tape& t, const Bound& b, const std::vector<Block>& new_blocks,
                                   const std::vector<const KvEntry*>& cache,
                                   const BoolMat& row_mask, AttnMassAccum* mass = nullptr) const;

    /// K/V for the condition tokens alone under the causal order
    /// context -> reference -> garment. Returns [Reference(ctx+ref), Garment].
    std::vector<KvEntry> condition_kv(const ConditionSet& cond) const;

    KvEntry detach_kv(const Tape& t, Role role, long frame, const BlockKvIds& ids) const;

    long block_tokens(const Block& blk) const {
        return blk.role == Role::Context ? 1 : cfg.tokens_per_frame;
    }
    long token_count(const std::vector<Block>& blocks) const;
    long pos_slot(long frame) const {
        return frame == 0 ? 0 : 1 + (frame - 1) % (cfg.pos_slots - 1);
    }

    /// Sinusoidal features of t on the 0..1000 scale, [1, d_model].
    Tensor timestep_features(double t) const;

  private:
    struct Embedded {
        Tape::Id x;  // [T, d_model]
        std::vector<long> offsets, lengths;
    };
    Embedded embed(Tape& t, const Bound& b, const std::vector<Block>& blocks) const;
};

}  // namespace streamdit
