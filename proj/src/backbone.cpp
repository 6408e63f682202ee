#include "streamdit/backbone.hpp"

#include <cmath>

namespace streamdit {

namespace {
std::string lname(long layer, const char* what) {
    return "L" + std::to_string(layer) + "." + what;
}
}  // namespace

Backbone::Backbone(BackboneConfig c, uint64_t seed) : cfg(c) {
    check(cfg.d_model() % 2 == 0, "backbone: d_model must be even");
    check(cfg.pos_slots >= 2, "backbone: pos_slots must be >= 2");
    Rng rng(seed);
    const long d = cfg.d_model(), C = cfg.channels, P = cfg.tokens_per_frame;
    const long hid = cfg.mlp_hidden();

    auto gauss = [&](std::vector<long> shape, double std) {
        Tensor t = rng.normal_tensor(std::move(shape));
        for (auto& x : t.data)
            x *= std;
        return t;
    };

    params["in.w"] = gauss({C, d}, 1.0 / std::sqrt(static_cast<double>(C)));
    params["in.b"] = Tensor::zeros({1, d});
    params["ctx"] = gauss({1, d}, 0.5);
    params["pos.cond"] = gauss({cfg.cond_tokens(), d}, 0.3);
    params["pos.video"] = gauss({cfg.pos_slots * P, d}, 0.3);
    params["temb.w"] = gauss({d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
    params["temb.b"] = Tensor::zeros({1, d});
    for (long l = 0; l < cfg.layers; ++l) {
        const double ws = 1.0 / std::sqrt(static_cast<double>(d));
        params[lname(l, "ln1.g")] = Tensor::full({1, d}, 1.0);
        params[lname(l, "ln1.b")] = Tensor::zeros({1, d});
        params[lname(l, "wq")] = gauss({d, d}, ws);
        params[lname(l, "wk")] = gauss({d, d}, ws);
        params[lname(l, "wv")] = gauss({d, d}, ws);
        params[lname(l, "wo")] = gauss({d, d}, ws);
        params[lname(l, "ln2.g")] = Tensor::full({1, d}, 1.0);
        params[lname(l, "ln2.b")] = Tensor::zeros({1, d});
        params[lname(l, "mlp.w1")] = gauss({d, hid}, ws);
        params[lname(l, "mlp.b1")] = Tensor::zeros({1, hid});
        params[lname(l, "mlp.w2")] = gauss({hid, d}, 1.0 / std::sqrt(static_cast<double>(hid)));
        params[lname(l, "mlp.b2")] = Tensor::zeros({1, d});
    }
    params["final.ln.g"] = Tensor::full({1, d}, 1.0);
    params["final.ln.b"] = Tensor::zeros({1, d});
    params["head.w"] = gauss({d, C}, 0.5 / std::sqrt(static_cast<double>(d)));
    params["head.b"] = Tensor::zeros({1, C});
}

Backbone::Bound Backbone::bind(Tape& t) const {
    Bound b;
    for (const auto& [name, tensor] : params)
        b.ids[name] = t.leaf(tensor, name);
    return b;
}

long Backbone::token_count(const std::vector<Block>& blocks) const {
    long n = 0;
    for (const auto& blk : blocks)
        n += block_tokens(blk);
    return n;
}

Tensor Backbone::timestep_features(double t) const {
    const long d = cfg.d_model();
    Tensor f({1, d});
    const double u = 1000.0 * t;
    const long half = d / 2;
    for (long k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                                  static_cast<double>(half));
        f.at(0, 2 * k) = std::sin(u * w);
        f.at(0, 2 * k + 1) = std::cos(u * w);
    }
    return f;
}

Backbone::Embedded Backbone::embed(Tape& t, const Bound& b, const std::vector<Block>& blocks) const {
    const long P = cfg.tokens_per_frame;
    std::vector<Tape::Id> parts;
    Embedded e;
    long offset = 0;
    for (const auto& blk : blocks) {
        Tape::Id base, pos;
        switch (blk.role) {
            case Role::Context:
                base = b("ctx");
                pos = t.slice_rows(b("pos.cond"), 0, 1);
                break;
            case Role::Reference:
                base = t.add_rowvec(t.matmul(blk.latent, b("in.w")), b("in.b"));
                pos = t.slice_rows(b("pos.cond"), 1, P);
                break;
            case Role::Garment:
                base = t.add_rowvec(t.matmul(blk.latent, b("in.w")), b("in.b"));
                pos = t.slice_rows(b("pos.cond"), 1 + P, P);
                break;
            case Role::Video:
                check(blk.frame >= 0, "backbone: video block needs a frame index");
                base = t.add_rowvec(t.matmul(blk.latent, b("in.w")), b("in.b"));
                pos = t.slice_rows(b("pos.video"), pos_slot(blk.frame) * P, P);
                break;
            default:
                throw std::invalid_argument("backbone: bad role");
        }
        const Tape::Id temb =
            t.add_rowvec(t.matmul(t.constant(timestep_features(blk.timestep)), b("temb.w")),
                         b("temb.b"));
        const Tape::Id x = t.add_rowvec(t.add(base, pos), temb);
        parts.push_back(x);
        const long len = block_tokens(blk);
        e.offsets.push_back(offset);
        e.lengths.push_back(len);
        offset += len;
    }
    e.x = parts.size() == 1 ? parts[0] : t.concat_rows(parts);
    return e;
}

Backbone::ForwardOut Backbone::forward(Tape& t, const Bound& b, const std::vector<Block>& blocks,
                                       const BoolMat& mask) const {
    const long T = token_count(blocks);
    check(mask.rows == T && mask.cols == T, "backbone: mask/sequence mismatch");
    const long d = cfg.d_model(), dk = cfg.head_dim, H = cfg.heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));

    Embedded e = embed(t, b, blocks);
    Tape::Id x = e.x;
    ForwardOut out;
    out.block_kv.resize(blocks.size());
    for (auto& bk : out.block_kv)
        bk.per_layer.resize(static_cast<size_t>(cfg.layers));

    for (long l = 0; l < cfg.layers; ++l) {
        const Tape::Id h = t.layer_norm(x, b(lname(l, "ln1.g")), b(lname(l, "ln1.b")), cfg.ln_eps);
        const Tape::Id q = t.matmul(h, b(lname(l, "wq")));
        const Tape::Id k = t.matmul(h, b(lname(l, "wk")));
        const Tape::Id v = t.matmul(h, b(lname(l, "wv")));
        for (size_t bi = 0; bi < blocks.size(); ++bi)
            out.block_kv[bi].per_layer[static_cast<size_t>(l)] = {
                t.slice_rows(k, e.offsets[bi], e.lengths[bi]),
                t.slice_rows(v, e.offsets[bi], e.lengths[bi])};
        std::vector<Tape::Id> head_outs;
        for (long hh = 0; hh < H; ++hh) {
            const Tape::Id qh = t.slice_cols(q, hh * dk, dk);
            const Tape::Id kh = t.slice_cols(k, hh * dk, dk);
            const Tape::Id vh = t.slice_cols(v, hh * dk, dk);
            const Tape::Id scores = t.scale(t.matmul(qh, t.transpose(kh)), sc);
            const Tape::Id attn = t.softmax_rows_masked(scores, mask);
            head_outs.push_back(t.matmul(attn, vh));
        }
        const Tape::Id merged = H == 1 ? head_outs[0] : t.concat_cols(head_outs);
        x = t.add(x, t.matmul(merged, b(lname(l, "wo"))));
        const Tape::Id h2 = t.layer_norm(x, b(lname(l, "ln2.g")), b(lname(l, "ln2.b")), cfg.ln_eps);
        const Tape::Id m1 = t.gelu(t.add_rowvec(t.matmul(h2, b(lname(l, "mlp.w1"))),
                                                b(lname(l, "mlp.b1"))));
        x = t.add(x, t.add_rowvec(t.matmul(m1, b(lname(l, "mlp.w2"))), b(lname(l, "mlp.b2"))));
    }
    (void)d;

    const Tape::Id fin = t.layer_norm(x, b("final.ln.g"), b("final.ln.b"), cfg.ln_eps);
    // predictions for video tokens only
    std::vector<Tape::Id> video_rows;
    for (size_t bi = 0; bi < blocks.size(); ++bi)
        if (blocks[bi].role == Role::Video)
            video_rows.push_back(t.slice_rows(fin, e.offsets[bi], e.lengths[bi]));
    if (!video_rows.empty()) {
        const Tape::Id vcat = video_rows.size() == 1 ? video_rows[0] : t.concat_rows(video_rows);
        out.video_pred = t.add_rowvec(t.matmul(vcat, b("head.w")), b("head.b"));
    }
    return out;
}

Backbone::ForwardOut Backbone::forward_incremental(Tape& t, const Bound& b,
                                                   const std::vector<Block>& new_blocks,
                                                   const std::vector<const KvEntry*>& cache,
                                                   const BoolMat& row_mask,
                                                   AttnMassAccum* mass) const {
    const long Tn = token_count(new_blocks);
    long Tc = 0;
    for (const KvEntry* e : cache) {
        check(static_cast<long>(e->k.size()) == cfg.layers &&
                  static_cast<long>(e->v.size()) == cfg.layers,
              "forward_incremental: cache layer count mismatch");
        Tc += e->tokens();
    }
    check(row_mask.rows == Tn && row_mask.cols == Tc + Tn,
          "forward_incremental: row mask shape");
    const long dk = cfg.head_dim, H = cfg.heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));

    Embedded e = embed(t, b, new_blocks);
    Tape::Id x = e.x;
    ForwardOut out;
    out.block_kv.resize(new_blocks.size());
    for (auto& bk : out.block_kv)
        bk.per_layer.resize(static_cast<size_t>(cfg.layers));

    for (long l = 0; l < cfg.layers; ++l) {
        const Tape::Id h = t.layer_norm(x, b(lname(l, "ln1.g")), b(lname(l, "ln1.b")), cfg.ln_eps);
        const Tape::Id q = t.matmul(h, b(lname(l, "wq")));
        const Tape::Id k = t.matmul(h, b(lname(l, "wk")));
        const Tape::Id v = t.matmul(h, b(lname(l, "wv")));
        for (size_t bi = 0; bi < new_blocks.size(); ++bi)
            out.block_kv[bi].per_layer[static_cast<size_t>(l)] = {
                t.slice_rows(k, e.offsets[bi], e.lengths[bi]),
                t.slice_rows(v, e.offsets[bi], e.lengths[bi])};

        std::vector<Tape::Id> kparts, vparts;
        for (const KvEntry* ce : cache) {
            kparts.push_back(t.constant(ce->k[static_cast<size_t>(l)]));
            vparts.push_back(t.constant(ce->v[static_cast<size_t>(l)]));
        }
        kparts.push_back(k);
        vparts.push_back(v);
        const Tape::Id kfull = kparts.size() == 1 ? kparts[0] : t.concat_rows(kparts);
        const Tape::Id vfull = vparts.size() == 1 ? vparts[0] : t.concat_rows(vparts);

        std::vector<Tape::Id> head_outs;
        for (long hh = 0; hh < H; ++hh) {
            const Tape::Id qh = t.slice_cols(q, hh * dk, dk);
            const Tape::Id kh = t.slice_cols(kfull, hh * dk, dk);
            const Tape::Id vh = t.slice_cols(vfull, hh * dk, dk);
            const Tape::Id scores = t.scale(t.matmul(qh, t.transpose(kh)), sc);
            const Tape::Id attn = t.softmax_rows_masked(scores, row_mask);
            if (mass) {
                const Tensor& a = t.val(attn);
                for (long r = 0; r < a.rows(); ++r) {
                    long c0 = 0;
                    for (const KvEntry* ce : cache) {
                        double s = 0.0;
                        for (long j = 0; j < ce->tokens(); ++j)
                            s += a.at(r, c0 + j);
                        if (ce->role == Role::Video)
                            mass->historical += s;
                        else
                            mass->conditional += s;
                        c0 += ce->tokens();
                    }
                    double s = 0.0;
                    for (long j = Tc; j < Tc + Tn; ++j)
                        s += a.at(r, j);
                    mass->intra += s;
                    mass->rows += 1;
                }
            }
            head_outs.push_back(t.matmul(attn, vh));
        }
        const Tape::Id merged = H == 1 ? head_outs[0] : t.concat_cols(head_outs);
        x = t.add(x, t.matmul(merged, b(lname(l, "wo"))));
        const Tape::Id h2 = t.layer_norm(x, b(lname(l, "ln2.g")), b(lname(l, "ln2.b")), cfg.ln_eps);
        const Tape::Id m1 = t.gelu(t.add_rowvec(t.matmul(h2, b(lname(l, "mlp.w1"))),
                                                b(lname(l, "mlp.b1"))));
        x = t.add(x, t.add_rowvec(t.matmul(m1, b(lname(l, "mlp.w2"))), b(lname(l, "mlp.b2"))));
    }

    const Tape::Id fin = t.layer_norm(x, b("final.ln.g"), b("final.ln.b"), cfg.ln_eps);
    std::vector<Tape::Id> video_rows;
    for (size_t bi = 0; bi < new_blocks.size(); ++bi)
        if (new_blocks[bi].role == Role::Video)
            video_rows.push_back(t.slice_rows(fin, e.offsets[bi], e.lengths[bi]));
    if (!video_rows.empty()) {
        const Tape::Id vcat = video_rows.size() == 1 ? video_rows[0] : t.concat_rows(video_rows);
        out.video_pred = t.add_rowvec(t.matmul(vcat, b("head.w")), b("head.b"));
    }
    return out;
}

KvEntry Backbone::detach_kv(const Tape& t, Role role, long frame, const BlockKvIds& ids) const {
    KvEntry e;
    e.role = role;
    e.frame = frame;
    for (const auto& [kid, vid] : ids.per_layer) {
        e.k.push_back(t.val(kid));
        e.v.push_back(t.val(vid));
    }
    return e;
}

std::vector<KvEntry> Backbone::condition_kv(const ConditionSet& cond) const {
    const long P = cfg.tokens_per_frame, C = cfg.channels;
    check(cond.reference.rank() == 2 && cond.reference.rows() == P && cond.reference.cols() == C,
          "condition_kv: bad reference shape");
    check(cond.garment.rank() == 2 && cond.garment.rows() == P && cond.garment.cols() == C,
          "condition_kv: bad garment shape");
    Tape t;
    Bound b = bind(t);
    std::vector<Block> blocks = {
        {Role::Context, -1, 0.0, -1},
        {Role::Reference, -1, 0.0, t.constant(cond.reference)},
        {Role::Garment, -1, 0.0, t.constant(cond.garment)},
    };
    const BoolMat mask = build_condition_mask({1, P, P});
    ForwardOut fo = forward(t, b, blocks, mask);

    KvEntry ref;
    ref.role = Role::Reference;
    const KvEntry ctx = detach_kv(t, Role::Context, -1, fo.block_kv[0]);
    const KvEntry src = detach_kv(t, Role::Reference, -1, fo.block_kv[1]);
    for (long l = 0; l < cfg.layers; ++l) {
        const Tensor& ck = ctx.k[static_cast<size_t>(l)];
        const Tensor& sk = src.k[static_cast<size_t>(l)];
        Tensor k({1 + P, cfg.d_model()});
        Tensor v({1 + P, cfg.d_model()});
        for (long j = 0; j < cfg.d_model(); ++j) {
            k.at(0, j) = ck.at(0, j);
            v.at(0, j) = ctx.v[static_cast<size_t>(l)].at(0, j);
        }
        for (long i = 0; i < P; ++i)
            for (long j = 0; j < cfg.d_model(); ++j) {
                k.at(1 + i, j) = sk.at(i, j);
                v.at(1 + i, j) = src.v[static_cast<size_t>(l)].at(i, j);
            }
        ref.k.push_back(std::move(k));
        ref.v.push_back(std::move(v));
    }
    return {std::move(ref), detach_kv(t, Role::Garment, -1, fo.block_kv[2])};
}

}  // namespace streamdit
