#include "streamdit/distill.hpp"

#include <algorithm>
#include <cmath>

namespace streamdit {

double RewardAdapter::operator()(const Tensor& frame_tokens) const {
    if (override_fn)
        return override_fn(frame_tokens);
    double sq = 0.0;
    if (target == Target::Pixels) {
        check(codec != nullptr, "reward: pixel target needs a codec");
        for (const Tensor& p : codec->decode_group(frame_tokens))
            for (double x : p.data)
                sq += x * x;
    } else {
        for (double x : frame_tokens.data)
            sq += x * x;
    }
    return -std::abs(std::sqrt(sq) - 1.0);
}

std::vector<double> reweight(const std::vector<double>& rewards, double tau) {
    check(tau > 0.0, "reweight: tau must be positive");
    check(!rewards.empty(), "reweight: empty rewards");
    double hi = -std::numeric_limits<double>::infinity();
    for (double r : rewards) {
        check(std::isfinite(r), "reweight: non-finite reward");
        hi = std::max(hi, -r / tau);
    }
    std::vector<double> w(rewards.size());
    double sum = 0.0;
    for (size_t i = 0; i < rewards.size(); ++i) {
        w[i] = std::exp(-rewards[i] / tau - hi);
        sum += w[i];
    }
    for (double& x : w)
        x /= sum;
    return w;
}

Tape::Id teacher_forcing_loss(const Backbone& student, Tape& tape, const Backbone::Bound& bound,
                              const LatentSequence& z0, const ConditionSet& cond,
                              long chunk_frames, const NoisePlan& plan) {
    const long f = z0.size();
    const long P = student.cfg.tokens_per_frame, C = student.cfg.channels;
    check(f % chunk_frames == 0, "teacher_forcing_loss: frames not divisible by chunk");
    const LatentSequence zt = forward_noise(z0, plan);

    std::vector<Block> blocks = condition_blocks(tape, cond);
    for (long i = 0; i < f; ++i)
        blocks.push_back({Role::Video, i, 0.0, tape.constant(z0.frames[static_cast<size_t>(i)].tokens)});
    for (Block& b : condition_blocks(tape, cond))
        blocks.push_back(b);
    for (long i = 0; i < f; ++i)
        blocks.push_back({Role::Video, i, zt.frames[static_cast<size_t>(i)].timestep,
                          tape.constant(zt.frames[static_cast<size_t>(i)].tokens)});

    TfMaskSpec spec;
    spec.cond_sizes = {1, P, P};
    spec.frames = f;
    spec.tokens_per_frame = P;
    spec.chunk_frames = chunk_frames;
    const BoolMat mask = build_tf_mask(spec);
    check(mask.rows == student.token_count(blocks), "teacher_forcing_loss: mask/sequence mismatch");

    Backbone::ForwardOut out = student.forward(tape, bound, blocks, mask);
    // video predictions are [clean f*P | noisy f*P]; the loss reads the noisy half
    const Tape::Id noisy_pred = tape.slice_rows(out.video_pred, f * P, f * P);

    Tensor target({f * P, C});
    for (long i = 0; i < f; ++i)
        for (long r = 0; r < P; ++r)
            for (long c = 0; c < C; ++c)
                target.at(i * P + r, c) = plan.eps[static_cast<size_t>(i)].at(r, c) -
                                          z0.frames[static_cast<size_t>(i)].tokens.at(r, c);
    const Tape::Id diff = tape.sub(noisy_pred, tape.constant(std::move(target)));
    const Tape::Id loss = tape.mean_all(tape.mul(diff, diff));
    check(std::isfinite(tape.scalar(loss)), "teacher_forcing_loss: non-finite loss");
    return loss;
}

Rollout self_forcing_rollout(Tape& tape, const Backbone::Bound& bound, const Backbone& generator,
                             const ConditionSet& cond, const DmdConfig& cfg, Rng& rng) {
    const long P = generator.cfg.tokens_per_frame, C = generator.cfg.channels;
    const long chunk = cfg.chunk_frames;
    check(cfg.frames % chunk == 0, "rollout: frames not divisible by chunk");
    const std::vector<double> ts = cfg.schedule.ts();

    KvCache cache(generator.cfg.layers, cfg.cache_frames);
    cache.install_conditions(generator.condition_kv(cond), cond.reference, cond.garment);

    Rollout out;
    std::vector<Tape::Id> chunk_ids;
    for (long c = 0; c < cfg.frames / chunk; ++c) {
        const long first = c * chunk;
        Tape::Id z = tape.constant(rng.normal_tensor({chunk * P, C}));
        Tape::Id x0 = -1;
        for (size_t si = 0; si < ts.size(); ++si) {
            const double t = ts[si];
            std::vector<Block> blocks;
            for (long i = 0; i < chunk; ++i)
                blocks.push_back({Role::Video, first + i, t, tape.slice_rows(z, i * P, P)});
            const std::vector<const KvEntry*> view = cache.view();
            long cached_tokens = 0;
            for (const KvEntry* e : view)
                cached_tokens += e->tokens();
            const BoolMat rows = build_inference_mask(0, cached_tokens, chunk * P);
            Backbone::ForwardOut fo =
                generator.forward_incremental(tape, bound, blocks, view, rows);
            x0 = tape.sub(z, tape.scale(fo.video_pred, t));
            if (si + 1 < ts.size()) {
                const double tn = ts[si + 1];
                z = tape.add(tape.scale(x0, 1.0 - tn),
                             tape.constant(scale(rng.normal_tensor({chunk * P, C}), tn)));
            }
        }
        chunk_ids.push_back(x0);
        for (Tensor& f : split_frames(tape.val(x0), P))
            out.frames.push_back(std::move(f));

        // cache the generated chunk from a clean pass, detached from the tape
        Tape side;
        Backbone::Bound side_bound = generator.bind(side);
        std::vector<Block> clean;
        for (long i = 0; i < chunk; ++i)
            clean.push_back({Role::Video, first + i, 0.0,
                             side.constant(out.frames[static_cast<size_t>(first + i)])});
        const std::vector<const KvEntry*> view = cache.view();
        long cached_tokens = 0;
        for (const KvEntry* e : view)
            cached_tokens += e->tokens();
        Backbone::ForwardOut co = generator.forward_incremental(
            side, side_bound, clean, view, build_inference_mask(0, cached_tokens, chunk * P));
        std::vector<KvEntry> entries;
        for (long i = 0; i < chunk; ++i)
            entries.push_back(generator.detach_kv(side, Role::Video, first + i,
                                                  co.block_kv[static_cast<size_t>(i)]));
        cache.append_and_evict(std::move(entries), first + chunk - 1);
    }
    out.video = chunk_ids.size() == 1 ? chunk_ids[0] : tape.concat_rows(chunk_ids);
    return out;
}

DmdStepResult dmd_step(DmdState& state, const ConditionSet& cond, Rng& rng,
                       const std::vector<double>* weights) {
    const Backbone& gen = *state.generator;
    const long P = gen.cfg.tokens_per_frame, C = gen.cfg.channels;
    const long f = state.cfg.frames;

    Tape tape;
    Backbone::Bound bound = gen.bind(tape);
    Rollout roll = self_forcing_rollout(tape, bound, gen, cond, state.cfg, rng);

    DmdStepResult res;
    res.frames = roll.frames;

    std::vector<double> rewards;
    for (const Tensor& fr : roll.frames)
        rewards.push_back(state.reward(fr));
    double rsum = 0.0;
    for (double r : rewards)
        rsum += r;
    res.reward_mean = rsum / static_cast<double>(f);

    std::vector<double> w;
    if (weights) {
        check(static_cast<long>(weights->size()) == f, "dmd_step: weight count");
        w = *weights;
    } else if (state.cfg.use_reweight) {
        w = reweight(rewards, state.cfg.tau);
    } else {
        w.assign(static_cast<size_t>(f), 1.0 / static_cast<double>(f));
    }
    double wsum = 0.0;
    for (double x : w)
        wsum += x;
    res.weight_mean = wsum / static_cast<double>(f);

    // t drawn uniformly from the schedule values
    const std::vector<double> ts = state.cfg.schedule.ts();
    const size_t ti = std::min(ts.size() - 1,
                               static_cast<size_t>(rng.uniform() * static_cast<double>(ts.size())));
    const double t = ts[ti];

    const Tensor x = tape.val(roll.video);
    Tensor noised = streamdit::add(streamdit::scale(x, 1.0 - t),
                                   streamdit::scale(rng.normal_tensor(x.shape), t));
    const std::vector<Tensor> noised_frames = split_frames(noised, P);
    const Tensor v_real = eval_velocity(*state.real, cond, noised_frames, t);
    const Tensor v_fake = eval_velocity(*state.fake, cond, noised_frames, t);
    const Tensor s_real = velocity_to_score(noised, v_real, t);
    const Tensor s_fake = velocity_to_score(noised, v_fake, t);

    Tensor diff = streamdit::sub(s_real, s_fake);
    if (!diff.finite()) {
        ++state.skipped;
        res.skipped = true;
        res.grads = Tape().grads(gen.params);  // zeros
        return res;
    }
    double gap = 0.0, mabs = 0.0;
    for (double d : diff.data) {
        gap += d * d;
        mabs += std::abs(d);
    }
    res.score_gap = gap / static_cast<double>(diff.numel());
    mabs /= static_cast<double>(diff.numel());
    const double norm = state.cfg.normalize_grad ? 1.0 / (mabs + 1e-8) : 1.0;

    Tensor cot({f * P, C});
    for (long r = 0; r < f * P; ++r) {
        const double a = w[static_cast<size_t>(r / P)];
        for (long c = 0; c < C; ++c)
            cot.at(r, c) = -(1.0 - t) * a * diff.at(r, c) * norm;
    }
    tape.backward(roll.video, std::move(cot));
    res.grads = tape.grads(gen.params);
    ++state.gen_steps;
    return res;
}

double train_fake_score(DmdState& state, const std::vector<Tensor>& generator_frames,
                        const ConditionSet& cond, Rng& rng) {
    Backbone& fake = *state.fake;
    const long P = fake.cfg.tokens_per_frame, C = fake.cfg.channels;
    LatentSequence z0;
    for (const Tensor& fr : generator_frames)
        z0.frames.push_back({fr, 0.0});
    double total = 0.0;
    for (long u = 0; u < state.cfg.fake_per_gen; ++u) {
        Tape tape;
        Backbone::Bound bound = fake.bind(tape);
        NoisePlan plan = make_noise_plan(z0.size(), P, C, rng.uniform_pos(), rng);
        const Tape::Id loss = cfm_loss(fake, tape, bound, z0, cond, plan);
        total += tape.scalar(loss);
        tape.backward(loss, Tensor::scalar(1.0));
        state.fake_opt.step(fake.params, tape.grads(fake.params));
        ++state.fake_steps;
    }
    return total / static_cast<double>(state.cfg.fake_per_gen);
}

double GaussianOracle::score(double y, double t, double m, double s) {
    const double mt = (1.0 - t) * m;
    const double var = (1.0 - t) * (1.0 - t) * s * s + t * t;
    return -(y - mt) / var;
}

GaussianDmdTrajectory gaussian_dmd_run(const GaussianOracle& oracle, double tau, long steps,
                                       double lr, const StepSchedule& schedule, long batch,
                                       long frames, uint64_t seed,
                                       const std::vector<double>* frame_rewards) {
    check(oracle.sigma_r > 0.0, "gaussian_dmd_run: sigma must be positive");
    const std::vector<double> ts = schedule.ts();
    Rng rng(seed);
    double a = 1.0, b = 0.0;
    std::vector<double> w;
    if (frame_rewards) {
        check(static_cast<long>(frame_rewards->size()) == frames, "gaussian_dmd_run: reward count");
        w = reweight(*frame_rewards, tau);
    } else {
        w.assign(static_cast<size_t>(frames), 1.0 / static_cast<double>(frames));
    }

    GaussianDmdTrajectory traj;
    const long rows = batch * frames;
    for (long step = 0; step < steps; ++step) {
        const size_t ti = std::min(
            ts.size() - 1, static_cast<size_t>(rng.uniform() * static_cast<double>(ts.size())));
        const double t = ts[ti];

        Tape tape;
        const Tape::Id a_id = tape.leaf(Tensor({1, 1}, {a}), "a");
        const Tape::Id b_id = tape.leaf(Tensor({1, 1}, {b}), "b");
        const Tape::Id eps = tape.constant(rng.normal_tensor({rows, 1}));
        const Tape::Id x = tape.add_rowvec(tape.matmul(eps, a_id), b_id);

        const Tensor& xv = tape.val(x);
        Tensor cot({rows, 1});
        for (long r = 0; r < rows; ++r) {
            const double y = (1.0 - t) * xv.at(r, 0) + t * rng.normal();
            const double sr = oracle.score_real(y, t);
            const double sf = GaussianOracle::score(y, t, b, std::abs(a));
            cot.at(r, 0) = -(1.0 - t) * w[static_cast<size_t>(r / batch)] * (sr - sf) /
                           static_cast<double>(batch);
        }
        tape.backward(x, std::move(cot));
        const Tensor* ga = tape.adjoint(a_id);
        const Tensor* gb = tape.adjoint(b_id);
        a -= lr * (ga ? ga->at(0) : 0.0);
        b -= lr * (gb ? gb->at(0) : 0.0);
        traj.ab.emplace_back(a, b);
    }
    return traj;
}

}  // namespace streamdit
