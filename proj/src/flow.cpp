#include "streamdit/flow.hpp"

#include <sstream>

namespace streamdit {

NoisePlan make_noise_plan(long frames, long tokens_per_frame, long channels, double shared_t,
                          Rng& rng) {
    NoisePlan plan;
    for (long i = 0; i < frames; ++i) {
        plan.t.push_back(shared_t);
        plan.eps.push_back(rng.normal_tensor({tokens_per_frame, channels}));
    }
    return plan;
}

NoisePlan make_chunk_noise_plan(long frames, long tokens_per_frame, long channels,
                                long chunk_frames, Rng& rng) {
    check(frames % chunk_frames == 0, "noise plan: frames not divisible by chunk");
    NoisePlan plan;
    plan.t.resize(static_cast<size_t>(frames));
    for (long c = 0; c < frames / chunk_frames; ++c) {
        const double t = rng.uniform_pos();
        for (long i = 0; i < chunk_frames; ++i)
            plan.t[static_cast<size_t>(c * chunk_frames + i)] = t;
    }
    for (long i = 0; i < frames; ++i)
        plan.eps.push_back(rng.normal_tensor({tokens_per_frame, channels}));
    return plan;
}

void StepSchedule::validate() const {
    check(!steps.empty(), "schedule: empty");
    for (size_t i = 0; i < steps.size(); ++i) {
        check(steps[i] > 0 && steps[i] <= 1000, "schedule: steps must lie in 1..1000");
        if (i > 0)
            check(steps[i] < steps[i - 1], "schedule: must be strictly decreasing");
    }
}

std::vector<double> StepSchedule::ts() const {
    validate();
    std::vector<double> out;
    for (int s : steps)
        out.push_back(static_cast<double>(s) / 1000.0);
    return out;
}

StepSchedule StepSchedule::parse(const std::string& csv) {
    StepSchedule s;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty())
            s.steps.push_back(std::stoi(cell));
    s.validate();
    return s;
}

LatentSequence forward_noise(const LatentSequence& z0, const NoisePlan& plan) {
    check(plan.t.size() == static_cast<size_t>(z0.size()) && plan.eps.size() == plan.t.size(),
          "forward_noise: plan length mismatch");
    LatentSequence out;
    for (long i = 0; i < z0.size(); ++i) {
        const double t = plan.t[static_cast<size_t>(i)];
        check(t >= 0.0 && t <= 1.0, "forward_noise: t outside [0,1]");
        const Tensor& z = z0.frames[static_cast<size_t>(i)].tokens;
        const Tensor& e = plan.eps[static_cast<size_t>(i)];
        check(z.same_shape(e), "forward_noise: noise shape mismatch");
        LatentFrame f;
        f.timestep = t;
        if (t == 0.0) {
            f.tokens = z;  // condition frames pass through untouched
        } else {
            f.tokens = streamdit::add(streamdit::scale(z, 1.0 - t), streamdit::scale(e, t));
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

std::vector<Block> condition_blocks(Tape& tape, const ConditionSet& cond) {
    return {
        {Role::Context, -1, 0.0, -1},
        {Role::Reference, -1, 0.0, tape.constant(cond.reference)},
        {Role::Garment, -1, 0.0, tape.constant(cond.garment)},
    };
}

Tape::Id cfm_loss(const Backbone& model, Tape& tape, const Backbone::Bound& bound,
                  const LatentSequence& z0, const ConditionSet& cond, const NoisePlan& plan,
                  const BoolMat* mask_override) {
    const long f = z0.size();
    check(f >= 1, "cfm_loss: empty sequence");
    const long P = model.cfg.tokens_per_frame, C = model.cfg.channels;
    const LatentSequence zt = forward_noise(z0, plan);

    std::vector<Block> blocks = condition_blocks(tape, cond);
    for (long i = 0; i < f; ++i)
        blocks.push_back({Role::Video, i, zt.frames[static_cast<size_t>(i)].timestep,
                          tape.constant(zt.frames[static_cast<size_t>(i)].tokens)});

    const long T = model.token_count(blocks);
    BoolMat full = BoolMat::ones(T, T);
    const BoolMat& mask = mask_override ? *mask_override : full;
    Backbone::ForwardOut out = model.forward(tape, bound, blocks, mask);

    Tensor target({f * P, C});
    for (long i = 0; i < f; ++i) {
        const Tensor& z = z0.frames[static_cast<size_t>(i)].tokens;
        const Tensor& e = plan.eps[static_cast<size_t>(i)];
        for (long r = 0; r < P; ++r)
            for (long c = 0; c < C; ++c)
                target.at(i * P + r, c) = e.at(r, c) - z.at(r, c);
    }
    const Tape::Id diff = tape.sub(out.video_pred, tape.constant(std::move(target)));
    const Tape::Id loss = tape.mean_all(tape.mul(diff, diff));
    check(std::isfinite(tape.scalar(loss)), "cfm_loss: non-finite loss");
    return loss;
}

Tensor sample_multistep_field(const VelocityFn& v, Tensor init_noise, long steps) {
    check(steps >= 1, "sample_multistep: steps >= 1");
    Tensor z = std::move(init_noise);
    const double h = 1.0 / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * h;
        z = streamdit::sub(z, streamdit::scale(v(z, t), h));
    }
    check(z.finite(), "sample_multistep: diverged");
    return z;
}

Tensor sample_fewstep_field(const VelocityFn& v, const StepSchedule& schedule, Tensor init_noise,
                            Rng& rng) {
    const std::vector<double> ts = schedule.ts();
    Tensor z = std::move(init_noise);
    Tensor x0;
    for (size_t i = 0; i < ts.size(); ++i) {
        const double t = ts[i];
        x0 = streamdit::sub(z, streamdit::scale(v(z, t), t));
        if (i + 1 < ts.size()) {
            const double tn = ts[i + 1];
            z = streamdit::add(streamdit::scale(x0, 1.0 - tn),
                               streamdit::scale(rng.normal_tensor(x0.shape), tn));
        }
    }
    check(x0.finite(), "sample_fewstep: diverged");
    return x0;
}

Tensor stack_frames(const std::vector<Tensor>& frames) {
    check(!frames.empty(), "stack_frames: empty");
    const long P = frames[0].rows(), C = frames[0].cols();
    Tensor out({static_cast<long>(frames.size()) * P, C});
    for (size_t i = 0; i < frames.size(); ++i)
        for (long r = 0; r < P; ++r)
            for (long c = 0; c < C; ++c)
                out.at(static_cast<long>(i) * P + r, c) = frames[i].at(r, c);
    return out;
}

std::vector<Tensor> split_frames(const Tensor& stacked, long tokens_per_frame) {
    check(stacked.rows() % tokens_per_frame == 0, "split_frames: row count");
    std::vector<Tensor> out;
    for (long i = 0; i < stacked.rows() / tokens_per_frame; ++i) {
        Tensor f({tokens_per_frame, stacked.cols()});
        for (long r = 0; r < tokens_per_frame; ++r)
            for (long c = 0; c < stacked.cols(); ++c)
                f.at(r, c) = stacked.at(i * tokens_per_frame + r, c);
        out.push_back(std::move(f));
    }
    return out;
}

Tensor eval_velocity(const Backbone& model, const ConditionSet& cond,
                     const std::vector<Tensor>& frames, double t) {
    Tape tape;
    Backbone::Bound bound = model.bind(tape);
    std::vector<Block> blocks = condition_blocks(tape, cond);
    for (size_t i = 0; i < frames.size(); ++i)
        blocks.push_back({Role::Video, static_cast<long>(i), t, tape.constant(frames[i])});
    const long T = model.token_count(blocks);
    Backbone::ForwardOut out = model.forward(tape, bound, blocks, BoolMat::ones(T, T));
    return tape.val(out.video_pred);
}

Tensor velocity_to_score(const Tensor& z, const Tensor& v, double t) {
    check(t > 0.0, "velocity_to_score: t must be positive");
    check(z.same_shape(v), "velocity_to_score: shape mismatch");
    Tensor s = z;
    for (long i = 0; i < s.numel(); ++i)
        s.at(i) = -(z.at(i) + (1.0 - t) * v.at(i)) / t;
    return s;
}

namespace {
VelocityFn backbone_field(const Backbone& model, const ConditionSet& cond, long frames) {
    const long P = model.cfg.tokens_per_frame;
    return [&model, cond, frames, P](const Tensor& z, double t) {
        std::vector<Tensor> fr = split_frames(z, P);
        check(static_cast<long>(fr.size()) == frames, "backbone_field: frame count");
        return eval_velocity(model, cond, fr, t);
    };
}
}  // namespace

LatentSequence sample_multistep(const Backbone& model, const ConditionSet& cond, long frames,
                                long steps, Rng& rng) {
    const long P = model.cfg.tokens_per_frame, C = model.cfg.channels;
    Tensor z = rng.normal_tensor({frames * P, C});
    Tensor x = sample_multistep_field(backbone_field(model, cond, frames), std::move(z), steps);
    LatentSequence out;
    for (Tensor& f : split_frames(x, P))
        out.frames.push_back({std::move(f), 0.0});
    return out;
}

LatentSequence sample_fewstep(const Backbone& model, const ConditionSet& cond, long frames,
                              const StepSchedule& schedule, Rng& rng) {
    const long P = model.cfg.tokens_per_frame, C = model.cfg.channels;
    Tensor z = rng.normal_tensor({frames * P, C});
    Tensor x =
        sample_fewstep_field(backbone_field(model, cond, frames), schedule, std::move(z), rng);
    LatentSequence out;
    for (Tensor& f : split_frames(x, P))
        out.frames.push_back({std::move(f), 0.0});
    return out;
}

}  // namespace streamdit
