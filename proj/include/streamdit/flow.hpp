#pragma once

#include <functional>
#include <vector>

#include "streamdit/backbone.hpp"
#include "streamdit/codec.hpp"
#include "streamdit/rng.hpp"

namespace streamdit {

/// Per-frame timestep and noise; condition frames carry t = 0 and pass
/// through untouched.
struct NoisePlan {
    std::vector<double> t;
    std::vector<Tensor> eps;  // [P, C] each
};

NoisePlan make_noise_plan(long frames, long tokens_per_frame, long channels, double shared_t,
                          Rng& rng);
NoisePlan make_chunk_noise_plan(long frames, long tokens_per_frame, long channels,
                                long chunk_frames, Rng& rng);

/// Strictly decreasing integer steps on the 0..1000 scale; t = step / 1000.
struct StepSchedule {
    std::vector<int> steps;

    void validate() const;
    std::vector<double> ts() const;
    static StepSchedule parse(const std::string& csv);
    static StepSchedule standard() { return {{1000, 750, 500, 250}}; }
};

/// z_t = (1 - t) z0 + t eps, per frame.
LatentSequence forward_noise(const LatentSequence& z0, const NoisePlan& plan);

/// Conditional flow-matching loss: mean squared error between the model's
/// prediction and v = eps - z0, over video tokens only. Returns the loss node;
/// gradients flow to every bound parameter. Full bidirectional attention
/// unless `mask_override` is given.
Tape::Id cfm_loss(const Backbone& model, Tape& tape, const Backbone::Bound& bound,
                  const LatentSequence& z0, const ConditionSet& cond, const NoisePlan& plan,
                  const BoolMat* mask_override = nullptr);

/// Velocity field callback for samplers that do not need the backbone.
using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;

/// Euler integration of the flow ODE from t=1 to t=0 in `steps` uniform steps.
Tensor sample_multistep_field(const VelocityFn& v, Tensor init_noise, long steps);

/// Few-step sampling: predict x0 = z - t*v at each scheduled t, then re-noise
/// to the next scheduled level with fresh noise; the last x0 is the output.
Tensor sample_fewstep_field(const VelocityFn& v, const StepSchedule& schedule, Tensor init_noise,
                            Rng& rng);

/// Backbone-wired samplers over [conditions | video frames], all video frames
/// at a shared noise level (the bidirectional teacher path).
LatentSequence sample_multistep(const Backbone& model, const ConditionSet& cond, long frames,
                                long steps, Rng& rng);
LatentSequence sample_fewstep(const Backbone& model, const ConditionSet& cond, long frames,
                              const StepSchedule& schedule, Rng& rng);

/// Plain evaluation of the velocity over [conditions | video frames] at a
/// shared t with full attention; no gradients.
Tensor eval_velocity(const Backbone& model, const ConditionSet& cond,
                     const std::vector<Tensor>& frames, double t);

/// Score of the noisy marginal from a velocity prediction:
/// s(z, t) = -(z + (1 - t) v) / t. Requires t > 0.
Tensor velocity_to_score(const Tensor& z, const Tensor& v, double t);

// Assembly helpers shared with distillation and the session.
std::vector<Block> condition_blocks(Tape& tape, const ConditionSet& cond);
Tensor stack_frames(const std::vector<Tensor>& frames);
std::vector<Tensor> split_frames(const Tensor& stacked, long tokens_per_frame);

}  // namespace streamdit
