#pragma once

#include <optional>

#include "streamdit/flow.hpp"
#include "streamdit/kv_cache.hpp"
#include "streamdit/optim.hpp"

namespace streamdit {

/// Deterministic per-frame quality score; higher is better. The default
/// measures distance of the frame from the unit-norm manifold. Rewards gate
/// gradients but are never differentiated through.
struct RewardAdapter {
    enum class Target { Latent, Pixels };
    Target target = Target::Latent;
    const Codec* codec = nullptr;  // required for Target::Pixels

    double operator()(const Tensor& frame_tokens) const;
};

/// Frame weights A_i = exp(-R_i / tau) / sum_j exp(-R_j / tau): positive,
/// summing to 1, strictly decreasing in reward.
std::vector<double> reweight(const std::vector<double>& rewards, double tau);

/// Teacher-forcing objective: CFM loss on the noisy-half video tokens of the
/// duplicated clean/noisy sequence under the in-context teacher-forcing mask.
/// chunk_t / chunk_eps describe the per-frame noise (constant within a chunk).
Tape::Id teacher_forcing_loss(const Backbone& student, Tape& tape, const Backbone::Bound& bound,
                              const LatentSequence& z0, const ConditionSet& cond,
                              long chunk_frames, const NoisePlan& plan);

struct DmdConfig {
    StepSchedule schedule = StepSchedule::standard();
    double tau = 0.2;
    long fake_per_gen = 5;  // generator : fake-score update ratio 1 : fake_per_gen
    bool normalize_grad = false;
    bool use_reweight = false;  // frame weights from the reward adapter instead of uniform
    long frames = 15;           // self-forcing rollout length
    long chunk_frames = 3;
    long cache_frames = 7;  // M during rollouts
};

/// Generator + fake score + frozen real score plus bookkeeping. The real
/// score is never updated.
struct DmdState {
    Backbone* generator = nullptr;
    Backbone* fake = nullptr;
    const Backbone* real = nullptr;
    DmdConfig cfg;
    RewardAdapter reward;
    AdamW gen_opt, fake_opt;
    long gen_steps = 0;
    long fake_steps = 0;
    long skipped = 0;  // non-finite score events
};

/// Few-step chunked rollout conditioned on the generator's own cached
/// history, with the tape connected through every denoising step of every
/// chunk. Cached K/V (history and conditions) enter as constants.
struct Rollout {
    Tape::Id video = -1;         // [frames*P, C], tape-connected
    std::vector<Tensor> frames;  // detached copies
};
Rollout self_forcing_rollout(Tape& tape, const Backbone::Bound& bound, const Backbone& generator,
                             const ConditionSet& cond, const DmdConfig& cfg, Rng& rng);

struct DmdStepResult {
    ParamStore grads;
    double score_gap = 0.0;  // mean squared (s_real - s_fake)
    double reward_mean = 0.0;
    double weight_mean = 0.0;
    bool skipped = false;
    std::vector<Tensor> frames;  // the rollout, for fake-score training
};

/// One generator gradient evaluation: rollout, noise at a schedule-drawn t,
/// score difference, cotangent -A (1-t) (s_real - s_fake) through the tape.
/// Omitted weights mean A = 1/frames (vanilla DMD).
DmdStepResult dmd_step(DmdState& state, const ConditionSet& cond, Rng& rng,
                       const std::vector<double>* weights = nullptr);

/// 5 (ratio) CFM updates of the fake score on detached generator samples.
/// Returns the mean fake-score loss.
double train_fake_score(DmdState& state, const std::vector<Tensor>& generator_frames,
                        const ConditionSet& cond, Rng& rng);

/// Closed-form testbed: real distribution N(mu, sigma^2); generator
/// x = a e + b. Noisy marginal of N(m, s^2) at level t is
/// N((1-t) m, (1-t)^2 s^2 + t^2).
struct GaussianOracle {
    double mu_r = 2.0;
    double sigma_r = 1.0;

    static double score(double y, double t, double m, double s);
    double score_real(double y, double t) const { return score(y, t, mu_r, sigma_r); }
};

struct GaussianDmdTrajectory {
    std::vector<std::pair<double, double>> ab;  // after each step
};

/// DMD gradient flow with exact analytic scores (fake recomputed from the
/// current (a, b)); plain SGD so the fixed point is exactly stationary.
GaussianDmdTrajectory gaussian_dmd_run(const GaussianOracle& oracle, double tau, long steps,
                                       double lr, const StepSchedule& schedule, long batch,
                                       long frames, uint64_t seed,
                                       const std::vector<double>* frame_rewards = nullptr);

}  // namespace streamdit
