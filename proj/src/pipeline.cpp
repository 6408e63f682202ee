#include "streamdit/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "streamdit/checkpoint.hpp"

namespace streamdit {

void grad_axpy(ParamStore& acc, const ParamStore& g, double s) {
    for (auto& [name, a] : acc) {
        const Tensor& gg = g.at(name);
        for (long i = 0; i < a.numel(); ++i)
            a.at(i) += s * gg.at(i);
    }
}

ParamStore zeros_like(const ParamStore& params) {
    ParamStore out;
    for (const auto& [name, t] : params)
        out[name] = Tensor::zeros(t.shape);
    return out;
}

namespace {
double window_mean(const std::vector<double>& xs, bool head, long window) {
    if (xs.empty())
        return 0.0;
    const long n = static_cast<long>(xs.size());
    const long w = std::min(window, n);
    double s = 0.0;
    if (head)
        for (long i = 0; i < w; ++i)
            s += xs[static_cast<size_t>(i)];
    else
        for (long i = n - w; i < n; ++i)
            s += xs[static_cast<size_t>(i)];
    return s / static_cast<double>(w);
}
}  // namespace

PipelineReport run_pipeline(const Config& cfg, bool quiet) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineReport rep;
    std::filesystem::create_directories(cfg.out_dir);

    Codec codec(cfg.codec_config());
    SyntheticDataset ds(codec, cfg.synthetic_config(), cfg.dataset_size, cfg.seed);
    Backbone teacher(cfg.backbone_config(), Rng(cfg.seed).fork(11).next_u64());
    const StepSchedule schedule = cfg.schedule();
    const long P = cfg.tokens_per_frame, C = cfg.channels;

    auto log_path = [&](const char* name) { return cfg.out_dir + "/" + name; };
    auto progress = [&](const char* stage, long step, long total, double loss) {
        if (!quiet && (step % std::max<long>(1, total / 10) == 0 || step + 1 == total))
            std::printf("[%s] step %ld/%ld loss %.5f\n", stage, step + 1, total, loss);
    };

    // Stage 1: bidirectional teacher, shared noise level per sample.
    std::vector<double> teacher_losses;
    try {
        Rng rng = Rng(cfg.seed).fork(21);
        AdamW opt;
        opt.lr = cfg.teacher_lr;
        std::ofstream log(log_path("teacher_log.csv"));
        log << "step,loss\n";
        for (long step = 0; step < cfg.teacher_steps; ++step) {
            ParamStore acc = zeros_like(teacher.params);
            double loss_sum = 0.0;
            for (long b = 0; b < cfg.teacher_batch; ++b) {
                const long idx =
                    static_cast<long>(rng.next_u64() % static_cast<uint64_t>(ds.train_size()));
                const SyntheticSample sample = ds.make(idx);
                NoisePlan plan = make_noise_plan(cfg.frames, P, C, rng.uniform_pos(), rng);
                Tape tape;
                Backbone::Bound bound = teacher.bind(tape);
                const Tape::Id loss =
                    cfm_loss(teacher, tape, bound, sample.video_latents,
                             {sample.reference, sample.garment}, plan);
                loss_sum += tape.scalar(loss);
                tape.backward(loss, Tensor::scalar(1.0));
                grad_axpy(acc, tape.grads(teacher.params), 1.0 / cfg.teacher_batch);
            }
            opt.step(teacher.params, acc);
            teacher_losses.push_back(loss_sum / cfg.teacher_batch);
            log << step << ',' << teacher_losses.back() << '\n';
            progress("teacher", step, cfg.teacher_steps, teacher_losses.back());
        }
    } catch (const std::exception& e) {
        rep.fail_stage = std::string("teacher: ") + e.what();
        return rep;
    }
    rep.teacher_loss_head = window_mean(teacher_losses, true, 50);
    rep.teacher_loss_tail = window_mean(teacher_losses, false, 50);
    rep.teacher_ckpt = log_path("teacher.ckpt");
    save_checkpoint(rep.teacher_ckpt, teacher.params);

    // Stage 2: teacher-forcing initialization of the autoregressive student.
    Backbone student = teacher;
    std::vector<double> tf_losses;
    try {
        Rng rng = Rng(cfg.seed).fork(22);
        AdamW opt;
        opt.lr = cfg.tf_lr;
        opt.beta1 = 0.0;
        std::ofstream log(log_path("tf_log.csv"));
        log << "step,loss\n";
        for (long step = 0; step < cfg.tf_steps; ++step) {
            ParamStore acc = zeros_like(student.params);
            double loss_sum = 0.0;
            for (long b = 0; b < cfg.tf_batch; ++b) {
                const long idx =
                    static_cast<long>(rng.next_u64() % static_cast<uint64_t>(ds.train_size()));
                const SyntheticSample sample = ds.make(idx);
                NoisePlan plan =
                    make_chunk_noise_plan(cfg.frames, P, C, cfg.chunk_frames, rng);
                Tape tape;
                Backbone::Bound bound = student.bind(tape);
                const Tape::Id loss = teacher_forcing_loss(
                    student, tape, bound, sample.video_latents,
                    {sample.reference, sample.garment}, cfg.chunk_frames, plan);
                loss_sum += tape.scalar(loss);
                tape.backward(loss, Tensor::scalar(1.0));
                grad_axpy(acc, tape.grads(student.params), 1.0 / cfg.tf_batch);
            }
            opt.step(student.params, acc);
            tf_losses.push_back(loss_sum / cfg.tf_batch);
            log << step << ',' << tf_losses.back() << '\n';
            progress("teacher-forcing", step, cfg.tf_steps, tf_losses.back());
        }
    } catch (const std::exception& e) {
        rep.fail_stage = std::string("teacher-forcing: ") + e.what();
        return rep;
    }
    rep.tf_loss_head = window_mean(tf_losses, true, 50);
    rep.tf_loss_tail = window_mean(tf_losses, false, 50);
    rep.tf_ckpt = log_path("tf.ckpt");
    save_checkpoint(rep.tf_ckpt, student.params);

    // Stage 3: reweighted distribution matching with self-forcing rollouts.
    Backbone generator = student;
    Backbone fake = teacher;
    std::vector<double> gaps;
    try {
        Rng rng = Rng(cfg.seed).fork(23);
        DmdState state;
        state.generator = &generator;
        state.fake = &fake;
        state.real = &teacher;
        state.cfg.schedule = schedule;
        state.cfg.tau = cfg.tau;
        state.cfg.fake_per_gen = cfg.fake_per_gen;
        state.cfg.normalize_grad = cfg.dmd_normalize;
        state.cfg.use_reweight = cfg.use_reweight;
        state.cfg.frames = cfg.frames;
        state.cfg.chunk_frames = cfg.chunk_frames;
        state.cfg.cache_frames = cfg.cache_frames;
        state.reward.target = cfg.reward_target == "pixels" ? RewardAdapter::Target::Pixels
                                                            : RewardAdapter::Target::Latent;
        state.reward.codec = &codec;
        state.gen_opt.lr = cfg.dmd_lr_gen;
        state.gen_opt.beta1 = 0.0;
        state.fake_opt.lr = cfg.dmd_lr_fake;
        state.fake_opt.beta1 = 0.0;

        std::ofstream log(log_path("dmd_log.csv"));
        log << "step,score_gap,fake_loss,weight_mean,reward_mean\n";
        for (long step = 0; step < cfg.dmd_steps; ++step) {
            const long idx =
                static_cast<long>(rng.next_u64() % static_cast<uint64_t>(ds.train_size()));
            const SyntheticSample sample = ds.make(idx);
            const ConditionSet cond{sample.reference, sample.garment};
            DmdStepResult res = dmd_step(state, cond, rng);
            if (!res.skipped)
                state.gen_opt.step(generator.params, res.grads);
            const double fake_loss = train_fake_score(state, res.frames, cond, rng);
            gaps.push_back(res.score_gap);
            log << step << ',' << res.score_gap << ',' << fake_loss << ',' << res.weight_mean
                << ',' << res.reward_mean << '\n';
            progress("dmd", step, cfg.dmd_steps, res.score_gap);
        }
    } catch (const std::exception& e) {
        rep.fail_stage = std::string("dmd: ") + e.what();
        return rep;
    }
    rep.dmd_gap_head = window_mean(gaps, true, 25);
    rep.dmd_gap_tail = window_mean(gaps, false, 25);
    rep.generator_ckpt = log_path("generator.ckpt");
    save_checkpoint(rep.generator_ckpt, generator.params);

    {
        std::ofstream cf(log_path("run_config.txt"));
        cf << cfg.dump();
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.ok = true;
    return rep;
}

}  // namespace streamdit
