#pragma once

#include <string>
#include <vector>

#include "streamdit/config.hpp"
#include "streamdit/distill.hpp"
#include "streamdit/session.hpp"

namespace streamdit {

struct PipelineReport {
    bool ok = false;
    std::string fail_stage;
    double teacher_loss_head = 0.0, teacher_loss_tail = 0.0;
    double tf_loss_head = 0.0, tf_loss_tail = 0.0;
    double dmd_gap_head = 0.0, dmd_gap_tail = 0.0;
    double seconds = 0.0;
    std::string teacher_ckpt, tf_ckpt, generator_ckpt;
};

/// Teacher pre-training, teacher-forcing initialization, then reweighted
/// distribution-matching distillation; checkpoints and CSV logs land in
/// cfg.out_dir. Any stage divergence halts with a stage-tagged diagnostic.
PipelineReport run_pipeline(const Config& cfg, bool quiet = false);

// Gradient-accumulation helpers shared by training loops.
void grad_axpy(ParamStore& acc, const ParamStore& g, double s);
ParamStore zeros_like(const ParamStore& params);

}  // namespace streamdit
