#pragma once

#include <stdexcept>
#include <string>

#include "streamdit/backbone.hpp"
#include "streamdit/codec.hpp"
#include "streamdit/flow.hpp"
#include "streamdit/synthetic.hpp"

namespace streamdit {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration; '#' starts a comment. Unknown keys are
/// rejected.
struct Config {
    uint64_t seed = 7;

    // codec / data
    long pixel_dim = 64;
    long tokens_per_frame = 4;
    long channels = 16;
    uint64_t codec_seed = 2024;
    long garment_channels = 4;
    long codebook_size = 8;
    double code_norm = 2.0;
    long dataset_size = 24;

    // backbone
    long layers = 2;
    long heads = 2;
    long head_dim = 8;
    long pos_slots = 8;

    // schedule / cache
    long frames = 15;  // training frame count f
    long chunk_frames = 3;
    long cache_frames = 7;  // M for the trained smoke model
    std::string fewstep_schedule = "1000,750,500,250";
    long teacher_sample_steps = 50;

    // training
    long teacher_steps = 1500;
    long teacher_batch = 4;
    double teacher_lr = 3e-3;
    long tf_steps = 700;
    long tf_batch = 2;
    double tf_lr = 6e-4;
    long dmd_steps = 250;
    double dmd_lr_gen = 4e-4;
    double dmd_lr_fake = 1.5e-3;
    long fake_per_gen = 5;
    double tau = 0.2;
    bool dmd_normalize = false;
    bool use_reweight = true;
    std::string reward_target = "latent";  // latent | pixels

    // evaluation
    double continuity_factor = 3.0;
    long switch_chunk = 6;
    long total_chunks = 12;

    std::string out_dir = "out";

    static Config load(const std::string& path);
    static Config from_string(const std::string& text);
    void set(const std::string& key, const std::string& value);
    std::string dump() const;

    CodecConfig codec_config() const;
    BackboneConfig backbone_config() const;
    SyntheticConfig synthetic_config() const;
    StepSchedule schedule() const { return StepSchedule::parse(fewstep_schedule); }
};

}  // namespace streamdit
