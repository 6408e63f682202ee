#include "streamdit/config.hpp"

#include <fstream>
#include <sstream>

namespace streamdit {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

long to_long(const std::string& k, const std::string& v) {
    try {
        size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw ConfigError("config: bad integer for " + k + ": " + v);
    }
}

double to_double(const std::string& k, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw ConfigError("config: bad number for " + k + ": " + v);
    }
}

bool to_bool(const std::string& k, const std::string& v) {
    if (v == "1" || v == "true")
        return true;
    if (v == "0" || v == "false")
        return false;
    throw ConfigError("config: bad bool for " + k + ": " + v);
}
}  // namespace

void Config::set(const std::string& key, const std::string& value) {
    if (key == "seed")
        seed = static_cast<uint64_t>(to_long(key, value));
    else if (key == "pixel_dim")
        pixel_dim = to_long(key, value);
    else if (key == "tokens_per_frame")
        tokens_per_frame = to_long(key, value);
    else if (key == "channels")
        channels = to_long(key, value);
    else if (key == "codec_seed")
        codec_seed = static_cast<uint64_t>(to_long(key, value));
    else if (key == "garment_channels")
        garment_channels = to_long(key, value);
    else if (key == "codebook_size")
        codebook_size = to_long(key, value);
    else if (key == "code_norm")
        code_norm = to_double(key, value);
    else if (key == "dataset_size")
        dataset_size = to_long(key, value);
    else if (key == "layers")
        layers = to_long(key, value);
    else if (key == "heads")
        heads = to_long(key, value);
    else if (key == "head_dim")
        head_dim = to_long(key, value);
    else if (key == "pos_slots")
        pos_slots = to_long(key, value);
    else if (key == "frames")
        frames = to_long(key, value);
    else if (key == "chunk_frames")
        chunk_frames = to_long(key, value);
    else if (key == "cache_frames")
        cache_frames = to_long(key, value);
    else if (key == "fewstep_schedule")
        fewstep_schedule = value;
    else if (key == "teacher_sample_steps")
        teacher_sample_steps = to_long(key, value);
    else if (key == "teacher_steps")
        teacher_steps = to_long(key, value);
    else if (key == "teacher_batch")
        teacher_batch = to_long(key, value);
    else if (key == "teacher_lr")
        teacher_lr = to_double(key, value);
    else if (key == "tf_steps")
        tf_steps = to_long(key, value);
    else if (key == "tf_batch")
        tf_batch = to_long(key, value);
    else if (key == "tf_lr")
        tf_lr = to_double(key, value);
    else if (key == "dmd_steps")
        dmd_steps = to_long(key, value);
    else if (key == "dmd_lr_gen")
        dmd_lr_gen = to_double(key, value);
    else if (key == "dmd_lr_fake")
        dmd_lr_fake = to_double(key, value);
    else if (key == "fake_per_gen")
        fake_per_gen = to_long(key, value);
    else if (key == "tau")
        tau = to_double(key, value);
    else if (key == "dmd_normalize")
        dmd_normalize = to_bool(key, value);
    else if (key == "use_reweight")
        use_reweight = to_bool(key, value);
    else if (key == "reward_target") {
        if (value != "latent" && value != "pixels")
            throw ConfigError("config: reward_target must be latent or pixels");
        reward_target = value;
    } else if (key == "continuity_factor")
        continuity_factor = to_double(key, value);
    else if (key == "switch_chunk")
        switch_chunk = to_long(key, value);
    else if (key == "total_chunks")
        total_chunks = to_long(key, value);
    else if (key == "out_dir")
        out_dir = value;
    else
        throw ConfigError("config: unknown key: " + key);
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key=value, got: " + line);
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream is(path);
    if (!is.good())
        throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

std::string Config::dump() const {
    std::ostringstream os;
    os << "seed=" << seed << "\n";
    os << "pixel_dim=" << pixel_dim << "\ntokens_per_frame=" << tokens_per_frame
       << "\nchannels=" << channels << "\ncodec_seed=" << codec_seed
       << "\ngarment_channels=" << garment_channels << "\ncodebook_size=" << codebook_size
       << "\ncode_norm=" << code_norm << "\ndataset_size=" << dataset_size << "\n";
    os << "layers=" << layers << "\nheads=" << heads << "\nhead_dim=" << head_dim
       << "\npos_slots=" << pos_slots << "\n";
    os << "frames=" << frames << "\nchunk_frames=" << chunk_frames
       << "\ncache_frames=" << cache_frames << "\nfewstep_schedule=" << fewstep_schedule
       << "\nteacher_sample_steps=" << teacher_sample_steps << "\n";
    os << "teacher_steps=" << teacher_steps << "\nteacher_batch=" << teacher_batch
       << "\nteacher_lr=" << teacher_lr << "\ntf_steps=" << tf_steps << "\ntf_batch=" << tf_batch
       << "\ntf_lr=" << tf_lr << "\ndmd_steps=" << dmd_steps << "\ndmd_lr_gen=" << dmd_lr_gen
       << "\ndmd_lr_fake=" << dmd_lr_fake << "\nfake_per_gen=" << fake_per_gen << "\ntau=" << tau
       << "\ndmd_normalize=" << (dmd_normalize ? 1 : 0)
       << "\nuse_reweight=" << (use_reweight ? 1 : 0) << "\nreward_target=" << reward_target
       << "\n";
    os << "continuity_factor=" << continuity_factor << "\nswitch_chunk=" << switch_chunk
       << "\ntotal_chunks=" << total_chunks << "\nout_dir=" << out_dir << "\n";
    return os.str();
}

CodecConfig Config::codec_config() const {
    CodecConfig c;
    c.pixel_dim = pixel_dim;
    c.tokens_per_frame = tokens_per_frame;
    c.channels = channels;
    c.seed = codec_seed;
    return c;
}

BackboneConfig Config::backbone_config() const {
    BackboneConfig b;
    b.layers = layers;
    b.heads = heads;
    b.head_dim = head_dim;
    b.tokens_per_frame = tokens_per_frame;
    b.channels = channels;
    b.pos_slots = pos_slots;
    return b;
}

SyntheticConfig Config::synthetic_config() const {
    SyntheticConfig s;
    s.garment_channels = garment_channels;
    s.codebook_size = codebook_size;
    s.code_norm = code_norm;
    s.frames = frames;
    return s;
}

}  // namespace streamdit
