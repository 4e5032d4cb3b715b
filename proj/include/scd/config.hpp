#pragma once

#include "scd/dcif.hpp"
#include "scd/differnet.hpp"
#include "scd/encoder.hpp"
#include "scd/head.hpp"
#include "scd/synthdata.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace scd {

inline constexpr int kConfigSchemaVersion = 1;

struct DataConfig {
    SynthConfig synth;
    int num_train_sessions = 6;
    int num_dev_sessions = 2;
    std::string train_dir;
    std::string dev_dir;
    bool augment = true;
    double snr_db_min = 5.0;
    double snr_db_max = 20.0;
};

struct DifferNetSection {
    int hidden = 64;
    double history_ms = 160.0;
};

struct TrainConfig {
    double window_s = 4.0;
    int batch_size = 16;
    double peak_lr = 2e-3;
    double warmup_frac = 0.05;
    double hold_frac = 0.50;
    long total_steps = 0;  // 0: derive from epochs
    int epochs = 160;
    std::uint64_t seed = 1;
    bool use_scaling = true;
    int dev_every = 0;  // 0 disables periodic dev evaluation
    double baseline_collar_s = 0.1;
    int threads = 1;
};

enum class ScoreSource { marks, raw_d };

ScoreSource parse_score_source(const std::string& s);
std::string to_string(ScoreSource s);

struct InferenceConfig {
    double window_s = 0.0;  // 0: same as training
    double overlap_frac = 0.8;
    double theta = 0.5;
    ScoreSource score_source = ScoreSource::marks;
    std::vector<double> theta_grid;  // empty: 0.02 k for k = 1..49
};

std::vector<double> default_theta_grid();

struct RunConfig {
    DataConfig data;
    EncoderConfig encoder;
    DifferNetSection differnet;
    DcifConfig dcif;
    HeadConfig head;
    TrainConfig train;
    InferenceConfig infer;
};

// Defaults: 4 s windows, D = 8, 160 ms history, beta = 1, eta = 12,
// alpha = 0.25, gamma = 2, lambda1 = 50, lambda2 = 1, with network widths sized
// for CPU training.
RunConfig default_config();

// Parses and validates; unknown sections or keys raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& cfg);

void validate(const RunConfig& cfg);

// History length in encoded frames for a given feature frame shift.
int history_frames(const RunConfig& cfg, double frame_shift_s);

// Applies an --ablate flag: length_norm, scaling or focal.
void apply_ablation(RunConfig& cfg, const std::string& name);

}  // namespace scd
