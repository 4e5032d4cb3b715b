#pragma once

#include "scd/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scd {

// T x F feature matrix, one row per frame.
struct FeatureSequence {
    Matrix frames;
    double frame_shift_s = 0.010;
    std::string source_id;

    int num_frames() const { return static_cast<int>(frames.rows()); }
    int dim() const { return static_cast<int>(frames.cols()); }
    double duration_s() const { return num_frames() * frame_shift_s; }
};

struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
    std::string speaker;
};

// Reference annotation. Segments may overlap.
struct SegmentLabels {
    std::vector<Segment> segments;

    // Sorted, de-duplicated speaker ids.
    std::vector<std::string> speakers() const;
};

// Maps speaker ids onto multi-hot target positions.
class SpeakerCatalog {
public:
    SpeakerCatalog() = default;
    explicit SpeakerCatalog(std::vector<std::string> names);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    // -1 when the speaker is unknown.
    int index_of(const std::string& name) const;

private:
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

struct SpeakerIdentitySequence {
    std::vector<Vector> targets;  // U multi-hot vectors of length C

    int num_segments() const { return static_cast<int>(targets.size()); }
};

struct TrainingExample {
    FeatureSequence features;  // the window
    SpeakerIdentitySequence identity;
    std::vector<double> change_times_s;  // absolute session time, strictly inside the window
    double window_start_s = 0.0;
    double window_end_s = 0.0;
};

struct SynthConfig {
    int num_speakers = 4;
    int feature_dim = 16;
    double cluster_separation = 10.0;
    double turn_min_s = 1.5;
    double turn_max_s = 6.0;
    double session_duration_s = 300.0;
    double overlap_fraction = 0.0;
    double frame_shift_s = 0.010;
    std::uint64_t rng_seed = 7;
};

void validate(const SynthConfig& cfg);

struct Session {
    FeatureSequence features;
    SegmentLabels labels;
};

// Speaker cluster centres for a catalog; pairwise distance equals
// cluster_separation when num_speakers <= feature_dim + 1.
Matrix speaker_means(const SynthConfig& cfg);

// `session_index` selects an independent stream so one config can yield many
// sessions over the same speaker catalog.
Session generate_session(const SynthConfig& cfg, int session_index = 0);

FeatureSequence load_features(const std::string& path);
void store_features(const FeatureSequence& features, const std::string& path);

SegmentLabels load_labels(const std::string& path);
void store_labels(const SegmentLabels& labels, const std::string& path);

// Builds the identity sequence for frames [start_frame, start_frame + num_frames)
// by sweeping the label boundaries. Throws ArgumentError if the window holds no
// annotated speech.
TrainingExample build_example(const FeatureSequence& features, const SegmentLabels& labels,
                              const SpeakerCatalog& catalog, int start_frame, int num_frames);

TrainingExample sample_training_window(const FeatureSequence& features, const SegmentLabels& labels,
                                       const SpeakerCatalog& catalog, double window_s, Rng& rng);

// Realized noise, kept so callers can measure the achieved SNR.
struct NoiseDraw {
    double snr_db = 0.0;
    Matrix noise;
};

FeatureSequence add_noise(const FeatureSequence& features, std::pair<double, double> snr_db_range, Rng& rng,
                          NoiseDraw* draw = nullptr);

// Per-frame change targets: frame i is positive when its time lies within
// +-collar_s of a change time.
std::vector<double> frame_change_targets(const TrainingExample& example, double collar_s);

}  // namespace scd
