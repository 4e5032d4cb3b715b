#include "scd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace scd {

namespace {

constexpr double kTimeTol = 1e-9;

Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(tag)};
    return Rng(seq);
}

}  // namespace

std::vector<std::string> SegmentLabels::speakers() const {
    std::set<std::string> names;
    for (const auto& s : segments) names.insert(s.speaker);
    return {names.begin(), names.end()};
}

SpeakerCatalog::SpeakerCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
        if (!index_.emplace(names_[i], i).second) throw ArgumentError("duplicate speaker in catalog: " + names_[i]);
    }
}

int SpeakerCatalog::index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

void validate(const SynthConfig& cfg) {
    if (cfg.num_speakers < 2) throw ConfigError("num_speakers must be >= 2");
    if (cfg.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (!(cfg.cluster_separation > 0.0)) throw ConfigError("cluster_separation must be > 0");
    if (!(cfg.turn_min_s > 0.0)) throw ConfigError("turn_duration_range_s: min must be > 0");
    if (cfg.turn_max_s < cfg.turn_min_s) throw ConfigError("turn_duration_range_s: max must be >= min");
    if (!(cfg.session_duration_s > 0.0)) throw ConfigError("session_duration_s must be > 0");
    if (!(cfg.overlap_fraction >= 0.0 && cfg.overlap_fraction < 1.0))
        throw ConfigError("overlap_fraction must lie in [0, 1)");
    if (!(cfg.frame_shift_s > 0.0)) throw ConfigError("frame_shift_s must be > 0");
    if (cfg.session_duration_s < cfg.frame_shift_s) throw ConfigError("session_duration_s shorter than one frame");
}

Matrix speaker_means(const SynthConfig& cfg) {
    validate(cfg);
    Rng rng = stream_rng(cfg.rng_seed, 0, 0x5eed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int f = cfg.feature_dim;
    const int k = cfg.num_speakers;
    const double radius = cfg.cluster_separation / std::sqrt(2.0);

    Matrix means(k, f);
    if (k <= f) {
        // Scaled orthonormal directions: |mu_i - mu_j| = radius * sqrt(2).
        Matrix g(f, f);
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) g(i, j) = normal(rng);
        Eigen::HouseholderQR<Matrix> qr(g);
        Matrix q = qr.householderQ();
        for (int s = 0; s < k; ++s) means.row(s) = radius * q.col(s).transpose();
    } else {
        for (int s = 0; s < k; ++s) {
            Vector v(f);
            for (int j = 0; j < f; ++j) v(j) = normal(rng);
            means.row(s) = radius * v.normalized().transpose();
        }
    }
    return means;
}

Session generate_session(const SynthConfig& cfg, int session_index) {
    const Matrix means = speaker_means(cfg);
    Rng rng = stream_rng(cfg.rng_seed, static_cast<std::uint64_t>(session_index) + 1, 0x7e55);
    std::uniform_real_distribution<double> turn_dist(cfg.turn_min_s, cfg.turn_max_s);
    std::uniform_int_distribution<int> speaker_dist(0, cfg.num_speakers - 1);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double shift = cfg.frame_shift_s;
    const int total_frames = std::max(1, static_cast<int>(std::lround(cfg.session_duration_s / shift)));

    Session session;
    session.features.frame_shift_s = shift;
    session.features.source_id = "session_" + std::to_string(session_index);

    // Turn boundaries live on the frame grid so labels and features agree exactly.
    std::vector<int> segment_speaker;
    int prev_speaker = -1;
    int prev_len = 0;
    int prev_end = 0;
    while (prev_end < total_frames) {
        int speaker = speaker_dist(rng);
        while (speaker == prev_speaker) speaker = speaker_dist(rng);
        const int len = std::max(1, static_cast<int>(std::lround(turn_dist(rng) / shift)));
        int start = prev_end;
        if (prev_speaker >= 0 && cfg.overlap_fraction > 0.0)
            start = prev_end - static_cast<int>(std::floor(cfg.overlap_fraction * std::min(prev_len, len)));
        const int end = std::min(total_frames, start + len);
        char name[32];
        std::snprintf(name, sizeof(name), "spk%02d", speaker);
        session.labels.segments.push_back({start * shift, end * shift, name});
        segment_speaker.push_back(speaker);
        prev_speaker = speaker;
        prev_len = len;
        prev_end = end;
    }

    const int dim = cfg.feature_dim;
    session.features.frames.resize(total_frames, dim);
    std::vector<int> active;
    for (int t = 0; t < total_frames; ++t) {
        const double centre = (t + 0.5) * shift;
        active.clear();
        for (std::size_t k = 0; k < segment_speaker.size(); ++k) {
            const auto& seg = session.labels.segments[k];
            if (seg.start_s <= centre && centre < seg.end_s) active.push_back(segment_speaker[k]);
        }
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
        for (int s : active) mean += means.row(s);
        if (!active.empty()) mean /= static_cast<double>(active.size());
        for (int j = 0; j < dim; ++j) session.features.frames(t, j) = mean(j) + normal(rng);
    }
    return session;
}

FeatureSequence load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open feature file: " + path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
    ++line_no;
    std::istringstream header(line);
    long t = 0;
    long f = 0;
    FeatureSequence seq;
    if (!(header >> t >> f >> seq.frame_shift_s >> seq.source_id))
        throw ParseError(path, line_no, "header must be 'T F frame_shift_s source_id'");
    std::string extra;
    if (header >> extra) throw ParseError(path, line_no, "trailing tokens in header");
    if (t < 1 || f < 1) throw ParseError(path, line_no, "T and F must be positive");
    if (!(seq.frame_shift_s > 0.0) || !std::isfinite(seq.frame_shift_s))
        throw ParseError(path, line_no, "frame_shift_s must be a positive number");

    seq.frames.resize(t, f);
    for (long row = 0; row < t; ++row) {
        if (!std::getline(in, line)) throw ParseError(path, line_no + 1, "expected " + std::to_string(t) + " rows");
        ++line_no;
        const char* p = line.c_str();
        long col = 0;
        while (true) {
            while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
            if (*p == '\0') break;
            char* endp = nullptr;
            const double v = std::strtod(p, &endp);
            if (endp == p) throw ParseError(path, line_no, "unparseable value");
            if (!std::isfinite(v)) throw ParseError(path, line_no, "non-finite value");
            if (col >= f) throw ParseError(path, line_no, "row has more than " + std::to_string(f) + " values");
            seq.frames(row, col++) = v;
            p = endp;
        }
        if (col != f)
            throw ParseError(path, line_no, "row has " + std::to_string(col) + " values, expected " + std::to_string(f));
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError(path, line_no, "extra rows after T");
    }
    return seq;
}

void store_features(const FeatureSequence& features, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ScdError("cannot write feature file: " + path);
    const std::string id = features.source_id.empty() ? "unnamed" : features.source_id;
    std::fprintf(fp, "%d %d %.17g %s\n", features.num_frames(), features.dim(), features.frame_shift_s, id.c_str());
    for (int t = 0; t < features.num_frames(); ++t) {
        for (int j = 0; j < features.dim(); ++j) {
            std::fprintf(fp, j == 0 ? "%.17g" : " %.17g", features.frames(t, j));
        }
        std::fputc('\n', fp);
    }
    if (std::fclose(fp) != 0) throw ScdError("failed writing feature file: " + path);
}

SegmentLabels load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open label file: " + path);
    SegmentLabels labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        Segment seg;
        std::string start;
        std::string end;
        if (!(row >> seg.speaker >> start >> end)) throw ParseError(path, line_no, "expected 'speaker start_s end_s'");
        std::string extra;
        if (row >> extra) throw ParseError(path, line_no, "trailing tokens");
        try {
            std::size_t n1 = 0;
            std::size_t n2 = 0;
            seg.start_s = std::stod(start, &n1);
            seg.end_s = std::stod(end, &n2);
            if (n1 != start.size() || n2 != end.size()) throw std::invalid_argument("junk");
        } catch (const std::exception&) {
            throw ParseError(path, line_no, "unparseable time");
        }
        if (!std::isfinite(seg.start_s) || !std::isfinite(seg.end_s)) throw ParseError(path, line_no, "non-finite time");
        if (seg.start_s < 0.0) throw ParseError(path, line_no, "negative start time");
        if (!(seg.end_s > seg.start_s)) throw ParseError(path, line_no, "end must be greater than start");
        labels.segments.push_back(std::move(seg));
    }
    return labels;
}

void store_labels(const SegmentLabels& labels, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ScdError("cannot write label file: " + path);
    for (const auto& s : labels.segments) std::fprintf(fp, "%s %.17g %.17g\n", s.speaker.c_str(), s.start_s, s.end_s);
    if (std::fclose(fp) != 0) throw ScdError("failed writing label file: " + path);
}

TrainingExample build_example(const FeatureSequence& features, const SegmentLabels& labels,
                              const SpeakerCatalog& catalog, int start_frame, int num_frames) {
    if (num_frames < 1 || start_frame < 0 || start_frame + num_frames > features.num_frames())
        throw ArgumentError("window outside the feature sequence");
    const double shift = features.frame_shift_s;
    const double ws = start_frame * shift;
    const double we = (start_frame + num_frames) * shift;

    std::vector<double> cuts{ws, we};
    for (const auto& s : labels.segments) {
        if (s.start_s > ws + kTimeTol && s.start_s < we - kTimeTol) cuts.push_back(s.start_s);
        if (s.end_s > ws + kTimeTol && s.end_s < we - kTimeTol) cuts.push_back(s.end_s);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double a, double b) { return b - a <= kTimeTol; }),
               cuts.end());

    const int c = catalog.size();
    TrainingExample ex;
    ex.window_start_s = ws;
    ex.window_end_s = we;
    ex.features.frames = features.frames.middleRows(start_frame, num_frames);
    ex.features.frame_shift_s = shift;
    ex.features.source_id = features.source_id;

    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = cuts[i + 1];
        Vector active = Vector::Zero(c);
        for (const auto& s : labels.segments) {
            if (s.start_s < b - kTimeTol && s.end_s > a + kTimeTol) {
                const int k = catalog.index_of(s.speaker);
                if (k < 0) throw ArgumentError("speaker not in catalog: " + s.speaker);
                active(k) = 1.0;
            }
        }
        if (active.sum() == 0.0) continue;  // silence never forms a segment
        auto& targets = ex.identity.targets;
        if (!targets.empty() && targets.back() == active) continue;
        if (!targets.empty()) ex.change_times_s.push_back(a);
        targets.push_back(std::move(active));
    }
    if (ex.identity.targets.empty()) throw ArgumentError("window contains no annotated speech");
    return ex;
}

TrainingExample sample_training_window(const FeatureSequence& features, const SegmentLabels& labels,
                                       const SpeakerCatalog& catalog, double window_s, Rng& rng) {
    const int win = static_cast<int>(std::lround(window_s / features.frame_shift_s));
    if (win < 1) throw ArgumentError("window shorter than one frame");
    if (win > features.num_frames()) throw ArgumentError("window longer than session " + features.source_id);
    std::uniform_int_distribution<int> start_dist(0, features.num_frames() - win);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const int start = start_dist(rng);
        try {
            return build_example(features, labels, catalog, start, win);
        } catch (const ArgumentError&) {
            // silent window; draw again
        }
    }
    throw ArgumentError("no window with annotated speech found in " + features.source_id);
}

FeatureSequence add_noise(const FeatureSequence& features, std::pair<double, double> snr_db_range, Rng& rng,
                          NoiseDraw* draw) {
    const auto [lo, hi] = snr_db_range;
    if (!(lo >= 0.0 && hi <= 60.0 && lo <= hi)) throw ArgumentError("snr_db_range must satisfy 0 <= min <= max <= 60");
    if (features.frames.size() == 0) throw ArgumentError("cannot add noise to an empty feature sequence");

    const double snr = lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix noise(features.frames.rows(), features.frames.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);

    // Rescale the realization to the exact target power.
    const double signal_power = features.frames.squaredNorm() / static_cast<double>(features.frames.size());
    const double target_power = signal_power / std::pow(10.0, snr / 10.0);
    const double drawn_power = noise.squaredNorm() / static_cast<double>(noise.size());
    noise *= drawn_power > 0.0 ? std::sqrt(target_power / drawn_power) : 0.0;

    FeatureSequence out = features;
    out.frames += noise;
    if (draw) {
        draw->snr_db = snr;
        draw->noise = std::move(noise);
    }
    return out;
}

std::vector<double> frame_change_targets(const TrainingExample& example, double collar_s) {
    const int n = example.features.num_frames();
    const double shift = example.features.frame_shift_s;
    std::vector<double> targets(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double t = example.window_start_s + i * shift;
        for (double c : example.change_times_s) {
            if (std::abs(t - c) <= collar_s + kTimeTol) {
                targets[i] = 1.0;
                break;
            }
        }
    }
    return targets;
}

}  // namespace scd
