#pragma once

#include "scd/config.hpp"
#include "scd/synthdata.hpp"

#include <utility>
#include <vector>

namespace scd {

struct TimeWindow {
    double start_s = 0.0;
    double end_s = 0.0;
};

// Starts at k * window_s * (1 - overlap_frac); a final window ending exactly at
// total_s is appended when the regular grid falls short. A window longer than
// the session collapses to one full-session window.
std::vector<TimeWindow> sliding_windows(double total_s, double window_s, double overlap_frac);

// Anything that maps a feature window to one change score per input frame.
class FrameScorer {
public:
    virtual ~FrameScorer() = default;
    virtual std::vector<double> score_window(const Matrix& x) const = 0;
    virtual int min_frames() const { return 1; }
};

// Mean over all windows containing each frame.
std::vector<double> score_session(const FrameScorer& scorer, const FeatureSequence& features, double window_s,
                                  double overlap_frac);

struct ChangePointSet {
    std::vector<double> times_s;
};

// Local maxima strictly above theta; a flat plateau emits its lower-median index.
std::vector<int> peak_indices(const std::vector<double>& scores, double theta);
ChangePointSet peak_pick(const std::vector<double>& scores, double theta, double frame_shift_s);

struct MetricReport {
    double purity = 0.0;  // percent
    double coverage = 0.0;
    double hn = 0.0;
    double theta = 0.0;
    int num_hypothesized_changes = 0;
    int num_reference_changes = 0;
    // Raw durations so reports can be pooled across sessions.
    double purity_num = 0.0;
    double purity_den = 0.0;
    double coverage_num = 0.0;
    double coverage_den = 0.0;
};

// Segmentation purity and coverage of the partition of [span_start, span_end)
// induced by the hypothesis change points. Purity is normalized by annotated
// time only.
MetricReport purity_coverage(const SegmentLabels& reference, const ChangePointSet& hypothesis, double span_start_s,
                             double span_end_s);

// Pools numerators and denominators, so long sessions weigh more.
MetricReport aggregate(const std::vector<MetricReport>& reports);

// Number of instants where the active speaker set changes.
int reference_change_count(const SegmentLabels& reference);

struct ScoredSession {
    std::vector<double> scores;
    double frame_shift_s = 0.01;
    const SegmentLabels* labels = nullptr;
    double span_s = 0.0;
};

struct TuneResult {
    double theta = 0.0;
    MetricReport report;
    std::vector<MetricReport> curve;  // one pooled report per grid value
};

MetricReport evaluate_at(const std::vector<ScoredSession>& sessions, double theta,
                         std::vector<MetricReport>* per_session = nullptr);

// Argmax of pooled Hn over the grid; ties go to the larger theta.
TuneResult tune_threshold(const std::vector<ScoredSession>& sessions, const std::vector<double>& grid);

TuneResult tune_threshold(const FrameScorer& scorer, const std::vector<Session>& dev, double window_s,
                          double overlap_frac, const std::vector<double>& grid);

}  // namespace scd
