#include "scd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace scd {

namespace {

constexpr double kTimeTol = 1e-9;

double hn_of(double p, double c) { return p + c > 0.0 ? 2.0 * p * c / (p + c) : 0.0; }

void finalize(MetricReport& r) {
    r.purity = r.purity_den > 0.0 ? 100.0 * r.purity_num / r.purity_den : 0.0;
    r.coverage = r.coverage_den > 0.0 ? 100.0 * r.coverage_num / r.coverage_den : 0.0;
    r.hn = hn_of(r.purity, r.coverage);
}

}  // namespace

std::vector<TimeWindow> sliding_windows(double total_s, double window_s, double overlap_frac) {
    if (!(total_s > 0.0) || !(window_s > 0.0)) throw ArgumentError("sliding_windows: durations must be positive");
    if (!(overlap_frac >= 0.0 && overlap_frac < 1.0)) throw ArgumentError("sliding_windows: overlap must lie in [0, 1)");
    if (window_s >= total_s - kTimeTol) return {{0.0, total_s}};

    const double step = window_s * (1.0 - overlap_frac);
    std::vector<TimeWindow> out;
    for (long k = 0;; ++k) {
        const double start = k * step;
        if (start + window_s > total_s + kTimeTol) break;
        out.push_back({start, start + window_s});
    }
    if (out.back().end_s < total_s - kTimeTol) out.push_back({total_s - window_s, total_s});
    return out;
}

std::vector<double> score_session(const FrameScorer& scorer, const FeatureSequence& features, double window_s,
                                  double overlap_frac) {
    const int total = features.num_frames();
    const double shift = features.frame_shift_s;
    std::vector<double> sum(total, 0.0);
    std::vector<int> count(total, 0);
    for (const auto& w : sliding_windows(features.duration_s(), window_s, overlap_frac)) {
        const int f0 = std::clamp(static_cast<int>(std::lround(w.start_s / shift)), 0, total - 1);
        const int f1 = std::clamp(static_cast<int>(std::lround(w.end_s / shift)), f0 + 1, total);
        if (f1 - f0 < scorer.min_frames()) continue;
        const std::vector<double> s = scorer.score_window(features.frames.middleRows(f0, f1 - f0));
        for (int i = f0; i < f1; ++i) {
            sum[i] += s[i - f0];
            ++count[i];
        }
    }
    for (int i = 0; i < total; ++i) sum[i] = count[i] ? sum[i] / count[i] : 0.0;
    return sum;
}

std::vector<int> peak_indices(const std::vector<double>& scores, double theta) {
    std::vector<int> peaks;
    const int n = static_cast<int>(scores.size());
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && scores[j + 1] == scores[i]) ++j;
        const double v = scores[i];
        const bool left_ok = i == 0 || scores[i - 1] <= v;
        const bool right_ok = j == n - 1 || scores[j + 1] <= v;
        if (v > theta && left_ok && right_ok) peaks.push_back(i + (j - i) / 2);
        i = j + 1;
    }
    return peaks;
}

ChangePointSet peak_pick(const std::vector<double>& scores, double theta, double frame_shift_s) {
    ChangePointSet out;
    for (int i : peak_indices(scores, theta)) out.times_s.push_back(i * frame_shift_s);
    return out;
}

MetricReport purity_coverage(const SegmentLabels& reference, const ChangePointSet& hypothesis, double span_start_s,
                             double span_end_s) {
    if (reference.segments.empty()) throw MetricError("purity_coverage: empty reference");
    if (!(span_end_s > span_start_s)) throw MetricError("purity_coverage: empty span");

    std::vector<double> cuts{span_start_s};
    for (double t : hypothesis.times_s) {
        if (t < span_start_s - kTimeTol || t > span_end_s + kTimeTol)
            throw MetricError("purity_coverage: hypothesis change outside the span");
        if (t > cuts.back() + kTimeTol && t < span_end_s - kTimeTol) cuts.push_back(t);
    }
    cuts.push_back(span_end_s);

    // Reference restricted to the span.
    std::vector<Segment> ref;
    for (const auto& s : reference.segments) {
        const double a = std::max(s.start_s, span_start_s);
        const double b = std::min(s.end_s, span_end_s);
        if (b > a) ref.push_back({a, b, s.speaker});
    }
    if (ref.empty()) throw MetricError("purity_coverage: reference does not intersect the span");

    // Annotated time: union of reference segments.
    std::vector<std::pair<double, double>> annotated;
    {
        std::vector<std::pair<double, double>> iv;
        for (const auto& s : ref) iv.emplace_back(s.start_s, s.end_s);
        std::sort(iv.begin(), iv.end());
        for (const auto& p : iv) {
            if (!annotated.empty() && p.first <= annotated.back().second)
                annotated.back().second = std::max(annotated.back().second, p.second);
            else
                annotated.push_back(p);
        }
    }
    auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };

    MetricReport r;
    for (const auto& s : ref) {
        double best = 0.0;
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) best = std::max(best, overlap(s.start_s, s.end_s, cuts[k], cuts[k + 1]));
        r.coverage_num += best;
        r.coverage_den += s.end_s - s.start_s;
    }
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double best = 0.0;
        for (const auto& s : ref) best = std::max(best, overlap(s.start_s, s.end_s, cuts[k], cuts[k + 1]));
        double covered = 0.0;
        for (const auto& a : annotated) covered += overlap(a.first, a.second, cuts[k], cuts[k + 1]);
        r.purity_num += best;
        r.purity_den += covered;
    }
    r.num_hypothesized_changes = static_cast<int>(hypothesis.times_s.size());
    r.num_reference_changes = reference_change_count(reference);
    finalize(r);
    return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
    MetricReport r;
    for (const auto& x : reports) {
        r.purity_num += x.purity_num;
        r.purity_den += x.purity_den;
        r.coverage_num += x.coverage_num;
        r.coverage_den += x.coverage_den;
        r.num_hypothesized_changes += x.num_hypothesized_changes;
        r.num_reference_changes += x.num_reference_changes;
        r.theta = x.theta;
    }
    finalize(r);
    return r;
}

int reference_change_count(const SegmentLabels& reference) {
    std::set<double> cuts;
    for (const auto& s : reference.segments) {
        cuts.insert(s.start_s);
        cuts.insert(s.end_s);
    }
    std::vector<double> pts(cuts.begin(), cuts.end());
    int changes = 0;
    std::set<std::string> prev;
    bool have_prev = false;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        std::set<std::string> active;
        for (const auto& s : reference.segments) {
            if (s.start_s < pts[i + 1] - kTimeTol && s.end_s > pts[i] + kTimeTol) active.insert(s.speaker);
        }
        if (active.empty()) continue;
        if (have_prev && active != prev) ++changes;
        prev = std::move(active);
        have_prev = true;
    }
    return changes;
}

MetricReport evaluate_at(const std::vector<ScoredSession>& sessions, double theta, std::vector<MetricReport>* per_session) {
    std::vector<MetricReport> reports;
    for (const auto& s : sessions) {
        MetricReport r = purity_coverage(*s.labels, peak_pick(s.scores, theta, s.frame_shift_s), 0.0, s.span_s);
        r.theta = theta;
        reports.push_back(r);
    }
    MetricReport pooled = aggregate(reports);
    pooled.theta = theta;
    if (per_session) *per_session = std::move(reports);
    return pooled;
}

TuneResult tune_threshold(const std::vector<ScoredSession>& sessions, const std::vector<double>& grid) {
    if (grid.empty()) throw ArgumentError("tune_threshold: empty grid");
    if (sessions.empty()) throw ArgumentError("tune_threshold: empty dev set");
    TuneResult out;
    bool have = false;
    for (double theta : grid) {
        MetricReport r = evaluate_at(sessions, theta);
        out.curve.push_back(r);
        if (!have || r.hn > out.report.hn || (r.hn == out.report.hn && theta > out.theta)) {
            out.theta = theta;
            out.report = r;
            have = true;
        }
    }
    return out;
}

TuneResult tune_threshold(const FrameScorer& scorer, const std::vector<Session>& dev, double window_s,
                          double overlap_frac, const std::vector<double>& grid) {
    std::vector<ScoredSession> scored;
    for (const auto& s : dev) {
        scored.push_back({score_session(scorer, s.features, window_s, overlap_frac), s.features.frame_shift_s,
                          &s.labels, s.features.duration_s()});
    }
    return tune_threshold(scored, grid);
}

}  // namespace scd
