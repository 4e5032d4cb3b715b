// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances are fixed here; nothing is read from the environment.

#include "scd/dcif.hpp"
#include "scd/differnet.hpp"
#include "scd/head.hpp"
#include "scd/inference.hpp"
#include "scd/model.hpp"
#include "scd/trainer.hpp"

#include "oracles.hpp"
#include "tiny.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace scd;

namespace {

constexpr double kDcifTol = 1e-9;
constexpr double kMassTol = 1e-9;
constexpr double kScaleTol = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kMlflTol = 1e-7;
constexpr double kMetricTol = 1e-9;
constexpr double kDeskBudgetS = 15.0 * 60.0;
constexpr double kSeqScdMinHn = 90.0;
constexpr double kBaselineMinHn = 85.0;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Matrix column(std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r].push_back(m(r, c));
    return out;
}

struct DcifCase {
    Matrix h;
    Vector d;
    double beta;
};

DcifCase random_dcif(Rng& rng) {
    std::uniform_int_distribution<int> len(1, 12);
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    DcifCase c;
    c.h = Matrix(len(rng), dim(rng));
    for (auto& v : c.h.reshaped()) v = n(rng);
    c.d = Vector(c.h.rows());
    for (auto& v : c.d) v = u(rng) < 0.2 ? 0.0 : u(rng);
    c.beta = u(rng) < 0.8 ? 1.0 : 0.5 + u(rng);
    return c;
}

void published_numbers() {
    // Purity / coverage / Hn on the two real corpora; they need the corpora
    // and full-scale training, so only their internal consistency is checked.
    struct Row {
        const char* corpus;
        double p, c, hn;
    };
    const Row rows[] = {{"AMI", 83.92, 89.81, 86.76}, {"DIHARD-I", 86.24, 92.56, 89.29}};
    bool consistent = true;
    for (const Row& r : rows) consistent = consistent && std::abs(2 * r.p * r.c / (r.p + r.c) - r.hn) < 0.01;
    report(consistent, "published-numbers",
           "AMI 83.92/89.81/86.76 and DIHARD-I 86.24/92.56/89.29 need the real corpora and full training; "
           "not reproducible at desk scale, replaced by the checks below");
}

void dcif_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Vector d(3);
    d << 0.3, 0.5, 0.4;
    const FiredOutput hand = dcif_forward(column({1, 2, 3}), d, {});
    const bool hand_ok = hand.embeddings.rows() == 2 && hand.embeddings(0, 0) == 4.5 && hand.embeddings(1, 0) == 3.0 &&
                         hand.marks == std::vector<int>{0, 0, 1};

    Rng rng(101);
    double worst = 0.0;
    int mismatched = 0;
    for (int i = 0; i < 1000; ++i) {
        const DcifCase c = random_dcif(rng);
        DcifConfig cfg;
        cfg.beta = c.beta;
        const FiredOutput out = dcif_forward(c.h, c.d, cfg);
        const auto ref = oracle::dcif(rows_of(c.h), {c.d.data(), c.d.data() + c.d.size()}, c.beta);
        if (out.marks != ref.c || out.embeddings.rows() != static_cast<Eigen::Index>(ref.e.size())) {
            ++mismatched;
            continue;
        }
        for (std::size_t u = 0; u < ref.e.size(); ++u)
            for (std::size_t k = 0; k < ref.e[u].size(); ++k)
                worst = std::max(worst, std::abs(out.embeddings(u, k) - ref.e[u][k]));
    }
    const double secs = seconds_since(t0);
    report(hand_ok && mismatched == 0 && worst <= kDcifTol && secs < 10.0, "dcif-oracle",
           fmt("hand trace e=[%.1f, %.1f]; 1000 random instances, %g pattern mismatches, max |diff| %.2e",
               hand.embeddings(0, 0), hand.embeddings.rows() > 1 ? hand.embeddings(1, 0) : -1.0, mismatched, worst) +
               fmt(" (%.2f s)", secs));
}

void mass_conservation() {
    Rng rng(102);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const DcifCase c = random_dcif(rng);
        DcifConfig cfg;
        cfg.beta = c.beta;
        const FiredOutput out = dcif_forward(c.h, c.d, cfg);
        worst = std::max(worst, std::abs(c.d.sum() - (out.fired_count() * c.beta + out.final_acc)));
    }
    report(worst <= kMassTol, "mass-conservation",
           fmt("max |sum(d') - (fires*beta + final acc)| = %.2e over 1000 instances", worst));
}

void scaling_contract() {
    Rng rng(103);
    std::uniform_int_distribution<int> len(2, 60);
    std::uniform_int_distribution<int> segs(1, 8);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    int counted = 0;
    while (counted < 1000) {
        const int dim = 4;
        DifferNetParams p = init_differnet({8, 2}, dim, rng);
        p.b2(0, 0) = 0.3;
        Matrix h(len(rng), dim);
        for (auto& v : h.reshaped()) v = n(rng);
        const Vector d = difference_scores(h, {8, 2}, p);
        const int u = segs(rng);
        if (u > 1 && d.sum() == 0.0) continue;
        const ScaledScores s = scale_scores(d, u, kScaleSlack * (u - 1));
        worst = std::max(worst, std::abs(s.scaled.sum() - (u - 1)));
        ++counted;
    }

    // Inference never scales: the model's d equals the DifferNet output bit
    // for bit, and the fire pattern is that of the unscaled scores.
    RunConfig cfg = default_config();
    const ModelSpec spec = resolve_spec(cfg, cfg.data.synth.feature_dim, 0.01, cfg.data.synth.num_speakers);
    const SeqScdParams params = init_seqscd(spec, rng);
    Matrix x(400, cfg.data.synth.feature_dim);
    for (auto& v : x.reshaped()) v = n(rng);
    const SeqScdOutput out = seqscd_forward(spec, params, x);
    const Matrix h = encode(x, spec.encoder, params.encoder).frames;
    const Vector d = difference_scores(h, spec.differnet, params.differnet);
    const bool identical = out.d.size() == d.size() && std::equal(d.begin(), d.end(), out.d.begin()) &&
                           out.fired.marks == dcif_forward(h, d, spec.dcif).marks;
    report(worst < kScaleTol && identical, "scaling-contract",
           fmt("max |sum(d') - (U-1)| = %.2e over 1000 DifferNet outputs; ", worst) +
               (identical ? "inference d bit-identical" : "inference d differs"));
}

void gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    int rejected = 0;
    const auto focal = tiny::first_clean_check(50.0, 0.0, true, &rejected);
    const auto quantity = tiny::first_clean_check(0.0, 1.0, true, &rejected);
    const double secs = seconds_since(t0);
    const bool ok = focal && quantity && focal->max_rel_error < kGradTol && quantity->max_rel_error < kGradTol &&
                    secs < 60.0;
    report(ok, "gradient-suite",
           fmt("lambda1-only max rel err %.2e, lambda2-only %.2e over %g parameters; %g windows rejected",
               focal ? focal->max_rel_error : -1.0, quantity ? quantity->max_rel_error : -1.0,
               focal ? static_cast<double>(focal->checked) : 0.0, rejected) +
               fmt(" (%.1f s)", secs));
}

void loss_values() {
    Vector p(2);
    p << 0.9, 0.1;
    Vector y(2);
    y << 1, 0;
    const double v = mlfl(p, y, 0.25, 2.0);
    const double direct = oracle::mlfl({0.9, 0.1}, {1, 0}, 0.25, 2.0);

    auto q = [](std::initializer_list<double> d, int u) {
        Vector v(static_cast<Eigen::Index>(d.size()));
        Eigen::Index i = 0;
        for (double x : d) v(i++) = x;
        return quantity_loss(v, u);
    };
    const bool quantity_ok = q({0.5, 0.5}, 2) == 0.0 && q({0.3, 0.3}, 2) == std::abs(1.0 - (0.3 + 0.3)) &&
                             q({0.2}, 1) == 0.2;
    report(std::abs(v - 5.268e-4) < kMlflTol && std::abs(v - direct) < 1e-15 && quantity_ok, "loss-values",
           fmt("MLFL %.7e (direct %.7e); quantity [0.5,0.5]/2=%g [0.3,0.3]/2=%g", v, direct, q({0.5, 0.5}, 2),
               q({0.3, 0.3}, 2)) +
               fmt(" [0.2]/1=%g", q({0.2}, 1)));
}

void metric_oracle() {
    SegmentLabels ab;
    ab.segments = {{0.0, 5.0, "A"}, {5.0, 10.0, "B"}};
    const MetricReport exact = purity_coverage(ab, {{5.0}}, 0.0, 10.0);
    const MetricReport none = purity_coverage(ab, {}, 0.0, 10.0);
    const MetricReport off = purity_coverage(ab, {{3.0}}, 0.0, 10.0);
    const bool worked = std::abs(exact.purity - 100) < kMetricTol && std::abs(exact.coverage - 100) < kMetricTol &&
                        std::abs(none.purity - 50) < kMetricTol && std::abs(none.coverage - 100) < kMetricTol &&
                        std::abs(off.purity - 80) < kMetricTol && std::abs(off.coverage - 80) < kMetricTol;

    Rng rng(104);
    std::uniform_int_distribution<int> nseg(1, 6);
    std::uniform_int_distribution<int> ncut(0, 6);
    std::uniform_int_distribution<int> spk(0, 2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        SegmentLabels ref;
        std::vector<oracle::Seg> oref;
        const int n = nseg(rng);
        for (int s = 0; s < n; ++s) {
            double a = u(rng);
            double b = u(rng);
            if (a > b) std::swap(a, b);
            if (b - a < 1e-3) b = a + 0.5;
            const std::string name = "s" + std::to_string(spk(rng));
            ref.segments.push_back({a, b, name});
            oref.push_back({a, b, name});
        }
        std::vector<double> cuts;
        const int k = ncut(rng);
        for (int c = 0; c < k; ++c) cuts.push_back(u(rng));
        std::sort(cuts.begin(), cuts.end());
        const MetricReport r = purity_coverage(ref, {cuts}, 0.0, 10.0);
        const oracle::Metric m = oracle::purity_coverage(oref, cuts, 0.0, 10.0);
        worst = std::max({worst, std::abs(r.purity - m.purity), std::abs(r.coverage - m.coverage)});
    }
    report(worked && worst <= kMetricTol, "metric-oracle",
           fmt("worked examples %g/%g, %g/%g, ", exact.purity, exact.coverage, none.coverage, none.purity) +
               fmt("%g/%g; 500 random instances max |diff| %.2e", off.purity, off.coverage, worst));
}

struct DeskRun {
    TrainResult result;
    double seconds = 0.0;
};

DeskRun run_desk(const RunConfig& cfg, const std::vector<Session>& train_set, const std::vector<Session>& dev,
                 bool baseline) {
    const auto t0 = std::chrono::steady_clock::now();
    DeskRun r{baseline ? train_frame_baseline(train_set, dev, cfg) : train(train_set, dev, cfg), 0.0};
    r.seconds = seconds_since(t0);
    return r;
}

double aligned_fraction(const TrainStats& s) {
    return s.windows ? 1.0 - static_cast<double>(s.misaligned_windows) / s.windows : 0.0;
}

void end_to_end(const RunConfig& cfg, const std::vector<Session>& train_set, const std::vector<Session>& dev) {
    double minutes = 0.0;
    for (const auto& s : train_set) minutes += s.features.duration_s() / 60.0;
    const DeskRun seq = run_desk(cfg, train_set, dev, false);
    const DeskRun base = run_desk(cfg, train_set, dev, true);
    const double seq_hn = seq.result.stats.final_dev ? seq.result.stats.final_dev->hn : 0.0;
    const double base_hn = base.result.stats.final_dev ? base.result.stats.final_dev->hn : 0.0;
    const double total = seq.seconds + base.seconds;
    const TrainStats& st = seq.result.stats;
    report(total < kDeskBudgetS && seq_hn >= kSeqScdMinHn && base_hn >= kBaselineMinHn, "end-to-end",
           fmt("%.0f min train corpus; seqscd dev Hn %.2f (need %.0f), baseline dev Hn %.2f", minutes, seq_hn,
               kSeqScdMinHn, base_hn) +
               fmt(" (need %.0f); %.0f s total (budget %.0f s); ", kBaselineMinHn, total, kDeskBudgetS) +
               fmt("aligned batches %.3f, aligned windows %.3f", st.batches ? double(st.aligned_batches) / st.batches : 0,
                   aligned_fraction(st)));
}

void ablations(const RunConfig& base_cfg, const std::vector<Session>& train_set, const std::vector<Session>& dev) {
    bool ok = true;
    std::ostringstream detail;
    for (const char* name : {"length_norm", "scaling", "focal"}) {
        RunConfig cfg = base_cfg;
        apply_ablation(cfg, name);
        try {
            const DeskRun r = run_desk(cfg, train_set, dev, false);
            const auto& rep = r.result.stats.final_dev;
            const bool finite = rep && std::isfinite(rep->hn) && rep->hn >= 0.0 && rep->hn <= 100.0;
            ok = ok && finite;
            detail << "w/o " << name << " Hn " << fmt("%.2f", finite ? rep->hn : -1.0) << " aligned windows "
                   << fmt("%.3f", aligned_fraction(r.result.stats));
            if (std::string(name) == "scaling") {
                // Unscaled windows keep their own fire count; only the quantity
                // term acts on the misaligned ones.
                ok = ok && r.result.stats.misaligned_windows > 0;
                RunConfig strict = cfg;
                strict.head.lambda2 = 0.0;
                strict.train.total_steps = 1;
                bool raised = false;
                try {
                    train(train_set, {}, strict);
                } catch (const AlignmentError&) {
                    raised = true;
                }
                ok = ok && raised;
                detail << (raised ? ", lambda2=0 raises alignment error" : ", lambda2=0 did NOT raise");
            }
            detail << "; ";
        } catch (const std::exception& e) {
            ok = false;
            detail << "w/o " << name << " failed: " << e.what() << "; ";
        }
    }
    report(ok, "ablation-harness", detail.str());
}

void schedule() {
    bool exact = true;
    for (long total : {20L, 1000L, 1120L, 4000L}) {
        exact = exact && lr_schedule(0, total, 1e-4) == 0.0 && lr_schedule(total / 20, total, 1e-4) == 1e-4 &&
                lr_schedule(total * 11 / 20, total, 1e-4) == 1e-4 && lr_schedule(total, total, 1e-4) == 0.0;
    }
    report(exact, "schedule", fmt("lr(0)=%g lr(5%%)=%g lr(55%%)=%g lr(total)=%g at total 1000", lr_schedule(0, 1000, 1e-4),
                                  lr_schedule(50, 1000, 1e-4), lr_schedule(550, 1000, 1e-4),
                                  lr_schedule(1000, 1000, 1e-4)));
}

}  // namespace

int main() {
    published_numbers();
    dcif_oracle();
    mass_conservation();
    scaling_contract();
    gradient_suite();
    loss_values();
    metric_oracle();

    const RunConfig cfg = default_config();
    const auto train_set = synthesize_split(cfg, false);
    const auto dev = synthesize_split(cfg, true);
    end_to_end(cfg, train_set, dev);
    ablations(cfg, train_set, dev);
    schedule();

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
