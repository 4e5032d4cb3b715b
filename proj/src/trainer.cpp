#include "scd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <thread>

namespace scd {

namespace fs = std::filesystem;

double lr_schedule(long step, long total, double peak, double warmup_frac, double hold_frac) {
    if (total < 1) throw ArgumentError("lr_schedule: total must be >= 1");
    if (step < 0 || step > total) throw ArgumentError("lr_schedule: step outside [0, total]");
    const double s = static_cast<double>(step);
    const double n = static_cast<double>(total);
    const double warm_end = warmup_frac * n;
    const double hold_end = (warmup_frac + hold_frac) * n;
    if (s <= warm_end) return warm_end > 0.0 ? peak * s / warm_end : peak;
    if (s <= hold_end) return peak;
    return peak * (n - s) / (n - hold_end);
}

Adam::Adam(const TensorList& params) {
    for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
}

void Adam::step(const TensorList& params, const TensorList& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = *grads[i].value;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        *params[i].value -= (lr / c1) * (m_[i].array() / ((v_[i].array() / c2).sqrt() + eps_)).matrix();
    }
}

TensorList Adam::state(const TensorList& params) {
    TensorList out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.push_back({"adam.m." + params[i].name, &m_[i]});
        out.push_back({"adam.v." + params[i].name, &v_[i]});
    }
    return out;
}

std::vector<Session> load_session_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ArgumentError("not a directory: " + dir);
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".feat") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    std::vector<Session> out;
    for (const auto& id : ids) {
        const fs::path base = fs::path(dir) / id;
        const fs::path lab = fs::path(base).replace_extension(".lab");
        if (!fs::exists(lab)) throw ArgumentError("missing label file for session " + id + " in " + dir);
        out.push_back({load_features(fs::path(base).replace_extension(".feat").string()), load_labels(lab.string())});
    }
    if (out.empty()) throw ArgumentError("no sessions (*.feat + *.lab) found in " + dir);
    return out;
}

void store_session(const Session& s, const std::string& dir) {
    const fs::path base = fs::path(dir) / s.features.source_id;
    store_features(s.features, fs::path(base).replace_extension(".feat").string());
    store_labels(s.labels, fs::path(base).replace_extension(".lab").string());
}

std::vector<Session> synthesize_split(const RunConfig& cfg, bool dev) {
    const int first = dev ? cfg.data.num_train_sessions : 0;
    const int count = dev ? cfg.data.num_dev_sessions : cfg.data.num_train_sessions;
    std::vector<Session> out;
    for (int i = 0; i < count; ++i) out.push_back(generate_session(cfg.data.synth, first + i));
    return out;
}

SpeakerCatalog catalog_of(const std::vector<Session>& sessions) {
    SegmentLabels all;
    for (const auto& s : sessions) all.segments.insert(all.segments.end(), s.labels.segments.begin(), s.labels.segments.end());
    return SpeakerCatalog(all.speakers());
}

long resolve_total_steps(const RunConfig& cfg, const std::vector<Session>& train) {
    if (cfg.train.total_steps > 0) return cfg.train.total_steps;
    double seconds = 0.0;
    for (const auto& s : train) seconds += s.features.duration_s();
    const long per_epoch =
        std::max(1L, static_cast<long>(std::lround(seconds / (cfg.train.window_s * cfg.train.batch_size))));
    return per_epoch * cfg.train.epochs;
}

void write_log_header(std::ostream& out) { out << "step,lr,loss,mlfl,quantity,dev_purity,dev_coverage,dev_hn\n"; }

void write_log_row(std::ostream& out, const TrainLogRow& row) {
    auto opt = [&out](const std::optional<double>& v) {
        if (v) out << *v;
    };
    out << std::setprecision(10) << row.step << ',' << row.lr << ',' << row.loss << ',';
    opt(row.mlfl);
    out << ',';
    opt(row.quantity);
    out << ',';
    if (row.dev) out << row.dev->purity << ',' << row.dev->coverage << ',' << row.dev->hn;
    else out << ",,";
    out << '\n';
}

namespace {

struct WindowStats {
    double loss = 0.0;
    double mlfl = 0.0;
    double quantity = 0.0;
    bool aligned = true;
    bool degenerate = false;
};

void check_sessions(const std::vector<Session>& sessions, int dim, double shift) {
    for (const auto& s : sessions) {
        if (s.features.dim() != dim) throw ConfigError("session " + s.features.source_id + " has a different feature dim");
        if (std::abs(s.features.frame_shift_s - shift) > 1e-12)
            throw ConfigError("session " + s.features.source_id + " has a different frame shift");
    }
}

std::string rng_to_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_string(Rng& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) throw ArgumentError("corrupt RNG state in checkpoint");
}

void add_into(const TensorList& acc, const TensorList& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) *acc[i].value += *g[i].value;
}

// Shared optimization loop for the sequence-level model and the frame baseline.
template <typename Params, typename WindowFn, typename ScorerFn>
TrainResult run_training(const std::string& kind, const std::vector<Session>& train_set,
                         const std::vector<Session>& dev, const RunConfig& cfg, const TrainHooks& hooks,
                         WindowFn window_fn, ScorerFn make_scorer,
                         Params (*init_fn)(const ModelSpec&, Rng&)) {
    validate(cfg);
    if (train_set.empty()) throw ArgumentError("training set is empty");
    const int dim = train_set.front().features.dim();
    const double shift = train_set.front().features.frame_shift_s;
    check_sessions(train_set, dim, shift);
    check_sessions(dev, dim, shift);
    const SpeakerCatalog catalog = catalog_of(train_set);
    const ModelSpec spec = resolve_spec(cfg, dim, shift, catalog.size());
    const long total = resolve_total_steps(cfg, train_set);

    Rng init_rng(cfg.train.seed);
    Params params = init_fn(spec, init_rng);
    TensorList plist = tensors(params);
    Adam adam(plist);
    Rng data_rng(cfg.train.seed * 0x9E3779B97F4A7C15ULL + 1);
    long start = 0;
    if (hooks.resume) {
        const Checkpoint& r = *hooks.resume;
        if (r.kind != kind) throw ArgumentError("cannot resume a '" + r.kind + "' checkpoint as '" + kind + "'");
        restore_tensors(r, plist);
        restore_tensors(r, adam.state(plist));
        adam.set_steps(r.optimizer_steps);
        rng_from_string(data_rng, r.rng_state);
        start = r.step;
        if (start > total) throw ArgumentError("checkpoint step exceeds total_steps");
    }

    auto make_checkpoint = [&](long step) {
        Checkpoint c;
        c.kind = kind;
        c.config = config_to_json(cfg);
        c.model = spec_to_json(spec);
        c.catalog = catalog.names();
        c.step = step;
        c.total_steps = total;
        c.optimizer_steps = adam.steps();
        c.rng_state = rng_to_string(data_rng);
        for (const auto& t : plist) c.tensors.emplace_back(t.name, *t.value);
        for (const auto& t : adam.state(plist)) c.tensors.emplace_back(t.name, *t.value);
        return c;
    };

    auto dev_report = [&]() -> std::optional<MetricReport> {
        if (dev.empty()) return std::nullopt;
        const auto scorer = make_scorer(spec, params);
        const double window = cfg.infer.window_s > 0.0 ? cfg.infer.window_s : cfg.train.window_s;
        const auto grid = cfg.infer.theta_grid.empty() ? default_theta_grid() : cfg.infer.theta_grid;
        return tune_threshold(*scorer, dev, window, cfg.infer.overlap_frac, grid).report;
    };

    TrainStats stats;
    const int batch = cfg.train.batch_size;
    const int threads = std::min(cfg.train.threads, batch);
    const std::pair<double, double> snr{cfg.data.snr_db_min, cfg.data.snr_db_max};
    std::vector<TrainingExample> examples(batch);
    std::vector<Params> window_grads(batch, zeros_like(params));
    std::vector<WindowStats> window_stats(batch);

    for (long step = start + 1; step <= total; ++step) {
        const double lr = lr_schedule(step, total, cfg.train.peak_lr, cfg.train.warmup_frac, cfg.train.hold_frac);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(train_set.size()) - 1);
        for (int b = 0; b < batch; ++b) {
            const Session& s = train_set[pick(data_rng)];
            examples[b] = sample_training_window(s.features, s.labels, catalog, cfg.train.window_s, data_rng);
            if (cfg.data.augment) examples[b].features = add_noise(examples[b].features, snr, data_rng);
        }

        std::vector<std::exception_ptr> errors(threads);
        auto work = [&](int worker) {
            try {
                for (int b = worker; b < batch; b += threads) {
                    window_grads[b] = zeros_like(params);
                    window_stats[b] = window_fn(spec, params, examples[b], &window_grads[b]);
                }
            } catch (...) {
                errors[worker] = std::current_exception();
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
            for (auto& t : pool) t.join();
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }

        Params grad_sum = zeros_like(params);
        const TensorList acc = tensors(grad_sum);
        WindowStats mean;
        bool all_aligned = true;
        for (int b = 0; b < batch; ++b) {
            add_into(acc, tensors(window_grads[b]));
            mean.loss += window_stats[b].loss / batch;
            mean.mlfl += window_stats[b].mlfl / batch;
            mean.quantity += window_stats[b].quantity / batch;
            stats.misaligned_windows += window_stats[b].aligned ? 0 : 1;
            stats.degenerate_windows += window_stats[b].degenerate ? 1 : 0;
            all_aligned = all_aligned && window_stats[b].aligned;
        }
        stats.windows += batch;
        stats.batches += 1;
        stats.aligned_batches += all_aligned ? 1 : 0;
        stats.loss_curve.push_back(mean.loss);

        if (!std::isfinite(mean.loss)) {
            if (hooks.on_divergence) hooks.on_divergence(make_checkpoint(step - 1));
            throw NumericalError("training diverged: non-finite loss", static_cast<int>(step));
        }
        for (const auto& g : acc) *g.value /= static_cast<double>(batch);
        adam.step(plist, acc, lr);

        const bool dev_now = cfg.train.dev_every > 0 && step % cfg.train.dev_every == 0;
        if (hooks.on_log && (step % std::max(1L, hooks.log_every) == 0 || dev_now || step == total)) {
            TrainLogRow row{step, lr, mean.loss, std::nullopt, std::nullopt, std::nullopt};
            if (kind == "seqscd") {
                row.mlfl = mean.mlfl;
                row.quantity = mean.quantity;
            }
            if (step == total) {
                stats.final_dev = dev_report();
                row.dev = stats.final_dev;
            } else if (dev_now) {
                row.dev = dev_report();
            }
            hooks.on_log(row);
        }
    }

    if (!stats.final_dev) stats.final_dev = dev_report();
    return {make_checkpoint(total), stats};
}

}  // namespace

TrainResult train(const std::vector<Session>& train_set, const std::vector<Session>& dev, const RunConfig& cfg,
                  const TrainHooks& hooks) {
    const bool scaling = cfg.train.use_scaling;
    auto window_fn = [scaling](const ModelSpec& spec, const SeqScdParams& p, const TrainingExample& ex,
                               SeqScdParams* g) {
        const WindowOutcome o = seqscd_window(spec, p, ex, scaling, g);
        return WindowStats{o.loss.total, o.loss.mlfl, o.loss.quantity, o.aligned, o.degenerate};
    };
    const ScoreSource source = cfg.infer.score_source;
    auto make_scorer = [source](const ModelSpec& spec, const SeqScdParams& p) {
        return std::make_unique<SeqScdScorer>(spec, p, source);
    };
    return run_training<SeqScdParams>("seqscd", train_set, dev, cfg, hooks, window_fn, make_scorer, &init_seqscd);
}

TrainResult train_frame_baseline(const std::vector<Session>& train_set, const std::vector<Session>& dev,
                                 const RunConfig& cfg, const TrainHooks& hooks) {
    const double collar = cfg.train.baseline_collar_s;
    auto window_fn = [collar](const ModelSpec& spec, const BaselineParams& p, const TrainingExample& ex,
                              BaselineParams* g) {
        const double loss = baseline_window(spec, p, ex, collar, g);
        return WindowStats{loss, 0.0, 0.0, true, false};
    };
    auto make_scorer = [](const ModelSpec& spec, const BaselineParams& p) {
        return std::make_unique<BaselineScorer>(spec, p);
    };
    return run_training<BaselineParams>("baseline", train_set, dev, cfg, hooks, window_fn, make_scorer,
                                        &init_baseline);
}

namespace {

struct Pattern {
    std::vector<int> marks;
    std::vector<int> clamp;  // -1 below 0, 0 inside, 1 above 1
    std::vector<bool> active;  // DifferNet hidden units past the ReLU hinge
    bool operator==(const Pattern&) const = default;
};

Pattern pattern_of(const ModelSpec& spec, const SeqScdParams& params, const TrainingExample& ex, bool use_scaling,
                   double eps, bool check_margins) {
    const Matrix h = encode(ex.features.frames, spec.encoder, params.encoder).frames;
    DifferNetTape tape;
    const Vector d = difference_scores(h, spec.differnet, params.differnet, &tape);
    const int u = ex.identity.num_segments();
    Vector d_prime = d;
    if (use_scaling) {
        try {
            d_prime = scale_scores(d, u, kScaleSlack * (u - 1)).scaled;
        } catch (const DegenerateError&) {
            throw RejectedExample("grad_check: all difference scores are clamped to zero");
        }
    }
    const FiredOutput fired = dcif_forward(h, d_prime, spec.dcif);

    Pattern p;
    p.marks = fired.marks;
    for (Eigen::Index t = 0; t < tape.raw.size(); ++t) {
        const double o2 = tape.raw(t);
        p.clamp.push_back(o2 <= 0.0 ? -1 : (o2 >= 1.0 ? 1 : 0));
        if (check_margins && (std::abs(o2) < 10.0 * eps || std::abs(o2 - 1.0) < 10.0 * eps))
            throw RejectedExample("grad_check: difference score at frame " + std::to_string(t) +
                                  " is within 10*eps of a clamp boundary");
    }
    if (check_margins) {
        // The fire forced by scaling (cumulative mass U - 1) sits at beta + slack
        // by construction and is stable under perturbation, so it is exempt.
        int fires = 0;
        double acc = 0.0;
        for (int t = 0; t < static_cast<int>(fired.trace.size()); ++t) {
            const double pre = acc + fired.trace[t].d_prime;
            const bool forced = use_scaling && fired.trace[t].fired && fires + 1 == u - 1;
            if (!forced && std::abs(pre - spec.dcif.beta) < 10.0 * eps)
                throw RejectedExample("grad_check: accumulator at frame " + std::to_string(t) +
                                      " is within 10*eps of the fire threshold");
            if (fired.trace[t].fired) ++fires;
            acc = fired.trace[t].d_acc;
        }
    }
    for (Eigen::Index k = 0; k < tape.pre.size(); ++k) {
        const double z = tape.pre.data()[k];
        p.active.push_back(z > 0.0);
        if (check_margins && std::abs(z) < 10.0 * eps)
            throw RejectedExample("grad_check: a DifferNet hidden unit sits within 10*eps of its hinge");
    }
    return p;
}

}  // namespace

GradCheckReport grad_check(const ModelSpec& spec, SeqScdParams params, const TrainingExample& example, double eps,
                           bool use_scaling) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) throw ArgumentError("grad_check: eps must lie in [1e-7, 1e-4]");
    const Pattern base = pattern_of(spec, params, example, use_scaling, eps, true);

    SeqScdParams grads = zeros_like(params);
    GradCheckReport report;
    report.loss = seqscd_window(spec, params, example, use_scaling, &grads).loss.total;

    // Entries below the loss's own rounding scale carry no signal.
    const double floor = 1e-6 * std::max(1.0, std::abs(report.loss));
    TensorList plist = tensors(params);
    const TensorList glist = tensors(grads);
    for (std::size_t i = 0; i < plist.size(); ++i) {
        Matrix& w = *plist[i].value;
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            const double orig = w.data()[k];
            // Fourth-order central stencil: f(+-eps) and f(+-2 eps).
            auto loss_at = [&](double offset) {
                w.data()[k] = orig + offset;
                if (!(pattern_of(spec, params, example, use_scaling, eps, false) == base))
                    throw RejectedExample("grad_check: perturbing " + plist[i].name +
                                          " flips a fire, clamp or hinge decision");
                return seqscd_window(spec, params, example, use_scaling, nullptr).loss.total;
            };
            const double near = loss_at(eps) - loss_at(-eps);
            const double far = loss_at(2.0 * eps) - loss_at(-2.0 * eps);
            w.data()[k] = orig;

            const double numeric = (8.0 * near - far) / (12.0 * eps);
            const double analytic = glist[i].value->data()[k];
            const double abs_err = std::abs(analytic - numeric);
            const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
            ++report.checked;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = plist[i].name + "[" + std::to_string(k) + "]";
            }
        }
    }
    return report;
}

}  // namespace scd
