// seqscd: synthesize data, train, evaluate and trace the sequence-level
// speaker change detector.

#include "scd/checkpoint.hpp"
#include "scd/config.hpp"
#include "scd/dcif.hpp"
#include "scd/inference.hpp"
#include "scd/model.hpp"
#include "scd/synthdata.hpp"
#include "scd/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace scd;

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::string train_dir;
    std::string dev_dir;
    std::string data_dir;
    std::string checkpoint;
    std::string resume;
    std::string features;
    std::vector<std::string> ablations;
    std::optional<std::uint64_t> seed;
    std::optional<double> theta;
    std::string h_values;
    std::string d_values;
    double beta = 1.0;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg = o.config_path.empty() ? default_config() : load_config(o.config_path);
    if (o.seed) {
        cfg.train.seed = *o.seed;
        cfg.data.synth.rng_seed = *o.seed;
    }
    for (const auto& a : o.ablations) apply_ablation(cfg, a);
    if (o.theta) cfg.infer.theta = *o.theta;
    if (!o.train_dir.empty()) cfg.data.train_dir = o.train_dir;
    if (!o.dev_dir.empty()) cfg.data.dev_dir = o.dev_dir;
    validate(cfg);
    return cfg;
}

void make_out_dir(const std::string& dir) {
    if (dir.empty()) throw ArgumentError("--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ArgumentError("cannot create output directory " + dir);
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ScdError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json report_json(const MetricReport& r) {
    return {{"theta", r.theta},
            {"purity", r.purity},
            {"coverage", r.coverage},
            {"hn", r.hn},
            {"num_hypothesized_changes", r.num_hypothesized_changes},
            {"num_reference_changes", r.num_reference_changes}};
}

void print_report(const std::string& tag, const MetricReport& r) {
    std::cout << std::fixed << std::setprecision(2) << tag << ": theta=" << r.theta << " purity=" << r.purity
              << " coverage=" << r.coverage << " hn=" << r.hn << " hyp=" << r.num_hypothesized_changes
              << " ref=" << r.num_reference_changes << '\n';
    std::cout.unsetf(std::ios::floatfield);
}

// Sessions for one split: a directory when configured, synthesized otherwise.
std::vector<Session> sessions_for(const RunConfig& cfg, const std::string& dir, bool dev) {
    if (!dir.empty()) return load_session_dir(dir);
    return synthesize_split(cfg, dev);
}

int cmd_synth(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    make_out_dir(o.out_dir);
    const fs::path train_dir = fs::path(o.out_dir) / "train";
    const fs::path dev_dir = fs::path(o.out_dir) / "dev";
    fs::create_directories(train_dir);
    fs::create_directories(dev_dir);
    double seconds = 0.0;
    const auto train_set = synthesize_split(cfg, false);
    const auto dev = synthesize_split(cfg, true);
    for (const auto& s : train_set) {
        store_session(s, train_dir.string());
        seconds += s.features.duration_s();
    }
    for (const auto& s : dev) {
        store_session(s, dev_dir.string());
        seconds += s.features.duration_s();
    }
    write_json(config_to_json(cfg), fs::path(o.out_dir) / "config.json");
    const auto names = catalog_of(train_set).names();
    std::cout << "speakers: " << names.size();
    if (!names.empty()) std::cout << " (" << names.front() << ".." << names.back() << ")";
    std::cout << "\n"
              << "sessions: " << cfg.data.num_train_sessions << " train, " << cfg.data.num_dev_sessions << " dev, "
              << seconds / 60.0 << " min total\n";
    return 0;
}

int cmd_train(const Options& o, bool baseline) {
    const RunConfig cfg = resolve_config(o);
    make_out_dir(o.out_dir);
    const auto train_set = sessions_for(cfg, cfg.data.train_dir, false);
    const auto dev = sessions_for(cfg, cfg.data.dev_dir, true);

    std::ofstream log(fs::path(o.out_dir) / "train_log.csv", o.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw ScdError("cannot write training log");
    if (o.resume.empty()) write_log_header(log);

    std::optional<Checkpoint> resume;
    TrainHooks hooks;
    if (!o.resume.empty()) {
        resume = load_checkpoint(o.resume);
        hooks.resume = &*resume;
    }
    hooks.on_log = [&log](const TrainLogRow& row) {
        write_log_row(log, row);
        log.flush();
        std::cerr << "step " << row.step << " lr " << row.lr << " loss " << row.loss << '\n';
    };
    const fs::path diverged = fs::path(o.out_dir) / "diverged.ckpt";
    hooks.on_divergence = [&diverged](const Checkpoint& c) { save_checkpoint(c, diverged.string()); };

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result = baseline ? train_frame_baseline(train_set, dev, cfg, hooks) : train(train_set, dev, cfg, hooks);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (result.stats.final_dev) result.checkpoint.config["infer"]["theta"] = result.stats.final_dev->theta;
    const fs::path ckpt = fs::path(o.out_dir) / (baseline ? "baseline.ckpt" : "model.ckpt");
    save_checkpoint(result.checkpoint, ckpt.string());

    nlohmann::json summary = {{"kind", result.checkpoint.kind},
                              {"steps", result.checkpoint.step},
                              {"seconds", secs},
                              {"windows", result.stats.windows},
                              {"misaligned_windows", result.stats.misaligned_windows},
                              {"degenerate_windows", result.stats.degenerate_windows},
                              {"aligned_batch_fraction",
                               result.stats.batches ? double(result.stats.aligned_batches) / result.stats.batches : 0.0},
                              {"ablations", o.ablations}};
    if (result.stats.final_dev) {
        summary["dev"] = report_json(*result.stats.final_dev);
        print_report("dev", *result.stats.final_dev);
    }
    write_json(summary, fs::path(o.out_dir) / (baseline ? "baseline_summary.json" : "train_summary.json"));
    std::cout << "checkpoint: " << ckpt.string() << " (" << secs << " s)\n";
    return 0;
}

struct LoadedModel {
    Checkpoint ckpt;
    RunConfig cfg;
    ModelSpec spec;
    std::optional<SeqScdParams> seq;
    std::optional<BaselineParams> base;
    std::unique_ptr<FrameScorer> scorer;
};

std::unique_ptr<LoadedModel> load_model(const Options& o) {
    if (o.checkpoint.empty()) throw ArgumentError("--checkpoint is required");
    if (!fs::exists(o.checkpoint)) throw ArgumentError("checkpoint not found: " + o.checkpoint);
    auto m = std::make_unique<LoadedModel>();
    m->ckpt = load_checkpoint(o.checkpoint);
    m->cfg = checkpoint_config(m->ckpt);
    if (!o.config_path.empty()) m->cfg.infer = load_config(o.config_path).infer;
    if (o.theta) m->cfg.infer.theta = *o.theta;
    m->spec = checkpoint_spec(m->ckpt);
    if (m->ckpt.kind == "seqscd") {
        m->seq = load_seqscd_params(m->ckpt, m->spec);
        m->scorer = std::make_unique<SeqScdScorer>(m->spec, *m->seq, m->cfg.infer.score_source);
    } else {
        m->base = load_baseline_params(m->ckpt, m->spec);
        m->scorer = std::make_unique<BaselineScorer>(m->spec, *m->base);
    }
    return m;
}

std::vector<ScoredSession> score_all(const LoadedModel& m, const std::vector<Session>& sessions) {
    const double window = m.cfg.infer.window_s > 0.0 ? m.cfg.infer.window_s : m.cfg.train.window_s;
    std::vector<ScoredSession> out;
    for (const auto& s : sessions) {
        if (s.features.dim() != m.spec.input_dim)
            throw ConfigError("session " + s.features.source_id + " has feature dim " +
                              std::to_string(s.features.dim()) + ", model expects " +
                              std::to_string(m.spec.input_dim));
        out.push_back({score_session(*m.scorer, s.features, window, m.cfg.infer.overlap_frac),
                       s.features.frame_shift_s, &s.labels, s.features.duration_s()});
    }
    return out;
}

int cmd_eval(const Options& o) {
    const auto m = load_model(o);
    if (o.data_dir.empty()) throw ArgumentError("--data is required");
    make_out_dir(o.out_dir);
    const auto sessions = load_session_dir(o.data_dir);
    const auto scored = score_all(*m, sessions);
    std::vector<MetricReport> per;
    const MetricReport total = evaluate_at(scored, m->cfg.infer.theta, &per);

    std::ofstream out(fs::path(o.out_dir) / "results.jsonl");
    if (!out) throw ScdError("cannot write results");
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        nlohmann::json rec = report_json(per[i]);
        rec["session"] = sessions[i].features.source_id;
        rec["change_times_s"] = peak_pick(scored[i].scores, m->cfg.infer.theta, scored[i].frame_shift_s).times_s;
        out << rec.dump() << '\n';
    }
    write_json(report_json(total), fs::path(o.out_dir) / "aggregate.json");
    print_report("aggregate", total);
    return 0;
}

int cmd_tune(const Options& o) {
    const auto m = load_model(o);
    if (o.data_dir.empty()) throw ArgumentError("--data is required");
    make_out_dir(o.out_dir);
    const auto sessions = load_session_dir(o.data_dir);
    const auto grid = m->cfg.infer.theta_grid.empty() ? default_theta_grid() : m->cfg.infer.theta_grid;
    const TuneResult r = tune_threshold(score_all(*m, sessions), grid);
    nlohmann::json j = {{"theta", r.theta}, {"best", report_json(r.report)}, {"curve", nlohmann::json::array()}};
    for (const auto& c : r.curve) j["curve"].push_back(report_json(c));
    write_json(j, fs::path(o.out_dir) / "tune.json");
    print_report("best", r.report);
    return 0;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ArgumentError("not a number: '" + item + "'");
        }
    }
    return out;
}

int cmd_trace(const Options& o) {
    make_out_dir(o.out_dir);
    Matrix h;
    Vector d;
    DcifConfig dcif;
    if (!o.d_values.empty()) {
        // Hand input: one scalar feature per encoded frame.
        const auto hv = parse_values(o.h_values);
        const auto dv = parse_values(o.d_values);
        if (hv.size() != dv.size() || hv.empty()) throw ArgumentError("--frames and --scores need the same nonzero length");
        h = Eigen::Map<const Vector>(hv.data(), static_cast<Eigen::Index>(hv.size()));
        d = Eigen::Map<const Vector>(dv.data(), static_cast<Eigen::Index>(dv.size()));
        dcif.beta = o.beta;
        if (!(dcif.beta > 0.0)) throw ArgumentError("--beta must be positive");
    } else {
        const auto m = load_model(o);
        if (!m->seq) throw ArgumentError("trace needs a sequence-level checkpoint");
        if (o.features.empty()) throw ArgumentError("--features is required with --checkpoint");
        const FeatureSequence f = load_features(o.features);
        if (f.dim() != m->spec.input_dim) throw ConfigError("feature dim does not match the checkpoint");
        const SeqScdOutput out = seqscd_forward(m->spec, *m->seq, f.frames);
        h = out.encoded;
        d = out.d;
        dcif = m->spec.dcif;
    }
    const FiredOutput fired = dcif_forward(h, d, dcif);
    const fs::path path = fs::path(o.out_dir) / "trace.csv";
    std::ofstream out(path);
    if (!out) throw ScdError("cannot write " + path.string());
    out << std::setprecision(17) << "t,d_prime,d_acc,fired,d_t1,d_t2\n";
    for (std::size_t t = 0; t < fired.trace.size(); ++t) {
        const DcifStep& s = fired.trace[t];
        out << t << ',' << s.d_prime << ',' << s.d_acc << ',' << (s.fired ? 1 : 0) << ',' << s.d_t1 << ',' << s.d_t2
            << '\n';
    }
    std::cout << "trace: " << path.string() << " (" << fired.trace.size() << " frames, " << fired.fired_count()
              << " fires)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequence-level speaker change detection"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* c) {
        c->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
        c->add_option("--out", o.out_dir, "Output directory")->required();
    };
    auto add_train_flags = [&o](CLI::App* c) {
        c->add_option("--train-dir", o.train_dir, "Training sessions (*.feat + *.lab)");
        c->add_option("--dev-dir", o.dev_dir, "Development sessions");
        c->add_option("--resume", o.resume, "Continue from a checkpoint");
        c->add_option("--seed", o.seed, "Override the training and synthesis seed");
        c->add_option("--ablate", o.ablations, "length_norm, scaling or focal (repeatable)");
    };

    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
    add_common(synth);
    synth->add_option("--seed", o.seed, "Override the synthesis seed");

    auto* train = app.add_subcommand("train", "Train the sequence-level model");
    add_common(train);
    add_train_flags(train);

    auto* baseline = app.add_subcommand("train-baseline", "Train the frame-level baseline");
    add_common(baseline);
    add_train_flags(baseline);

    for (auto* c : {app.add_subcommand("eval", "Score sessions and report metrics"),
                    app.add_subcommand("tune", "Tune the peak threshold on a dev set")}) {
        add_common(c);
        c->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
        c->add_option("--data", o.data_dir, "Session directory")->required();
        c->add_option("--theta", o.theta, "Peak threshold")->check(CLI::Range(0.0, 1.0));
    }

    auto* trace = app.add_subcommand("trace", "Dump DCIF internals as CSV");
    add_common(trace);
    trace->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
    trace->add_option("--features", o.features, "Feature file to run through the model");
    trace->add_option("--frames", o.h_values, "Comma separated scalar frames");
    trace->add_option("--scores", o.d_values, "Comma separated difference scores");
    trace->add_option("--beta", o.beta, "Firing threshold for --frames/--scores input");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*train) return cmd_train(o, false);
        if (*baseline) return cmd_train(o, true);
        if (app.got_subcommand("eval")) return cmd_eval(o);
        if (app.got_subcommand("tune")) return cmd_tune(o);
        if (*trace) return cmd_trace(o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
