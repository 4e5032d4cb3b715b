#include "scd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace scd {

using nlohmann::json;

namespace {

// Reads typed keys from one config section and rejects anything it did not read.
class SectionReader {
public:
    SectionReader(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) return;
        node_ = &root.at(name);
        if (!node_->is_object()) throw ConfigError("section [" + name + "] must be an object");
    }

    void read(const char* key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(key, "an integer");
            out = v->get<int>();
        }
    }
    void read(const char* key, long& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(key, "an integer");
            out = v->get<long>();
        }
    }
    void read(const char* key, std::uint64_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void read(const char* key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "a number");
            out = v->get<double>();
        }
    }
    void read(const char* key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(key, "a boolean");
            out = v->get<bool>();
        }
    }
    void read(const char* key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "a string");
            out = v->get<std::string>();
        }
    }
    void read(const char* key, std::vector<int>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(key, "an array of integers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number_integer()) fail(key, "an array of integers");
                out.push_back(e.get<int>());
            }
        }
    }
    void read(const char* key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(key, "an array of numbers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) fail(key, "an array of numbers");
                out.push_back(e.get<double>());
            }
        }
    }
    void read_pair(const char* key, double& lo, double& hi) {
        std::vector<double> v{lo, hi};
        read(key, v);
        if (v.size() != 2) fail(key, "a [min, max] pair");
        lo = v[0];
        hi = v[1];
    }

    void finish() const {
        if (!node_) return;
        for (const auto& [key, value] : node_->items()) {
            if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
        }
    }

private:
    const json* find(const char* key) {
        used_.insert(key);
        if (!node_ || !node_->contains(key)) return nullptr;
        return &node_->at(key);
    }
    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError("[" + name_ + "]." + key + " must be " + what);
    }

    std::string name_;
    const json* node_ = nullptr;
    std::set<std::string> used_;
};

}  // namespace

ScoreSource parse_score_source(const std::string& s) {
    if (s == "marks") return ScoreSource::marks;
    if (s == "raw_d") return ScoreSource::raw_d;
    throw ConfigError("infer.score_source must be 'marks' or 'raw_d', got '" + s + "'");
}

std::string to_string(ScoreSource s) { return s == ScoreSource::marks ? "marks" : "raw_d"; }

std::vector<double> default_theta_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 49; ++k) grid.push_back(0.02 * k);
    return grid;
}

RunConfig default_config() {
    RunConfig cfg;
    cfg.data.synth.num_speakers = 4;
    cfg.data.synth.feature_dim = 16;
    cfg.data.synth.cluster_separation = 10.0;
    cfg.data.synth.turn_min_s = 2.0;
    cfg.data.synth.turn_max_s = 6.0;
    cfg.data.synth.session_duration_s = 300.0;
    cfg.encoder.tdnn_channels = 32;
    cfg.encoder.bilstm_hidden = 32;
    cfg.head.decoder_hidden = 64;
    return cfg;
}

void validate(const RunConfig& cfg) {
    validate(cfg.data.synth);
    if (cfg.data.num_train_sessions < 0 || cfg.data.num_dev_sessions < 0)
        throw ConfigError("data session counts must be >= 0");
    if (!(cfg.data.snr_db_min >= 0.0 && cfg.data.snr_db_max <= 60.0 && cfg.data.snr_db_min <= cfg.data.snr_db_max))
        throw ConfigError("data.snr_db_range must satisfy 0 <= min <= max <= 60");
    validate(cfg.encoder);
    if (cfg.differnet.hidden < 1) throw ConfigError("differnet.hidden must be >= 1");
    if (!(cfg.differnet.history_ms > 0.0)) throw ConfigError("differnet.history_ms must be > 0");
    if (!(cfg.dcif.beta > 0.0)) throw ConfigError("dcif.beta must be > 0");
    validate(cfg.head);

    const auto& t = cfg.train;
    if (!(t.window_s > 0.0)) throw ConfigError("train.window_s must be > 0");
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(t.peak_lr > 0.0)) throw ConfigError("train.peak_lr must be > 0");
    if (!(t.warmup_frac >= 0.0 && t.hold_frac >= 0.0 && t.warmup_frac + t.hold_frac <= 1.0))
        throw ConfigError("train.warmup_frac + train.hold_frac must lie in [0, 1]");
    if (t.total_steps < 0) throw ConfigError("train.total_steps must be >= 0");
    if (t.total_steps == 0 && t.epochs < 1) throw ConfigError("train.epochs must be >= 1 when total_steps is 0");
    if (t.dev_every < 0) throw ConfigError("train.dev_every must be >= 0");
    if (!(t.baseline_collar_s >= 0.0)) throw ConfigError("train.baseline_collar_s must be >= 0");
    if (t.threads < 1) throw ConfigError("train.threads must be >= 1");

    const auto& i = cfg.infer;
    if (!(i.window_s >= 0.0)) throw ConfigError("infer.window_s must be >= 0");
    if (!(i.overlap_frac >= 0.0 && i.overlap_frac < 1.0)) throw ConfigError("infer.overlap_frac must lie in [0, 1)");
    if (!(i.theta >= 0.0 && i.theta <= 1.0)) throw ConfigError("infer.theta must lie in [0, 1]");
    for (double th : i.theta_grid) {
        if (!(th >= 0.0 && th <= 1.0)) throw ConfigError("infer.theta_grid values must lie in [0, 1]");
    }
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> kSections{"schema_version", "data",  "encoder", "differnet",
                                                 "dcif",           "head",  "train",   "infer"};
    for (const auto& [key, value] : j.items()) {
        if (!kSections.count(key)) throw ConfigError("unknown config section '" + key + "'");
    }
    if (j.contains("schema_version")) {
        if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kConfigSchemaVersion)
            throw ConfigError("unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
    }

    RunConfig cfg = default_config();
    {
        SectionReader r(j, "data");
        auto& s = cfg.data.synth;
        r.read("num_speakers", s.num_speakers);
        r.read("feature_dim", s.feature_dim);
        r.read("cluster_separation", s.cluster_separation);
        r.read_pair("turn_duration_range_s", s.turn_min_s, s.turn_max_s);
        r.read("session_duration_s", s.session_duration_s);
        r.read("overlap_fraction", s.overlap_fraction);
        r.read("frame_shift_s", s.frame_shift_s);
        r.read("rng_seed", s.rng_seed);
        r.read("num_train_sessions", cfg.data.num_train_sessions);
        r.read("num_dev_sessions", cfg.data.num_dev_sessions);
        r.read("train_dir", cfg.data.train_dir);
        r.read("dev_dir", cfg.data.dev_dir);
        r.read("augment", cfg.data.augment);
        r.read_pair("snr_db_range", cfg.data.snr_db_min, cfg.data.snr_db_max);
        r.finish();
    }
    {
        SectionReader r(j, "encoder");
        auto& e = cfg.encoder;
        r.read("num_tdnn_layers", e.num_tdnn_layers);
        r.read("tdnn_channels", e.tdnn_channels);
        r.read("tdnn_context", e.tdnn_context);
        r.read("downsampling_factor", e.downsampling_factor);
        r.read("bilstm_layers", e.bilstm_layers);
        r.read("bilstm_hidden", e.bilstm_hidden);
        r.finish();
    }
    {
        SectionReader r(j, "differnet");
        r.read("hidden", cfg.differnet.hidden);
        r.read("history_ms", cfg.differnet.history_ms);
        r.finish();
    }
    {
        SectionReader r(j, "dcif");
        std::string init = to_string(cfg.dcif.init);
        r.read("beta", cfg.dcif.beta);
        r.read("integration_init", init);
        cfg.dcif.init = parse_integration_init(init);
        r.finish();
    }
    {
        SectionReader r(j, "head");
        auto& h = cfg.head;
        r.read("eta", h.eta);
        r.read("decoder_hidden", h.decoder_hidden);
        r.read("num_speakers", h.num_speakers);
        r.read("alpha", h.alpha);
        r.read("gamma", h.gamma);
        r.read("lambda1", h.lambda1);
        r.read("lambda2", h.lambda2);
        r.read("use_length_norm", h.use_length_norm);
        r.read("use_focal", h.use_focal);
        r.finish();
    }
    {
        SectionReader r(j, "train");
        auto& t = cfg.train;
        r.read("window_s", t.window_s);
        r.read("batch_size", t.batch_size);
        r.read("peak_lr", t.peak_lr);
        r.read("warmup_frac", t.warmup_frac);
        r.read("hold_frac", t.hold_frac);
        r.read("total_steps", t.total_steps);
        r.read("epochs", t.epochs);
        r.read("seed", t.seed);
        r.read("use_scaling", t.use_scaling);
        r.read("dev_every", t.dev_every);
        r.read("baseline_collar_s", t.baseline_collar_s);
        r.read("threads", t.threads);
        r.finish();
    }
    {
        SectionReader r(j, "infer");
        auto& i = cfg.infer;
        std::string source = to_string(i.score_source);
        r.read("window_s", i.window_s);
        r.read("overlap_frac", i.overlap_frac);
        r.read("theta", i.theta);
        r.read("score_source", source);
        r.read("theta_grid", i.theta_grid);
        i.score_source = parse_score_source(source);
        r.finish();
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
    const auto& s = cfg.data.synth;
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["data"] = {{"num_speakers", s.num_speakers},
                 {"feature_dim", s.feature_dim},
                 {"cluster_separation", s.cluster_separation},
                 {"turn_duration_range_s", {s.turn_min_s, s.turn_max_s}},
                 {"session_duration_s", s.session_duration_s},
                 {"overlap_fraction", s.overlap_fraction},
                 {"frame_shift_s", s.frame_shift_s},
                 {"rng_seed", s.rng_seed},
                 {"num_train_sessions", cfg.data.num_train_sessions},
                 {"num_dev_sessions", cfg.data.num_dev_sessions},
                 {"train_dir", cfg.data.train_dir},
                 {"dev_dir", cfg.data.dev_dir},
                 {"augment", cfg.data.augment},
                 {"snr_db_range", {cfg.data.snr_db_min, cfg.data.snr_db_max}}};
    const auto& e = cfg.encoder;
    j["encoder"] = {{"num_tdnn_layers", e.num_tdnn_layers}, {"tdnn_channels", e.tdnn_channels},
                    {"tdnn_context", e.tdnn_context},       {"downsampling_factor", e.downsampling_factor},
                    {"bilstm_layers", e.bilstm_layers},     {"bilstm_hidden", e.bilstm_hidden}};
    j["differnet"] = {{"hidden", cfg.differnet.hidden}, {"history_ms", cfg.differnet.history_ms}};
    j["dcif"] = {{"beta", cfg.dcif.beta}, {"integration_init", to_string(cfg.dcif.init)}};
    const auto& h = cfg.head;
    j["head"] = {{"eta", h.eta},         {"decoder_hidden", h.decoder_hidden},   {"num_speakers", h.num_speakers},
                 {"alpha", h.alpha},     {"gamma", h.gamma},                     {"lambda1", h.lambda1},
                 {"lambda2", h.lambda2}, {"use_length_norm", h.use_length_norm}, {"use_focal", h.use_focal}};
    const auto& t = cfg.train;
    j["train"] = {{"window_s", t.window_s},       {"batch_size", t.batch_size},
                  {"peak_lr", t.peak_lr},         {"warmup_frac", t.warmup_frac},
                  {"hold_frac", t.hold_frac},     {"total_steps", t.total_steps},
                  {"epochs", t.epochs},           {"seed", t.seed},
                  {"use_scaling", t.use_scaling}, {"dev_every", t.dev_every},
                  {"baseline_collar_s", t.baseline_collar_s}, {"threads", t.threads}};
    const auto& i = cfg.infer;
    j["infer"] = {{"window_s", i.window_s},
                  {"overlap_frac", i.overlap_frac},
                  {"theta", i.theta},
                  {"score_source", to_string(i.score_source)},
                  {"theta_grid", i.theta_grid}};
    return j;
}

int history_frames(const RunConfig& cfg, double frame_shift_s) {
    const double encoded_ms = 1000.0 * frame_shift_s * cfg.encoder.downsampling_factor;
    return std::max(1, static_cast<int>(std::lround(cfg.differnet.history_ms / encoded_ms)));
}

void apply_ablation(RunConfig& cfg, const std::string& name) {
    if (name == "length_norm") {
        cfg.head.use_length_norm = false;
    } else if (name == "scaling") {
        cfg.train.use_scaling = false;
    } else if (name == "focal") {
        cfg.head.use_focal = false;
    } else {
        throw ConfigError("unknown ablation '" + name + "' (expected length_norm, scaling or focal)");
    }
}

}  // namespace scd
