#include "scd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace scd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ScdError("truncated checkpoint: " + path);
    return v;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) return &m;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json header;
    header["kind"] = ckpt.kind;
    header["config"] = ckpt.config;
    header["model"] = ckpt.model;
    header["catalog"] = ckpt.catalog;
    header["step"] = ckpt.step;
    header["total_steps"] = ckpt.total_steps;
    header["optimizer_steps"] = ckpt.optimizer_steps;
    header["rng_state"] = ckpt.rng_state;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : ckpt.tensors) header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ScdError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ckpt.tensors) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
        out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    }
    if (!out) throw ScdError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ArgumentError("not a checkpoint file: " + path);
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) throw ArgumentError("unsupported checkpoint version " + std::to_string(version));
    const auto size = read_pod<std::uint64_t>(in, path);
    std::string text(size, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(size))) throw ScdError("truncated checkpoint: " + path);

    Checkpoint ckpt;
    const auto header = nlohmann::json::parse(text);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.model = header.at("model");
    ckpt.catalog = header.at("catalog").get<std::vector<std::string>>();
    ckpt.step = header.at("step").get<long>();
    ckpt.total_steps = header.at("total_steps").get<long>();
    ckpt.optimizer_steps = header.at("optimizer_steps").get<long>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("shape").at(0).get<Eigen::Index>();
        const auto cols = t.at("shape").at(1).get<Eigen::Index>();
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
        if (!in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double))))
            throw ScdError("truncated checkpoint tensor data: " + path);
        ckpt.tensors.emplace_back(t.at("name").get<std::string>(), Matrix(rm));
    }
    return ckpt;
}

RunConfig checkpoint_config(const Checkpoint& ckpt) { return config_from_json(ckpt.config); }

ModelSpec checkpoint_spec(const Checkpoint& ckpt) {
    const RunConfig cfg = checkpoint_config(ckpt);
    ModelSpec spec = resolve_spec(cfg, ckpt.model.at("input_dim").get<int>(), ckpt.model.at("frame_shift_s").get<double>(),
                                  ckpt.model.at("num_speakers").get<int>());
    spec.head.num_speakers = ckpt.model.at("num_speakers").get<int>();
    spec.differnet.history_frames = ckpt.model.at("history_frames").get<int>();
    return spec;
}

void restore_tensors(const Checkpoint& ckpt, TensorList params, const std::string& prefix) {
    for (auto& p : params) {
        const Matrix* m = ckpt.find(prefix + p.name);
        if (!m) throw ArgumentError("checkpoint is missing tensor " + prefix + p.name);
        if (m->rows() != p.value->rows() || m->cols() != p.value->cols())
            throw ArgumentError("checkpoint tensor " + prefix + p.name + " has the wrong shape");
        *p.value = *m;
    }
}

SeqScdParams load_seqscd_params(const Checkpoint& ckpt, const ModelSpec& spec) {
    if (ckpt.kind != "seqscd") throw ArgumentError("checkpoint holds a '" + ckpt.kind + "' model, expected 'seqscd'");
    Rng rng(0);
    SeqScdParams p = init_seqscd(spec, rng);
    restore_tensors(ckpt, tensors(p));
    return p;
}

BaselineParams load_baseline_params(const Checkpoint& ckpt, const ModelSpec& spec) {
    if (ckpt.kind != "baseline") throw ArgumentError("checkpoint holds a '" + ckpt.kind + "' model, expected 'baseline'");
    Rng rng(0);
    BaselineParams p = init_baseline(spec, rng);
    restore_tensors(ckpt, tensors(p));
    return p;
}

}  // namespace scd
