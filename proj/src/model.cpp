#include "scd/model.hpp"

#include <algorithm>
#include <cmath>

namespace scd {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

ModelSpec resolve_spec(const RunConfig& cfg, int input_dim, double frame_shift_s, int num_speakers) {
    ModelSpec spec;
    spec.encoder = cfg.encoder;
    spec.differnet.hidden = cfg.differnet.hidden;
    spec.differnet.history_frames = history_frames(cfg, frame_shift_s);
    spec.dcif = cfg.dcif;
    spec.head = cfg.head;
    if (spec.head.num_speakers == 0) spec.head.num_speakers = num_speakers;
    if (spec.head.num_speakers < num_speakers)
        throw ConfigError("head.num_speakers is smaller than the training catalog");
    spec.input_dim = input_dim;
    spec.frame_shift_s = frame_shift_s;
    return spec;
}

nlohmann::json spec_to_json(const ModelSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"frame_shift_s", spec.frame_shift_s},
            {"num_speakers", spec.head.num_speakers},
            {"history_frames", spec.differnet.history_frames}};
}

SeqScdParams init_seqscd(const ModelSpec& spec, Rng& rng) {
    SeqScdParams p;
    p.encoder = init_encoder(spec.encoder, spec.input_dim, rng);
    p.differnet = init_differnet(spec.differnet, spec.encoder.output_dim(), rng);
    p.decoder = init_decoder(spec.head, spec.encoder.output_dim(), rng);
    return p;
}

SeqScdParams zeros_like(const SeqScdParams& p) {
    return {zeros_like(p.encoder), zeros_like(p.differnet), zeros_like(p.decoder)};
}

TensorList tensors(SeqScdParams& p) {
    TensorList out;
    append_tensors(p.encoder, "encoder.", out);
    append_tensors(p.differnet, "differnet.", out);
    append_tensors(p.decoder, "decoder.", out);
    return out;
}

WindowOutcome seqscd_window(const ModelSpec& spec, const SeqScdParams& params, const TrainingExample& example,
                            bool use_scaling, SeqScdParams* grads) {
    const HeadConfig& head = spec.head;
    EncoderTape enc_tape;
    const Matrix h = encode(example.features.frames, spec.encoder, params.encoder, &enc_tape).frames;
    DifferNetTape dn_tape;
    const Vector d = difference_scores(h, spec.differnet, params.differnet, &dn_tape);

    WindowOutcome out;
    const int u = example.identity.num_segments();
    out.segments = u;

    ScaledScores scaled;
    Vector d_prime = d;
    if (use_scaling) {
        try {
            scaled = scale_scores(d, u, kScaleSlack * (u - 1));
            d_prime = scaled.scaled;
        } catch (const DegenerateError&) {
            out.degenerate = true;
        }
    }
    const FiredOutput fired = dcif_forward(h, d_prime, spec.dcif);
    out.fired = fired.fired_count();
    out.aligned = fired.embeddings.rows() == u;
    if (!out.aligned && !use_scaling && head.lambda2 == 0.0)
        throw AlignmentError("DCIF emitted " + std::to_string(fired.embeddings.rows()) + " embeddings for " +
                             std::to_string(u) + " target segments with scaling disabled and lambda2 = 0");

    out.loss.quantity = quantity_loss(d, u);
    HeadTape head_tape;
    if (out.aligned) {
        const Matrix probs = head_forward(fired.embeddings, head, params.decoder, &head_tape);
        std::vector<Vector> p;
        for (Eigen::Index i = 0; i < probs.rows(); ++i) p.push_back(probs.row(i).transpose());
        out.loss = total_loss(p, example.identity, d, head);
    } else {
        out.loss.total = head.lambda2 * out.loss.quantity;
    }
    if (!grads) return out;

    Matrix d_h = Matrix::Zero(h.rows(), h.cols());
    Vector d_d = Vector::Zero(d.size());
    if (out.aligned && head.lambda1 != 0.0) {
        const Matrix d_emb = head_backward(head, params.decoder, head_tape, example.identity, grads->decoder);
        const DcifGrads g = dcif_backward(h, d_prime, spec.dcif, fired, d_emb);
        d_h += g.h;
        d_d += (use_scaling && !out.degenerate) ? scale_scores_backward(d, scaled, g.d_prime) : g.d_prime;
    }
    const double excess = d.sum() - (u - 1);
    if (head.lambda2 != 0.0 && excess != 0.0) d_d.array() += head.lambda2 * (excess > 0.0 ? 1.0 : -1.0);

    // All-zero scores sit flat on the clamp; let the quantity term lift them.
    const bool dead = u > 1 && d.sum() == 0.0;
    d_h += difference_scores_backward(h, spec.differnet, params.differnet, dn_tape, d_d, grads->differnet, dead);
    encode_backward(spec.encoder, params.encoder, enc_tape, d_h, grads->encoder);
    return out;
}

SeqScdOutput seqscd_forward(const ModelSpec& spec, const SeqScdParams& params, const Matrix& x) {
    SeqScdOutput out;
    out.encoded = encode(x, spec.encoder, params.encoder).frames;
    out.d = difference_scores(out.encoded, spec.differnet, params.differnet);
    out.fired = dcif_forward(out.encoded, out.d, spec.dcif);
    return out;
}

BaselineParams init_baseline(const ModelSpec& spec, Rng& rng) {
    BaselineParams p;
    p.encoder = init_encoder(spec.encoder, spec.input_dim, rng);
    const int h = spec.encoder.output_dim();
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(h), 1.0 / std::sqrt(h));
    p.w.resize(h, 1);
    for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] = dist(rng);
    p.b = Matrix::Zero(1, 1);
    return p;
}

BaselineParams zeros_like(const BaselineParams& p) {
    return {zeros_like(p.encoder), Matrix::Zero(p.w.rows(), 1), Matrix::Zero(1, 1)};
}

TensorList tensors(BaselineParams& p) {
    TensorList out;
    append_tensors(p.encoder, "encoder.", out);
    out.push_back({"frame_head.w", &p.w});
    out.push_back({"frame_head.b", &p.b});
    return out;
}

double baseline_window(const ModelSpec& spec, const BaselineParams& params, const TrainingExample& example,
                       double collar_s, BaselineParams* grads) {
    EncoderTape tape;
    const Matrix h = encode(example.features.frames, spec.encoder, params.encoder, &tape).frames;
    Vector logits = h * params.w;
    logits.array() += params.b(0, 0);

    const std::vector<double> frame_targets = frame_change_targets(example, collar_s);
    const int factor = spec.encoder.downsampling_factor;
    const int n_in = static_cast<int>(frame_targets.size());
    const Eigen::Index n = logits.size();
    Vector target = Vector::Zero(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const int a = static_cast<int>(t) * factor;
        const int b = std::min(a + factor, n_in);
        for (int i = a; i < b; ++i) target(t) += frame_targets[i];
        target(t) /= std::max(1, b - a);
    }

    double loss = 0.0;
    Vector d_logits(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const double z = logits(t);
        // log(1 + exp(-|z|)) form of binary cross-entropy with logits.
        loss += std::max(z, 0.0) - z * target(t) + std::log1p(std::exp(-std::abs(z)));
        d_logits(t) = (sigmoid(z) - target(t)) / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (!grads) return loss;

    grads->w.noalias() += h.transpose() * d_logits;
    grads->b(0, 0) += d_logits.sum();
    const Matrix d_h = d_logits * params.w.transpose();
    encode_backward(spec.encoder, params.encoder, tape, d_h, grads->encoder);
    return loss;
}

Vector baseline_forward(const ModelSpec& spec, const BaselineParams& params, const Matrix& x) {
    const Matrix h = encode(x, spec.encoder, params.encoder).frames;
    Vector logits = h * params.w;
    return logits.unaryExpr([&params](double z) { return sigmoid(z + params.b(0, 0)); });
}

std::vector<double> SeqScdScorer::score_window(const Matrix& x) const {
    const SeqScdOutput out = seqscd_forward(spec_, params_, x);
    const int factor = spec_.encoder.downsampling_factor;
    const int n = static_cast<int>(x.rows());
    if (source_ == ScoreSource::marks) return marks_to_frame_scores(out.fired.marks, factor, n);
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) s[i] = out.d(i / factor);
    return s;
}

std::vector<double> BaselineScorer::score_window(const Matrix& x) const {
    const Vector p = baseline_forward(spec_, params_, x);
    const int factor = spec_.encoder.downsampling_factor;
    const int n = static_cast<int>(x.rows());
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) s[i] = p(i / factor);
    return s;
}

}  // namespace scd
