#include "scd/head.hpp"

#include <algorithm>
#include <cmath>

namespace scd {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double clip(double p) { return std::min(std::max(p, kProbEps), 1.0 - kProbEps); }

}  // namespace

void validate(const HeadConfig& cfg) {
    if (!(cfg.eta > 0.0)) throw ConfigError("head.eta must be > 0");
    if (cfg.decoder_hidden < 1) throw ConfigError("head.decoder_hidden must be >= 1");
    if (cfg.num_speakers < 0) throw ConfigError("head.num_speakers must be >= 0");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("head.alpha must lie in (0, 1)");
    if (!(cfg.gamma >= 0.0)) throw ConfigError("head.gamma must be >= 0");
    if (!(cfg.lambda1 >= 0.0)) throw ConfigError("head.lambda1 must be >= 0");
    if (!(cfg.lambda2 >= 0.0)) throw ConfigError("head.lambda2 must be >= 0");
}

DecoderParams init_decoder(const HeadConfig& cfg, int embed_dim, Rng& rng) {
    validate(cfg);
    if (cfg.num_speakers < 1) throw ConfigError("decoder needs a resolved speaker count");
    auto uniform = [&rng](int rows, int cols, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
        return m;
    };
    DecoderParams p;
    p.w1 = uniform(embed_dim, cfg.decoder_hidden, std::sqrt(6.0 / embed_dim));
    p.b1 = Matrix::Zero(1, cfg.decoder_hidden);
    p.w2 = uniform(cfg.decoder_hidden, cfg.num_speakers, std::sqrt(1.0 / cfg.decoder_hidden));
    p.b2 = Matrix::Zero(1, cfg.num_speakers);
    return p;
}

DecoderParams zeros_like(const DecoderParams& p) {
    return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(1, p.b1.cols()),
            Matrix::Zero(p.w2.rows(), p.w2.cols()), Matrix::Zero(1, p.b2.cols())};
}

void append_tensors(DecoderParams& p, const std::string& prefix, TensorList& out) {
    out.push_back({prefix + "w1", &p.w1});
    out.push_back({prefix + "b1", &p.b1});
    out.push_back({prefix + "w2", &p.w2});
    out.push_back({prefix + "b2", &p.b2});
}

Vector length_normalize(const Vector& e, double eta) {
    const double n = e.norm();
    if (!(n > 0.0)) throw DegenerateError("length_normalize: zero-norm embedding");
    return (eta / n) * e;
}

Vector decode(const Vector& e, const DecoderParams& params) {
    if (e.size() != params.w1.rows()) throw ConfigError("decode: embedding dimension mismatch");
    const Eigen::RowVectorXd hidden = (e.transpose() * params.w1 + params.b1.row(0)).cwiseMax(0.0);
    const Eigen::RowVectorXd logits = hidden * params.w2 + params.b2.row(0);
    Vector p(logits.size());
    for (Eigen::Index c = 0; c < logits.size(); ++c) p(c) = sigmoid(logits(c));
    return p;
}

double mlfl(const Vector& p, const Vector& y, double alpha, double gamma) {
    if (p.size() != y.size() || p.size() == 0) throw ArgumentError("mlfl: probability/target size mismatch");
    double sum = 0.0;
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        const double pc = clip(p(c));
        sum += -alpha * std::pow(1.0 - pc, gamma) * y(c) * std::log(pc);
        sum += -(1.0 - alpha) * std::pow(pc, gamma) * (1.0 - y(c)) * std::log(1.0 - pc);
    }
    return sum / static_cast<double>(p.size());
}

Vector mlfl_grad(const Vector& p, const Vector& y, double alpha, double gamma) {
    Vector g = Vector::Zero(p.size());
    const double inv_c = 1.0 / static_cast<double>(p.size());
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        const double pc = p(c);
        if (pc < kProbEps || pc > 1.0 - kProbEps) continue;
        const double q = 1.0 - pc;
        const double pos = alpha * (gamma * std::pow(q, gamma - 1.0) * std::log(pc) - std::pow(q, gamma) / pc);
        const double neg = -(1.0 - alpha) * (gamma * std::pow(pc, gamma - 1.0) * std::log(q) - std::pow(pc, gamma) / q);
        g(c) = inv_c * (y(c) * pos + (1.0 - y(c)) * neg);
    }
    return g;
}

double quantity_loss(const Vector& d, int num_segments) {
    return std::abs(static_cast<double>(num_segments - 1) - d.sum());
}

FocalParams focal_params(const HeadConfig& cfg) {
    if (cfg.use_focal) return {cfg.alpha, cfg.gamma, 1.0};
    return {0.5, 0.0, 2.0};
}

LossBreakdown total_loss(const std::vector<Vector>& probs, const SpeakerIdentitySequence& targets, const Vector& d,
                         const HeadConfig& cfg) {
    const int u = targets.num_segments();
    if (static_cast<int>(probs.size()) != u)
        throw AlignmentError("total_loss: " + std::to_string(probs.size()) + " predictions for " + std::to_string(u) +
                             " target segments");
    const FocalParams fp = focal_params(cfg);
    LossBreakdown out;
    for (int i = 0; i < u; ++i) out.mlfl += fp.scale * mlfl(probs[i], targets.targets[i], fp.alpha, fp.gamma);
    out.mlfl /= static_cast<double>(u);
    out.quantity = quantity_loss(d, u);
    out.total = cfg.lambda1 * out.mlfl + cfg.lambda2 * out.quantity;
    return out;
}

Matrix head_forward(const Matrix& embeddings, const HeadConfig& cfg, const DecoderParams& params, HeadTape* tape) {
    if (embeddings.cols() != params.w1.rows()) throw ConfigError("head: embedding dimension mismatch");
    HeadTape local;
    HeadTape& tp = tape ? *tape : local;
    tp.embeddings = embeddings;
    tp.norms = embeddings.rowwise().norm();
    tp.normalized = embeddings;
    if (cfg.use_length_norm) {
        for (Eigen::Index u = 0; u < embeddings.rows(); ++u) {
            if (!(tp.norms(u) > 0.0)) throw DegenerateError("length_normalize: zero-norm embedding");
            tp.normalized.row(u) *= cfg.eta / tp.norms(u);
        }
    }
    tp.pre.noalias() = tp.normalized * params.w1;
    tp.pre.rowwise() += params.b1.row(0);
    tp.hidden = tp.pre.cwiseMax(0.0);
    Matrix logits = tp.hidden * params.w2;
    logits.rowwise() += params.b2.row(0);
    tp.probs = logits.unaryExpr([](double x) { return sigmoid(x); });
    return tp.probs;
}

Matrix head_backward(const HeadConfig& cfg, const DecoderParams& params, const HeadTape& tape,
                     const SpeakerIdentitySequence& targets, DecoderParams& grads) {
    const Eigen::Index u = tape.probs.rows();
    if (u != targets.num_segments()) throw AlignmentError("head_backward: prediction/target count mismatch");
    const FocalParams fp = focal_params(cfg);
    const double weight = cfg.lambda1 * fp.scale / static_cast<double>(u);

    Matrix d_logits(u, tape.probs.cols());
    for (Eigen::Index i = 0; i < u; ++i) {
        const Vector p = tape.probs.row(i).transpose();
        const Vector g = mlfl_grad(p, targets.targets[i], fp.alpha, fp.gamma);
        for (Eigen::Index c = 0; c < p.size(); ++c) d_logits(i, c) = weight * g(c) * p(c) * (1.0 - p(c));
    }
    grads.w2.noalias() += tape.hidden.transpose() * d_logits;
    grads.b2 += d_logits.colwise().sum();
    const Matrix d_pre =
        (d_logits * params.w2.transpose()).cwiseProduct((tape.pre.array() > 0.0).cast<double>().matrix());
    grads.w1.noalias() += tape.normalized.transpose() * d_pre;
    grads.b1 += d_pre.colwise().sum();
    Matrix d_norm = d_pre * params.w1.transpose();
    if (!cfg.use_length_norm) return d_norm;

    Matrix d_e(u, d_norm.cols());
    for (Eigen::Index i = 0; i < u; ++i) {
        const double n = tape.norms(i);
        const Eigen::RowVectorXd unit = tape.embeddings.row(i) / n;
        d_e.row(i) = (cfg.eta / n) * (d_norm.row(i) - unit.dot(d_norm.row(i)) * unit);
    }
    return d_e;
}

}  // namespace scd
