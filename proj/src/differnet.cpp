#include "scd/differnet.hpp"

#include <algorithm>
#include <cmath>

namespace scd {

DifferNetParams init_differnet(const DifferNetConfig& cfg, int embed_dim, Rng& rng) {
    if (cfg.hidden < 1) throw ConfigError("differnet.hidden must be >= 1");
    if (cfg.history_frames < 1) throw ConfigError("differnet history length must be >= 1 encoded frame");
    const int in = 2 * embed_dim;
    DifferNetParams p;
    std::uniform_real_distribution<double> u1(-std::sqrt(6.0 / in), std::sqrt(6.0 / in));
    p.w1.resize(in, cfg.hidden);
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = u1(rng);
    p.b1 = Matrix::Zero(1, cfg.hidden);
    // Small output weights and a positive bias keep every d_t inside the
    // unclamped region at the start of training.
    std::uniform_real_distribution<double> u2(-0.01 / std::sqrt(cfg.hidden), 0.01 / std::sqrt(cfg.hidden));
    p.w2.resize(cfg.hidden, 1);
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = u2(rng);
    p.b2 = Matrix::Constant(1, 1, 0.1);
    return p;
}

DifferNetParams zeros_like(const DifferNetParams& p) {
    return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(1, p.b1.cols()), Matrix::Zero(p.w2.rows(), 1),
            Matrix::Zero(1, 1)};
}

void append_tensors(DifferNetParams& p, const std::string& prefix, TensorList& out) {
    out.push_back({prefix + "w1", &p.w1});
    out.push_back({prefix + "b1", &p.b1});
    out.push_back({prefix + "w2", &p.w2});
    out.push_back({prefix + "b2", &p.b2});
}

Vector history_mean_diff(const Matrix& h, int t, int l) {
    if (t < 0 || t >= h.rows()) throw ArgumentError("history_mean_diff: frame index out of range");
    if (l < 1) throw ArgumentError("history_mean_diff: history length must be >= 1");
    if (t == 0) return Vector::Zero(h.cols());
    const int first = std::max(0, t - l);
    const Vector mean = h.middleRows(first, t - first).colwise().mean().transpose();
    return h.row(t).transpose() - mean;
}

Vector difference_scores(const Matrix& h, const DifferNetConfig& cfg, const DifferNetParams& params,
                         DifferNetTape* tape) {
    const int rows = static_cast<int>(h.rows());
    const int dim = static_cast<int>(h.cols());
    if (params.w1.rows() != 2 * dim || params.w2.rows() != params.w1.cols())
        throw ConfigError("differnet parameters do not match the embedding dimension");

    DifferNetTape local;
    DifferNetTape& tp = tape ? *tape : local;
    tp.input.resize(rows, 2 * dim);
    for (int t = 0; t < rows; ++t) tp.input.block(t, 0, 1, dim) = history_mean_diff(h, t, cfg.history_frames).transpose();
    tp.input.rightCols(dim) = h;

    tp.pre.noalias() = tp.input * params.w1;
    tp.pre.rowwise() += params.b1.row(0);
    tp.hidden = tp.pre.cwiseMax(0.0);
    tp.raw = tp.hidden * params.w2;
    tp.raw.array() += params.b2(0, 0);

    Vector d(rows);
    for (int t = 0; t < rows; ++t) {
        const double o2 = tp.raw(t);
        if (!std::isfinite(o2)) throw NumericalError("non-finite difference activation", t);
        d(t) = std::min(std::max(o2, 0.0), 1.0);
    }
    return d;
}

Matrix difference_scores_backward(const Matrix& h, const DifferNetConfig& cfg, const DifferNetParams& params,
                                  const DifferNetTape& tape, const Vector& d_grad, DifferNetParams& grads,
                                  bool through_floor) {
    const int rows = static_cast<int>(h.rows());
    const int dim = static_cast<int>(h.cols());
    Vector d_raw(rows);
    for (int t = 0; t < rows; ++t) {
        const double o2 = tape.raw(t);
        d_raw(t) = ((o2 > 0.0 || through_floor) && o2 < 1.0) ? d_grad(t) : 0.0;
    }
    grads.w2.noalias() += tape.hidden.transpose() * d_raw;
    grads.b2(0, 0) += d_raw.sum();
    const Matrix d_pre = (d_raw * params.w2.transpose()).cwiseProduct((tape.pre.array() > 0.0).cast<double>().matrix());
    grads.w1.noalias() += tape.input.transpose() * d_pre;
    grads.b1 += d_pre.colwise().sum();
    const Matrix d_input = d_pre * params.w1.transpose();

    Matrix d_h = d_input.rightCols(dim);
    const int l = cfg.history_frames;
    for (int t = 1; t < rows; ++t) {
        const auto d_o1 = d_input.block(t, 0, 1, dim);
        d_h.row(t) += d_o1;
        const int first = std::max(0, t - l);
        const double inv = 1.0 / static_cast<double>(t - first);
        for (int tau = first; tau < t; ++tau) d_h.row(tau) -= inv * d_o1;
    }
    return d_h;
}

ScaledScores scale_scores(const Vector& d, int num_segments, double margin) {
    if (num_segments < 1) throw ArgumentError("scale_scores: U must be >= 1");
    ScaledScores s;
    s.sum = d.sum();
    s.applied = true;
    if (num_segments == 1) {
        s.kappa = 0.0;
        s.scaled = Vector::Zero(d.size());
        return s;
    }
    if (!(s.sum > 0.0)) throw DegenerateError("scale_scores: sum of difference scores is zero with U > 1");
    s.kappa = (num_segments - 1 + margin) / s.sum;
    s.scaled = s.kappa * d;
    return s;
}

Vector scale_scores_backward(const Vector& d, const ScaledScores& s, const Vector& scaled_grad) {
    if (s.kappa == 0.0) return Vector::Zero(d.size());
    // d'_i = kappa * d_i with kappa = target / sum(d), so dkappa/dd_j = -kappa / sum(d).
    const double coupling = scaled_grad.dot(d) * s.kappa / s.sum;
    return (s.kappa * scaled_grad).array() - coupling;
}

}  // namespace scd
