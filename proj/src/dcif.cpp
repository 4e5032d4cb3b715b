#include "scd/dcif.hpp"

#include <algorithm>
#include <cmath>

namespace scd {

IntegrationInit parse_integration_init(const std::string& s) {
    if (s == "first_frame") return IntegrationInit::first_frame;
    if (s == "zero") return IntegrationInit::zero;
    throw ConfigError("dcif.integration_init must be 'first_frame' or 'zero', got '" + s + "'");
}

std::string to_string(IntegrationInit init) { return init == IntegrationInit::first_frame ? "first_frame" : "zero"; }

FiredOutput dcif_forward(const Matrix& h, const Vector& d_prime, const DcifConfig& cfg) {
    const int rows = static_cast<int>(h.rows());
    if (d_prime.size() != rows) throw ArgumentError("dcif_forward: d' length differs from the encoded length");
    if (!(cfg.beta > 0.0)) throw ConfigError("dcif.beta must be > 0");
    if (rows == 0) throw ArgumentError("dcif_forward: empty sequence");

    FiredOutput out;
    out.marks.assign(rows, 0);
    out.trace.resize(rows);
    std::vector<Vector> fired;

    Vector h_acc = cfg.init == IntegrationInit::first_frame ? Vector(h.row(0).transpose()) : Vector::Zero(h.cols());
    double d_acc = 0.0;
    for (int t = 0; t < rows; ++t) {
        const double w = d_prime(t);
        if (!std::isfinite(w) || !h.row(t).allFinite()) throw NumericalError("non-finite DCIF input", t);
        if (w < 0.0) throw ArgumentError("dcif_forward: negative difference value at frame " + std::to_string(t));
        DcifStep& step = out.trace[t];
        step.d_prime = w;

        const double prev = d_acc;
        d_acc = prev + w;
        h_acc.noalias() += (1.0 - w) * h.row(t).transpose();
        if (d_acc > cfg.beta) {
            fired.push_back(h_acc);
            h_acc = h.row(t).transpose();
            step.fired = true;
            step.d_t1 = cfg.beta - prev;
            step.d_t2 = w - step.d_t1;
            d_acc = step.d_t2;
            out.marks[t] = 1;
            out.boundaries.push_back(t);
        }
        step.d_acc = d_acc;
    }
    fired.push_back(h_acc);
    out.final_acc = d_acc;

    out.embeddings.resize(static_cast<Eigen::Index>(fired.size()), h.cols());
    for (std::size_t u = 0; u < fired.size(); ++u) out.embeddings.row(static_cast<Eigen::Index>(u)) = fired[u].transpose();
    return out;
}

DcifGrads dcif_backward(const Matrix& h, const Vector& d_prime, const DcifConfig& cfg, const FiredOutput& fired,
                        const Matrix& d_embeddings) {
    const int rows = static_cast<int>(h.rows());
    if (d_embeddings.rows() != fired.embeddings.rows() || d_embeddings.cols() != h.cols())
        throw ArgumentError("dcif_backward: embedding gradient shape mismatch");
    DcifGrads g{Matrix::Zero(rows, h.cols()), Vector::Zero(rows)};
    if (cfg.init == IntegrationInit::first_frame) g.h.row(0) += d_embeddings.row(0);
    int open = 0;  // embedding currently being integrated
    for (int t = 0; t < rows; ++t) {
        const auto de = d_embeddings.row(open);
        g.h.row(t) += (1.0 - d_prime(t)) * de;
        g.d_prime(t) -= h.row(t).dot(de);
        if (fired.marks[t]) {
            ++open;
            g.h.row(t) += d_embeddings.row(open);
        }
    }
    return g;
}

std::vector<double> marks_to_frame_scores(const std::vector<int>& marks, int factor, int num_frames) {
    if (factor < 1 || num_frames < 1) throw ArgumentError("marks_to_frame_scores: factor and T must be positive");
    if (static_cast<int>(marks.size()) != ceil_div(num_frames, factor))
        throw ArgumentError("marks_to_frame_scores: T' != ceil(T / D)");
    std::vector<double> scores(num_frames, 0.0);
    for (std::size_t t = 0; t < marks.size(); ++t) {
        if (marks[t]) scores[std::min(static_cast<int>(t) * factor + factor - 1, num_frames - 1)] = 1.0;
    }
    return scores;
}

}  // namespace scd
