#pragma once

#include "scd/common.hpp"

namespace scd {

struct DifferNetConfig {
    int hidden = 512;
    int history_frames = 2;  // l, in encoded frames
};

struct DifferNetParams {
    Matrix w1;  // 2H x hidden
    Matrix b1;  // 1 x hidden
    Matrix w2;  // hidden x 1
    Matrix b2;  // 1 x 1
};

DifferNetParams init_differnet(const DifferNetConfig& cfg, int embed_dim, Rng& rng);
DifferNetParams zeros_like(const DifferNetParams& p);
void append_tensors(DifferNetParams& p, const std::string& prefix, TensorList& out);

// o1 = h_t minus the mean of up to l preceding frames (t is 0-based). Frame 0
// has no history and yields the zero vector.
Vector history_mean_diff(const Matrix& h, int t, int l);

struct DifferNetTape {
    Matrix input;   // T' x 2H, rows [o1; h_t]
    Matrix pre;     // T' x hidden
    Matrix hidden;  // T' x hidden
    Vector raw;     // o2 before clamping
};

// d_t = min(max(o2, 0), 1) for every encoded frame.
Vector difference_scores(const Matrix& h, const DifferNetConfig& cfg, const DifferNetParams& params,
                         DifferNetTape* tape = nullptr);

// Gradient with respect to h; parameter gradients are accumulated into grads.
// The clamp passes gradient only strictly inside (0, 1). With through_floor
// set, frames clamped at 0 pass it too; a window whose scores are all zero
// has no other way back.
Matrix difference_scores_backward(const Matrix& h, const DifferNetConfig& cfg, const DifferNetParams& params,
                                  const DifferNetTape& tape, const Vector& d_grad, DifferNetParams& grads,
                                  bool through_floor = false);

struct ScaledScores {
    Vector scaled;
    double kappa = 0.0;
    double sum = 0.0;  // sum of the unscaled scores
    bool applied = false;
};

// Training-time rescaling: kappa = (U - 1 + margin) / sum(d), d' = kappa * d.
// U == 1 yields an all-zero d' with kappa = 0. Throws DegenerateError when
// sum(d) == 0 and U > 1.
ScaledScores scale_scores(const Vector& d, int num_segments, double margin = 0.0);

// Gradient of d' = kappa(d) * d with respect to d.
Vector scale_scores_backward(const Vector& d, const ScaledScores& s, const Vector& scaled_grad);

}  // namespace scd
