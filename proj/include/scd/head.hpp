#pragma once

#include "scd/common.hpp"
#include "scd/synthdata.hpp"

#include <vector>

namespace scd {

struct HeadConfig {
    double eta = 12.0;
    int decoder_hidden = 256;
    int num_speakers = 0;  // C; 0 means "take it from the training catalog"
    double alpha = 0.25;
    double gamma = 2.0;
    double lambda1 = 50.0;
    double lambda2 = 1.0;
    bool use_length_norm = true;
    bool use_focal = true;
};

void validate(const HeadConfig& cfg);

// Probability clipping applied before every logarithm.
inline constexpr double kProbEps = 1e-7;

struct DecoderParams {
    Matrix w1;  // H x hidden
    Matrix b1;  // 1 x hidden
    Matrix w2;  // hidden x C
    Matrix b2;  // 1 x C
};

DecoderParams init_decoder(const HeadConfig& cfg, int embed_dim, Rng& rng);
DecoderParams zeros_like(const DecoderParams& p);
void append_tensors(DecoderParams& p, const std::string& prefix, TensorList& out);

// eta * e / ||e||. Throws DegenerateError for the zero vector.
Vector length_normalize(const Vector& e, double eta);

// Two FC layers: ReLU hidden, sigmoid output over C speakers.
Vector decode(const Vector& e, const DecoderParams& params);

double mlfl(const Vector& p, const Vector& y, double alpha, double gamma);
// dMLFL/dp, zero where p was clipped.
Vector mlfl_grad(const Vector& p, const Vector& y, double alpha, double gamma);

// |U - 1 - sum(d)| on the unscaled difference scores.
double quantity_loss(const Vector& d, int num_segments);

// Focal parameters after the ablation toggle: plain BCE is alpha = 0.5,
// gamma = 0 with the loss doubled.
struct FocalParams {
    double alpha;
    double gamma;
    double scale;
};
FocalParams focal_params(const HeadConfig& cfg);

struct LossBreakdown {
    double total = 0.0;
    double mlfl = 0.0;      // mean over segments, before lambda1
    double quantity = 0.0;  // before lambda2
};

// lambda1 * mean_u MLFL(p_u, y_u) + lambda2 * quantity_loss(d, U). Throws
// AlignmentError when the prediction count differs from U.
LossBreakdown total_loss(const std::vector<Vector>& probs, const SpeakerIdentitySequence& targets, const Vector& d,
                         const HeadConfig& cfg);

// Forward state of normalization + decoding for a set of fired embeddings.
struct HeadTape {
    Matrix embeddings;  // input
    Vector norms;
    Matrix normalized;
    Matrix pre;
    Matrix hidden;
    Matrix probs;  // U x C
};

Matrix head_forward(const Matrix& embeddings, const HeadConfig& cfg, const DecoderParams& params,
                    HeadTape* tape = nullptr);

// Gradient of the lambda1-weighted MLFL term with respect to the embeddings;
// decoder gradients are accumulated into grads.
Matrix head_backward(const HeadConfig& cfg, const DecoderParams& params, const HeadTape& tape,
                     const SpeakerIdentitySequence& targets, DecoderParams& grads);

}  // namespace scd
