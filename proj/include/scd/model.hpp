#pragma once

#include "scd/config.hpp"
#include "scd/dcif.hpp"
#include "scd/differnet.hpp"
#include "scd/encoder.hpp"
#include "scd/head.hpp"
#include "scd/inference.hpp"

namespace scd {

// Relative slack added to the scaling target U - 1. Firing needs the
// accumulator to strictly exceed beta, so with a sum of exactly U - 1 the last
// change could never fire; the slack keeps |sum(d') - (U - 1)| far below 1e-6.
inline constexpr double kScaleSlack = 1e-9;

// Fully resolved model hyper-parameters (no "derive from data" placeholders).
struct ModelSpec {
    EncoderConfig encoder;
    DifferNetConfig differnet;
    DcifConfig dcif;
    HeadConfig head;
    int input_dim = 0;
    double frame_shift_s = 0.01;
};

ModelSpec resolve_spec(const RunConfig& cfg, int input_dim, double frame_shift_s, int num_speakers);
nlohmann::json spec_to_json(const ModelSpec& spec);

struct SeqScdParams {
    EncoderParams encoder;
    DifferNetParams differnet;
    DecoderParams decoder;
};

SeqScdParams init_seqscd(const ModelSpec& spec, Rng& rng);
SeqScdParams zeros_like(const SeqScdParams& p);
TensorList tensors(SeqScdParams& p);

struct WindowOutcome {
    LossBreakdown loss;
    int segments = 0;
    int fired = 0;          // number of fires (embeddings = fired + 1)
    bool aligned = false;   // embeddings == U
    bool degenerate = false;  // sum(d) == 0 with U > 1, scaling skipped
};

// Loss of one training window and, when grads is non-null, its gradient.
// Windows whose embedding count differs from U contribute only the quantity
// term; with scaling disabled and lambda2 == 0 nothing constrains the fire
// count and AlignmentError is thrown instead.
WindowOutcome seqscd_window(const ModelSpec& spec, const SeqScdParams& params, const TrainingExample& example,
                            bool use_scaling, SeqScdParams* grads);

struct SeqScdOutput {
    Matrix encoded;
    Vector d;
    FiredOutput fired;
    Matrix probs;
};

// Inference pass: no scaling, d' = d.
SeqScdOutput seqscd_forward(const ModelSpec& spec, const SeqScdParams& params, const Matrix& x);

// Frame-level binary change baseline on the same encoder.
struct BaselineParams {
    EncoderParams encoder;
    Matrix w;  // H x 1
    Matrix b;  // 1 x 1
};

BaselineParams init_baseline(const ModelSpec& spec, Rng& rng);
BaselineParams zeros_like(const BaselineParams& p);
TensorList tensors(BaselineParams& p);

// Mean BCE between per-encoded-frame change probabilities and the fraction of
// collar-positive input frames inside each encoded frame.
double baseline_window(const ModelSpec& spec, const BaselineParams& params, const TrainingExample& example,
                       double collar_s, BaselineParams* grads);

Vector baseline_forward(const ModelSpec& spec, const BaselineParams& params, const Matrix& x);

class SeqScdScorer : public FrameScorer {
public:
    SeqScdScorer(const ModelSpec& spec, const SeqScdParams& params, ScoreSource source)
        : spec_(spec), params_(params), source_(source) {}
    std::vector<double> score_window(const Matrix& x) const override;
    int min_frames() const override { return spec_.encoder.downsampling_factor; }

private:
    const ModelSpec& spec_;
    const SeqScdParams& params_;
    ScoreSource source_;
};

class BaselineScorer : public FrameScorer {
public:
    BaselineScorer(const ModelSpec& spec, const BaselineParams& params) : spec_(spec), params_(params) {}
    std::vector<double> score_window(const Matrix& x) const override;
    int min_frames() const override { return spec_.encoder.downsampling_factor; }

private:
    const ModelSpec& spec_;
    const BaselineParams& params_;
};

}  // namespace scd
