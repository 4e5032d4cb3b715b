#pragma once

#include "scd/common.hpp"

#include <string>
#include <vector>

namespace scd {

enum class IntegrationInit { first_frame, zero };

IntegrationInit parse_integration_init(const std::string& s);
std::string to_string(IntegrationInit init);

struct DcifConfig {
    double beta = 1.0;
    IntegrationInit init = IntegrationInit::first_frame;
};

// One row of the integrate-and-fire trace. d_acc is the accumulator after the
// step (after the reset when the step fired); d_t1/d_t2 are only meaningful on
// firing steps.
struct DcifStep {
    double d_prime = 0.0;
    double d_acc = 0.0;
    bool fired = false;
    double d_t1 = 0.0;
    double d_t2 = 0.0;
};

struct FiredOutput {
    Matrix embeddings;           // U_pred x H, unnormalized
    std::vector<int> marks;      // length T', 1 where a fire happened
    std::vector<int> boundaries; // encoded-frame indices of the fires
    std::vector<DcifStep> trace;
    double final_acc = 0.0;

    int fired_count() const { return static_cast<int>(boundaries.size()); }
};

// Accumulates d' frame by frame, integrating (1 - d'_t) * h_t, and fires when
// the accumulator strictly exceeds beta. The firing frame's share is split so
// each fire consumes exactly beta of accumulated mass. The integrated state
// left after the last frame is emitted as the final embedding.
FiredOutput dcif_forward(const Matrix& h, const Vector& d_prime, const DcifConfig& cfg);

struct DcifGrads {
    Matrix h;
    Vector d_prime;
};

// Gradients of the emitted embeddings along the realized firing pattern. The
// fire decisions themselves carry no gradient.
DcifGrads dcif_backward(const Matrix& h, const Vector& d_prime, const DcifConfig& cfg, const FiredOutput& fired,
                        const Matrix& d_embeddings);

// Places each mark on the last input frame covered by its encoded frame.
std::vector<double> marks_to_frame_scores(const std::vector<int>& marks, int factor, int num_frames);

}  // namespace scd
