#pragma once

#include "scd/checkpoint.hpp"
#include "scd/config.hpp"
#include "scd/model.hpp"
#include "scd/synthdata.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace scd {

// Linear warm-up to `peak` over the first warmup_frac of the steps, constant
// for the next hold_frac, then linear decay to zero at `total`.
double lr_schedule(long step, long total, double peak, double warmup_frac = 0.05, double hold_frac = 0.50);

// Adaptive moment estimation, beta = (0.9, 0.999), no weight decay.
class Adam {
public:
    Adam() = default;
    explicit Adam(const TensorList& params);

    void step(const TensorList& params, const TensorList& grads, double lr);
    long steps() const { return t_; }
    void set_steps(long t) { t_ = t; }
    // Moment tensors named "adam.m.<param>" / "adam.v.<param>".
    TensorList state(const TensorList& params);

private:
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
};

// Reads every "<id>.feat" / "<id>.lab" pair in a directory, sorted by id.
std::vector<Session> load_session_dir(const std::string& dir);
void store_session(const Session& s, const std::string& dir);

// The synthetic train or dev split described by cfg.data; dev sessions
// continue the session index after the training ones.
std::vector<Session> synthesize_split(const RunConfig& cfg, bool dev);

// Sorted union of speaker ids across sessions.
SpeakerCatalog catalog_of(const std::vector<Session>& sessions);

long resolve_total_steps(const RunConfig& cfg, const std::vector<Session>& train);

struct TrainLogRow {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> mlfl;
    std::optional<double> quantity;
    std::optional<MetricReport> dev;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const TrainLogRow& row);

struct TrainHooks {
    std::function<void(const TrainLogRow&)> on_log;
    std::function<void(const Checkpoint&)> on_divergence;
    const Checkpoint* resume = nullptr;
    long log_every = 10;
};

struct TrainStats {
    long windows = 0;
    long misaligned_windows = 0;
    long degenerate_windows = 0;
    long batches = 0;
    long aligned_batches = 0;  // every window in the batch emitted exactly U embeddings
    std::vector<double> loss_curve;  // mean batch loss per step
    std::optional<MetricReport> final_dev;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainStats stats;
};

TrainResult train(const std::vector<Session>& train, const std::vector<Session>& dev, const RunConfig& cfg,
                  const TrainHooks& hooks = {});

TrainResult train_frame_baseline(const std::vector<Session>& train, const std::vector<Session>& dev,
                                 const RunConfig& cfg, const TrainHooks& hooks = {});

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_param;
    long checked = 0;
    double loss = 0.0;
};

// Fourth-order central finite differences (offsets +-eps, +-2 eps) of the
// window loss against the analytic gradient for every parameter. The relative
// error of one entry is |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-6 * max(1, |loss|)). Throws RejectedExample when a difference score,
// accumulator or DifferNet hidden unit sits within 10 * eps of a clamp, fire
// or hinge boundary, or when any perturbation changes one of those decisions.
GradCheckReport grad_check(const ModelSpec& spec, SeqScdParams params, const TrainingExample& example, double eps,
                           bool use_scaling = true);

}  // namespace scd
