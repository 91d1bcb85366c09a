#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mow/autoencoder.hpp"
#include "mow/data_io.hpp"

namespace mow {

// Ring of n-k historical latent codes, oldest first. Slots keep the encoder
// output exactly as computed at insertion together with provenance tags;
// entries are never re-encoded under later parameters.
class LatentBuffer {
public:
    struct Slot {
        Vector z;
        int64_t example_index = -1;  // dataset row the code came from
        int64_t generation = -1;     // step counter of the encoding parameters
    };

    LatentBuffer() = default;
    explicit LatentBuffer(int capacity) : capacity_(capacity) {
        if (capacity < 0) throw ConfigError("LatentBuffer: negative capacity");
    }

    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(slots_.size()); }
    bool full() const { return size() == capacity_; }

    void push(Slot slot);
    const Slot& oldest(int i) const;  // i-th slot in consumption order

    // Rows in consumption order, oldest first.
    Matrix as_matrix(Eigen::Index dim) const;

    // Serialization access.
    std::vector<Slot> ordered_slots() const;
    void assign_ordered(std::vector<Slot> slots, int capacity);

private:
    std::vector<Slot> slots_;
    std::size_t head_ = 0;  // index of the oldest slot once full
    int capacity_ = 0;
};

enum class UpdateRule { sgd, adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct MowConfig {
    int n = 64;      // window size seen by the distribution term
    int k = 64;      // real batch size read per step
    double eta = 1e-2;
    double lambda = 1.0;
    DistanceSpec distance;
    UpdateRule rule = UpdateRule::sgd;
    AdamParams adam;
    ReconReduction recon_reduction = ReconReduction::mean;
    SelectionMetric selection = SelectionMetric::rec_plus_log_distance;
    int64_t steps = 0;
    uint64_t seed = 0;

    void validate() const {
        if (n < 1 || k < 1 || k > n) throw ConfigError("MowConfig: need 1 <= k <= n");
        if (eta < 0.0) throw ConfigError("MowConfig: eta must be non-negative");
        if (lambda < 0.0) throw ConfigError("MowConfig: lambda must be non-negative");
        if (steps < 0) throw ConfigError("MowConfig: steps must be non-negative");
    }
    CostConfig cost_config() const {
        return CostConfig{lambda, distance, selection, recon_reduction};
    }
};

struct OptMoments {
    Vector m, v;
    int64_t t = 0;
    bool empty() const { return m.size() == 0; }
};

// Complete resumable training state: after l steps the run has consumed
// n - k + l*k examples, all of it reproducible from (theta, buffer, l,
// moments, rng) plus the queue state.
struct MowState {
    ParamVector theta;
    LatentBuffer buffer;
    int64_t l = 0;
    OptMoments moments;
    Rng rng;

    int64_t examples_consumed(const MowConfig& cfg) const {
        return static_cast<int64_t>(cfg.n - cfg.k) + l * cfg.k;
    }
};

// rng stream tags; a run's queue, model and init streams derive from
// (cfg.seed, tag) so independent reimplementations can share them exactly
inline constexpr uint64_t kQueueStreamTag = 0x51554555ull;
inline constexpr uint64_t kModelStreamTag = 0x4D4F444Cull;
inline constexpr uint64_t kInitStreamTag = 0x494E4954ull;
inline constexpr uint64_t kEvalStreamTag = 0x4556414Cull;

void sgd_update(Vector& theta, const Vector& grad, double eta);
void adam_update(Vector& theta, const Vector& grad, OptMoments& moments, double eta,
                 const AdamParams& p);

MowState mow_init(ParamVector theta0, DataQueue& queue, const MowConfig& cfg,
                  const NetSpec& net);

struct StepInfo {
    double cost = 0.0;
    double recon = 0.0;
    double distance = 0.0;
    Tape::Stats tape_stats;
};

StepInfo mow_step(MowState& state, DataQueue& queue, const MowConfig& cfg,
                  const NetSpec& net);

// Raised when a step produces a non-finite cost or gradient; carries the
// step index so callers can snapshot the last good state.
struct TrainingAbort : NumericError {
    TrainingAbort(const std::string& msg, int64_t step) : NumericError(msg), step(step) {}
    int64_t step;
};

struct MetricsRow {
    int64_t step = 0;
    int64_t examples_seen = 0;
    double live_rec_error = 0.0;
    double distance_value = 0.0;
    double train_cost = 0.0;
    double test_rec_error = 0.0;
    double test_distance = 0.0;
    double selection_metric = 0.0;
    double wall_ms = 0.0;
};

struct TrainOptions {
    int64_t eval_interval = 100;
    const Dataset* test = nullptr;
};

struct TrainResult {
    std::vector<MetricsRow> log;
    MowState state;
    Rng queue_rng;
    int64_t queue_draws = 0;
    bool aborted = false;  // a step hit non-finite numbers; state is the last good one
    std::string abort_message;
};

// Full-test-set reconstruction error and distance of the encoded test set
// against a fresh prior sample; the eval rng is a pure function of
// (seed, step) so evaluation never perturbs the training stream.
MetricsRow evaluate_metrics(const MowState& state, const MowConfig& cfg, const NetSpec& net,
                            const Dataset* test, const StepInfo& info, double wall_ms);

TrainResult run_training(const MowConfig& cfg, const NetSpec& net, const Dataset& train,
                         const TrainOptions& opts);

// Resume path: continue from an existing state/queue until cfg.steps.
TrainResult continue_training(MowState state, DataQueue& queue, const MowConfig& cfg,
                              const NetSpec& net, const TrainOptions& opts);

}  // namespace mow
