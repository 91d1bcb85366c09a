#include "mow/mow_optimizer.hpp"

#include <chrono>
#include <cmath>

namespace mow {

void LatentBuffer::push(Slot slot) {
    if (capacity_ == 0) return;  // k == n: nothing is ever buffered
    if (size() < capacity_) {
        slots_.push_back(std::move(slot));
        return;
    }
    slots_[head_] = std::move(slot);
    head_ = (head_ + 1) % slots_.size();
}

const LatentBuffer::Slot& LatentBuffer::oldest(int i) const {
    return slots_[(head_ + static_cast<std::size_t>(i)) % slots_.size()];
}

Matrix LatentBuffer::as_matrix(Eigen::Index dim) const {
    Matrix m(size(), dim);
    for (int i = 0; i < size(); ++i) m.row(i) = oldest(i).z.transpose();
    return m;
}

std::vector<LatentBuffer::Slot> LatentBuffer::ordered_slots() const {
    std::vector<Slot> out;
    out.reserve(slots_.size());
    for (int i = 0; i < size(); ++i) out.push_back(oldest(i));
    return out;
}

void LatentBuffer::assign_ordered(std::vector<Slot> slots, int capacity) {
    if (static_cast<int>(slots.size()) > capacity)
        throw ShapeError("LatentBuffer: more slots than capacity");
    slots_ = std::move(slots);
    head_ = 0;
    capacity_ = capacity;
}

void sgd_update(Vector& theta, const Vector& grad, double eta) {
    theta -= eta * grad;
}

void adam_update(Vector& theta, const Vector& grad, OptMoments& moments, double eta,
                 const AdamParams& p) {
    if (!(p.beta1 > 0.0 && p.beta1 < 1.0 && p.beta2 > 0.0 && p.beta2 < 1.0))
        throw ConfigError("adam_update: betas must lie in (0,1)");
    if (moments.empty()) {
        moments.m = Vector::Zero(theta.size());
        moments.v = Vector::Zero(theta.size());
    }
    moments.t += 1;
    moments.m = p.beta1 * moments.m + (1.0 - p.beta1) * grad;
    moments.v = p.beta2 * moments.v.array() + (1.0 - p.beta2) * grad.array().square();
    const double mc = 1.0 - std::pow(p.beta1, static_cast<double>(moments.t));
    const double vc = 1.0 - std::pow(p.beta2, static_cast<double>(moments.t));
    theta.array() -=
        eta * (moments.m.array() / mc) / ((moments.v.array() / vc).sqrt() + p.eps);
}

MowState mow_init(ParamVector theta0, DataQueue& queue, const MowConfig& cfg,
                  const NetSpec& net) {
    cfg.validate();
    net.validate();
    MowState state;
    state.theta = std::move(theta0);
    state.buffer = LatentBuffer(cfg.n - cfg.k);
    state.l = 0;
    state.rng = Rng::derive(cfg.seed, kModelStreamTag);
    if (cfg.n > cfg.k) {
        auto draw = queue.next(cfg.n - cfg.k);
        for (int i = 0; i < cfg.n - cfg.k; ++i)
            state.buffer.push({encode_value(state.theta, net, draw.rows.row(i).transpose()),
                               draw.indices[static_cast<std::size_t>(i)], 0});
    }
    return state;
}

StepInfo mow_step(MowState& state, DataQueue& queue, const MowConfig& cfg,
                  const NetSpec& net) {
    const int k = cfg.k;
    auto draw = queue.next(k);
    const Matrix prior = sample_gaussian(cfg.n, net.latent_dim, state.rng);
    Matrix dirs;
    if (needs_directions(cfg.distance.kind))
        dirs = sample_unit_directions(cfg.distance.n_directions, net.latent_dim, state.rng);

    std::vector<Vector> live_x;
    live_x.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) live_x.push_back(draw.rows.row(i).transpose());

    StepInfo info;
    Vector grad;
    try {
        Tape tape;
        const Matrix frozen = state.buffer.as_matrix(net.latent_dim);
        BatchCost bc =
            batch_cost(tape, state.theta, net, cfg.cost_config(), live_x, frozen, prior, dirs);
        info.cost = tape.scalar_value(bc.cost);
        info.recon = tape.scalar_value(bc.recon);
        info.distance = bc.distance.valid() ? tape.scalar_value(bc.distance) : 0.0;
        grad = tape.backward(bc.cost);
        info.tape_stats = tape.stats();
    } catch (const NumericError& e) {
        throw TrainingAbort(std::string("step ") + std::to_string(state.l + 1) + ": " +
                                e.what(),
                            state.l + 1);
    }
    if (!grad.allFinite())
        throw TrainingAbort("step " + std::to_string(state.l + 1) + ": non-finite gradient",
                            state.l + 1);

    if (cfg.rule == UpdateRule::sgd)
        sgd_update(state.theta.values, grad, cfg.eta);
    else
        adam_update(state.theta.values, grad, state.moments, cfg.eta, cfg.adam);

    // Window slide: the k fresh examples enter the buffer encoded under the
    // updated parameters, evicting the k oldest entries.
    for (int i = 0; i < k; ++i)
        state.buffer.push({encode_value(state.theta, net, draw.rows.row(i).transpose()),
                           draw.indices[static_cast<std::size_t>(i)], state.l + 1});
    state.l += 1;
    return info;
}

MetricsRow evaluate_metrics(const MowState& state, const MowConfig& cfg, const NetSpec& net,
                            const Dataset* test, const StepInfo& info, double wall_ms) {
    MetricsRow row;
    row.step = state.l;
    row.examples_seen = state.examples_consumed(cfg);
    row.live_rec_error = info.recon;
    row.distance_value = info.distance;
    row.train_cost = info.cost;
    row.wall_ms = wall_ms;
    if (test != nullptr && test->count() > 0) {
        Rng eval_rng = Rng::derive(cfg.seed ^ kEvalStreamTag, static_cast<uint64_t>(state.l));
        const auto count = test->count();
        Matrix z(count, net.latent_dim);
        double rec = 0.0;
        for (Eigen::Index i = 0; i < count; ++i) {
            const Vector x = test->examples.row(i).transpose();
            const Vector zi = encode_value(state.theta, net, x);
            z.row(i) = zi.transpose();
            rec += (decode_value(state.theta, net, zi) - x).squaredNorm();
        }
        row.test_rec_error = rec / static_cast<double>(count);
        const Matrix prior =
            sample_gaussian(static_cast<int>(count), net.latent_dim, eval_rng);
        Matrix dirs;
        if (needs_directions(cfg.distance.kind))
            dirs = sample_unit_directions(cfg.distance.n_directions, net.latent_dim, eval_rng);
        row.test_distance = distance_value(cfg.distance, z, prior, dirs);
        row.selection_metric = selection_metric_value(cfg.selection, cfg.lambda,
                                                      row.test_rec_error, row.test_distance);
    } else {
        row.test_rec_error = info.recon;
        row.test_distance = info.distance;
        row.selection_metric =
            selection_metric_value(cfg.selection, cfg.lambda, info.recon, info.distance);
    }
    return row;
}

TrainResult continue_training(MowState state, DataQueue& queue, const MowConfig& cfg,
                              const NetSpec& net, const TrainOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult out;
    const int64_t interval = opts.eval_interval > 0 ? opts.eval_interval : 1;
    while (state.l < cfg.steps) {
        StepInfo info;
        try {
            info = mow_step(state, queue, cfg, net);
        } catch (const TrainingAbort& e) {
            out.aborted = true;
            out.abort_message = e.what();
            break;
        }
        if (state.l % interval == 0 || state.l == cfg.steps) {
            const double wall =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            out.log.push_back(evaluate_metrics(state, cfg, net, opts.test, info, wall));
        }
    }
    out.state = std::move(state);
    out.queue_rng = queue.rng();
    out.queue_draws = queue.draws_served();
    return out;
}

TrainResult run_training(const MowConfig& cfg, const NetSpec& net, const Dataset& train,
                         const TrainOptions& opts) {
    cfg.validate();
    if (train.count() < 1) throw ConfigError("run_training: empty dataset");
    DataQueue queue(train, Rng::derive(cfg.seed, kQueueStreamTag));
    Rng init_rng = Rng::derive(cfg.seed, kInitStreamTag);
    MowState state = mow_init(init_params(net, init_rng), queue, cfg, net);
    return continue_training(std::move(state), queue, cfg, net, opts);
}

}  // namespace mow
