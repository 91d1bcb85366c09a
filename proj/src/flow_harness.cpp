#include "mow/flow_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace mow {

namespace {
constexpr uint64_t kFlowQueueTag = 0x464C4F57ull;

int64_t steps_for(double T, double eta) {
    return static_cast<int64_t>(std::floor(T / eta + 1e-9));
}
}  // namespace

Vector Trajectory::at(double t) const {
    if (times.empty()) throw ShapeError("Trajectory::at: empty trajectory");
    if (t <= times.front()) return thetas.front();
    if (t >= times.back()) return thetas.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const double span = times[hi] - times[lo];
    const double w = span > 0.0 ? (t - times[lo]) / span : 0.0;
    return (1.0 - w) * thetas[lo] + w * thetas[hi];
}

void FlowProblem::validate(double eta_min) const {
    if (T <= 0.0) throw ConfigError("FlowProblem: horizon must be positive");
    if (oracle_samples < 1000) throw ConfigError("FlowProblem: oracle_samples must be >= 1000");
    if (flow_dt <= 0.0 || flow_dt > eta_min / 10.0)
        throw ConfigError("FlowProblem: flow_dt must be positive and <= eta_min/10");
}

FlowProblem default_toy_problem() {
    FlowProblem p;
    SyntheticParams sp;
    sp.components = 2;
    sp.center_radius = 3.0;
    sp.variance = 0.25;
    p.dataset = make_synthetic(SyntheticKind::gauss_mix, 16, sp, 7);
    p.net.input_dim = 2;
    p.net.latent_dim = 1;
    p.net.output_activation = Activation::linear;
    p.base.n = 4;
    p.base.k = 1;
    p.base.lambda = 0.1;
    p.base.distance.kind = DistanceKind::mmd_imq;
    p.base.rule = UpdateRule::sgd;
    p.base.recon_reduction = ReconReduction::sum;  // Eq-style sum keeps the k/n factor exact
    return p;
}

ParamVector initial_theta(const FlowProblem& problem) {
    Rng rng = Rng::derive(problem.theta_seed, 0x54483041ull);
    return init_params(problem.net, rng);
}

OracleGradient expected_cost_gradient(const Vector& theta_flat, const FlowProblem& problem,
                                      Rng& rng) {
    const int n = problem.base.n;
    const int M = problem.oracle_samples;
    const ParamVector theta = params_from_flat(problem.net, theta_flat);
    CostConfig cost = problem.base.cost_config();
    cost.recon_reduction = ReconReduction::sum;

    // Welford accumulation keeps zero-variance cases at exactly zero.
    Vector mean = Vector::Zero(theta_flat.size());
    Vector m2 = Vector::Zero(theta_flat.size());
    std::vector<Vector> live_x(static_cast<std::size_t>(n));
    const Matrix empty_frozen(0, problem.net.latent_dim);
    for (int m = 0; m < M; ++m) {
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<Eigen::Index>(
                rng.next_below(static_cast<uint64_t>(problem.dataset.count())));
            live_x[static_cast<std::size_t>(i)] = problem.dataset.examples.row(idx).transpose();
        }
        const Matrix prior = sample_gaussian(n, problem.net.latent_dim, rng);
        Matrix dirs;
        if (needs_directions(cost.distance.kind))
            dirs = sample_unit_directions(cost.distance.n_directions, problem.net.latent_dim,
                                          rng);
        Tape tape;
        BatchCost bc = batch_cost(tape, theta, problem.net, cost, live_x, empty_frozen, prior,
                                  dirs);
        const Vector g = tape.backward(bc.cost);
        const Vector delta = g - mean;
        mean += delta / static_cast<double>(m + 1);
        m2.array() += delta.array() * (g - mean).array();
    }
    OracleGradient out;
    out.grad = mean;
    const double denom = M > 1 ? static_cast<double>(M - 1) : 1.0;
    out.std_error = (m2.array() / denom / static_cast<double>(M)).max(0.0).sqrt();
    return out;
}

Trajectory integrate_gradient_flow(const Vector& theta0, const FlowProblem& problem) {
    const double kn =
        static_cast<double>(problem.base.k) / static_cast<double>(problem.base.n);
    const auto steps = static_cast<int64_t>(std::llround(problem.T / problem.flow_dt));
    Trajectory traj;
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.thetas.reserve(static_cast<std::size_t>(steps) + 1);
    traj.times.push_back(0.0);
    traj.thetas.push_back(theta0);
    Vector theta = theta0;
    uint64_t eval = 0;
    auto field = [&](const Vector& th) {
        Rng rng = Rng::derive(problem.oracle_seed, eval++);
        OracleGradient og = expected_cost_gradient(th, problem, rng);
        traj.oracle_se_max = std::max(traj.oracle_se_max, og.std_error.maxCoeff());
        return og.grad;
    };
    const double coef = problem.flow_dt * kn;
    for (int64_t j = 0; j < steps; ++j) {
        if (problem.integrator == FlowIntegrator::euler) {
            theta -= coef * field(theta);
        } else {
            const Vector f0 = field(theta);
            const Vector predictor = theta - coef * f0;
            theta -= 0.5 * coef * (f0 + field(predictor));
        }
        traj.times.push_back(static_cast<double>(j + 1) * problem.flow_dt);
        traj.thetas.push_back(theta);
    }
    return traj;
}

Trajectory run_mow_trajectory(const Vector& theta0, const FlowProblem& problem, double eta,
                              uint64_t seed) {
    if (eta <= 0.0) throw ConfigError("run_mow_trajectory: eta must be positive");
    MowConfig cfg = problem.base;
    cfg.eta = eta;
    cfg.seed = seed;
    cfg.steps = steps_for(problem.T, eta);
    cfg.recon_reduction = ReconReduction::sum;
    DataQueue queue(problem.dataset, Rng::derive(seed, kFlowQueueTag));
    MowState state = mow_init(params_from_flat(problem.net, theta0), queue, cfg, problem.net);
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.thetas.push_back(theta0);
    for (int64_t l = 0; l < cfg.steps; ++l) {
        mow_step(state, queue, cfg, problem.net);
        traj.times.push_back(static_cast<double>(l + 1) * eta);
        traj.thetas.push_back(state.theta.values);
    }
    return traj;
}

ConvergenceReport convergence_study(const FlowProblem& problem, std::vector<double> etas,
                                    int seeds) {
    std::sort(etas.begin(), etas.end(), std::greater<>());
    if (etas.size() < 3)
        throw ConfigError("convergence_study: need at least three step sizes");
    for (std::size_t i = 1; i < etas.size(); ++i)
        if (etas[i] > etas[i - 1] / 2.0 + 1e-15)
            throw ConfigError("convergence_study: each eta must be at most half the previous");
    if (seeds < 1) throw ConfigError("convergence_study: need at least one seed");
    problem.validate(etas.back());

    const ParamVector theta0 = initial_theta(problem);
    const Trajectory flow = integrate_gradient_flow(theta0.values, problem);

    ConvergenceReport report;
    for (const double eta : etas) {
        const int64_t steps = steps_for(problem.T, eta);
        std::vector<Vector> mean_path(static_cast<std::size_t>(steps) + 1,
                                      Vector::Zero(theta0.size()));
        for (int s = 0; s < seeds; ++s) {
            const Trajectory traj =
                run_mow_trajectory(theta0.values, problem, eta, 1000 + static_cast<uint64_t>(s));
            for (std::size_t j = 0; j < mean_path.size(); ++j) mean_path[j] += traj.thetas[j];
        }
        ConvergenceReport::Row row;
        row.eta = eta;
        row.seeds = seeds;
        row.oracle_se_max = flow.oracle_se_max;
        for (std::size_t j = 0; j < mean_path.size(); ++j) {
            mean_path[j] /= static_cast<double>(seeds);
            const double t = static_cast<double>(j) * eta;
            const double dev = (mean_path[j] - flow.at(t)).norm();
            row.sup_deviation = std::max(row.sup_deviation, dev);
            if (j + 1 == mean_path.size()) row.endpoint_deviation = dev;
        }
        report.rows.push_back(row);
    }
    report.monotone = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (!(report.rows[i].sup_deviation < report.rows[i - 1].sup_deviation))
            report.monotone = false;
    return report;
}

void write_convergence_csv(const ConvergenceReport& report, std::ostream& out) {
    out << "eta,sup_deviation,endpoint_deviation,seeds,oracle_se_max\n";
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d,%.17g\n", r.eta,
                      r.sup_deviation, r.endpoint_deviation, r.seeds, r.oracle_se_max);
        out << buf;
    }
}

}  // namespace mow
