#pragma once

#include <vector>

#include "mow/mow_optimizer.hpp"

namespace mow {

// Time-stamped parameter path. Snapshots are affine-interpolated between
// stored times; all compared trajectories share thetas[0].
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> thetas;
    double oracle_se_max = 0.0;  // only set on gradient-flow paths

    Vector at(double t) const;
    double end_time() const { return times.empty() ? 0.0 : times.back(); }
};

enum class FlowIntegrator { euler, heun };

// Small fixed problem for probing the continuous-time limit of the
// optimizer: the flow field is -(k/n) times the Monte-Carlo estimate of the
// expected full-batch cost gradient.
struct FlowProblem {
    Dataset dataset;
    NetSpec net;
    MowConfig base;      // n, k, lambda, distance; recon term summed, not averaged
    double T = 0.5;      // horizon in time units (one optimizer step = eta)
    int oracle_samples = 4096;
    double flow_dt = 5e-4;
    FlowIntegrator integrator = FlowIntegrator::euler;
    uint64_t theta_seed = 42;
    uint64_t oracle_seed = 1234;

    void validate(double eta_min) const;
};

// 16 points from a two-component Gaussian mixture in the plane, linear
// encoder to one latent dimension, linear decoder, MMD term.
FlowProblem default_toy_problem();

ParamVector initial_theta(const FlowProblem& problem);

struct OracleGradient {
    Vector grad;       // Monte-Carlo mean of the full-cost gradient
    Vector std_error;  // per-coordinate standard error of that mean
};

OracleGradient expected_cost_gradient(const Vector& theta_flat, const FlowProblem& problem,
                                      Rng& rng);

Trajectory integrate_gradient_flow(const Vector& theta0, const FlowProblem& problem);

Trajectory run_mow_trajectory(const Vector& theta0, const FlowProblem& problem, double eta,
                              uint64_t seed);

struct ConvergenceReport {
    struct Row {
        double eta = 0.0;
        double sup_deviation = 0.0;
        double endpoint_deviation = 0.0;
        int seeds = 0;
        double oracle_se_max = 0.0;
    };
    std::vector<Row> rows;  // sorted by eta, largest first
    bool monotone = false;  // sup_deviation strictly decreasing down the rows
};

// Seed-averaged MoW paths against the flow oracle for each step size; the
// report flags whether the sup-norm deviation shrinks as eta does.
ConvergenceReport convergence_study(const FlowProblem& problem, std::vector<double> etas,
                                    int seeds);

void write_convergence_csv(const ConvergenceReport& report, std::ostream& out);

}  // namespace mow
