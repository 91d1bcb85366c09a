#pragma once

#include <cmath>
#include <vector>

#include "mow/rng.hpp"
#include "mow/tape.hpp"

namespace mow {

// Latent batch split into frozen history (plain constants, never on the
// gradient path) and live rows attached to the tape.
struct LatentSample {
    Matrix frozen;          // r x D
    std::vector<Var> live;  // each a D x 1 tape node

    Eigen::Index dim() const {
        if (frozen.rows() > 0) return frozen.cols();
        if (!live.empty()) return live.front().tape->value(live.front()).rows();
        return 0;
    }
    Eigen::Index total_rows() const {
        return frozen.rows() + static_cast<Eigen::Index>(live.size());
    }
};

enum class DistanceKind { mmd_imq, cramer_wold, sliced_wasserstein };

struct DistanceSpec {
    DistanceKind kind = DistanceKind::mmd_imq;
    double kernel_scale = 0.0;  // IMQ C; <=0 resolves to 2*D
    double gamma = 0.0;         // CW bandwidth; <=0 resolves to Silverman
    int n_directions = 50;      // CW and SW projection count
};

inline double silverman_gamma(Eigen::Index n) {
    return std::pow(4.0 / (3.0 * static_cast<double>(n)), 0.4);
}
inline double imq_default_scale(Eigen::Index dim) { return 2.0 * static_cast<double>(dim); }
inline bool needs_directions(DistanceKind kind) { return kind != DistanceKind::mmd_imq; }

// MMD estimator with the inverse multiquadric kernel C/(C+|a-b|^2); both
// self terms exclude the diagonal, the cross term runs over all pairs.
Var mmd_imq(Tape& tape, const LatentSample& Z, const Matrix& prior, double C);

// Monte-Carlo sliced Cramer-Wold distance to N(0, I): mean over unit
// directions of the squared L2 distance between the gamma-smoothed
// projected sample density and the smoothed projected prior.
Var cramer_wold_mc(Tape& tape, const LatentSample& Z, const Matrix& dirs, double gamma);

// Mean over directions of the squared 1-d 2-Wasserstein distance between
// projected sample and projected prior (order statistics paired after a
// stable sort).
Var sliced_wasserstein(Tape& tape, const LatentSample& Z, const Matrix& prior,
                       const Matrix& dirs);

// Dispatch on spec.kind with auto-resolved hyperparameters.
Var distance_term(Tape& tape, const DistanceSpec& spec, const LatentSample& Z,
                  const Matrix& prior, const Matrix& dirs);

// Value-only evaluation (every row frozen).
double distance_value(const DistanceSpec& spec, const Matrix& Z, const Matrix& prior,
                      const Matrix& dirs);
double mmd_imq_value(const Matrix& Z, const Matrix& prior, double C);
double cramer_wold_mc_value(const Matrix& Z, const Matrix& dirs, double gamma);
double sliced_wasserstein_value(const Matrix& Z, const Matrix& prior, const Matrix& dirs);

// Rows i.i.d. uniform on the unit sphere in R^dim.
Matrix sample_unit_directions(int count, int dim, Rng& rng);

// Rows i.i.d. N(0, I_dim).
Matrix sample_gaussian(int count, int dim, Rng& rng);

}  // namespace mow
