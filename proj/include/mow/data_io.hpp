#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mow/param_vector.hpp"
#include "mow/rng.hpp"

namespace mow {

struct Dataset {
    Matrix examples;  // count x N
    std::string name;
    double lo = 0.0, hi = 1.0;  // declared value range

    Eigen::Index count() const { return examples.rows(); }
    Eigen::Index dim() const { return examples.cols(); }
};

enum class SyntheticKind { gauss_mix, ring, grid_images };

struct SyntheticParams {
    int components = 2;          // gauss_mix
    double center_radius = 3.0;  // gauss_mix component centers sit on this circle
    double variance = 0.25;      // gauss_mix isotropic variance
    double noise = 0.05;         // ring radial noise
};

Dataset make_synthetic(SyntheticKind kind, int size, const SyntheticParams& params,
                       uint64_t seed);

// IDX image tensors (big-endian headers, u8 payload), pixels scaled to [0,1].
Dataset load_idx(const std::string& path);
void write_idx(const Dataset& data, const std::string& path);

// Infinite queue drawing i.i.d. uniformly with replacement; the rng is
// counter-based so (seed, counter, draws_served) is the complete state.
class DataQueue {
public:
    DataQueue(const Dataset& data, Rng rng) : data_(&data), rng_(rng) {}

    struct Draw {
        Matrix rows;                   // count x N
        std::vector<int64_t> indices;  // dataset row of each draw
    };
    Draw next(int count);

    const Dataset& dataset() const { return *data_; }
    const Rng& rng() const { return rng_; }
    int64_t draws_served() const { return draws_served_; }
    void restore(Rng rng, int64_t draws_served) {
        rng_ = rng;
        draws_served_ = draws_served;
    }

private:
    const Dataset* data_;
    Rng rng_;
    int64_t draws_served_ = 0;
};

}  // namespace mow
