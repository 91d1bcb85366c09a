#pragma once

#include <span>
#include <string>
#include <vector>

#include "mow/distances.hpp"
#include "mow/param_vector.hpp"
#include "mow/rng.hpp"
#include "mow/tape.hpp"

namespace mow {

enum class Activation { relu, sigmoid, tanh, linear };

struct LayerSpec {
    int width = 0;
    Activation act = Activation::relu;
};

// MLP encoder/decoder shapes. Hidden layers are listed explicitly; the
// projections to latent_dim (encoder) and input_dim (decoder) are implicit,
// the former linear and the latter under output_activation.
struct NetSpec {
    int input_dim = 0;
    int latent_dim = 0;
    std::vector<LayerSpec> encoder_layers;
    std::vector<LayerSpec> decoder_layers;
    Activation output_activation = Activation::sigmoid;

    void validate() const;

    // Feed-forward stack used for the image experiments: 3x200 relu encoder
    // into a 20-d latent, 2x200 relu decoder with sigmoid output.
    static NetSpec mnist_mlp(int input_dim = 784, int latent_dim = 20);
};

ParamVector init_params(const NetSpec& spec, Rng& rng);

// Rebuild the named segment structure of `spec` around a flat value vector.
ParamVector params_from_flat(const NetSpec& spec, const Vector& flat);

Var encode(Tape& tape, const ParamVector& theta, const NetSpec& spec, const Vector& x);
Var decode(Tape& tape, const ParamVector& theta, const NetSpec& spec, Var z);
Var recon_error(Tape& tape, const ParamVector& theta, const NetSpec& spec, const Vector& x);

// Gradient-free forward passes (used for buffer refills and metrics).
Vector encode_value(const ParamVector& theta, const NetSpec& spec,
                    const Eigen::Ref<const Vector>& x);
Vector decode_value(const ParamVector& theta, const NetSpec& spec,
                    const Eigen::Ref<const Vector>& z);
double recon_error_value(const ParamVector& theta, const NetSpec& spec,
                         const Eigen::Ref<const Vector>& x);

enum class SelectionMetric { cost, rec_plus_log_distance };
enum class ReconReduction { mean, sum };

struct CostConfig {
    double lambda = 1.0;
    DistanceSpec distance;
    SelectionMetric selection = SelectionMetric::rec_plus_log_distance;
    ReconReduction recon_reduction = ReconReduction::mean;
};

struct BatchCost {
    Var cost;                 // lambda * F + recon
    Var recon;                // reduced reconstruction term
    Var distance;             // invalid when lambda == 0 (F not evaluated)
    std::vector<Var> live_z;  // encoder outputs for the live examples
};

// Cost of one optimizer step: the distribution term sees frozen history plus
// the freshly encoded live examples, the reconstruction term only the live
// ones. No gradient path exists through frozen_z.
BatchCost batch_cost(Tape& tape, const ParamVector& theta, const NetSpec& spec,
                     const CostConfig& cfg, std::span<const Vector> live_x,
                     const Matrix& frozen_z, const Matrix& prior, const Matrix& dirs);

double selection_metric_value(SelectionMetric sel, double lambda, double rec, double dist);

}  // namespace mow
