#include "mow/autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include "mow/errors.hpp"

namespace mow {

namespace {

Var activate(Tape& tape, Var h, Activation act) {
    switch (act) {
        case Activation::relu: return tape.relu(h);
        case Activation::sigmoid: return tape.sigmoid(h);
        case Activation::tanh: return tape.tanh(h);
        case Activation::linear: return h;
    }
    throw ConfigError("unknown activation");
}

void activate_value(Vector& h, Activation act) {
    switch (act) {
        case Activation::relu: h = h.array().max(0.0); return;
        case Activation::sigmoid: h = 1.0 / (1.0 + (-h.array()).exp()); return;
        case Activation::tanh: h = h.array().tanh(); return;
        case Activation::linear: return;
    }
    throw ConfigError("unknown activation");
}

struct LayerShape {
    std::string w, b;
    Eigen::Index in = 0, out = 0;
    Activation act = Activation::linear;
};

std::vector<LayerShape> encoder_shapes(const NetSpec& spec) {
    std::vector<LayerShape> out;
    Eigen::Index in = spec.input_dim;
    for (std::size_t i = 0; i < spec.encoder_layers.size(); ++i) {
        const auto& l = spec.encoder_layers[i];
        const std::string base = "enc" + std::to_string(i);
        out.push_back({base + ".W", base + ".b", in, l.width, l.act});
        in = l.width;
    }
    out.push_back({"enc_out.W", "enc_out.b", in, spec.latent_dim, Activation::linear});
    return out;
}

std::vector<LayerShape> decoder_shapes(const NetSpec& spec) {
    std::vector<LayerShape> out;
    Eigen::Index in = spec.latent_dim;
    for (std::size_t i = 0; i < spec.decoder_layers.size(); ++i) {
        const auto& l = spec.decoder_layers[i];
        const std::string base = "dec" + std::to_string(i);
        out.push_back({base + ".W", base + ".b", in, l.width, l.act});
        in = l.width;
    }
    out.push_back({"dec_out.W", "dec_out.b", in, spec.input_dim, spec.output_activation});
    return out;
}

Var forward(Tape& tape, const ParamVector& theta, const std::vector<LayerShape>& layers,
            Var h) {
    for (const auto& l : layers) {
        Var W = tape.param(theta, l.w);
        Var b = tape.param(theta, l.b);
        h = activate(tape, tape.affine(h, W, b), l.act);
    }
    return h;
}

Vector forward_value(const ParamVector& theta, const std::vector<LayerShape>& layers,
                     Vector h) {
    for (const auto& l : layers) {
        Vector next = theta.matrix(l.w) * h + theta.matrix(l.b).col(0);
        activate_value(next, l.act);
        h = std::move(next);
    }
    return h;
}

}  // namespace

void NetSpec::validate() const {
    if (input_dim < 1 || latent_dim < 1)
        throw ConfigError("NetSpec: input_dim and latent_dim must be positive");
    if (latent_dim > input_dim)
        throw ConfigError("NetSpec: latent_dim must not exceed input_dim");
    for (const auto& l : encoder_layers)
        if (l.width < 1) throw ConfigError("NetSpec: encoder layer width must be positive");
    for (const auto& l : decoder_layers)
        if (l.width < 1) throw ConfigError("NetSpec: decoder layer width must be positive");
}

NetSpec NetSpec::mnist_mlp(int input_dim, int latent_dim) {
    NetSpec spec;
    spec.input_dim = input_dim;
    spec.latent_dim = latent_dim;
    spec.encoder_layers = {{200, Activation::relu},
                           {200, Activation::relu},
                           {200, Activation::relu}};
    spec.decoder_layers = {{200, Activation::relu}, {200, Activation::relu}};
    spec.output_activation = Activation::sigmoid;
    return spec;
}

ParamVector init_params(const NetSpec& spec, Rng& rng) {
    spec.validate();
    ParamVector pv;
    auto add_layers = [&](const std::vector<LayerShape>& layers) {
        for (const auto& l : layers) {
            pv.add(l.w, l.out, l.in);
            pv.add(l.b, l.out, 1);
        }
    };
    add_layers(encoder_shapes(spec));
    add_layers(decoder_shapes(spec));
    // Gaussian fan-in init, zero biases.
    for (const auto& seg : pv.segments()) {
        if (seg.name.ends_with(".b")) continue;
        const double scale = 1.0 / std::sqrt(static_cast<double>(seg.cols));
        auto m = pv.matrix(seg.name);
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * rng.next_gaussian();
    }
    return pv;
}

ParamVector params_from_flat(const NetSpec& spec, const Vector& flat) {
    Rng dummy(0);
    ParamVector pv = init_params(spec, dummy);
    if (pv.size() != flat.size())
        throw ShapeError("params_from_flat: size mismatch");
    pv.values = flat;
    return pv;
}

Var encode(Tape& tape, const ParamVector& theta, const NetSpec& spec, const Vector& x) {
    if (x.size() != spec.input_dim)
        throw ShapeError("encode: input has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(spec.input_dim));
    return forward(tape, theta, encoder_shapes(spec), tape.constant(Matrix(x)));
}

Var decode(Tape& tape, const ParamVector& theta, const NetSpec& spec, Var z) {
    if (tape.value(z).rows() != spec.latent_dim || tape.value(z).cols() != 1)
        throw ShapeError("decode: latent has wrong shape");
    return forward(tape, theta, decoder_shapes(spec), z);
}

Var recon_error(Tape& tape, const ParamVector& theta, const NetSpec& spec, const Vector& x) {
    Var xhat = decode(tape, theta, spec, encode(tape, theta, spec, x));
    return tape.squared_norm(tape.sub(xhat, tape.constant(Matrix(x))));
}

Vector encode_value(const ParamVector& theta, const NetSpec& spec,
                    const Eigen::Ref<const Vector>& x) {
    if (x.size() != spec.input_dim)
        throw ShapeError("encode_value: input dimension mismatch");
    return forward_value(theta, encoder_shapes(spec), x);
}

Vector decode_value(const ParamVector& theta, const NetSpec& spec,
                    const Eigen::Ref<const Vector>& z) {
    if (z.size() != spec.latent_dim)
        throw ShapeError("decode_value: latent dimension mismatch");
    return forward_value(theta, decoder_shapes(spec), z);
}

double recon_error_value(const ParamVector& theta, const NetSpec& spec,
                         const Eigen::Ref<const Vector>& x) {
    return (decode_value(theta, spec, encode_value(theta, spec, x)) - x).squaredNorm();
}

BatchCost batch_cost(Tape& tape, const ParamVector& theta, const NetSpec& spec,
                     const CostConfig& cfg, std::span<const Vector> live_x,
                     const Matrix& frozen_z, const Matrix& prior, const Matrix& dirs) {
    if (live_x.empty()) throw ShapeError("batch_cost: needs at least one live example");
    if (cfg.lambda < 0.0) throw ConfigError("batch_cost: lambda must be non-negative");
    if (frozen_z.rows() > 0 && frozen_z.cols() != spec.latent_dim)
        throw ShapeError("batch_cost: frozen latents have wrong dimension");

    BatchCost out;
    std::vector<Var> rec_terms;
    rec_terms.reserve(live_x.size());
    out.live_z.reserve(live_x.size());
    for (const Vector& x : live_x) {
        Var z = encode(tape, theta, spec, x);
        out.live_z.push_back(z);
        Var xhat = decode(tape, theta, spec, z);
        rec_terms.push_back(tape.squared_norm(tape.sub(xhat, tape.constant(Matrix(x)))));
    }
    out.recon = add_all(tape, rec_terms);
    if (cfg.recon_reduction == ReconReduction::mean)
        out.recon = tape.scale(out.recon, 1.0 / static_cast<double>(live_x.size()));

    if (cfg.lambda == 0.0) {
        out.cost = out.recon;
        return out;
    }
    LatentSample sample{frozen_z, out.live_z};
    out.distance = distance_term(tape, cfg.distance, sample, prior, dirs);
    out.cost = tape.add(out.recon, tape.scale(out.distance, cfg.lambda));
    return out;
}

double selection_metric_value(SelectionMetric sel, double lambda, double rec, double dist) {
    if (sel == SelectionMetric::cost) return rec + lambda * dist;
    // log of a tiny or sampling-negative distance is clamped
    return rec + std::log(std::max(dist, 1e-12));
}

}  // namespace mow
