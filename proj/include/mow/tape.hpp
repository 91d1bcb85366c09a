#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mow/param_vector.hpp"

namespace mow {

class Tape;

// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over dense double tensors (column vectors and matrices).
// Nodes are appended in evaluation order, so the tape is topologically
// ordered by construction; backward() is a single reverse sweep.
//
// Every op validates shapes and rejects non-finite results; constants and
// data inputs carry no gradient, so anything built only from them is frozen
// with respect to the parameters.
class Tape {
public:
    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

    // ---- leaves ----
    Var constant(Matrix v);
    Var constant(double s);
    Var input(Matrix v);  // differentiable non-parameter leaf
    Var param(const ParamVector& pv, std::string_view name);

    // ---- primitive ops ----
    // W (m x n) * x (n x 1) + b (m x 1); pass an invalid Var to omit b.
    Var affine(Var x, Var W, Var b = {});
    Var relu(Var x);
    Var sigmoid(Var x);
    Var tanh(Var x);
    Var exp(Var x);
    Var log(Var x);
    Var sqrt(Var x);
    Var reciprocal(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);          // elementwise
    Var add_scalar(Var x, Var s);   // broadcast a scalar node over x
    Var scale_shift(Var x, double a, double b);  // a*x + b elementwise
    Var scale(Var x, double a) { return scale_shift(x, a, 0.0); }
    Var sum(Var x);
    Var mean(Var x);
    Var squared_norm(Var x);
    Var concat(std::span<const Var> parts);  // stack column vectors
    Var sort_asc(Var x);  // ascending, ties keep original order

    // ---- access ----
    const Matrix& value(Var v) const { return node(v.id).value; }
    double scalar_value(Var v) const;
    bool needs_grad(Var v) const { return node(v.id).needs_grad; }

    // Reverse sweep from a scalar root. Returns the flat gradient aligned
    // with the bound ParamVector (all zeros for parameters the root does not
    // reach). May be called once per tape.
    Vector backward(Var root);

    // Gradient of the root with respect to any node (valid after backward).
    Matrix grad_of(Var v) const;

    const ParamVector* bound_params() const { return params_; }

    struct Stats {
        std::size_t nodes = 0;
        std::size_t value_floats = 0;
        std::size_t grad_floats = 0;
    };
    Stats stats() const;
    // Number of node values holding at least `floats` doubles.
    std::size_t count_values_at_least(std::size_t floats) const;

private:
    enum class Op : uint8_t {
        kConst, kParam, kInput,
        kAffine, kRelu, kSigmoid, kTanh, kExp, kLog, kSqrt, kRecip,
        kAdd, kSub, kMul, kAddScalar, kScaleShift,
        kSum, kMean, kSquaredNorm, kConcat, kSort,
    };

    struct Node {
        Op op = Op::kConst;
        bool needs_grad = false;
        uint8_t n_in = 0;
        std::array<int32_t, 3> in{{-1, -1, -1}};
        double a = 1.0, b = 0.0;        // scale_shift coefficients
        int32_t param_seg = -1;          // segment index for kParam
        Matrix value;
        Matrix grad;                     // allocated on demand in backward
        std::vector<int32_t> aux;        // concat: inputs; sort: permutation
    };

    Var push(Node nd);
    Node& node(int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Var unary(Op op, Var x, const char* name);
    Var binary(Op op, Var a, Var b, const char* name);
    Var reduce(Op op, Var x, const char* name);
    void check(Var v, const char* what) const;
    Matrix& grad_buffer(Node& nd);
    void accumulate(Node& nd);

    std::vector<Node> nodes_;
    const ParamVector* params_ = nullptr;
    bool check_finite_ = true;
    bool backward_done_ = false;
};

// Expression-style free functions mirroring the member ops.
inline Var affine(Var x, Var W, Var b = {}) { return x.tape->affine(x, W, b); }
inline Var relu(Var x) { return x.tape->relu(x); }
inline Var sigmoid(Var x) { return x.tape->sigmoid(x); }
inline Var tanh(Var x) { return x.tape->tanh(x); }
inline Var exp(Var x) { return x.tape->exp(x); }
inline Var log(Var x) { return x.tape->log(x); }
inline Var sqrt(Var x) { return x.tape->sqrt(x); }
inline Var reciprocal(Var x) { return x.tape->reciprocal(x); }
inline Var add(Var a, Var b) { return a.tape->add(a, b); }
inline Var sub(Var a, Var b) { return a.tape->sub(a, b); }
inline Var mul(Var a, Var b) { return a.tape->mul(a, b); }
inline Var add_scalar(Var x, Var s) { return x.tape->add_scalar(x, s); }
inline Var scale_shift(Var x, double a, double b) { return x.tape->scale_shift(x, a, b); }
inline Var scale(Var x, double a) { return x.tape->scale(x, a); }
inline Var sum(Var x) { return x.tape->sum(x); }
inline Var mean(Var x) { return x.tape->mean(x); }
inline Var squared_norm(Var x) { return x.tape->squared_norm(x); }
inline Var sort_asc(Var x) { return x.tape->sort_asc(x); }

// Deterministic pairwise reduction of scalar terms.
Var add_all(Tape& tape, std::span<const Var> terms);

}  // namespace mow
