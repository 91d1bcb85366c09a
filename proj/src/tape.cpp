#include "mow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mow/errors.hpp"

namespace mow {

namespace {
const char* op_name(int op) {
    static const char* names[] = {
        "const", "param", "input",
        "affine", "relu", "sigmoid", "tanh", "exp", "log", "sqrt", "reciprocal",
        "add", "sub", "mul", "add_scalar", "scale_shift",
        "sum", "mean", "squared_norm", "concat", "sort",
    };
    return names[op];
}
}  // namespace

void Tape::check(Var v, const char* what) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int32_t>(nodes_.size()))
        throw ShapeError(std::string(what) + ": Var does not belong to this tape");
}

Var Tape::push(Node nd) {
    if (check_finite_ && !nd.value.allFinite())
        throw NumericError(std::string("non-finite value produced by op '") +
                           op_name(static_cast<int>(nd.op)) + "'");
    nodes_.push_back(std::move(nd));
    return Var{this, static_cast<int32_t>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix v) {
    Node nd;
    nd.op = Op::kConst;
    nd.value = std::move(v);
    return push(std::move(nd));
}

Var Tape::constant(double s) {
    Matrix m(1, 1);
    m(0, 0) = s;
    return constant(std::move(m));
}

Var Tape::input(Matrix v) {
    Node nd;
    nd.op = Op::kInput;
    nd.needs_grad = true;
    nd.value = std::move(v);
    return push(std::move(nd));
}

Var Tape::param(const ParamVector& pv, std::string_view name) {
    if (params_ == nullptr)
        params_ = &pv;
    else if (params_ != &pv)
        throw ShapeError("tape already bound to a different ParamVector");
    const Eigen::Index idx = pv.index_of(name);
    const auto& seg = pv.segment(idx);
    Node nd;
    nd.op = Op::kParam;
    nd.needs_grad = true;
    nd.param_seg = static_cast<int32_t>(idx);
    nd.value = Eigen::Map<const Matrix>(pv.values.data() + seg.offset, seg.rows, seg.cols);
    return push(std::move(nd));
}

Var Tape::affine(Var x, Var W, Var b) {
    check(x, "affine");
    check(W, "affine");
    const Matrix& xv = node(x.id).value;
    const Matrix& Wv = node(W.id).value;
    if (xv.cols() != 1 || Wv.cols() != xv.rows())
        throw ShapeError("affine: W is " + std::to_string(Wv.rows()) + "x" +
                         std::to_string(Wv.cols()) + " but x is " +
                         std::to_string(xv.rows()) + "x" + std::to_string(xv.cols()));
    Node nd;
    nd.op = Op::kAffine;
    nd.value.noalias() = Wv * xv;
    nd.in[0] = x.id;
    nd.in[1] = W.id;
    nd.n_in = 2;
    nd.needs_grad = node(x.id).needs_grad || node(W.id).needs_grad;
    if (b.id >= 0) {
        check(b, "affine");
        const Matrix& bv = node(b.id).value;
        if (bv.rows() != Wv.rows() || bv.cols() != 1)
            throw ShapeError("affine: bias shape mismatch");
        nd.value += bv;
        nd.in[2] = b.id;
        nd.n_in = 3;
        nd.needs_grad = nd.needs_grad || node(b.id).needs_grad;
    }
    return push(std::move(nd));
}

Var Tape::unary(Op op, Var x, const char* name) {
    check(x, name);
    Node nd;
    nd.op = op;
    nd.in[0] = x.id;
    nd.n_in = 1;
    nd.needs_grad = node(x.id).needs_grad;
    const auto& xv = node(x.id).value.array();
    switch (op) {
        case Op::kRelu: nd.value = xv.max(0.0); break;
        case Op::kSigmoid: nd.value = 1.0 / (1.0 + (-xv).exp()); break;
        case Op::kTanh: nd.value = xv.tanh(); break;
        case Op::kExp: nd.value = xv.exp(); break;
        case Op::kLog: nd.value = xv.log(); break;
        case Op::kSqrt: nd.value = xv.sqrt(); break;
        case Op::kRecip: nd.value = xv.inverse(); break;
        default: throw ShapeError("bad unary op");
    }
    return push(std::move(nd));
}

Var Tape::relu(Var x) { return unary(Op::kRelu, x, "relu"); }
Var Tape::sigmoid(Var x) { return unary(Op::kSigmoid, x, "sigmoid"); }
Var Tape::tanh(Var x) { return unary(Op::kTanh, x, "tanh"); }
Var Tape::exp(Var x) { return unary(Op::kExp, x, "exp"); }
Var Tape::log(Var x) { return unary(Op::kLog, x, "log"); }
Var Tape::sqrt(Var x) { return unary(Op::kSqrt, x, "sqrt"); }
Var Tape::reciprocal(Var x) { return unary(Op::kRecip, x, "reciprocal"); }

Var Tape::binary(Op op, Var a, Var b, const char* name) {
    check(a, name);
    check(b, name);
    const Matrix& av = node(a.id).value;
    const Matrix& bv = node(b.id).value;
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
        throw ShapeError(std::string(name) + ": shapes " + std::to_string(av.rows()) + "x" +
                         std::to_string(av.cols()) + " vs " + std::to_string(bv.rows()) + "x" +
                         std::to_string(bv.cols()));
    Node nd;
    nd.op = op;
    nd.in[0] = a.id;
    nd.in[1] = b.id;
    nd.n_in = 2;
    nd.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
    switch (op) {
        case Op::kAdd: nd.value = av + bv; break;
        case Op::kSub: nd.value = av - bv; break;
        case Op::kMul: nd.value = av.cwiseProduct(bv); break;
        default: throw ShapeError("bad binary op");
    }
    return push(std::move(nd));
}

Var Tape::add(Var a, Var b) { return binary(Op::kAdd, a, b, "add"); }
Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b, "sub"); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b, "mul"); }

Var Tape::add_scalar(Var x, Var s) {
    check(x, "add_scalar");
    check(s, "add_scalar");
    const Matrix& sv = node(s.id).value;
    if (sv.rows() != 1 || sv.cols() != 1)
        throw ShapeError("add_scalar: s must be 1x1");
    Node nd;
    nd.op = Op::kAddScalar;
    nd.in[0] = x.id;
    nd.in[1] = s.id;
    nd.n_in = 2;
    nd.needs_grad = node(x.id).needs_grad || node(s.id).needs_grad;
    nd.value = node(x.id).value.array() + sv(0, 0);
    return push(std::move(nd));
}

Var Tape::scale_shift(Var x, double a, double b) {
    check(x, "scale_shift");
    Node nd;
    nd.op = Op::kScaleShift;
    nd.in[0] = x.id;
    nd.n_in = 1;
    nd.a = a;
    nd.b = b;
    nd.needs_grad = node(x.id).needs_grad;
    nd.value = a * node(x.id).value.array() + b;
    return push(std::move(nd));
}

Var Tape::reduce(Op op, Var x, const char* name) {
    check(x, name);
    const Matrix& xv = node(x.id).value;
    Node nd;
    nd.op = op;
    nd.in[0] = x.id;
    nd.n_in = 1;
    nd.needs_grad = node(x.id).needs_grad;
    nd.value.resize(1, 1);
    switch (op) {
        case Op::kSum: nd.value(0, 0) = xv.sum(); break;
        case Op::kMean: nd.value(0, 0) = xv.mean(); break;
        case Op::kSquaredNorm: nd.value(0, 0) = xv.squaredNorm(); break;
        default: throw ShapeError("bad reduce op");
    }
    return push(std::move(nd));
}

Var Tape::sum(Var x) { return reduce(Op::kSum, x, "sum"); }
Var Tape::mean(Var x) { return reduce(Op::kMean, x, "mean"); }
Var Tape::squared_norm(Var x) { return reduce(Op::kSquaredNorm, x, "squared_norm"); }

Var Tape::concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Eigen::Index total = 0;
    for (Var p : parts) {
        check(p, "concat");
        if (node(p.id).value.cols() != 1)
            throw ShapeError("concat: inputs must be column vectors");
        total += node(p.id).value.rows();
    }
    Node nd;
    nd.op = Op::kConcat;
    nd.value.resize(total, 1);
    nd.aux.reserve(parts.size());
    Eigen::Index at = 0;
    for (Var p : parts) {
        const Matrix& pv = node(p.id).value;
        nd.value.block(at, 0, pv.rows(), 1) = pv;
        at += pv.rows();
        nd.aux.push_back(p.id);
        nd.needs_grad = nd.needs_grad || node(p.id).needs_grad;
    }
    return push(std::move(nd));
}

Var Tape::sort_asc(Var x) {
    check(x, "sort_asc");
    const Matrix& xv = node(x.id).value;
    if (xv.cols() != 1) throw ShapeError("sort_asc: input must be a column vector");
    const auto n = xv.rows();
    Node nd;
    nd.op = Op::kSort;
    nd.in[0] = x.id;
    nd.n_in = 1;
    nd.needs_grad = node(x.id).needs_grad;
    nd.aux.resize(static_cast<std::size_t>(n));
    std::iota(nd.aux.begin(), nd.aux.end(), 0);
    std::stable_sort(nd.aux.begin(), nd.aux.end(),
                     [&](int32_t a, int32_t b) { return xv(a, 0) < xv(b, 0); });
    nd.value.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) nd.value(i, 0) = xv(nd.aux[static_cast<std::size_t>(i)], 0);
    return push(std::move(nd));
}

double Tape::scalar_value(Var v) const {
    check(v, "scalar_value");
    const Matrix& m = node(v.id).value;
    if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar_value: node is not 1x1");
    return m(0, 0);
}

Matrix& Tape::grad_buffer(Node& nd) {
    if (nd.grad.size() == 0) nd.grad = Matrix::Zero(nd.value.rows(), nd.value.cols());
    return nd.grad;
}

void Tape::accumulate(Node& nd) {
    const Matrix& g = nd.grad;
    auto in = [&](int slot) -> Node& { return node(nd.in[static_cast<std::size_t>(slot)]); };
    switch (nd.op) {
        case Op::kConst:
        case Op::kParam:
        case Op::kInput:
            return;
        case Op::kAffine: {
            Node& x = in(0);
            Node& W = in(1);
            if (x.needs_grad) grad_buffer(x).noalias() += W.value.transpose() * g;
            if (W.needs_grad) grad_buffer(W).noalias() += g * x.value.transpose();
            if (nd.n_in == 3 && in(2).needs_grad) grad_buffer(in(2)) += g;
            return;
        }
        case Op::kRelu: {
            Node& x = in(0);
            if (x.needs_grad)
                grad_buffer(x).array() += (x.value.array() > 0.0).cast<double>() * g.array();
            return;
        }
        case Op::kSigmoid: {
            Node& x = in(0);
            if (x.needs_grad)
                grad_buffer(x).array() += g.array() * nd.value.array() * (1.0 - nd.value.array());
            return;
        }
        case Op::kTanh: {
            Node& x = in(0);
            if (x.needs_grad)
                grad_buffer(x).array() += g.array() * (1.0 - nd.value.array().square());
            return;
        }
        case Op::kExp: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x).array() += g.array() * nd.value.array();
            return;
        }
        case Op::kLog: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x).array() += g.array() / x.value.array();
            return;
        }
        case Op::kSqrt: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x).array() += g.array() * 0.5 / nd.value.array();
            return;
        }
        case Op::kRecip: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x).array() -= g.array() * nd.value.array().square();
            return;
        }
        case Op::kAdd: {
            if (in(0).needs_grad) grad_buffer(in(0)) += g;
            if (in(1).needs_grad) grad_buffer(in(1)) += g;
            return;
        }
        case Op::kSub: {
            if (in(0).needs_grad) grad_buffer(in(0)) += g;
            if (in(1).needs_grad) grad_buffer(in(1)) -= g;
            return;
        }
        case Op::kMul: {
            if (in(0).needs_grad) grad_buffer(in(0)).array() += g.array() * in(1).value.array();
            if (in(1).needs_grad) grad_buffer(in(1)).array() += g.array() * in(0).value.array();
            return;
        }
        case Op::kAddScalar: {
            if (in(0).needs_grad) grad_buffer(in(0)) += g;
            if (in(1).needs_grad) grad_buffer(in(1))(0, 0) += g.sum();
            return;
        }
        case Op::kScaleShift: {
            if (in(0).needs_grad) grad_buffer(in(0)) += nd.a * g;
            return;
        }
        case Op::kSum: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x).array() += g(0, 0);
            return;
        }
        case Op::kMean: {
            Node& x = in(0);
            if (x.needs_grad)
                grad_buffer(x).array() += g(0, 0) / static_cast<double>(x.value.size());
            return;
        }
        case Op::kSquaredNorm: {
            Node& x = in(0);
            if (x.needs_grad) grad_buffer(x) += 2.0 * g(0, 0) * x.value;
            return;
        }
        case Op::kConcat: {
            Eigen::Index at = 0;
            for (int32_t pid : nd.aux) {
                Node& p = node(pid);
                const Eigen::Index r = p.value.rows();
                if (p.needs_grad) grad_buffer(p) += g.block(at, 0, r, 1);
                at += r;
            }
            return;
        }
        case Op::kSort: {
            Node& x = in(0);
            if (!x.needs_grad) return;
            Matrix& gx = grad_buffer(x);
            for (Eigen::Index i = 0; i < g.rows(); ++i)
                gx(nd.aux[static_cast<std::size_t>(i)], 0) += g(i, 0);
            return;
        }
    }
}

Vector Tape::backward(Var root) {
    check(root, "backward");
    if (backward_done_) throw ShapeError("backward may run once per tape");
    backward_done_ = true;
    Node& r = node(root.id);
    if (r.value.rows() != 1 || r.value.cols() != 1)
        throw ShapeError("backward: tape not scalar-rooted");
    grad_buffer(r)(0, 0) = 1.0;
    for (int32_t id = root.id; id >= 0; --id) {
        Node& nd = node(id);
        if (!nd.needs_grad || nd.grad.size() == 0) continue;
        if (check_finite_ && !nd.grad.allFinite())
            throw NumericError(std::string("non-finite gradient at op '") +
                               op_name(static_cast<int>(nd.op)) + "'");
        accumulate(nd);
    }
    if (params_ == nullptr) return Vector();
    Vector flat = Vector::Zero(params_->size());
    for (const Node& nd : nodes_) {
        if (nd.op != Op::kParam || nd.grad.size() == 0) continue;
        const auto& seg = params_->segment(nd.param_seg);
        Eigen::Map<Matrix>(flat.data() + seg.offset, seg.rows, seg.cols) += nd.grad;
    }
    return flat;
}

Matrix Tape::grad_of(Var v) const {
    check(v, "grad_of");
    const Node& nd = node(v.id);
    if (nd.grad.size() == 0) return Matrix::Zero(nd.value.rows(), nd.value.cols());
    return nd.grad;
}

Tape::Stats Tape::stats() const {
    Stats s;
    s.nodes = nodes_.size();
    for (const Node& nd : nodes_) {
        s.value_floats += static_cast<std::size_t>(nd.value.size());
        s.grad_floats += static_cast<std::size_t>(nd.grad.size());
    }
    return s;
}

std::size_t Tape::count_values_at_least(std::size_t floats) const {
    std::size_t c = 0;
    for (const Node& nd : nodes_)
        if (static_cast<std::size_t>(nd.value.size()) >= floats) ++c;
    return c;
}

Var add_all(Tape& tape, std::span<const Var> terms) {
    if (terms.empty()) return tape.constant(0.0);
    std::vector<Var> level(terms.begin(), terms.end());
    while (level.size() > 1) {
        std::vector<Var> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < level.size(); i += 2)
            next.push_back(tape.add(level[i], level[i + 1]));
        if (level.size() % 2 == 1) next.push_back(level.back());
        level = std::move(next);
    }
    return level.front();
}

}  // namespace mow
