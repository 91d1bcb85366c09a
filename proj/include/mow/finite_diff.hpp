#pragma once

#include <cmath>
#include <utility>

#include "mow/errors.hpp"
#include "mow/param_vector.hpp"

namespace mow {

// Central-difference gradient (f(p+eps*e_i) - f(p-eps*e_i)) / (2 eps) of an
// arbitrary scalar cost over the flat parameter vector. The independent
// oracle for every analytic gradient in this project.
template <class CostFn>
Vector finite_diff_gradient(CostFn&& cost, const ParamVector& params, double eps) {
    if (!(eps >= 1e-8 && eps <= 1e-3))
        throw ConfigError("finite_diff_gradient: epsilon must lie in [1e-8, 1e-3]");
    ParamVector p = params;
    Vector g(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double saved = p.values[i];
        p.values[i] = saved + eps;
        const double fp = cost(std::as_const(p));
        p.values[i] = saved - eps;
        const double fm = cost(std::as_const(p));
        p.values[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_gradient: non-finite cost at perturbed point");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

// |a-b| <= tol * max(|a|, |b|, floor), elementwise.
inline bool gradients_agree(const Vector& a, const Vector& b, double tol = 1e-4,
                            double floor = 1e-8) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        if (std::abs(a[i] - b[i]) > tol * scale) return false;
    }
    return true;
}

inline double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-8) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace mow
