#include "mow/distances.hpp"

#include <algorithm>
#include <numbers>

#include "mow/errors.hpp"

namespace mow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double imq_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                  double C) {
    return C / (C + (a - b).squaredNorm());
}

// kernel chain C/(C + d2) applied elementwise to a vector of squared distances
Var imq_of_d2(Tape& t, Var d2, double C) {
    return t.scale(t.reciprocal(t.scale_shift(d2, 1.0, C)), C);
}

}  // namespace

Var mmd_imq(Tape& tape, const LatentSample& Z, const Matrix& prior, double C) {
    const Eigen::Index n = Z.total_rows();
    const Eigen::Index nv = prior.rows();
    if (n < 2 || nv < 2)
        throw ShapeError("mmd_imq: estimator needs at least two rows on each side");
    if (C <= 0.0) throw ConfigError("mmd_imq: kernel scale must be positive");

    const Matrix& F = Z.frozen;
    const Eigen::Index r = F.rows();
    const Eigen::Index k = static_cast<Eigen::Index>(Z.live.size());

    // Constant-only kernel mass, folded into one scalar.
    double zz_const = 0.0, vv_const = 0.0, zv_const = 0.0;
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = i + 1; j < r; ++j)
            zz_const += 2.0 * imq_kernel(F.row(i).transpose(), F.row(j).transpose(), C);
    for (Eigen::Index i = 0; i < nv; ++i)
        for (Eigen::Index j = i + 1; j < nv; ++j)
            vv_const += 2.0 * imq_kernel(prior.row(i).transpose(), prior.row(j).transpose(), C);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < nv; ++j)
            zv_const += imq_kernel(F.row(i).transpose(), prior.row(j).transpose(), C);

    const double coef_zz = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
    const double coef_vv = 1.0 / (static_cast<double>(nv) * static_cast<double>(nv - 1));
    const double coef_zv = 2.0 / (static_cast<double>(n) * static_cast<double>(nv));

    Var result = tape.constant(coef_zz * zz_const + coef_vv * vv_const - coef_zv * zv_const);
    if (k == 0) return result;

    std::vector<Var> zz_terms, zv_terms;

    // Live rows against the frozen block, vectorized over the block:
    // |z - f_j|^2 = |z|^2 - 2 f_j.z + |f_j|^2 for all j at once.
    Var frozen_w, frozen_b;
    if (r > 0) {
        frozen_w = tape.constant(Matrix(-2.0 * F));
        frozen_b = tape.constant(Matrix(F.rowwise().squaredNorm()));
    }
    Var prior_w = tape.constant(Matrix(-2.0 * prior));
    Var prior_b = tape.constant(Matrix(prior.rowwise().squaredNorm()));

    for (Eigen::Index a = 0; a < k; ++a) {
        Var z = Z.live[static_cast<std::size_t>(a)];
        Var z2 = tape.squared_norm(z);
        if (r > 0) {
            Var d2 = tape.add_scalar(tape.affine(z, frozen_w, frozen_b), z2);
            zz_terms.push_back(tape.scale(tape.sum(imq_of_d2(tape, d2, C)), 2.0));
        }
        Var d2v = tape.add_scalar(tape.affine(z, prior_w, prior_b), z2);
        zv_terms.push_back(tape.sum(imq_of_d2(tape, d2v, C)));
        for (Eigen::Index b = a + 1; b < k; ++b) {
            Var d2 = tape.squared_norm(tape.sub(z, Z.live[static_cast<std::size_t>(b)]));
            zz_terms.push_back(tape.scale(imq_of_d2(tape, d2, C), 2.0));
        }
    }

    if (!zz_terms.empty())
        result = tape.add(result, tape.scale(add_all(tape, zz_terms), coef_zz));
    result = tape.sub(result, tape.scale(add_all(tape, zv_terms), coef_zv));
    return result;
}

Var cramer_wold_mc(Tape& tape, const LatentSample& Z, const Matrix& dirs, double gamma) {
    const Eigen::Index n = Z.total_rows();
    const Eigen::Index s = dirs.rows();
    if (n < 1) throw ShapeError("cramer_wold_mc: empty sample");
    if (s < 1) throw ShapeError("cramer_wold_mc: empty direction set");
    if (gamma <= 0.0) throw ConfigError("cramer_wold_mc: gamma must be positive");

    const Matrix& F = Z.frozen;
    const Eigen::Index r = F.rows();
    const Eigen::Index k = static_cast<Eigen::Index>(Z.live.size());
    const double dn = static_cast<double>(n);

    // Gaussian L2 cross terms: sample-sample at variance 2*gamma,
    // sample-prior at 1+2*gamma, prior-prior at 2*(1+gamma).
    const double var_ss = 2.0 * gamma;
    const double var_sp = 1.0 + 2.0 * gamma;
    const double norm_ss = 1.0 / std::sqrt(kTwoPi * var_ss);
    const double norm_sp = 1.0 / std::sqrt(kTwoPi * var_sp);

    const Matrix pf = F * dirs.transpose();  // r x s projections of frozen rows

    double pair_const = 0.0;  // sum over unordered const pairs of mean_dirs g(dp; 2g)
    double self_const = 0.0;  // sum over const rows of mean_dirs g(p; 1+2g)
    for (Eigen::Index i = 0; i < r; ++i) {
        self_const += (pf.row(i).array().square() * (-0.5 / var_sp)).exp().mean();
        for (Eigen::Index j = i + 1; j < r; ++j)
            pair_const +=
                ((pf.row(i) - pf.row(j)).array().square() * (-0.5 / var_ss)).exp().mean();
    }

    std::vector<Var> pair_terms, self_terms;
    Var dirs_w;
    if (k > 0) dirs_w = tape.constant(dirs);
    std::vector<Var> frozen_bias(static_cast<std::size_t>(r));
    for (Eigen::Index a = 0; a < k; ++a) {
        Var z = Z.live[static_cast<std::size_t>(a)];
        Var pz = tape.affine(z, dirs_w);
        self_terms.push_back(
            tape.mean(tape.exp(tape.scale(tape.mul(pz, pz), -0.5 / var_sp))));
        for (Eigen::Index j = 0; j < r; ++j) {
            // dirs * z - p_frozen_j, bias nodes shared across live rows
            Var& bias = frozen_bias[static_cast<std::size_t>(j)];
            if (!bias.valid()) bias = tape.constant(Matrix(-pf.row(j).transpose()));
            Var dp = tape.affine(z, dirs_w, bias);
            pair_terms.push_back(
                tape.mean(tape.exp(tape.scale(tape.mul(dp, dp), -0.5 / var_ss))));
        }
        for (Eigen::Index b = a + 1; b < k; ++b) {
            Var dp = tape.affine(tape.sub(z, Z.live[static_cast<std::size_t>(b)]), dirs_w);
            pair_terms.push_back(
                tape.mean(tape.exp(tape.scale(tape.mul(dp, dp), -0.5 / var_ss))));
        }
    }

    const double a_diag = norm_ss / dn;                     // (1/n^2) * n * g(0; 2g)
    const double b_term = 1.0 / std::sqrt(kTwoPi * 2.0 * (1.0 + gamma));
    double const_total = a_diag + b_term;
    const_total += (2.0 * norm_ss / (dn * dn)) * pair_const;
    const_total -= (2.0 * norm_sp / dn) * self_const;

    Var result = tape.constant(const_total);
    if (!pair_terms.empty())
        result = tape.add(result,
                          tape.scale(add_all(tape, pair_terms), 2.0 * norm_ss / (dn * dn)));
    if (!self_terms.empty())
        result = tape.sub(result, tape.scale(add_all(tape, self_terms), 2.0 * norm_sp / dn));
    return result;
}

Var sliced_wasserstein(Tape& tape, const LatentSample& Z, const Matrix& prior,
                       const Matrix& dirs) {
    const Eigen::Index n = Z.total_rows();
    const Eigen::Index nv = prior.rows();
    const Eigen::Index s = dirs.rows();
    if (n != nv)
        throw ShapeError("sliced_wasserstein: sample sizes differ (" + std::to_string(n) +
                         " vs " + std::to_string(nv) + ")");
    if (s < 1) throw ShapeError("sliced_wasserstein: empty direction set");

    const Matrix& F = Z.frozen;
    const Eigen::Index r = F.rows();
    const Eigen::Index k = static_cast<Eigen::Index>(Z.live.size());
    const Matrix pf = F * dirs.transpose();      // r x s
    const Matrix pv = prior * dirs.transpose();  // nv x s

    const double coef = 1.0 / (static_cast<double>(s) * static_cast<double>(n));

    if (k == 0) {
        double total = 0.0;
        std::vector<double> zs(static_cast<std::size_t>(n)), vs(static_cast<std::size_t>(nv));
        for (Eigen::Index d = 0; d < s; ++d) {
            for (Eigen::Index i = 0; i < n; ++i) zs[static_cast<std::size_t>(i)] = pf(i, d);
            for (Eigen::Index i = 0; i < nv; ++i) vs[static_cast<std::size_t>(i)] = pv(i, d);
            std::sort(zs.begin(), zs.end());
            std::sort(vs.begin(), vs.end());
            for (Eigen::Index i = 0; i < n; ++i) {
                const double diff =
                    zs[static_cast<std::size_t>(i)] - vs[static_cast<std::size_t>(i)];
                total += diff * diff;
            }
        }
        return tape.constant(coef * total);
    }

    std::vector<Var> dir_terms;
    dir_terms.reserve(static_cast<std::size_t>(s));
    std::vector<Var> parts;
    for (Eigen::Index d = 0; d < s; ++d) {
        Var row_w = tape.constant(Matrix(dirs.row(d)));  // 1 x D
        parts.clear();
        for (Eigen::Index a = 0; a < k; ++a)
            parts.push_back(tape.affine(Z.live[static_cast<std::size_t>(a)], row_w));
        if (r > 0) parts.push_back(tape.constant(Matrix(pf.col(d))));
        Var sorted = tape.sort_asc(tape.concat(parts));
        Vector vsorted = pv.col(d);
        std::sort(vsorted.begin(), vsorted.end());
        dir_terms.push_back(tape.squared_norm(tape.sub(sorted, tape.constant(Matrix(vsorted)))));
    }
    return tape.scale(add_all(tape, dir_terms), coef);
}

Var distance_term(Tape& tape, const DistanceSpec& spec, const LatentSample& Z,
                  const Matrix& prior, const Matrix& dirs) {
    switch (spec.kind) {
        case DistanceKind::mmd_imq: {
            const double C =
                spec.kernel_scale > 0.0 ? spec.kernel_scale : imq_default_scale(Z.dim());
            return mmd_imq(tape, Z, prior, C);
        }
        case DistanceKind::cramer_wold: {
            const double g = spec.gamma > 0.0 ? spec.gamma : silverman_gamma(Z.total_rows());
            return cramer_wold_mc(tape, Z, dirs, g);
        }
        case DistanceKind::sliced_wasserstein:
            return sliced_wasserstein(tape, Z, prior, dirs);
    }
    throw ConfigError("distance_term: unknown kind");
}

double distance_value(const DistanceSpec& spec, const Matrix& Z, const Matrix& prior,
                      const Matrix& dirs) {
    Tape tape;
    LatentSample sample{Z, {}};
    return tape.scalar_value(distance_term(tape, spec, sample, prior, dirs));
}

double mmd_imq_value(const Matrix& Z, const Matrix& prior, double C) {
    Tape tape;
    return tape.scalar_value(mmd_imq(tape, LatentSample{Z, {}}, prior, C));
}

double cramer_wold_mc_value(const Matrix& Z, const Matrix& dirs, double gamma) {
    Tape tape;
    return tape.scalar_value(cramer_wold_mc(tape, LatentSample{Z, {}}, dirs, gamma));
}

double sliced_wasserstein_value(const Matrix& Z, const Matrix& prior, const Matrix& dirs) {
    Tape tape;
    return tape.scalar_value(sliced_wasserstein(tape, LatentSample{Z, {}}, prior, dirs));
}

Matrix sample_gaussian(int count, int dim, Rng& rng) {
    Matrix m(count, dim);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = rng.next_gaussian();
    return m;
}

Matrix sample_unit_directions(int count, int dim, Rng& rng) {
    if (count < 1 || dim < 1)
        throw ConfigError("sample_unit_directions: count and dim must be positive");
    Matrix m(count, dim);
    for (int i = 0; i < count; ++i) {
        double norm = 0.0;
        do {
            for (int j = 0; j < dim; ++j) m(i, j) = rng.next_gaussian();
            norm = m.row(i).norm();
        } while (norm < 1e-12);
        m.row(i) /= norm;
    }
    return m;
}

}  // namespace mow
