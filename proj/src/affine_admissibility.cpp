#include "affreal/affine_admissibility.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "affreal/error.hpp"

namespace affreal {

namespace {

double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Vec unit(Index d, Index i) { return Vec::Unit(d, i); }

void require_square(const Mat& m, Index d, const char* what) {
    if (m.rows() != d || m.cols() != d)
        throw Error(ErrorKind::DimensionMismatch, std::string(what) + " must be " + std::to_string(d) + "x" +
                                                      std::to_string(d));
}

void require_symmetric(const Mat& m, double thr, const char* what) {
    if (max_abs(m - m.transpose()) > thr) throw Error(ErrorKind::NotSymmetric, std::string(what) + " is not symmetric");
}

// Random v in cone (+) U with the coordinates on `support` set to zero, so that
// <v, eta>_V = 0 for every eta supported there.
struct PairSampler {
    std::mt19937_64 rng;
    std::uniform_real_distribution<double> unit01{0.0, 1.0};
    Index m, d;

    PairSampler(std::uint64_t seed, Index m_, Index d_) : rng(seed), m(m_), d(d_) {}

    std::vector<bool> support() {
        std::vector<bool> s(static_cast<std::size_t>(m), false);
        bool any = false;
        for (Index i = 0; i < m; ++i) {
            s[i] = unit01(rng) < 0.4;
            any = any || s[i];
        }
        if (!any) s[std::uniform_int_distribution<Index>(0, m - 1)(rng)] = true;
        return s;
    }

    Vec eta(const std::vector<bool>& s) {
        Vec e = Vec::Zero(d);
        for (Index i = 0; i < m; ++i)
            if (s[i]) e(i) = 0.1 + 0.9 * unit01(rng);
        return e;
    }

    Vec v(const std::vector<bool>& s) {
        Vec x = Vec::Zero(d);
        const double sparse = unit01(rng);
        for (Index i = 0; i < m; ++i)
            if (!s[i] && (sparse < 0.2 ? false : unit01(rng) < 0.7)) x(i) = unit01(rng);
        for (Index i = m; i < d; ++i)
            if (unit01(rng) < 0.7) x(i) = 2.0 * unit01(rng) - 1.0;
        // The defining property quantifies over unbounded v.
        return x * std::pow(10.0, -2.0 + 8.0 * unit01(rng));
    }
};

}  // namespace

Mat AffineSquareVol::at(const Vec& v) const {
    Mat out = t1;
    for (std::size_t k = 0; k < t2.size(); ++k) out += v(static_cast<Index>(k)) * t2[k];
    return out;
}

bool Verdict::violates(const std::string& condition) const {
    return std::any_of(witnesses.begin(), witnesses.end(), [&](const Witness& w) { return w.condition == condition; });
}

bool KernelEquivalences::consistent() const {
    return std::all_of(holds.begin(), holds.end(), [&](bool b) { return b == holds[0]; });
}

Mat sigma_square(const VolMatrix& vol) { return vol.rows.transpose() * vol.rows; }

Mat embed_sigma_square(const VolMatrix& vol, const Mat& basis, const Mat& extended, double tol) {
    const Index d = basis.cols();
    if (vol.rows.cols() != d) throw Error(ErrorKind::DimensionMismatch, "volatility coordinates do not match basis");
    if (extended.rows() != basis.rows() || extended.cols() < d)
        throw Error(ErrorKind::BasisNotExtension, "extended basis is smaller than the original");
    if (max_abs(extended.leftCols(d) - basis) > tol * std::max(1.0, max_abs(basis)))
        throw Error(ErrorKind::BasisNotExtension, "extended basis does not start with the original basis");
    Mat padded = Mat::Zero(vol.rows.rows(), extended.cols());
    padded.leftCols(d) = vol.rows;
    return padded.transpose() * padded;
}

Verdict is_inward_pointing(const AffineDrift& drift, const StateBasis& basis, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    if (drift.beta1.size() != d) throw Error(ErrorKind::DimensionMismatch, "beta1 has wrong dimension");
    require_square(drift.beta2, d, "beta2");
    const double thr = tol * std::max({1.0, max_abs(drift.beta1), max_abs(drift.beta2)});
    Verdict out;

    for (Index i = 0; i < m; ++i) {
        if (drift.beta1(i) < -thr) {
            out.witnesses.push_back({"nu-1", {unit(d, i)}, -drift.beta1(i)});
            break;
        }
    }
    [&] {
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j)
                if (j != i && drift.beta2(j, i) < -thr) {
                    out.witnesses.push_back({"nu-2-C", {unit(d, i), unit(d, j)}, -drift.beta2(j, i)});
                    return;
                }
    }();
    [&] {
        for (Index k = m; k < d; ++k)
            for (Index j = 0; j < m; ++j)
                if (std::abs(drift.beta2(j, k)) > thr) {
                    out.witnesses.push_back({"nu-2-U", {unit(d, k), unit(d, j)}, std::abs(drift.beta2(j, k))});
                    return;
                }
    }();
    return out;
}

Verdict is_parallel(const AffineSquareVol& t, const StateBasis& basis, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    require_square(t.t1, d, "T1");
    if (static_cast<Index>(t.t2.size()) != d) throw Error(ErrorKind::DimensionMismatch, "T2 needs one matrix per basis vector");
    double scale = std::max(1.0, max_abs(t.t1));
    for (const auto& m2 : t.t2) {
        require_square(m2, d, "T2");
        scale = std::max(scale, max_abs(m2));
    }
    const double thr = tol * scale;
    require_symmetric(t.t1, thr, "T1");
    for (Index i = 0; i < m; ++i) require_symmetric(t.t2[i], thr, "T2 applied to an edge");

    Verdict out;
    for (Index i = 0; i < m; ++i) {
        const double n = t.t1.col(i).norm();
        if (n > thr) {
            out.witnesses.push_back({"C-ker-T1", {unit(d, i)}, n});
            break;
        }
    }
    for (Index k = m; k < d; ++k) {
        const double n = t.t2[k].norm();
        if (n > thr) {
            out.witnesses.push_back({"U-ker-T2", {unit(d, k)}, n});
            break;
        }
    }
    [&] {
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j) {
                if (j == i) continue;
                const double n = t.t2[i].col(j).norm();
                if (n > thr) {
                    out.witnesses.push_back({"T2-c", {unit(d, i), unit(d, j)}, n});
                    return;
                }
            }
    }();
    return out;
}

KernelEquivalences symmetric_kernel_equivalences(const Mat& t, const StateBasis& basis, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    require_square(t, d, "T");
    const double thr = tol * std::max(1.0, max_abs(t));
    if (max_abs(t - t.transpose()) > thr)
        throw Error(ErrorKind::NotSymmetricNonnegative, "operator is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (t + t.transpose()));
    if (eig.eigenvalues().minCoeff() < -thr)
        throw Error(ErrorKind::NotSymmetricNonnegative, "operator has a negative eigenvalue");

    Mat pc = Mat::Zero(d, d), pu = Mat::Zero(d, d);
    pc.topLeftCorner(m, m).setIdentity();
    pu.bottomRightCorner(d - m, d - m).setIdentity();
    KernelEquivalences out;

    // <Tc, c> = 0 on every edge.
    bool h = true;
    for (Index i = 0; i < m; ++i) h = h && std::abs(t(i, i)) <= thr;
    out.holds[0] = h;

    // <Tc, c> = 0 on all of C: the quadratic form restricted to C vanishes.
    if (m == 0) {
        out.holds[1] = true;
    } else {
        Eigen::SelfAdjointEigenSolver<Mat> ec(t.topLeftCorner(m, m));
        out.holds[1] = ec.eigenvalues().cwiseAbs().maxCoeff() <= thr;
    }

    // T(C) is contained in U.
    h = true;
    for (Index i = 0; i < m; ++i) h = h && (pc * t * unit(d, i)).norm() <= thr;
    out.holds[2] = h;

    // T(U) in U and C in ker T.
    out.holds[3] = (pc * t * pu).norm() <= thr && (t * pc).norm() <= thr;

    // C in ker T.
    out.holds[4] = (t * pc).norm() <= thr;

    // Every edge in ker T.
    h = true;
    for (Index i = 0; i < m; ++i) h = h && (t * unit(d, i)).norm() <= thr;
    out.holds[5] = h;
    return out;
}

AffineFit fit_affine_square(std::span<const SquareSample> samples, const StateBasis& basis, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    const Index n = static_cast<Index>(samples.size());
    if (n < d + 2) throw Error(ErrorKind::InsufficientSamples, "affine fit needs at least d + 2 samples");

    Mat x(n, d + 1), y(n, d * d);
    for (Index s = 0; s < n; ++s) {
        const auto& smp = samples[static_cast<std::size_t>(s)];
        if (smp.v.size() != d) throw Error(ErrorKind::DimensionMismatch, "sample point has wrong dimension");
        require_square(smp.sigma_sq, d, "sigma^2 sample");
        x(s, 0) = 1.0;
        x.row(s).tail(d) = smp.v.transpose();
        y.row(s) = Eigen::Map<const RowVec>(smp.sigma_sq.data(), d * d);
    }
    Eigen::JacobiSVD<Mat> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0))
        throw Error(ErrorKind::IllConditioned, "sample points do not span an affine frame");
    const Mat coef = svd.solve(y);

    AffineFit out;
    out.scale = max_abs(y);
    out.max_residual = max_abs(y - x * coef);
    const double thr = tol * out.scale;
    out.affine = out.max_residual <= thr;

    auto as_matrix = [&](Index row) {
        Mat mtx = Eigen::Map<const Mat>(RowVec(coef.row(row)).data(), d, d);
        return Mat(0.5 * (mtx + mtx.transpose()));
    };
    out.fit.t1 = as_matrix(0);
    out.fit.t2.reserve(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        Mat t2 = as_matrix(k + 1);
        // Slopes along U at noise level are the zero they should be; larger ones are kept
        // so that the parallel check can report them.
        if (k >= m && max_abs(t2) <= thr) t2.setZero();
        out.fit.t2.push_back(std::move(t2));
    }
    return out;
}

Verdict brute_force_inward(const AffineDrift& drift, const StateBasis& basis, std::size_t samples,
                           std::uint64_t seed, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    Verdict out;
    if (m == 0) return out;
    PairSampler gen(seed, m, d);
    const Mat& f = basis.frame();
    const double b1n = drift.beta1.norm(), b2n = drift.beta2.norm();
    for (std::size_t s = 0; s < samples; ++s) {
        auto sup = gen.support();
        const Vec eta_c = gen.eta(sup);
        const Vec v_c = gen.v(sup);
        const Vec eta = f * eta_c, v = f * v_c;
        const Vec beta_v = f * (drift.beta1 + drift.beta2 * v_c);
        const double value = inner_v(beta_v, eta, basis);
        const double thr = tol * (1.0 + b1n + b2n * v_c.norm()) * eta_c.norm();
        if (value < -thr) {
            out.witnesses.push_back({"beta-inward", {v, eta}, -value});
            break;
        }
    }
    return out;
}

Verdict brute_force_parallel(const AffineSquareVol& t, const StateBasis& basis, std::size_t samples,
                             std::uint64_t seed, double tol) {
    const Index d = basis.dim(), m = basis.cone_dim();
    Verdict out;
    if (m == 0) return out;
    PairSampler gen(seed, m, d);
    const Mat& f = basis.frame();
    for (std::size_t s = 0; s < samples; ++s) {
        auto sup = gen.support();
        const Vec eta_c = gen.eta(sup);
        const Vec v_c = gen.v(sup);
        const Vec eta = f * eta_c, v = f * v_c;
        const Mat tv = t.at(v_c);
        const double value = inner_v(f * (tv * eta_c), eta, basis);
        double scale = t.t1.norm();
        for (Index k = 0; k < d; ++k) scale += std::abs(v_c(k)) * t.t2[k].norm();
        const double thr = tol * std::max(1.0, scale) * eta_c.squaredNorm();
        if (std::abs(value) > thr) {
            out.witnesses.push_back({"sigma-parallel", {v, eta}, std::abs(value)});
            break;
        }
    }
    return out;
}

AffineDrift drift_from_ambient(const Vec& b1, const Mat& b2, const StateBasis& basis) {
    const Index d = basis.dim();
    AffineDrift out{basis.coordinates(b1), Mat(d, d)};
    for (Index k = 0; k < d; ++k) out.beta2.col(k) = basis.coordinates(b2 * basis.frame().col(k));
    return out;
}

}  // namespace affreal
