#include "affreal/cone_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affreal/error.hpp"

namespace affreal {

namespace {

// Numerical rank of a matrix whose columns have comparable (unit) scale.
Index numerical_rank(const Mat& m, double tol) {
    if (m.cols() == 0 || m.rows() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    const double top = s(0);
    if (top == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * top) ++r;
    return r;
}

Mat normalized_columns(const Mat& m) {
    Mat out = m;
    for (Index j = 0; j < out.cols(); ++j) out.col(j) /= out.col(j).norm();
    return out;
}

double coordinate_scale(const Vec& x) { return std::max(1.0, x.norm()); }

}  // namespace

ConeBasis::ConeBasis(Mat generators, double tol) : gens_(std::move(generators)) {
    if (gens_.cols() > gens_.rows())
        throw Error(ErrorKind::DegenerateBasis, "more cone generators than ambient dimensions");
    normed_ = true;
    for (Index j = 0; j < gens_.cols(); ++j) {
        const double n = gens_.col(j).norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw Error(ErrorKind::DegenerateBasis, "cone generator " + std::to_string(j) + " is zero");
        if (std::abs(n - 1.0) > tol) normed_ = false;
    }
    // Rank is judged on unit columns so that scaling cannot fake independence.
    if (numerical_rank(normalized_columns(gens_), tol) < gens_.cols())
        throw Error(ErrorKind::DegenerateBasis, "cone generators are linearly dependent");
}

ConeBasis ConeBasis::trivial(Index ambient_dim) { return ConeBasis(Mat(ambient_dim, 0)); }

ConeBasis normalize_basis(const ConeBasis& cone) {
    return ConeBasis(normalized_columns(cone.generators()));
}

std::vector<Vec> edges(const ConeBasis& cone) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(cone.size()));
    for (Index j = 0; j < cone.size(); ++j) out.push_back(cone.generator(j).normalized());
    return out;
}

std::optional<Index> edge_index(const ConeBasis& cone, const Vec& c, double tol) {
    const double n = c.norm();
    if (!(n > 0.0)) return std::nullopt;
    const Vec dir = c / n;
    for (Index j = 0; j < cone.size(); ++j) {
        if ((dir - cone.generator(j).normalized()).norm() <= tol) return j;
    }
    return std::nullopt;
}

ConeBasis cone_minus(const ConeBasis& cone, const Vec& c, double tol) {
    if (c.size() != cone.ambient_dim())
        throw Error(ErrorKind::DimensionMismatch, "vector and cone live in different spaces");
    if (c.norm() <= tol) return cone;
    auto j = edge_index(cone, c, tol);
    if (!j) throw Error(ErrorKind::NotAnEdge, "vector lies on no edge of the cone");
    Mat rest(cone.ambient_dim(), cone.size() - 1);
    Index k = 0;
    for (Index i = 0; i < cone.size(); ++i)
        if (i != *j) rest.col(k++) = cone.generator(i);
    return ConeBasis(std::move(rest));
}

StateBasis::StateBasis(const ConeBasis& cone, const Mat& subspace, double tol)
    : cone_(normalize_basis(cone)), tol_(tol) {
    const Index n = cone.ambient_dim();
    if (subspace.cols() > 0 && subspace.rows() != n)
        throw Error(ErrorKind::DimensionMismatch, "cone and subspace live in different spaces");

    Mat u;
    if (subspace.cols() > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(subspace);
        qr.setThreshold(tol);
        if (qr.rank() < subspace.cols())
            throw Error(ErrorKind::DegenerateBasis, "subspace basis is linearly dependent");
        u = qr.householderQ() * Mat::Identity(n, subspace.cols());
    } else {
        u = Mat(n, 0);
    }

    frame_.resize(n, cone_.size() + u.cols());
    frame_ << cone_.generators(), u;
    if (frame_.cols() == 0) throw Error(ErrorKind::DegenerateBasis, "state space V must have dimension >= 1");
    if (numerical_rank(frame_, tol) < frame_.cols())
        throw Error(ErrorKind::DegenerateBasis, "cone and subspace are not independent");
    pinv_ = frame_.completeOrthogonalDecomposition().pseudoInverse();
}

StateBasis StateBasis::canonical(Index cone_dim, Index dim, double tol) {
    const Mat id = Mat::Identity(dim, dim);
    return StateBasis(ConeBasis(id.leftCols(cone_dim)), id.rightCols(dim - cone_dim), tol);
}

Vec StateBasis::coordinates_unchecked(const Vec& x, double* residual) const {
    if (x.size() != ambient_dim()) throw Error(ErrorKind::DimensionMismatch, "vector has wrong ambient dimension");
    Vec c = pinv_ * x;
    if (residual) *residual = (x - frame_ * c).norm();
    return c;
}

Vec StateBasis::coordinates(const Vec& x) const {
    double res = 0.0;
    Vec c = coordinates_unchecked(x, &res);
    if (res > tol_ * coordinate_scale(x))
        throw Error(ErrorKind::NotInV, "vector leaves span V (residual " + std::to_string(res) + ")");
    return c;
}

double inner_v(const Vec& x, const Vec& y, const StateBasis& basis) {
    return basis.coordinates(x).dot(basis.coordinates(y));
}

bool membership(const Vec& x, const StateBasis& basis, const MembershipMode& mode) {
    const Vec c = basis.coordinates(x);
    const double thr = basis.tol() * coordinate_scale(x);
    const Index m = basis.cone_dim();

    if (std::holds_alternative<Interior>(mode)) {
        for (Index i = 0; i < m; ++i)
            if (!(c(i) > thr)) return false;
        return true;
    }

    Index free_edge = -1;
    if (const auto* s = std::get_if<Shifted>(&mode)) {
        if (s->edge.size() != basis.ambient_dim())
            throw Error(ErrorKind::DimensionMismatch, "edge vector has wrong ambient dimension");
        if (s->edge.norm() > basis.tol()) {
            auto j = edge_index(basis.cone(), s->edge, basis.tol());
            if (!j) throw Error(ErrorKind::NotAnEdge, "shift vector lies on no edge of the cone");
            free_edge = *j;
        }
    }
    for (Index i = 0; i < m; ++i)
        if (i != free_edge && c(i) < -thr) return false;
    return true;
}

SplitSpace::SplitSpace(Mat basis, Index cone_dim, Mat functionals, double tol)
    : basis_(std::move(basis)),
      cone_dim_(cone_dim),
      functionals_(std::move(functionals)),
      v_basis_(ConeBasis(basis_.leftCols(cone_dim)), basis_.rightCols(basis_.cols() - cone_dim), tol),
      coord_basis_(StateBasis::canonical(cone_dim, basis_.cols(), tol)) {
    if (functionals_.rows() != basis_.cols() || functionals_.cols() != basis_.rows())
        throw Error(ErrorKind::DimensionMismatch, "coordinate functionals do not match the basis");
    const Mat gram = functionals_ * basis_;
    const double err = (gram - Mat::Identity(dim(), dim())).cwiseAbs().maxCoeff();
    if (err > std::sqrt(tol))
        throw Error(ErrorKind::ConstraintViolated,
                    "coordinate functionals are not dual to the basis (max deviation " + std::to_string(err) + ")");
}

SplitSpace SplitSpace::orthogonal(const StateBasis& basis) {
    const Mat& f = basis.frame();
    Mat pinv = f.completeOrthogonalDecomposition().pseudoInverse();
    return SplitSpace(f, basis.cone_dim(), std::move(pinv), basis.tol());
}

Projection project(const Vec& h, const SplitSpace& split) {
    if (h.size() != split.ambient_dim())
        throw Error(ErrorKind::DimensionMismatch, "curve does not live on the split's grid");
    Vec v = split.project_v(h);
    return {h - v, std::move(v)};
}

}  // namespace affreal
