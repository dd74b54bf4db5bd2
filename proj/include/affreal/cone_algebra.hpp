#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "affreal/types.hpp"

namespace affreal {

/// Finitely generated cone <lambda_1..lambda_m>^+ with linearly independent generators,
/// stored as the columns of an ambient matrix. m = 0 is the trivial cone {0}.
class ConeBasis {
public:
    ConeBasis(Mat generators, double tol = kDefaultTol);
    static ConeBasis trivial(Index ambient_dim);

    Index size() const { return gens_.cols(); }
    Index ambient_dim() const { return gens_.rows(); }
    const Mat& generators() const { return gens_; }
    Vec generator(Index i) const { return gens_.col(i); }
    bool normed() const { return normed_; }

private:
    Mat gens_;
    bool normed_ = false;
};

ConeBasis normalize_basis(const ConeBasis& cone);

/// Unit vectors spanning the extremal rays, one per generator.
std::vector<Vec> edges(const ConeBasis& cone);

/// Index of the generator whose ray contains c, or nullopt when c lies on no edge.
/// c must be nonzero.
std::optional<Index> edge_index(const ConeBasis& cone, const Vec& c, double tol = kDefaultTol);

/// Cone with the edge containing c removed. c = 0 leaves the cone unchanged.
ConeBasis cone_minus(const ConeBasis& cone, const Vec& c, double tol = kDefaultTol);

/// V = cone (+) U. Internally the cone generators are normalized and U is given an
/// orthonormal basis, so that canonical coordinates carry the V inner product as the
/// Euclidean one.
class StateBasis {
public:
    StateBasis(const ConeBasis& cone, const Mat& subspace, double tol = kDefaultTol);

    /// Coordinate model R^d with the first m unit vectors as cone generators.
    static StateBasis canonical(Index cone_dim, Index dim, double tol = kDefaultTol);

    Index cone_dim() const { return cone_.size(); }
    Index subspace_dim() const { return frame_.cols() - cone_.size(); }
    Index dim() const { return frame_.cols(); }
    Index ambient_dim() const { return frame_.rows(); }
    double tol() const { return tol_; }

    const ConeBasis& cone() const { return cone_; }
    /// Columns: normed cone generators followed by an orthonormal basis of U.
    const Mat& frame() const { return frame_; }

    /// Canonical coordinates of x; throws NotInV when x leaves span V.
    Vec coordinates(const Vec& x) const;
    /// Canonical coordinates without the span check, plus the residual norm.
    Vec coordinates_unchecked(const Vec& x, double* residual) const;
    Vec from_coordinates(const Vec& c) const { return frame_ * c; }

private:
    ConeBasis cone_;
    Mat frame_;
    Mat pinv_;
    double tol_;
};

/// <x, y>_V = <c1, c2>_C + <u1, u2>_H, with cone coordinates in the normed basis.
double inner_v(const Vec& x, const Vec& y, const StateBasis& basis);

struct Closed {};
struct Interior {};
/// Membership in (cone + <edge>) (+) U, the cone with the edge's sign constraint lifted.
struct Shifted {
    Vec edge;
};
using MembershipMode = std::variant<Closed, Interior, Shifted>;

bool membership(const Vec& x, const StateBasis& basis, const MembershipMode& mode);

/// H = G (+) V on a discretized curve space. `basis` holds the curves spanning V (first
/// cone_dim generate the cone); `functionals` are the coordinate functionals, rows with
/// functionals * basis = I. G is the joint kernel of the functionals.
class SplitSpace {
public:
    SplitSpace(Mat basis, Index cone_dim, Mat functionals, double tol = kDefaultTol);
    /// Orthogonal split: V from the state basis frame, G its Euclidean complement.
    static SplitSpace orthogonal(const StateBasis& basis);

    Index dim() const { return basis_.cols(); }
    Index cone_dim() const { return cone_dim_; }
    Index ambient_dim() const { return basis_.rows(); }
    const Mat& basis() const { return basis_; }
    const Mat& functionals() const { return functionals_; }

    /// V as a state basis inside the ambient space.
    const StateBasis& v_basis() const { return v_basis_; }
    /// V in coordinates: R^d with the declared basis treated as orthonormal.
    const StateBasis& coordinate_basis() const { return coord_basis_; }

    Vec coordinates(const Vec& h) const { return functionals_ * h; }
    Vec project_v(const Vec& h) const { return basis_ * (functionals_ * h); }
    Vec project_g(const Vec& h) const { return h - project_v(h); }

private:
    Mat basis_;
    Index cone_dim_;
    Mat functionals_;
    StateBasis v_basis_;
    StateBasis coord_basis_;
};

struct Projection {
    Vec g_part;
    Vec v_part;
};

Projection project(const Vec& h, const SplitSpace& split);

}  // namespace affreal
