#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affreal/cone_algebra.hpp"

namespace affreal {

// All operators below act in canonical coordinates of a StateBasis (normed cone
// generators first, then an orthonormal basis of U).

/// beta(v) = beta1 + beta2 v.
struct AffineDrift {
    Vec beta1;
    Mat beta2;
};

/// T(v) = t1 + sum_k v_k t2[k]; t2[k] is T2 applied to the k-th basis vector.
struct AffineSquareVol {
    Mat t1;
    std::vector<Mat> t2;

    Mat at(const Vec& v) const;
};

/// Coordinates of n volatility vectors, one per row (n x d).
struct VolMatrix {
    Mat rows;
};

struct Witness {
    std::string condition;
    std::vector<Vec> vectors;
    double magnitude = 0.0;
    long sample = -1;  // boundary sample index when produced by a realization check
};

/// First witness per violated condition class; empty means the property holds.
struct Verdict {
    std::vector<Witness> witnesses;

    bool ok() const { return witnesses.empty(); }
    bool violates(const std::string& condition) const;
};

/// (sigma^2)^{lambda lambda} = (sigma^lambda)^T sigma^lambda.
Mat sigma_square(const VolMatrix& vol);

/// sigma^2 in an extended basis whose leading columns reproduce `basis`. The result
/// is the zero-padded block [[sigma^2, 0], [0, 0]].
Mat embed_sigma_square(const VolMatrix& vol, const Mat& basis, const Mat& extended, double tol = kDefaultTol);

Verdict is_inward_pointing(const AffineDrift& drift, const StateBasis& basis, double tol = kDefaultTol);
Verdict is_parallel(const AffineSquareVol& t, const StateBasis& basis, double tol = kDefaultTol);

/// The six characterizations of a symmetric nonnegative T vanishing on the cone,
/// each evaluated by its own route. For valid input all six agree.
struct KernelEquivalences {
    std::array<bool, 6> holds{};

    bool consistent() const;
};

KernelEquivalences symmetric_kernel_equivalences(const Mat& t, const StateBasis& basis, double tol = kDefaultTol);

struct SquareSample {
    Vec v;
    Mat sigma_sq;
};

struct AffineFit {
    bool affine = false;
    AffineSquareVol fit;
    double max_residual = 0.0;
    double scale = 0.0;
};

/// Least-squares affine fit of v -> sigma^2(v). Needs at least d + 2 samples.
AffineFit fit_affine_square(std::span<const SquareSample> samples, const StateBasis& basis, double tol = 1e-6);

/// Sampling oracles that test the defining inequalities directly on pairs v, eta with
/// eta in the cone and <v, eta>_V = 0, using ambient vectors and inner_v.
Verdict brute_force_inward(const AffineDrift& drift, const StateBasis& basis, std::size_t samples,
                           std::uint64_t seed, double tol = kDefaultTol);
Verdict brute_force_parallel(const AffineSquareVol& t, const StateBasis& basis, std::size_t samples,
                             std::uint64_t seed, double tol = kDefaultTol);

/// Canonical-coordinate representation of an ambient affine map x -> b1 + B2 x that
/// maps V into V.
AffineDrift drift_from_ambient(const Vec& b1, const Mat& b2, const StateBasis& basis);

}  // namespace affreal
