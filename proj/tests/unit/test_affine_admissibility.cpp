#include <doctest.h>

#include <random>

#include "affreal/affine_admissibility.hpp"
#include "affreal/error.hpp"
#include "support/oracles.hpp"

using namespace affreal;

namespace {

Mat m22(double a, double b, double c, double d) { return (Mat(2, 2) << a, b, c, d).finished(); }

StateBasis quadrant_plus(Index m, Index d) { return StateBasis::canonical(m, d); }

}  // namespace

TEST_CASE("sigma_square of row vectors") {
    CHECK(oracle::max_abs(sigma_square({(Mat(1, 2) << 1, 0).finished()}) - m22(1, 0, 0, 0)) == 0.0);
    // [[1,2]]^T [[1,2]] by hand.
    CHECK(oracle::max_abs(sigma_square({(Mat(1, 2) << 1, 2).finished()}) - m22(1, 2, 2, 4)) == 0.0);
}

TEST_CASE("sigma_square is symmetric nonnegative and ignores zero rows") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    for (int t = 0; t < 100; ++t) {
        Mat s(2, 3);
        for (Index i = 0; i < s.size(); ++i) s(i) = z(rng);
        const Mat sq = sigma_square({s});
        CHECK(oracle::max_abs(sq - sq.transpose()) == 0.0);
        Eigen::SelfAdjointEigenSolver<Mat> e(sq);
        CHECK(e.eigenvalues().minCoeff() >= -1e-10);
        Mat padded = Mat::Zero(5, 3);
        padded.topRows(2) = s;
        CHECK(oracle::max_abs(sigma_square({padded}) - sq) <= 1e-14);
    }
}

TEST_CASE("embedding into an extended basis gives the zero-padded block") {
    const Mat basis = Mat::Identity(3, 1);
    const Mat ext = Mat::Identity(3, 2);
    const Mat e = embed_sigma_square({(Mat(1, 1) << 2).finished()}, basis, ext);
    CHECK(oracle::max_abs(e - m22(4, 0, 0, 0)) == 0.0);
    CHECK(oracle::max_abs(embed_sigma_square({Mat::Zero(1, 1)}, basis, ext)) == 0.0);
    CHECK(e.topLeftCorner(1, 1)(0, 0) == 4.0);
    Mat wrong = ext;
    wrong(0, 0) = 2.0;
    try {
        embed_sigma_square({(Mat(1, 1) << 2).finished()}, basis, wrong);
        FAIL("expected BasisNotExtension");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::BasisNotExtension);
    }
}

TEST_CASE("mean-reverting one-dimensional cone drift is inward pointing") {
    const double gamma = 0.3;
    const AffineDrift drift{Vec::Zero(1), (Mat(1, 1) << -gamma).finished()};
    CHECK(is_inward_pointing(drift, quadrant_plus(1, 1)).ok());
}

TEST_CASE("negative constant drift on the half line is reported with its edge") {
    const AffineDrift drift{(Vec(1) << -1.0).finished(), Mat::Zero(1, 1)};
    const Verdict v = is_inward_pointing(drift, quadrant_plus(1, 1));
    REQUIRE(v.witnesses.size() == 1);
    CHECK(v.witnesses[0].condition == "nu-1");
    CHECK(v.witnesses[0].vectors[0](0) == 1.0);
    CHECK_FALSE(brute_force_inward(drift, quadrant_plus(1, 1), 1000, 1).ok());
}

TEST_CASE("drift pushing a U direction into the cone violates nu-2-U") {
    Mat b2 = Mat::Zero(2, 2);
    b2(0, 1) = 0.5;
    const AffineDrift drift{Vec::Zero(2), b2};
    const Verdict v = is_inward_pointing(drift, quadrant_plus(1, 2));
    CHECK(v.violates("nu-2-U"));
    CHECK_FALSE(brute_force_inward(drift, quadrant_plus(1, 2), 2000, 2).ok());
}

TEST_CASE("zero drift and zero volatility pass the oracles") {
    const StateBasis basis = quadrant_plus(2, 3);
    CHECK(brute_force_inward({Vec::Zero(3), Mat::Zero(3, 3)}, basis, 1000, 4).ok());
    AffineSquareVol zero{Mat::Zero(3, 3), std::vector<Mat>(3, Mat::Zero(3, 3))};
    CHECK(brute_force_parallel(zero, basis, 1000, 4).ok());
    CHECK(is_parallel(zero, basis).ok());
}

TEST_CASE("CIR square volatility is parallel") {
    const double rho = 0.1;
    AffineSquareVol t{Mat::Zero(1, 1), {(Mat(1, 1) << rho * rho).finished()}};
    CHECK(is_parallel(t, quadrant_plus(1, 1)).ok());
    CHECK(brute_force_parallel(t, quadrant_plus(1, 1), 10000, 9).ok());
}

TEST_CASE("identity square volatility is not parallel on a nontrivial cone") {
    AffineSquareVol t{Mat::Identity(2, 2), std::vector<Mat>(2, Mat::Zero(2, 2))};
    const Verdict v = is_parallel(t, quadrant_plus(1, 2));
    CHECK(v.violates("C-ker-T1"));
    CHECK_FALSE(brute_force_parallel(t, quadrant_plus(1, 2), 1000, 5).ok());
}

TEST_CASE("canonical admissible diagonal structure is parallel") {
    // R_+^2 x R: T1 acts on U only, T2(e_i) = a_i e_i e_i^T + U block, T2(U) = 0.
    const Index d = 3;
    Mat t1 = Mat::Zero(d, d);
    t1(2, 2) = 0.4;
    std::vector<Mat> t2(3, Mat::Zero(d, d));
    t2[0](0, 0) = 0.2;
    t2[0](2, 2) = 0.1;
    t2[0](0, 2) = t2[0](2, 0) = 0.05;
    t2[1](1, 1) = 0.7;
    AffineSquareVol t{t1, t2};
    CHECK(is_parallel(t, quadrant_plus(2, 3)).ok());
    CHECK(brute_force_parallel(t, quadrant_plus(2, 3), 10000, 6).ok());
}

TEST_CASE("asymmetric T2 on an edge is rejected") {
    std::vector<Mat> t2{m22(1, 1, 0, 1), Mat::Zero(2, 2)};
    try {
        is_parallel({Mat::Zero(2, 2), t2}, quadrant_plus(1, 2));
        FAIL("expected NotSymmetric");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotSymmetric);
    }
}

TEST_CASE("dimension mismatches are reported") {
    CHECK_THROWS_AS(is_inward_pointing({Vec::Zero(2), Mat::Zero(2, 2)}, quadrant_plus(1, 3)), Error);
    CHECK_THROWS_AS(is_parallel({Mat::Zero(2, 2), {}}, quadrant_plus(1, 2)), Error);
}

TEST_CASE("six kernel characterizations: trivial cases") {
    const StateBasis basis = quadrant_plus(2, 3);
    const auto z = symmetric_kernel_equivalences(Mat::Zero(3, 3), basis);
    CHECK(z.consistent());
    CHECK(z.holds[0]);
    Mat p = Mat::Zero(3, 3);
    p(1, 1) = 1.0;
    const auto e = symmetric_kernel_equivalences(p, basis);
    CHECK(e.consistent());
    CHECK_FALSE(e.holds[0]);
    Mat neg = -Mat::Identity(3, 3);
    CHECK_THROWS_AS(symmetric_kernel_equivalences(neg, basis), Error);
}

TEST_CASE("six kernel characterizations agree on random nonnegative matrices") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<Index> dim(1, 5);
    int trues = 0;
    for (int t = 0; t < 300; ++t) {
        const Index d = dim(rng);
        const Index m = std::uniform_int_distribution<Index>(0, d)(rng);
        std::vector<bool> zero(static_cast<std::size_t>(d), false);
        const bool kill_cone = std::uniform_real_distribution<double>(0, 1)(rng) < 0.5;
        for (Index i = 0; i < m; ++i) zero[i] = kill_cone || std::uniform_real_distribution<double>(0, 1)(rng) < 0.5;
        const Mat tm = oracle::psd_with_zero_rows(rng, d, zero);
        const auto k = symmetric_kernel_equivalences(tm, StateBasis::canonical(m, d));
        CHECK(k.consistent());
        trues += k.holds[0];
    }
    CHECK(trues > 50);
    CHECK(trues < 280);
}

TEST_CASE("affine fit recovers exact affine data and rejects curvature") {
    const StateBasis basis = quadrant_plus(1, 2);
    auto e11 = m22(1, 0, 0, 0);
    std::vector<SquareSample> lin, quad;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 2);
    for (int i = 0; i < 8; ++i) {
        Vec v(2);
        v << u(rng), u(rng) - 1;
        lin.push_back({v, v(0) * e11});
        quad.push_back({v, v(0) * v(0) * e11});
    }
    const AffineFit f = fit_affine_square(lin, basis);
    CHECK(f.affine);
    CHECK(f.max_residual <= 1e-10);
    CHECK(oracle::max_abs(f.fit.t2[0] - e11) <= 1e-10);
    CHECK(oracle::max_abs(f.fit.t2[1]) == 0.0);
    CHECK_FALSE(fit_affine_square(quad, basis).affine);
}

TEST_CASE("affine fit generalizes to held-out points and recovers parameters") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 3, m = 2;
        auto inst = oracle::random_square_vol(rng, m, d, 0.0);
        std::vector<SquareSample> train, test;
        for (int i = 0; i < 12; ++i) {
            Vec v(d);
            for (Index k = 0; k < d; ++k) v(k) = k < m ? std::abs(z(rng)) : z(rng);
            (i < 8 ? train : test).push_back({v, inst.t.at(v)});
        }
        const AffineFit f = fit_affine_square(train, StateBasis::canonical(m, d));
        REQUIRE(f.affine);
        for (const auto& s : test) CHECK(oracle::max_abs(f.fit.at(s.v) - s.sigma_sq) <= 1e-8 * std::max(1.0, f.scale));
        const double scale = std::max(1.0, oracle::max_abs(inst.t.t1));
        CHECK(oracle::max_abs(f.fit.t1 - inst.t.t1) <= 1e-8 * scale);
        for (Index k = 0; k < d; ++k) CHECK(oracle::max_abs(f.fit.t2[k] - inst.t.t2[k]) <= 1e-8 * scale);
    }
}

TEST_CASE("affine fit needs d + 2 samples in general position") {
    const StateBasis basis = quadrant_plus(1, 2);
    std::vector<SquareSample> few(3, {Vec::Zero(2), Mat::Zero(2, 2)});
    try {
        fit_affine_square(few, basis);
        FAIL("expected InsufficientSamples");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientSamples);
    }
    std::vector<SquareSample> flat(5, {Vec::Zero(2), Mat::Zero(2, 2)});
    try {
        fit_affine_square(flat, basis);
        FAIL("expected IllConditioned");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::IllConditioned);
    }
}

TEST_CASE("drift_from_ambient expresses maps in normed coordinates") {
    // Cone generator 2 e1; ambient map x -> -x. Coordinates: beta2 = -1 regardless of scaling.
    StateBasis basis(ConeBasis((Mat(2, 1) << 2, 0).finished()), (Mat(2, 1) << 0, 1).finished());
    const AffineDrift d = drift_from_ambient(Vec::Zero(2), -Mat::Identity(2, 2), basis);
    CHECK(oracle::max_abs(d.beta2 + Mat::Identity(2, 2)) <= 1e-15);
}

TEST_CASE("exact oracles agree with brute-force sampling on random instances") {
    std::mt19937_64 rng(909);
    int drift_bad = 0, vol_bad = 0;
    for (int t = 0; t < 150; ++t) {
        const Index d = std::uniform_int_distribution<Index>(1, 4)(rng);
        const Index m = std::uniform_int_distribution<Index>(0, d)(rng);
        const auto sp = oracle::random_space(rng, m, d, 1);
        const StateBasis basis(sp.cone, sp.subspace);

        const auto di = oracle::random_drift(rng, m, d, 0.1);
        const bool in = is_inward_pointing(di.drift, basis).ok();
        CHECK(in == di.expect_ok);
        CHECK(in == brute_force_inward(di.drift, basis, 2000, static_cast<std::uint64_t>(t)).ok());
        drift_bad += !in;

        const auto si = oracle::random_square_vol(rng, m, d, 0.1);
        const bool par = is_parallel(si.t, basis).ok();
        CHECK(par == si.expect_ok);
        CHECK(par == brute_force_parallel(si.t, basis, 2000, static_cast<std::uint64_t>(t)).ok());
        vol_bad += !par;
    }
    // both verdicts must actually occur for the comparison to mean anything
    CHECK(drift_bad > 10);
    CHECK(drift_bad < 140);
    CHECK(vol_bad > 10);
    CHECK(vol_bad < 140);
}
