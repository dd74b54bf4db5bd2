#include <doctest.h>

#include <algorithm>
#include <random>

#include "affreal/cone_algebra.hpp"
#include "affreal/error.hpp"
#include "support/oracles.hpp"

using namespace affreal;

namespace {

bool same_ray_set(const std::vector<Vec>& a, const std::vector<Vec>& b, double tol = 1e-12) {
    if (a.size() != b.size()) return false;
    std::vector<bool> used(b.size(), false);
    for (const auto& x : a) {
        bool found = false;
        for (std::size_t j = 0; j < b.size() && !found; ++j)
            if (!used[j] && (x - b[j]).norm() <= tol) used[j] = found = true;
        if (!found) return false;
    }
    return true;
}

Mat cols(std::initializer_list<Vec> vs) {
    Mat m(vs.begin()->size(), static_cast<Index>(vs.size()));
    Index j = 0;
    for (const auto& v : vs) m.col(j++) = v;
    return m;
}

Vec v3(double a, double b, double c) { return Vec((Vec(3) << a, b, c).finished()); }
Vec v2(double a, double b) { return Vec((Vec(2) << a, b).finished()); }

}  // namespace

TEST_CASE("edges of the nonnegative quadrant are the unit axes") {
    ConeBasis cone(Mat::Identity(2, 2));
    const auto e = edges(cone);
    CHECK(same_ray_set(e, {v2(1, 0), v2(0, 1)}));
}

TEST_CASE("edges are invariant under positive scaling and permutation") {
    ConeBasis a(cols({v3(2, 0, 0), v3(0, 5, 0)}));
    ConeBasis b(cols({v3(0, 1, 0), v3(1, 0, 0)}));
    CHECK(same_ray_set(edges(a), edges(b)));
}

TEST_CASE("dependent or zero generators are rejected") {
    CHECK_THROWS_AS(ConeBasis(cols({v2(1, 0), v2(2, 0)})), Error);
    CHECK_THROWS_AS(ConeBasis(cols({v2(0, 0)})), Error);
    try {
        ConeBasis(cols({v2(1, 1), v2(-2, -2)}));
        FAIL("expected DegenerateBasis");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateBasis);
    }
}

TEST_CASE("cone_minus drops the edge containing c") {
    ConeBasis cone(Mat::Identity(3, 3));
    const ConeBasis rest = cone_minus(cone, v3(0, 0, 7), 1e-12);
    CHECK(rest.size() == 2);
    CHECK(same_ray_set(edges(rest), {v3(1, 0, 0), v3(0, 1, 0)}));
    CHECK(cone_minus(cone, Vec::Zero(3)).size() == 3);
    try {
        cone_minus(cone, v3(1, 1, 0));
        FAIL("expected NotAnEdge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotAnEdge);
    }
}

TEST_CASE("normalize_basis gives unit generators on the same rays") {
    ConeBasis cone(cols({v3(3, 4, 0), v3(0, 0, 2)}));
    CHECK_FALSE(cone.normed());
    const ConeBasis n = normalize_basis(cone);
    CHECK(n.normed());
    CHECK((n.generator(0) - v3(0.6, 0.8, 0)).norm() < 1e-15);
}

TEST_CASE("inner_v uses normed cone coordinates plus the ambient inner product on U") {
    // cone generator (2,0,0) normalizes to e1; U = span(e2) with H inner product.
    StateBasis basis(ConeBasis(cols({v3(2, 0, 0)})), cols({v3(0, 3, 0)}));
    CHECK(inner_v(v3(4, 1, 0), v3(1, 2, 0), basis) == doctest::Approx(4.0 + 2.0));
    // Cone coordinates are taken in the normed basis: x = 4 e1 has coordinate 4 whatever
    // the length of the declared generator.
    StateBasis basis2(ConeBasis(cols({v3(0.5, 0, 0)})), cols({v3(0, 1, 0)}));
    CHECK(inner_v(v3(4, 1, 0), v3(1, 2, 0), basis2) == doctest::Approx(6.0));
}

TEST_CASE("inner_v rejects vectors outside V") {
    StateBasis basis(ConeBasis(cols({v3(1, 0, 0)})), cols({v3(0, 1, 0)}));
    try {
        inner_v(v3(0, 0, 1), v3(1, 0, 0), basis);
        FAIL("expected NotInV");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotInV);
    }
}

TEST_CASE("inner_v is symmetric and bilinear on random V") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 100; ++trial) {
        auto sp = oracle::random_space(rng, 2, 3, 2);
        StateBasis basis(sp.cone, sp.subspace);
        auto rnd = [&] {
            Vec c(3);
            for (Index i = 0; i < 3; ++i) c(i) = z(rng);
            return Vec(basis.frame() * c);
        };
        const Vec x = rnd(), y = rnd(), w = rnd();
        const double a = z(rng), b = z(rng);
        CHECK(inner_v(x, y, basis) == doctest::Approx(inner_v(y, x, basis)).epsilon(1e-10));
        CHECK(inner_v(a * x + b * w, y, basis) ==
              doctest::Approx(a * inner_v(x, y, basis) + b * inner_v(w, y, basis)).epsilon(1e-9).scale(1.0));
        CHECK(inner_v(x, x, basis) >= 0.0);
    }
}

TEST_CASE("membership modes") {
    StateBasis basis(ConeBasis(Mat::Identity(3, 2)), cols({v3(0, 0, 1)}));
    CHECK(membership(v3(1, 0, -5), basis, Closed{}));
    CHECK_FALSE(membership(v3(1, -0.1, 0), basis, Closed{}));
    CHECK_FALSE(membership(v3(1, 0, 0), basis, Interior{}));
    CHECK(membership(v3(1, 0.2, -3), basis, Interior{}));
    // (cone + <e1>) (+) U lifts the sign constraint on the first edge only.
    CHECK(membership(v3(-1, 0.5, 2), basis, Shifted{v3(3, 0, 0)}));
    CHECK_FALSE(membership(v3(1, -0.5, 2), basis, Shifted{v3(3, 0, 0)}));
    CHECK(membership(v3(1, 0.5, 2), basis, Shifted{Vec::Zero(3)}));
    CHECK_THROWS_AS(membership(v3(1, 0.5, 2), basis, Shifted{v3(1, 1, 0)}), Error);
}

TEST_CASE("interior of a pure subspace state space is everything") {
    StateBasis basis(ConeBasis::trivial(3), cols({v3(0, 0, 1)}));
    CHECK(membership(v3(0, 0, -2), basis, Interior{}));
}

TEST_CASE("project splits h into G and V parts that add back up") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    auto sp = oracle::random_space(rng, 1, 2, 4);
    const StateBasis basis(sp.cone, sp.subspace);
    const SplitSpace split = SplitSpace::orthogonal(basis);
    for (int i = 0; i < 50; ++i) {
        Vec h(6);
        for (Index k = 0; k < 6; ++k) h(k) = z(rng);
        const Projection p = project(h, split);
        CHECK((p.g_part + p.v_part - h).norm() < 1e-13);
        CHECK(split.coordinates(p.g_part).norm() < 1e-12);
        CHECK((split.project_v(p.v_part) - p.v_part).norm() < 1e-12);
    }
}

TEST_CASE("a split with non-dual functionals is rejected") {
    Mat b = Mat::Identity(4, 2);
    Mat l = 2.0 * b.transpose();
    CHECK_THROWS_AS(SplitSpace(b, 1, l), Error);
}
