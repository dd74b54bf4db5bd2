#include <doctest.h>

#include <cmath>

#include "affreal/error.hpp"
#include "affreal/fdr_sim.hpp"

using namespace affreal;

namespace {

const Grid& grid() {
    static const Grid g = Grid::uniform(10.0, 0.005);
    return g;
}

const HjmmModel& cir_model() {
    static const HjmmModel m = to_hjmm(make_cir_model(0.1, 0.05, Functional::short_end(), grid()));
    return m;
}

Vec desk_h0() { return grid().tabulate([](double x) { return 0.02 + 0.01 * x * std::exp(-x); }); }

SimConfig small_config(std::size_t paths) {
    SimConfig cfg;
    cfg.dt = 0.005;
    cfg.horizon = 0.5;
    cfg.paths = paths;
    cfg.seed = 42;
    cfg.threads = 1;
    return cfg;
}

// Method-of-lines RK4 on the leaf equation d/dt psi = Pi_G (psi' + S sigma^2(psi)).
Vec rk4_leaf(const HjmmModel& m, Vec psi, double horizon, int steps) {
    const double h = horizon / steps;
    auto rhs = [&](const Vec& p) {
        const Vec sig = m.sigma(p);
        return Vec(m.split.project_g(Vec(d_dx(p, m.grid.dx) + hjm_drift(m.grid, std::vector<Vec>{sig}))));
    };
    for (int n = 0; n < steps; ++n) {
        const Vec k1 = rhs(psi), k2 = rhs(psi + 0.5 * h * k1), k3 = rhs(psi + 0.5 * h * k2), k4 = rhs(psi + h * k3);
        psi += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return psi;
}

}  // namespace

TEST_CASE("transport: exact shifts and upwinding") {
    const Grid g = Grid::uniform(5.0, 0.01);
    const Vec h = g.tabulate([](double x) { return 1 + 0.3 * x; });
    const Vec shifted = transport(h, 0.03, g.dx);
    for (Index i = 0; i < g.size; ++i) CHECK(shifted(i) == doctest::Approx(1 + 0.3 * (g.x(i) + 0.03)).epsilon(1e-13));
    const Vec up = transport(h, 0.004, g.dx);
    for (Index i = 0; i < g.size; ++i) CHECK(up(i) == doctest::Approx(1 + 0.3 * (g.x(i) + 0.004)).epsilon(1e-13));
    CHECK_THROWS_AS(transport(h, 0.015, g.dx), Error);
}

TEST_CASE("leaf starts at g0 and stays in G") {
    const Vec g0 = cir_model().split.project_g(desk_h0());
    const Foliation fol = evolve_psi(cir_model(), g0, 0.5, 0.005);
    CHECK(fol.steps() == 100);
    CHECK(fol.horizon() == doctest::Approx(0.5));
    CHECK((fol.psi.front() - g0).cwiseAbs().maxCoeff() == 0.0);
    double worst = 0.0;
    for (const Vec& p : fol.psi) worst = std::max(worst, std::abs(cir_model().ell_of(p)));
    CHECK(worst <= 1e-10);
    CHECK_FALSE(fol.exit_time.has_value());
    CHECK_THROWS_AS(evolve_psi(cir_model(), desk_h0(), 0.5, 0.005), Error);  // not in G
}

TEST_CASE("leaf agrees with a method-of-lines RK4 reference") {
    const Vec g0 = grid().tabulate([](double x) { return 0.01 * x * std::exp(-x); });
    const Foliation fol = evolve_psi(cir_model(), g0, 0.5, 0.005);
    const Vec ref = rk4_leaf(cir_model(), g0, 0.5, 400);
    CHECK((fol.psi.back() - ref).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("b(t) and the affine coefficients reduce to CIR form") {
    const Vec g0 = cir_model().split.project_g(desk_h0());
    const Foliation fol = evolve_psi(cir_model(), g0, 0.5, 0.005);
    const auto rc = validate_reduction(cir_model(), fol);
    CHECK(rc.max_drift_deviation <= 1e-8);
    CHECK(rc.max_vol_deviation <= 1e-8);
    // beta2 = rho^2 ell(lambda Lambda) + gamma ell(lambda') ... = -gamma for short end ell
    for (const Mat& b2 : fol.beta2) CHECK(b2(0, 0) == doctest::Approx(-0.05).epsilon(1e-9));
    const auto b = fol.b();
    CHECK(b.front() == doctest::Approx(cir_model().ell_of(d_dx(g0, grid().dx))));
}

TEST_CASE("state paths stay in the cone and are deterministic") {
    const Vec h0 = desk_h0();
    const Foliation fol = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.5, 0.005);
    const Vec x0 = cir_model().split.coordinates(h0);
    SimConfig cfg = small_config(500);
    // low starting point so truncation actually triggers
    const Vec x_low = Vec::Constant(1, 1e-4);
    for (Scheme s : {Scheme::FullTruncation, Scheme::DriftImplicit}) {
        cfg.scheme = s;
        const StatePaths a = simulate_state(cir_model(), fol, x_low, cfg);
        for (double v : a.data) CHECK(v >= 0.0);
    }
    cfg.scheme = Scheme::FullTruncation;
    const StatePaths a = simulate_state(cir_model(), fol, x0, cfg);
    const StatePaths b = simulate_state(cir_model(), fol, x0, cfg);
    CHECK(a.data == b.data);
    cfg.threads = 3;
    const StatePaths c = simulate_state(cir_model(), fol, x0, cfg);
    CHECK(a.data == c.data);
    cfg.seed = 43;
    const StatePaths d = simulate_state(cir_model(), fol, x0, cfg);
    CHECK(a.data != d.data);
}

TEST_CASE("reconstruction recovers h0 and ell(r) = X") {
    const Vec h0 = desk_h0();
    const Foliation fol = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.5, 0.005);
    const StatePaths sp = simulate_state(cir_model(), fol, cir_model().split.coordinates(h0), small_config(50));
    const CurveEnsemble r = reconstruct(fol, sp, cir_model());
    CHECK((r.curve(0, 0) - h0).cwiseAbs().maxCoeff() <= 1e-15);
    double worst = 0.0;
    for (std::size_t p = 0; p < r.paths(); ++p)
        for (std::size_t n = 0; n < r.steps(); ++n) worst = std::max(worst, std::abs(r.ell(p, n) - sp.at(p, n)));
    CHECK(worst <= 1e-15);

    StatePaths zero = sp;
    std::fill(zero.data.begin(), zero.data.end(), 0.0);
    const CurveEnsemble r0 = reconstruct(fol, zero, cir_model());
    CHECK((r0.curve(3, 40) - fol.psi[40]).cwiseAbs().maxCoeff() == 0.0);

    StatePaths bad = sp;
    bad.times.pop_back();
    CHECK_THROWS_AS(reconstruct(fol, bad, cir_model()), Error);
    const Foliation coarse = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.5, 0.01);
    CHECK_THROWS_AS(reconstruct(coarse, sp, cir_model()), Error);
}

TEST_CASE("constant-b mean of the state matches the CIR first moment") {
    // h0 flat: ell(psi') = 0 leaf and b = 0 at t = 0; use the exact linear ODE for the mean.
    const Vec h0 = Vec::Constant(grid().size, 0.02);
    const Foliation fol = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.5, 0.005);
    const StatePaths sp = simulate_state(cir_model(), fol, cir_model().split.coordinates(h0), small_config(4000));
    // E X' = b(t) + beta2 E X, Euler in the same steps as the scheme.
    const auto b = fol.b();
    double mean = 0.02;
    for (std::size_t n = 0; n + 1 < sp.times.size(); ++n) mean += 0.005 * (b[n] + fol.beta2[n](0, 0) * mean);
    double s = 0, s2 = 0;
    const std::size_t last = sp.times.size() - 1;
    for (std::size_t p = 0; p < sp.paths; ++p) {
        s += sp.at(p, last);
        s2 += sp.at(p, last) * sp.at(p, last);
    }
    const double m = s / sp.paths, se = std::sqrt((s2 / sp.paths - m * m) / sp.paths);
    CHECK(std::abs(m - mean) <= 3 * se);
}

TEST_CASE("deterministic FDR and direct runs agree") {
    const HjmmModel m = to_hjmm(make_cir_model(0.0, 0.05, Functional::short_end(), grid()));
    const Vec h0 = desk_h0();
    const Foliation fol = evolve_psi(m, m.split.project_g(h0), 0.5, 0.005);
    const StatePaths sp = simulate_state(m, fol, m.split.coordinates(h0), small_config(1));
    const DirectRun dr = simulate_direct(m, h0, small_config(1), &fol);
    REQUIRE(dr.final_curves.empty());
    SimConfig keep = small_config(1);
    keep.keep_final_curves = true;
    const DirectRun dk = simulate_direct(m, h0, keep, &fol);
    const Vec fdr_final = reconstruct(fol, sp, m).curve(0, sp.times.size() - 1);
    CHECK((dk.final_curves.at(0) - fdr_final).cwiseAbs().maxCoeff() <= 1e-4);
    // rho = 0 and dt = dx: pure transport plus the gamma pull, both runs see the same drift
    CHECK(dr.max_residual(0) <= 1e-4);
}

TEST_CASE("rho = 0 leaf with gamma = 0 is pure transport") {
    const HjmmModel m = to_hjmm(make_cir_model(0.0, 0.0, Functional::short_end(), grid()));
    const Vec h0 = grid().tabulate([](double x) { return 0.02 + 0.01 * x * std::exp(-x); });
    SimConfig keep = small_config(1);
    keep.keep_final_curves = true;
    const DirectRun dr = simulate_direct(m, h0, keep);
    const Vec exact = grid().tabulate([](double x) { return 0.02 + 0.01 * (x + 0.5) * std::exp(-(x + 0.5)); });
    const Vec diff = (dr.final_curves.at(0) - exact).cwiseAbs();
    // cells fed from beyond x_max carry the extrapolated inflow
    const Index interior = grid().size - 100;
    CHECK(diff.head(interior).maxCoeff() <= 1e-15);
    CHECK(diff.maxCoeff() <= 1e-6);
}

TEST_CASE("strong-order sanity in the deterministic case") {
    // rho = 0: the curve equation is pure transport, r_T(x) = h0(x + T). The FDR error comes from
    // Euler steps of the state ODE and the transport/projection splitting.
    const HjmmModel m = to_hjmm(make_cir_model(0.0, 0.05, Functional::short_end(), grid()));
    const Vec h0 = desk_h0();
    const Vec exact = grid().tabulate([](double x) { return 0.02 + 0.01 * (x + 0.5) * std::exp(-(x + 0.5)); });
    const Index interior = grid().size - 200;
    auto err = [&](double dt) {
        const Foliation fol = evolve_psi(m, m.split.project_g(h0), 0.5, dt);
        SimConfig cfg = small_config(1);
        cfg.dt = dt;
        const StatePaths sp = simulate_state(m, fol, m.split.coordinates(h0), cfg);
        const Vec r = reconstruct(fol, sp, m).curve(0, sp.times.size() - 1);
        return (r - exact).head(interior).cwiseAbs().maxCoeff();
    };
    const double e1 = err(0.01), e2 = err(0.005);
    MESSAGE("errors " << e1 << " " << e2);
    CHECK(e1 > 0.0);
    CHECK(e1 / e2 >= 1.8);
}

TEST_CASE("configuration errors") {
    const Vec h0 = desk_h0();
    SimConfig cfg = small_config(2);
    cfg.dt = 0.01;
    CHECK_THROWS_AS(simulate_direct(cir_model(), h0, cfg), Error);
    const Foliation fol = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.25, 0.005);
    CHECK_THROWS_AS(simulate_state(cir_model(), fol, cir_model().split.coordinates(h0), small_config(2)), Error);
    try {
        simulate_state(cir_model(), fol, cir_model().split.coordinates(h0), small_config(2));
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::HorizonMismatch);
    }
}

TEST_CASE("weak agreement on a small ensemble") {
    const Vec h0 = desk_h0();
    const Foliation fol = evolve_psi(cir_model(), cir_model().split.project_g(h0), 0.5, 0.005);
    const SimConfig cfg = small_config(400);
    const StatePaths sp = simulate_state(cir_model(), fol, cir_model().split.coordinates(h0), cfg);
    const DirectRun dr = simulate_direct(cir_model(), h0, cfg, &fol);
    const auto fs = summarize(fol, sp, cir_model());
    const auto rep = verify_invariance(fs, summarize(dr));
    for (const char* f : {"ell", "eval_x1", "hw_norm"}) CHECK(rep.weak_error(f).within_3se);
    CHECK(rep.short_rate_ok);
    CHECK(rep.fdr_max_residual <= 1e-12);
    CHECK(rep.direct_max_residual <= 1e-3);

    const auto self = verify_invariance(fs, fs);
    for (const auto& w : self.weak) CHECK(w.difference == 0.0);
}

TEST_CASE("two-factor leaf and state simulation") {
    const HjmmModel m = to_hjmm(make_two_factor_model(1.0, 0.1, grid()));
    const Vec h0 = Vec::Constant(grid().size, 0.02);
    const Foliation fol = evolve_psi(m, m.split.project_g(h0), 0.5, 0.005);
    validate_reduction(m, fol);
    const StatePaths sp = simulate_state(m, fol, m.split.coordinates(h0), small_config(200));
    CHECK(sp.dim == 2);
    for (std::size_t p = 0; p < sp.paths; ++p)
        for (std::size_t n = 0; n < sp.times.size(); ++n) CHECK(sp.at(p, n, 0) >= 0.0);
}
