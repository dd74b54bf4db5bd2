#include "affreal/hjmm_core.hpp"

#include <cmath>
#include <string>

#include "affreal/error.hpp"

namespace affreal {

namespace {

constexpr double kConstraintTol = 1e-8;

double above(double tol, double x) { return tol * std::max(1.0, std::abs(x)); }

Grid require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) throw Error(ErrorKind::GridMismatch, "curve and model use different grids");
    return a;
}

}  // namespace

double riccati_Lambda(double rho, double gamma, double x) {
    const double theta = std::sqrt(gamma * gamma + 2.0 * rho * rho);
    if (theta == 0.0) return x;
    // 2(e^{theta x} - 1) / ((theta + gamma)(e^{theta x} - 1) + 2 theta), divided through by
    // e^{theta x} so that large theta x cannot overflow.
    const double e = std::exp(-theta * x);
    const double em = -std::expm1(-theta * x);
    return 2.0 * em / ((theta + gamma) * em + 2.0 * theta * e);
}

RiccatiPair riccati_pair(double rho, double gamma, const Grid& grid) {
    if (!(rho >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "riccati_pair needs rho >= 0");
    const Vec big = grid.tabulate([&](double x) { return riccati_Lambda(rho, gamma, x); });
    Vec small(grid.size), prime(grid.size);
    const double r2 = rho * rho;
    for (Index i = 0; i < grid.size; ++i) {
        small(i) = 1.0 - 0.5 * r2 * big(i) * big(i) - gamma * big(i);
        prime(i) = -(r2 * big(i) + gamma) * small(i);
    }
    return {ForwardCurve(grid, big), ForwardCurve(grid, small), prime};
}

Vec hjm_drift(const Grid& grid, std::span<const Vec> sigma_curves) {
    Vec out = Vec::Zero(grid.size);
    for (const auto& s : sigma_curves) {
        if (s.size() != grid.size) throw Error(ErrorKind::GridMismatch, "volatility curve does not match the grid");
        out += s.cwiseProduct(cumulative_integral(s, grid.dx));
    }
    return out;
}

SOperator::SOperator(const Grid& grid, const Mat& basis) : basis_(basis), primitives_(basis.rows(), basis.cols()) {
    if (basis.rows() != grid.size) throw Error(ErrorKind::GridMismatch, "basis curves do not match the grid");
    for (Index j = 0; j < basis.cols(); ++j) primitives_.col(j) = cumulative_integral(basis.col(j), grid.dx);
}

Vec SOperator::apply(const Mat& phi) const {
    if (phi.rows() != dim() || phi.cols() != dim())
        throw Error(ErrorKind::DimensionMismatch, "coefficient matrix does not match the state dimension");
    const Mat rows = basis_ * phi.transpose();  // column i: sum_j phi_ij lambda_j
    return rows.cwiseProduct(primitives_).rowwise().sum();
}

CurveOperator shift_generator(const Grid& grid) {
    return [dx = grid.dx](const Vec& h) { return d_dx(h, dx); };
}

CurveOperator heat_generator(const Grid& grid, double mass) {
    return [dx = grid.dx, m2 = mass * mass](const Vec& h) { return Vec(d2_dx2(h, dx) - m2 * h); };
}

Vec HjmmModel::sigma(const Vec& h) const { return rho * std::sqrt(std::abs(ell_of(h))) * lambda; }

HjmmModel make_hjmm(std::string kind, const Grid& grid, double rho, double gamma, Functional ell, Vec lambda,
                    Mat basis, Index cone_dim, Mat functionals) {
    if (lambda.size() != grid.size || basis.rows() != grid.size)
        throw Error(ErrorKind::GridMismatch, "model curves do not match the grid");
    RowVec row = ell.row(grid);
    SplitSpace split(basis, cone_dim, std::move(functionals));
    SOperator s(grid, basis);
    return HjmmModel{std::move(kind), grid, rho, gamma, std::move(ell), std::move(lambda),
                     std::move(split), std::move(s), std::move(row)};
}

CirModel make_cir_model(double rho, double gamma, Functional ell, const Grid& grid) {
    auto pair = riccati_pair(rho, gamma, grid);
    const double l1 = ell.apply(grid, pair.lambda.values());
    if (std::abs(l1 - 1.0) > kConstraintTol)
        throw Error(ErrorKind::ConstraintViolated, "ell(lambda) = " + std::to_string(l1) + ", expected 1");

    CirModel m{rho, gamma, std::move(ell), grid, pair.lambda, pair.Lambda, pair.lambda_prime, 0.0, 0.0};
    const Vec& lam = pair.lambda.values();
    const Vec& big = pair.Lambda.values();
    const Vec rest = rho * rho * lam.cwiseProduct(big) + gamma * lam;
    const Vec fd = d_dx(lam, grid.dx);
    for (Index i = 1; i + 1 < grid.size; ++i) m.riccati_residual_fd = std::max(m.riccati_residual_fd, std::abs(fd(i) + rest(i)));
    m.riccati_residual_analytic = (pair.lambda_prime + rest).cwiseAbs().maxCoeff();
    return m;
}

HjmmModel to_hjmm(const CirModel& m) {
    const Vec& lam = m.lambda.values();
    Mat basis = lam;
    Mat functionals = m.ell.row(m.grid);
    return make_hjmm("cir", m.grid, m.rho, m.gamma, m.ell, lam, std::move(basis), 1, std::move(functionals));
}

namespace {

void check_two_factor(const TwoFactorModel& m) {
    const Vec& lam = m.lambda.values();
    const Vec lam2 = lam.cwiseProduct(lam);
    const double r[4] = {m.ell.apply(m.grid, lam) - 1.0, m.ell.apply(m.grid, lam2), m.ell2.apply(m.grid, lam),
                         m.ell2.apply(m.grid, lam2) - 1.0};
    for (double v : r)
        if (std::abs(v) > kConstraintTol)
            throw Error(ErrorKind::ConstraintViolated, "two-factor functionals violate ell(lambda) = 1, ell(lambda^2) = 0");
}

// Weights (a, b) of a h(0) + b h(x1) with prescribed values on lambda and lambda^2.
Functional two_point(const Grid& grid, const Vec& lam, double x1, double on_lambda, double on_square) {
    const Vec lam2 = lam.cwiseProduct(lam);
    const Functional p0 = Functional::point(0.0), p1 = Functional::point(x1);
    Eigen::Matrix2d a;
    a << p0.apply(grid, lam), p1.apply(grid, lam), p0.apply(grid, lam2), p1.apply(grid, lam2);
    const Eigen::Vector2d w = a.fullPivLu().solve(Eigen::Vector2d(on_lambda, on_square));
    return Functional::point_combo({{0.0, w(0)}, {x1, w(1)}});
}

}  // namespace

TwoFactorModel make_two_factor_model(double gamma, double rho, const Grid& grid, std::optional<double> x1) {
    if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "two-factor model needs gamma > 0");
    const double x = x1.value_or(std::log(2.0) / gamma);
    if (!(x > 0.0) || x > grid.x_max()) throw Error(ErrorKind::InvalidArgument, "second functional point outside the grid");
    ForwardCurve lam(grid, grid.tabulate([&](double s) { return std::exp(-gamma * s); }));
    TwoFactorModel m{gamma, rho, grid, two_point(grid, lam.values(), x, 1.0, 0.0),
                     two_point(grid, lam.values(), x, 0.0, 1.0), lam};
    check_two_factor(m);
    return m;
}

TwoFactorModel make_two_factor_model(double gamma, double rho, const Grid& grid, Functional ell) {
    TwoFactorModel m = make_two_factor_model(gamma, rho, grid);
    m.ell = std::move(ell);
    check_two_factor(m);
    return m;
}

HjmmModel to_hjmm(const TwoFactorModel& m) {
    const Vec& lam = m.lambda.values();
    Mat basis(m.grid.size, 2);
    basis << lam, lam.cwiseProduct(lam);
    Mat functionals(2, m.grid.size);
    functionals << m.ell.row(m.grid), m.ell2.row(m.grid);
    return make_hjmm("two_factor", m.grid, m.rho, m.gamma, m.ell, lam, std::move(basis), 1, std::move(functionals));
}

HjmmModel make_subspace_counterexample(double gamma, double rho, const Grid& grid, Functional ell) {
    const Vec lam = grid.tabulate([&](double s) { return std::exp(-gamma * s); });
    Mat basis(grid.size, 2);
    basis << lam, lam.cwiseProduct(lam);
    Mat functionals = basis.completeOrthogonalDecomposition().pseudoInverse();
    return make_hjmm("subspace_sqrt", grid, rho, gamma, std::move(ell), lam, std::move(basis), 0, std::move(functionals));
}

ModelData model_data(const HjmmModel& m) {
    ModelData d{m.grid, m.split, shift_generator(m.grid), nullptr, nullptr, {}};
    d.apply_s = [s = m.s_op](const Mat& phi) { return s.apply(phi); };
    d.sigma = [rho = m.rho, row = m.ell_row, lam = m.lambda](const Vec& h) {
        return std::vector<Vec>{rho * std::sqrt(std::abs(row.dot(h))) * lam};
    };
    return d;
}

ModelData linear_model_data(const Grid& grid, CurveOperator generator, std::vector<Vec> sigma, const Mat& subspace) {
    for (const auto& s : sigma)
        if (s.size() != grid.size) throw Error(ErrorKind::GridMismatch, "volatility curve does not match the grid");
    if (subspace.rows() != grid.size) throw Error(ErrorKind::GridMismatch, "subspace basis does not match the grid");
    SplitSpace split = SplitSpace::orthogonal(StateBasis(ConeBasis::trivial(grid.size), subspace));
    ModelData d{grid, std::move(split), std::move(generator), nullptr, nullptr, {}};
    d.apply_s = [n = grid.size](const Mat&) { return Vec(Vec::Zero(n)); };
    d.sigma = [s = std::move(sigma)](const Vec&) { return s; };
    return d;
}

Vec sigma_cir(const Vec& h, const CirModel& m) {
    return m.rho * std::sqrt(std::abs(m.ell.apply(m.grid, h))) * m.lambda.values();
}

CirMembership cir_initial_set(const ForwardCurve& h, const CirModel& m, double tol) {
    require_same_grid(h.grid(), m.grid);
    CirMembership out;
    out.ell_h = m.ell.apply(m.grid, h.values());
    const double ell_lL = m.ell.apply(m.grid, m.lambda.values().cwiseProduct(m.Lambda.values()));
    out.drift_term = m.ell.apply(m.grid, h.derivative().values()) + (m.rho * m.rho * ell_lL + m.gamma) * out.ell_h;
    out.member = out.ell_h >= -above(tol, out.ell_h) && out.drift_term > above(tol, out.drift_term);
    out.on_boundary = out.member && std::abs(out.ell_h) <= tol;
    return out;
}

TwoFactorMembership two_factor_initial_set(const ForwardCurve& h, const TwoFactorModel& m, double tol) {
    require_same_grid(h.grid(), m.grid);
    check_two_factor(m);
    TwoFactorMembership out;
    out.ell_h = m.ell.apply(m.grid, h.values());
    out.drift_term = m.ell.apply(m.grid, Vec(h.derivative().values() + m.gamma * h.values()));
    out.member = out.ell_h >= -above(tol, out.ell_h) && out.drift_term > above(tol, out.drift_term);
    return out;
}

}  // namespace affreal
