#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affreal/curve.hpp"
#include "affreal/realization_check.hpp"

namespace affreal {

/// Closed-form solution of Lambda' + (rho^2/2) Lambda^2 + gamma Lambda = 1, Lambda(0) = 0,
/// and lambda = Lambda' = 1 - (rho^2/2) Lambda^2 - gamma Lambda.
struct RiccatiPair {
    ForwardCurve Lambda;
    ForwardCurve lambda;
    Vec lambda_prime;  // analytic: -(rho^2 Lambda + gamma) lambda
};

RiccatiPair riccati_pair(double rho, double gamma, const Grid& grid);
double riccati_Lambda(double rho, double gamma, double x);

/// alpha_HJM = sum_k sigma_k Sigma_k with Sigma_k the running primitive of sigma_k.
Vec hjm_drift(const Grid& grid, std::span<const Vec> sigma_curves);

/// S(Phi) = sum_ij Phi_ij lambda_j Lambda_i for the basis curves lambda_i (declared
/// orthonormal) and their primitives Lambda_i.
class SOperator {
public:
    SOperator(const Grid& grid, const Mat& basis);

    Vec apply(const Mat& phi) const;
    Index dim() const { return basis_.cols(); }

private:
    Mat basis_;
    Mat primitives_;
};

CurveOperator shift_generator(const Grid& grid);
/// h -> h'' - mass^2 h.
CurveOperator heat_generator(const Grid& grid, double mass);

/// HJMM model with volatility sigma(h) = rho sqrt(|ell(h)|) lambda on H = G (+) V.
struct HjmmModel {
    std::string kind;
    Grid grid;
    double rho = 0.0;
    double gamma = 0.0;
    Functional ell;
    Vec lambda;  // volatility direction
    SplitSpace split;
    SOperator s_op;
    RowVec ell_row;

    Vec sigma(const Vec& h) const;
    double ell_of(const Vec& h) const { return ell_row.dot(h); }
};

HjmmModel make_hjmm(std::string kind, const Grid& grid, double rho, double gamma, Functional ell, Vec lambda,
                    Mat basis, Index cone_dim, Mat functionals);

struct CirModel {
    double rho = 0.0;
    double gamma = 0.0;
    Functional ell;
    Grid grid;
    ForwardCurve lambda;
    ForwardCurve Lambda;
    Vec lambda_prime;
    double riccati_residual_fd = 0.0;
    double riccati_residual_analytic = 0.0;
};

/// rho = 0 is accepted and gives the deterministic model with lambda = exp(-gamma x).
CirModel make_cir_model(double rho, double gamma, Functional ell, const Grid& grid);
HjmmModel to_hjmm(const CirModel& m);

struct TwoFactorModel {
    double gamma = 0.0;
    double rho = 0.0;
    Grid grid;
    Functional ell;   // ell(lambda) = 1, ell(lambda^2) = 0
    Functional ell2;  // ell2(lambda) = 0, ell2(lambda^2) = 1
    ForwardCurve lambda;
};

/// Two-point functionals at 0 and x1 (default ln 2 / gamma) solved from the constraints.
TwoFactorModel make_two_factor_model(double gamma, double rho, const Grid& grid, std::optional<double> x1 = {});
/// Uses a caller-supplied ell; throws ConstraintViolated unless ell(lambda) = 1, ell(lambda^2) = 0.
TwoFactorModel make_two_factor_model(double gamma, double rho, const Grid& grid, Functional ell);
HjmmModel to_hjmm(const TwoFactorModel& m);

/// sigma(h) = rho sqrt(|ell(h)|) lambda with V = <lambda, lambda^2> a plain subspace and
/// lambda = exp(-gamma x). The square volatility is not constant along V, so no affine
/// realization exists.
HjmmModel make_subspace_counterexample(double gamma, double rho, const Grid& grid, Functional ell);

ModelData model_data(const HjmmModel& m);

/// Linear SPDE: no drift correction, constant volatility curves, V spanned by `subspace`.
ModelData linear_model_data(const Grid& grid, CurveOperator generator, std::vector<Vec> sigma, const Mat& subspace);

Vec sigma_cir(const Vec& h, const CirModel& m);

struct CirMembership {
    bool member = false;
    bool on_boundary = false;
    double ell_h = 0.0;
    double drift_term = 0.0;  // ell(h') + (rho^2 ell(lambda Lambda) + gamma) ell(h)
};

CirMembership cir_initial_set(const ForwardCurve& h, const CirModel& m, double tol = kDefaultTol);

struct TwoFactorMembership {
    bool member = false;
    double ell_h = 0.0;
    double drift_term = 0.0;  // ell(h' + gamma h)
};

TwoFactorMembership two_factor_initial_set(const ForwardCurve& h, const TwoFactorModel& m, double tol = kDefaultTol);

}  // namespace affreal
