#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "affreal/hjmm_core.hpp"

namespace affreal {

/// Direct-run short rates below this are reported as negative.
inline constexpr double kNegativeShortRate = -1e-3;
/// Steps counted as negative in positivity statistics.
inline constexpr double kNegativeNoise = -1e-12;

/// Leaf curve psi(t) in G together with the affine state coefficients
///   Pi_V beta(psi(t) + B x) = beta1(t) + beta2(t) x.
struct Foliation {
    Grid grid;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Vec> psi;
    std::vector<Vec> beta1;
    std::vector<Mat> beta2;
    /// Set when the leaf leaves the boundary set (a cone coordinate of beta1 drops to 0);
    /// the horizon is truncated there.
    std::optional<double> exit_time;

    double horizon() const { return times.back(); }
    Index steps() const { return static_cast<Index>(times.size()) - 1; }
    /// b(t): first cone coordinate of beta1, i.e. ell(psi') for the short-rate models.
    std::vector<double> b() const;
};

/// Integrates d/dt psi = Pi_G beta(psi) by exact grid transport (dt a multiple of dx)
/// or upwinding (dt < dx), followed by projection onto G.
Foliation evolve_psi(const HjmmModel& model, const Vec& g0, double horizon, double dt);
Foliation evolve_psi(const CirModel& model, const ForwardCurve& g0, double horizon, double dt);

/// One transport step by dt on the grid; linear extrapolation supplies inflow at x_max.
Vec transport(const Vec& h, double dt, double dx);

enum class Scheme { FullTruncation, DriftImplicit };

struct SimConfig {
    double dt = 0.005;
    double horizon = 0.5;
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::FullTruncation;
    unsigned threads = 0;  // 0: default_threads()
    std::vector<double> record_times;  // direct run: where curve functionals are stored; T always included
    bool keep_final_curves = false;
};

/// Per-path state coordinates, row-major in (path, step, coordinate).
struct StatePaths {
    std::size_t paths = 0;
    Index dim = 0;
    std::vector<double> times;
    std::vector<double> data;

    double at(std::size_t p, std::size_t n, Index k = 0) const {
        return data[(p * times.size() + n) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
    }
    Vec state(std::size_t p, std::size_t n) const;
};

struct ReductionCheck {
    double max_drift_deviation = 0.0;
    double max_vol_deviation = 0.0;
};

/// Compares the affine coefficients against direct evaluation of Pi_V beta(psi(t) + B x)
/// and of sigma(psi(t) + B x) at several states; throws ConstraintViolated above 1e-8.
ReductionCheck validate_reduction(const HjmmModel& model, const Foliation& fol);

/// Paths of the finite-dimensional state. Cone coordinates are kept >= 0.
StatePaths simulate_state(const HjmmModel& model, const Foliation& fol, const Vec& x0, const SimConfig& cfg);

/// r_t = psi(t) + B X_t, evaluated lazily.
class CurveEnsemble {
public:
    CurveEnsemble(const Foliation& fol, const StatePaths& paths, const HjmmModel& model);

    Vec curve(std::size_t p, std::size_t n) const;
    double ell(std::size_t p, std::size_t n) const;
    std::size_t paths() const { return paths_->paths; }
    std::size_t steps() const { return paths_->times.size(); }

private:
    const Foliation* fol_;
    const StatePaths* paths_;
    const HjmmModel* model_;
};

CurveEnsemble reconstruct(const Foliation& fol, const StatePaths& paths, const HjmmModel& model);

/// Method-of-lines run of the full curve equation, driven by the same Brownian draws
/// as simulate_state for equal seeds.
struct DirectRun {
    std::size_t paths = 0;
    std::vector<double> times;
    Mat ell;                           // paths x steps+1
    std::vector<double> record_times;  // subset of times
    Mat eval_x1;                       // paths x records, r_t(1)
    Mat hw;                            // paths x records, hw_norm(r_t)
    Vec max_residual;                  // per path; NaN without a foliation
    std::vector<Vec> final_curves;
    std::vector<std::string> warnings;
};

DirectRun simulate_direct(const HjmmModel& model, const Vec& h0, const SimConfig& cfg, const Foliation* fol = nullptr,
                          const Weight& weight = Weight{});

/// Terminal functionals of an ensemble plus pathwise diagnostics.
struct EnsembleSummary {
    Vec ell_T;
    Vec eval_x1_T;
    Vec hw_T;
    double min_ell = 0.0;
    double negative_fraction = 0.0;
    double max_residual = 0.0;
};

EnsembleSummary summarize(const Foliation& fol, const StatePaths& paths, const HjmmModel& model,
                          const Weight& weight = Weight{});
EnsembleSummary summarize(const DirectRun& run);

struct WeakError {
    std::string functional;
    double mean_fdr = 0.0, se_fdr = 0.0;
    double mean_direct = 0.0, se_direct = 0.0;
    double difference = 0.0;
    double combined_se = 0.0;
    bool within_3se = false;
};

struct InvarianceReport {
    std::vector<WeakError> weak;  // ell, eval_x1, hw_norm
    double direct_max_residual = 0.0;
    double fdr_max_residual = 0.0;
    double direct_min_ell = 0.0;
    double direct_negative_fraction = 0.0;
    double fdr_min_ell = 0.0;
    bool short_rate_ok = false;  // direct min ell >= -1e-3

    const WeakError& weak_error(const std::string& functional) const;
};

InvarianceReport verify_invariance(const EnsembleSummary& fdr, const EnsembleSummary& direct);

}  // namespace affreal
