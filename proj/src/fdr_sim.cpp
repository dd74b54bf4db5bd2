#include "affreal/fdr_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "affreal/error.hpp"
#include "affreal/parallel.hpp"
#include "affreal/philox.hpp"

namespace affreal {

namespace {

constexpr double kReductionTol = 1e-8;

// Number of whole steps of size dt in t, or -1 when t is not (numerically) a multiple.
Index steps_in(double t, double dt) {
    const double q = t / dt;
    const double r = std::round(q);
    return std::abs(q - r) <= 1e-9 * std::max(1.0, q) ? static_cast<Index>(r) : -1;
}

struct TransportPlan {
    Index shift = 0;  // > 0: exact shift by this many cells
    double nu = 0.0;  // otherwise upwind with Courant number nu <= 1
};

TransportPlan plan_transport(double dt, double dx) {
    if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "time step must be positive");
    const Index k = steps_in(dt, dx);
    if (k >= 1) return {k, 0.0};
    if (dt < dx) return {0, dt / dx};
    throw Error(ErrorKind::CflViolated, "dt exceeds dx and is not a multiple of it");
}

void transport_into(Vec& out, const Vec& h, const TransportPlan& plan) {
    const Index n = h.size();
    const double slope = h(n - 1) - h(n - 2);
    if (plan.shift > 0) {
        const Index k = plan.shift;
        for (Index i = 0; i < n; ++i)
            out(i) = i + k < n ? h(i + k) : h(n - 1) + static_cast<double>(i + k - (n - 1)) * slope;
    } else {
        for (Index i = 0; i + 1 < n; ++i) out(i) = h(i) + plan.nu * (h(i + 1) - h(i));
        out(n - 1) = h(n - 1) + plan.nu * slope;
    }
}

// Shared pieces of the sqrt-functional HJMM dynamics on the grid.
struct Dynamics {
    const HjmmModel& m;
    Vec shape;       // hjm_drift of lambda alone: lambda * primitive(lambda)
    Vec ell_basis;   // ell(b_k)
    Vec lam_coords;  // L lambda
    Vec shape_coords;
    Mat db_coords;  // L D b_k

    explicit Dynamics(const HjmmModel& model) : m(model) {
        const Vec lam = model.lambda;
        shape = hjm_drift(model.grid, std::span<const Vec>(&lam, 1));
        const Mat& b = model.split.basis();
        ell_basis = (model.ell_row * b).transpose();
        lam_coords = model.split.coordinates(lam);
        shape_coords = model.split.coordinates(shape);
        db_coords.resize(b.cols(), b.cols());
        for (Index k = 0; k < b.cols(); ++k) db_coords.col(k) = model.split.coordinates(d_dx(b.col(k), model.grid.dx));
    }

    double rho2() const { return m.rho * m.rho; }
    Vec alpha(const Vec& h) const { return rho2() * std::abs(m.ell_of(h)) * shape; }
};

}  // namespace

std::vector<double> Foliation::b() const {
    std::vector<double> out;
    for (const auto& c : beta1) out.push_back(c.size() > 0 ? c(0) : 0.0);
    return out;
}

Vec transport(const Vec& h, double dt, double dx) {
    if (h.size() < 2) throw Error(ErrorKind::InvalidArgument, "curve too short to transport");
    Vec out(h.size());
    transport_into(out, h, plan_transport(dt, dx));
    return out;
}

Foliation evolve_psi(const HjmmModel& model, const Vec& g0, double horizon, double dt) {
    if (g0.size() != model.grid.size) throw Error(ErrorKind::GridMismatch, "initial leaf does not match the grid");
    const Vec c0 = model.split.coordinates(g0);
    if (c0.cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, g0.cwiseAbs().maxCoeff()))
        throw Error(ErrorKind::InvalidArgument, "initial leaf does not lie in G");
    const Index steps = steps_in(horizon, dt);
    if (steps < 0 || !(horizon >= 0.0)) throw Error(ErrorKind::InvalidArgument, "horizon is not a multiple of dt");
    const TransportPlan plan = plan_transport(dt, model.grid.dx);

    const Dynamics dyn(model);
    const Index d = model.split.dim(), m = model.split.cone_dim();
    Foliation fol{model.grid, dt, {}, {}, {}, {}, std::nullopt};
    Vec psi = g0, moved(g0.size());

    for (Index n = 0;; ++n) {
        const double t = static_cast<double>(n) * dt;
        const double lp = model.ell_of(psi);
        Vec beta1 = model.split.coordinates(d_dx(psi, model.grid.dx)) + dyn.rho2() * std::abs(lp) * dyn.shape_coords;
        Mat beta2 = dyn.db_coords;
        for (Index k = 0; k < d; ++k)
            beta2.col(k) += dyn.rho2() * (std::abs(lp + dyn.ell_basis(k)) - std::abs(lp)) * dyn.shape_coords;

        const double thr = 1e-12 * std::max(1.0, beta1.norm());
        const bool inside = m == 0 || (beta1.head(m).array() > thr).all();
        if (!inside && n > 0) {
            fol.exit_time = t;
            break;
        }
        fol.times.push_back(t);
        fol.psi.push_back(psi);
        fol.beta1.push_back(std::move(beta1));
        fol.beta2.push_back(std::move(beta2));
        if (!inside) {
            fol.exit_time = t;
            break;
        }
        if (n == steps) break;

        transport_into(moved, psi, plan);
        moved += dt * dyn.alpha(psi);
        psi = model.split.project_g(moved);
    }
    return fol;
}

Foliation evolve_psi(const CirModel& model, const ForwardCurve& g0, double horizon, double dt) {
    return evolve_psi(to_hjmm(model), g0.values(), horizon, dt);
}

Vec StatePaths::state(std::size_t p, std::size_t n) const {
    Vec out(dim);
    for (Index k = 0; k < dim; ++k) out(k) = at(p, n, k);
    return out;
}

ReductionCheck validate_reduction(const HjmmModel& model, const Foliation& fol) {
    const Index d = model.split.dim(), m = model.split.cone_dim();
    const Mat& b = model.split.basis();
    std::vector<Vec> xs;
    for (double s : {0.5, 2.0}) {
        Vec x = Vec::Zero(d);
        for (Index k = 0; k < d; ++k) x(k) = k < m ? s : (k % 2 ? -0.7 : 0.7) * s;
        xs.push_back(x);
    }
    for (Index k = 0; k < d; ++k) xs.push_back(Vec::Unit(d, k));

    const Vec lam_coords = model.split.coordinates(model.lambda);
    ReductionCheck out;
    for (std::size_t n = 0; n < fol.psi.size(); ++n) {
        const Vec& psi = fol.psi[n];
        const double lp = model.ell_of(psi);
        for (const auto& x : xs) {
            const Vec h = psi + b * x;
            const Vec sig = model.sigma(h);
            const Vec direct =
                model.split.coordinates(d_dx(h, model.grid.dx) + hjm_drift(model.grid, std::span<const Vec>(&sig, 1)));
            const Vec affine = fol.beta1[n] + fol.beta2[n] * x;
            out.max_drift_deviation = std::max(out.max_drift_deviation, (direct - affine).cwiseAbs().maxCoeff() /
                                                                            std::max(1.0, direct.cwiseAbs().maxCoeff()));
            const Vec vol_direct = model.split.coordinates(sig);
            const Vec vol_fast = model.rho * std::sqrt(std::abs(lp + (model.ell_row * b * x)(0))) * lam_coords;
            out.max_vol_deviation = std::max(out.max_vol_deviation, (vol_direct - vol_fast).cwiseAbs().maxCoeff() /
                                                                        std::max(1.0, vol_direct.cwiseAbs().maxCoeff()));
        }
    }
    if (out.max_drift_deviation > kReductionTol || out.max_vol_deviation > kReductionTol)
        throw Error(ErrorKind::ConstraintViolated, "affine state coefficients disagree with direct evaluation (drift " +
                                                       std::to_string(out.max_drift_deviation) + ", vol " +
                                                       std::to_string(out.max_vol_deviation) + ")");
    return out;
}

StatePaths simulate_state(const HjmmModel& model, const Foliation& fol, const Vec& x0, const SimConfig& cfg) {
    const Index d = model.split.dim(), m = model.split.cone_dim();
    if (x0.size() != d) throw Error(ErrorKind::DimensionMismatch, "initial state has wrong dimension");
    if ((x0.head(m).array() < 0.0).any()) throw Error(ErrorKind::InvalidArgument, "initial state leaves the cone");
    if (std::abs(cfg.dt - fol.dt) > 1e-12 * fol.dt) throw Error(ErrorKind::HorizonMismatch, "dt differs from the foliation");
    const Index steps = steps_in(cfg.horizon, cfg.dt);
    if (steps < 0) throw Error(ErrorKind::InvalidArgument, "horizon is not a multiple of dt");
    if (steps > fol.steps())
        throw Error(ErrorKind::HorizonMismatch, "foliation ends at t = " + std::to_string(fol.horizon()));

    validate_reduction(model, fol);

    const Dynamics dyn(model);
    std::vector<double> ell_psi(static_cast<std::size_t>(steps) + 1);
    for (Index n = 0; n <= steps; ++n) ell_psi[static_cast<std::size_t>(n)] = model.ell_of(fol.psi[static_cast<std::size_t>(n)]);

    StatePaths out;
    out.paths = cfg.paths;
    out.dim = d;
    out.times.assign(fol.times.begin(), fol.times.begin() + steps + 1);
    out.data.resize(cfg.paths * out.times.size() * static_cast<std::size_t>(d));

    std::vector<Mat> implicit;
    if (cfg.scheme == Scheme::DriftImplicit)
        for (Index n = 0; n < steps; ++n)
            implicit.push_back((Mat::Identity(d, d) - cfg.dt * fol.beta2[static_cast<std::size_t>(n)]).inverse());

    const double sqdt = std::sqrt(cfg.dt);
    parallel_for(cfg.paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
        Vec x(d), xp(d);
        for (std::size_t p = begin; p < end; ++p) {
            double* row = out.data.data() + p * out.times.size() * static_cast<std::size_t>(d);
            x = x0;
            for (Index k = 0; k < d; ++k) row[k] = x(k);
            for (Index n = 0; n < steps; ++n) {
                const auto un = static_cast<std::size_t>(n);
                xp = x;
                for (Index k = 0; k < m; ++k) xp(k) = std::max(0.0, xp(k));
                const double vol = model.rho * std::sqrt(std::abs(ell_psi[un] + dyn.ell_basis.dot(xp)));
                const double dw = sqdt * normal_draw(cfg.seed, p, static_cast<std::uint32_t>(n));
                if (cfg.scheme == Scheme::FullTruncation) {
                    x += (fol.beta1[un] + fol.beta2[un] * xp) * cfg.dt + (vol * dw) * dyn.lam_coords;
                } else {
                    x = implicit[un] * Vec(x + fol.beta1[un] * cfg.dt + (vol * dw) * dyn.lam_coords);
                }
                for (Index k = 0; k < m; ++k) x(k) = std::max(0.0, x(k));
                for (Index k = 0; k < d; ++k) row[(un + 1) * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] = x(k);
            }
        }
    });
    return out;
}

CurveEnsemble::CurveEnsemble(const Foliation& fol, const StatePaths& paths, const HjmmModel& model)
    : fol_(&fol), paths_(&paths), model_(&model) {
    if (paths.times.size() > fol.times.size()) throw Error(ErrorKind::GridMismatch, "paths outlast the foliation");
    for (std::size_t n = 0; n < paths.times.size(); ++n)
        if (std::abs(paths.times[n] - fol.times[n]) > 1e-12 * std::max(1.0, fol.times[n]))
            throw Error(ErrorKind::GridMismatch, "paths and foliation use different time grids");
    if (paths.dim != model.split.dim()) throw Error(ErrorKind::GridMismatch, "paths do not match the state dimension");
    if (paths.data.size() != paths.paths * paths.times.size() * static_cast<std::size_t>(paths.dim))
        throw Error(ErrorKind::GridMismatch, "path storage does not match its time grid");
    if (fol.grid.size != model.grid.size) throw Error(ErrorKind::GridMismatch, "foliation and model use different grids");
}

Vec CurveEnsemble::curve(std::size_t p, std::size_t n) const {
    return fol_->psi[n] + model_->split.basis() * paths_->state(p, n);
}

double CurveEnsemble::ell(std::size_t p, std::size_t n) const { return model_->ell_of(curve(p, n)); }

CurveEnsemble reconstruct(const Foliation& fol, const StatePaths& paths, const HjmmModel& model) {
    return {fol, paths, model};
}

DirectRun simulate_direct(const HjmmModel& model, const Vec& h0, const SimConfig& cfg, const Foliation* fol,
                          const Weight& weight) {
    const Grid& grid = model.grid;
    if (h0.size() != grid.size) throw Error(ErrorKind::GridMismatch, "initial curve does not match the grid");
    if (cfg.dt > grid.dx * (1.0 + 1e-12))
        throw Error(ErrorKind::CflViolated, "direct scheme needs dt <= dx");
    const TransportPlan plan = plan_transport(cfg.dt, grid.dx);
    const Index steps = steps_in(cfg.horizon, cfg.dt);
    if (steps < 0) throw Error(ErrorKind::InvalidArgument, "horizon is not a multiple of dt");
    if (fol && (steps > fol->steps() || std::abs(fol->dt - cfg.dt) > 1e-12 * cfg.dt))
        throw Error(ErrorKind::HorizonMismatch, "foliation does not cover the direct run");

    std::vector<Index> record_steps;
    for (double t : cfg.record_times) {
        const Index s = steps_in(t, cfg.dt);
        if (s < 0 || s > steps) throw Error(ErrorKind::InvalidArgument, "record time is not on the time grid");
        record_steps.push_back(s);
    }
    record_steps.push_back(steps);
    std::sort(record_steps.begin(), record_steps.end());
    record_steps.erase(std::unique(record_steps.begin(), record_steps.end()), record_steps.end());

    const Dynamics dyn(model);
    const auto ell_w = model.ell.weights(grid);
    const bool has_x1 = grid.x_max() >= 1.0;
    const auto x1_w = has_x1 ? interpolation_weights(grid, 1.0) : std::vector<std::pair<Index, double>>{};
    const Mat& basis = model.split.basis();
    const Mat pinv = basis.completeOrthogonalDecomposition().pseudoInverse();

    DirectRun run;
    run.paths = cfg.paths;
    for (Index n = 0; n <= steps; ++n) run.times.push_back(static_cast<double>(n) * cfg.dt);
    for (Index s : record_steps) run.record_times.push_back(run.times[static_cast<std::size_t>(s)]);
    run.ell.resize(static_cast<Index>(cfg.paths), steps + 1);
    run.eval_x1.resize(static_cast<Index>(cfg.paths), static_cast<Index>(record_steps.size()));
    run.hw.resize(static_cast<Index>(cfg.paths), static_cast<Index>(record_steps.size()));
    run.max_residual = Vec::Constant(static_cast<Index>(cfg.paths), std::numeric_limits<double>::quiet_NaN());
    if (cfg.keep_final_curves) run.final_curves.resize(cfg.paths);

    const double sqdt = std::sqrt(cfg.dt);
    const double rho2 = model.rho * model.rho;
    parallel_for(cfg.paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
        Vec r(grid.size), next(grid.size), diff(grid.size);
        for (std::size_t p = begin; p < end; ++p) {
            const auto ip = static_cast<Index>(p);
            r = h0;
            double worst = 0.0;
            std::size_t rec = 0;
            for (Index n = 0;; ++n) {
                double l = 0.0;
                for (auto [i, w] : ell_w) l += w * r(i);
                run.ell(ip, n) = l;
                if (fol) {
                    diff = r - fol->psi[static_cast<std::size_t>(n)];
                    const Vec c = pinv * diff;
                    worst = std::max(worst, (diff - basis * c).cwiseAbs().maxCoeff());
                }
                if (rec < record_steps.size() && record_steps[rec] == n) {
                    double v = std::numeric_limits<double>::quiet_NaN();
                    if (has_x1) {
                        v = 0.0;
                        for (auto [i, w] : x1_w) v += w * r(i);
                    }
                    run.eval_x1(ip, static_cast<Index>(rec)) = v;
                    run.hw(ip, static_cast<Index>(rec)) = hw_norm(grid, r, weight);
                    ++rec;
                }
                if (n == steps) break;
                // alpha_HJM(sigma(r)) with sigma(r) = rho sqrt|ell(r)| lambda is bilinear in sigma,
                // so it is the fixed shape scaled by rho^2 |ell(r)|.
                const double a = std::abs(l);
                const double vol = model.rho * std::sqrt(a);
                const double dw = sqdt * normal_draw(cfg.seed, p, static_cast<std::uint32_t>(n));
                transport_into(next, r, plan);
                next += (cfg.dt * rho2 * a) * dyn.shape + (vol * dw) * model.lambda;
                r.swap(next);
            }
            if (fol) run.max_residual(ip) = worst;
            if (cfg.keep_final_curves) run.final_curves[p] = r;
        }
    });

    const double lo = run.ell.size() ? run.ell.minCoeff() : 0.0;
    if (lo < kNegativeShortRate)
        run.warnings.push_back("NegativeShortRateWarning: min ell(r_t) = " + std::to_string(lo));
    return run;
}

EnsembleSummary summarize(const Foliation& fol, const StatePaths& paths, const HjmmModel& model, const Weight& weight) {
    const CurveEnsemble ens = reconstruct(fol, paths, model);
    const std::size_t last = paths.times.size() - 1;
    const Grid& grid = model.grid;
    const bool has_x1 = grid.x_max() >= 1.0;
    const auto x1_w = has_x1 ? interpolation_weights(grid, 1.0) : std::vector<std::pair<Index, double>>{};
    const Mat& basis = model.split.basis();
    const Mat pinv = basis.completeOrthogonalDecomposition().pseudoInverse();
    const Vec ell_basis = (model.ell_row * basis).transpose();

    EnsembleSummary s;
    const auto np = static_cast<Index>(paths.paths);
    s.ell_T.resize(np);
    s.eval_x1_T.resize(np);
    s.hw_T.resize(np);
    s.min_ell = std::numeric_limits<double>::infinity();
    std::size_t negative = 0;
    std::vector<double> ell_psi;
    for (const auto& psi : fol.psi) ell_psi.push_back(model.ell_of(psi));
    for (std::size_t p = 0; p < paths.paths; ++p) {
        const auto ip = static_cast<Index>(p);
        const Vec r = ens.curve(p, last);
        s.ell_T(ip) = model.ell_of(r);
        double v = std::numeric_limits<double>::quiet_NaN();
        if (has_x1) {
            v = 0.0;
            for (auto [i, w] : x1_w) v += w * r(i);
        }
        s.eval_x1_T(ip) = v;
        s.hw_T(ip) = hw_norm(grid, r, weight);
        const Vec diff = r - fol.psi[last];
        s.max_residual = std::max(s.max_residual, (diff - basis * (pinv * diff)).cwiseAbs().maxCoeff());
        for (std::size_t n = 0; n <= last; ++n) {
            const double l = ell_psi[n] + ell_basis.dot(paths.state(p, n));
            s.min_ell = std::min(s.min_ell, l);
            if (l < kNegativeNoise) ++negative;
        }
    }
    s.negative_fraction = static_cast<double>(negative) / static_cast<double>(paths.paths * paths.times.size());
    return s;
}

EnsembleSummary summarize(const DirectRun& run) {
    EnsembleSummary s;
    const Index last = run.ell.cols() - 1, rec = run.eval_x1.cols() - 1;
    s.ell_T = run.ell.col(last);
    s.eval_x1_T = run.eval_x1.col(rec);
    s.hw_T = run.hw.col(rec);
    s.min_ell = run.ell.minCoeff();
    s.negative_fraction = static_cast<double>((run.ell.array() < kNegativeNoise).count()) / static_cast<double>(run.ell.size());
    s.max_residual = run.max_residual.size() ? run.max_residual.maxCoeff() : 0.0;
    return s;
}

const WeakError& InvarianceReport::weak_error(const std::string& functional) const {
    for (const auto& w : weak)
        if (w.functional == functional) return w;
    throw Error(ErrorKind::InvalidArgument, "no weak error for " + functional);
}

namespace {

std::pair<double, double> mean_se(const Vec& v) {
    const double n = static_cast<double>(v.size());
    const double mean = v.mean();
    if (v.size() < 2) return {mean, 0.0};
    const double var = (v.array() - mean).square().sum() / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

WeakError weak_error(std::string name, const Vec& a, const Vec& b) {
    WeakError w;
    w.functional = std::move(name);
    std::tie(w.mean_fdr, w.se_fdr) = mean_se(a);
    std::tie(w.mean_direct, w.se_direct) = mean_se(b);
    w.difference = w.mean_fdr - w.mean_direct;
    w.combined_se = std::hypot(w.se_fdr, w.se_direct);
    w.within_3se = std::abs(w.difference) <= 3.0 * w.combined_se;
    return w;
}

}  // namespace

InvarianceReport verify_invariance(const EnsembleSummary& fdr, const EnsembleSummary& direct) {
    InvarianceReport rep;
    rep.weak.push_back(weak_error("ell", fdr.ell_T, direct.ell_T));
    rep.weak.push_back(weak_error("eval_x1", fdr.eval_x1_T, direct.eval_x1_T));
    rep.weak.push_back(weak_error("hw_norm", fdr.hw_T, direct.hw_T));
    rep.direct_max_residual = direct.max_residual;
    rep.fdr_max_residual = fdr.max_residual;
    rep.direct_min_ell = direct.min_ell;
    rep.direct_negative_fraction = direct.negative_fraction;
    rep.fdr_min_ell = fdr.min_ell;
    rep.short_rate_ok = direct.min_ell >= kNegativeShortRate;
    return rep;
}

}  // namespace affreal
