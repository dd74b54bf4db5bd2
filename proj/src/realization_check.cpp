#include "affreal/realization_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "affreal/error.hpp"

namespace affreal {

namespace {

double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unflatten(const Vec& v, Index d) { return Eigen::Map<const Mat>(v.data(), d, d); }

// The sample points g + B v used for every per-sample test: v = 0 and v = t e_k.
std::vector<Vec> probe_points(Index d) {
    std::vector<Vec> pts{Vec::Zero(d)};
    for (Index k = 0; k < d; ++k)
        for (double t : {0.5, 1.0}) pts.push_back(t * Vec::Unit(d, k));
    return pts;
}

void record(RealizabilityReport& rep, const std::string& id, Witness w) {
    for (auto& c : rep.conditions)
        if (c.id == id) c.ok = false;
    rep.witnesses.push_back(std::move(w));
}

// Orthonormal basis of span{cols} with relative singular value cut.
Mat range_basis(const Mat& cols, double tol) {
    if (cols.cols() == 0) return Mat(cols.rows(), 0);
    Eigen::JacobiSVD<Mat> svd(cols, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    Index r = 0;
    if (s(0) > 0.0)
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) > tol * s(0)) ++r;
    return svd.matrixU().leftCols(r);
}

Vec checked_curve(const ModelData& model, const Vec& h) {
    if (h.size() != model.grid.size) throw Error(ErrorKind::GridMismatch, "curve does not match the model grid");
    if (!h.allFinite()) throw Error(ErrorKind::NotInDomain, "curve has non-finite values");
    return h;
}

}  // namespace

CheckOptions CheckOptions::loosened(double factor) const {
    CheckOptions o = *this;
    o.span_tol *= factor;
    o.cone_tol *= factor;
    o.affine_tol *= factor;
    o.kernel_tol *= factor;
    o.rank_tol *= factor;
    return o;
}

VolMatrix vol_coordinates(const ModelData& model, const Vec& h) {
    const auto curves = model.sigma(h);
    VolMatrix out{Mat(static_cast<Index>(curves.size()), model.split.dim())};
    for (std::size_t k = 0; k < curves.size(); ++k)
        out.rows.row(static_cast<Index>(k)) = model.split.coordinates(curves[k]).transpose();
    return out;
}

Mat sigma_square_at(const ModelData& model, const Vec& h) { return sigma_square(vol_coordinates(model, h)); }

Vec drift_at(const ModelData& model, const Vec& h) { return model.apply_a(h) + model.apply_s(sigma_square_at(model, h)); }

double span_residual(const Vec& w, const Mat& basis, double reference_norm) {
    const double denom = std::max(w.norm(), reference_norm);
    if (denom == 0.0) return 0.0;
    if (basis.cols() == 0) return w.norm() / denom;
    const Vec c = basis.colPivHouseholderQr().solve(w);
    return (w - basis * c).norm() / denom;
}

bool RealizabilityReport::ok() const {
    return std::all_of(conditions.begin(), conditions.end(), [](const ConditionStatus& c) { return c.ok; });
}

bool RealizabilityReport::condition(const std::string& id) const {
    for (const auto& c : conditions)
        if (c.id == id) return c.ok;
    throw Error(ErrorKind::InvalidArgument, "unknown condition id " + id);
}

bool check_beta_inc_V(const ModelData& model, const Vec& g, const CheckOptions& opts) {
    const Mat& b = model.split.basis();
    const Mat sq0 = sigma_square_at(model, g);
    for (Index k = 0; k < model.split.dim(); ++k)
        for (double t : {0.5, 1.0}) {
            const Vec v = t * b.col(k);
            const Vec av = model.apply_a(v);
            const Vec sv = model.apply_s(sigma_square_at(model, g + v) - sq0);
            if (span_residual(av + sv, b, std::max(av.norm(), sv.norm())) > opts.span_tol) return false;
        }
    return true;
}

RealizabilityReport check_thm_main2(const ModelData& model, const CheckOptions& opts) {
    if (model.boundary_samples.empty()) throw Error(ErrorKind::InsufficientSamples, "no boundary samples supplied");
    const SplitSpace& split = model.split;
    const Index d = split.dim(), m = split.cone_dim();
    const Mat& b = split.basis();
    const Mat bu = b.rightCols(d - m);
    const StateBasis coords = StateBasis::canonical(m, d, opts.cone_tol);
    const auto points = probe_points(d);

    RealizabilityReport rep;
    rep.samples = model.boundary_samples.size();
    for (const char* id : {kSigmaAffineParallel, kBetaIncV, kCondAR1, kCondAR2, kCondAR3, kBetaInward})
        rep.conditions.push_back({id, true});

    for (std::size_t s = 0; s < model.boundary_samples.size(); ++s) {
        const long idx = static_cast<long>(s);
        const Vec g = split.project_g(checked_curve(model, model.boundary_samples[s]));

        std::vector<SquareSample> sq;
        bool sigma_in_v = true;
        for (const auto& v : points) {
            const Vec h = g + b * v;
            for (const auto& curve : model.sigma(h)) {
                const double r = span_residual(curve, b);
                if (r > opts.span_tol && sigma_in_v) {
                    sigma_in_v = false;
                    record(rep, kSigmaAffineParallel, {"sigma-in-V", {curve}, r, idx});
                }
            }
            sq.push_back({v, sigma_square_at(model, h)});
        }
        const Mat& sq_g = sq.front().sigma_sq;
        // sigma_g^2 along basis vector k, from the t = 1 probe.
        auto delta_sq = [&](Index k) -> Mat { return sq[static_cast<std::size_t>(2 * k + 2)].sigma_sq - sq_g; };

        const AffineFit fit = fit_affine_square(sq, coords, opts.affine_tol);
        if (!fit.affine) {
            record(rep, kSigmaAffineParallel,
                   {"sigma-square-affine", {}, fit.scale > 0 ? fit.max_residual / fit.scale : fit.max_residual, idx});
        } else {
            const Verdict par = is_parallel(fit.fit, coords, opts.kernel_tol);
            if (!par.ok()) {
                Witness w = par.witnesses.front();
                w.condition = "parallel/" + w.condition;
                w.sample = idx;
                record(rep, kSigmaAffineParallel, std::move(w));
            }
        }

        const bool inc_v = check_beta_inc_V(model, g, opts);
        if (!inc_v) record(rep, kBetaIncV, {"beta-inc-V", {g}, 0.0, idx});

        const Vec beta_g = model.apply_a(g) + model.apply_s(sq_g);
        const Vec beta1 = split.coordinates(beta_g);
        {
            double worst = 0.0;
            Index at = -1;
            const double thr = opts.cone_tol * std::max(1.0, beta1.norm());
            for (Index i = 0; i < m; ++i)
                if (beta1(i) < -thr && -beta1(i) > worst) {
                    worst = -beta1(i);
                    at = i;
                }
            if (at >= 0) record(rep, kCondAR1, {"cond-AR-1", {Vec::Unit(d, at), beta1}, worst, idx});
        }

        Mat beta2(d, d);
        bool beta2_in_v = true;
        for (Index k = 0; k < d; ++k) {
            const Vec ak = model.apply_a(b.col(k));
            const Vec sk = model.apply_s(delta_sq(k));
            const Vec w = ak + sk;
            const double r = span_residual(w, b, std::max(ak.norm(), sk.norm()));
            beta2.col(k) = split.coordinates(w);
            if (r > opts.span_tol) beta2_in_v = false;
            if (k < m) {
                if (r > opts.span_tol) {
                    record(rep, kCondAR2, {"cond-AR-2/not-in-V", {Vec::Unit(d, k)}, r, idx});
                } else if (!membership(beta2.col(k), coords, Shifted{Vec::Unit(d, k)})) {
                    record(rep, kCondAR2, {"cond-AR-2", {Vec::Unit(d, k), beta2.col(k)}, beta2.col(k).minCoeff(), idx});
                }
            } else {
                const double ru = span_residual(ak, bu, ak.norm());
                if (ru > opts.span_tol) record(rep, kCondAR3, {"cond-AR-3", {Vec::Unit(d, k)}, ru, idx});
            }
        }

        if (fit.affine && inc_v && beta2_in_v) {
            // beta2 entries come out of discretized operators; judge them at the span tolerance.
            const Verdict inward = is_inward_pointing({beta1, beta2}, coords, std::max(opts.cone_tol, opts.span_tol));
            if (!inward.ok()) {
                Witness w = inward.witnesses.front();
                w.condition = "inward/" + w.condition;
                w.sample = idx;
                record(rep, kBetaInward, std::move(w));
            }
        } else {
            record(rep, kBetaInward, {"inward/not-affine", {}, 0.0, idx});
        }
    }
    return rep;
}

MatrixSpace sigma_square_range(const ModelData& model, const CheckOptions& opts) {
    if (model.boundary_samples.empty()) throw Error(ErrorKind::InsufficientSamples, "no boundary samples supplied");
    const Index d = model.split.dim();
    const auto points = probe_points(d);
    Mat cols(d * d, static_cast<Index>(model.boundary_samples.size() * points.size()));
    Index c = 0;
    for (const auto& g0 : model.boundary_samples) {
        const Vec g = model.split.project_g(checked_curve(model, g0));
        for (const auto& v : points) cols.col(c++) = flatten(sigma_square_at(model, g + model.split.basis() * v));
    }
    const Mat r = range_basis(cols, opts.rank_tol);
    MatrixSpace out;
    for (Index j = 0; j < r.cols(); ++j) out.basis.push_back(unflatten(r.col(j), d));
    return out;
}

MatrixSpace compute_K(const ModelData& model, const CheckOptions& opts) {
    const MatrixSpace r = sigma_square_range(model, opts);
    MatrixSpace out;
    if (r.dim() == 0) return out;
    const Mat& b = model.split.basis();
    const auto qr = b.colPivHouseholderQr();
    Mat off_v(b.rows(), r.dim());
    double ref = 0.0;
    for (Index j = 0; j < r.dim(); ++j) {
        const Vec s = model.apply_s(r.basis[j]);
        ref = std::max(ref, s.norm());
        off_v.col(j) = s - b * qr.solve(s);
    }
    Eigen::JacobiSVD<Mat> svd(off_v, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    for (Index j = 0; j < r.dim(); ++j) {
        const double sj = j < sv.size() ? sv(j) : 0.0;
        if (sj > opts.rank_tol * ref) continue;
        Mat k = Mat::Zero(b.cols(), b.cols());
        for (Index i = 0; i < r.dim(); ++i) k += svd.matrixV()(i, j) * r.basis[i];
        out.basis.push_back(std::move(k));
    }
    return out;
}

bool check_const_mod_K(const ModelData& model, const MatrixSpace& k, const CheckOptions& opts) {
    const auto& samples = model.boundary_samples;
    if (samples.size() < 2) return true;
    const Mat& b = model.split.basis();
    auto delta = [&](const Vec& g0, Index j) {
        const Vec g = model.split.project_g(checked_curve(model, g0));
        return Mat(sigma_square_at(model, g + b.col(j)) - sigma_square_at(model, g));
    };
    for (Index j = 0; j < b.cols(); ++j) {
        const Mat first = delta(samples.front(), j);
        for (std::size_t s = 1; s < samples.size(); ++s) {
            const Mat other = delta(samples[s], j);
            Mat diff = other - first;
            for (const auto& kb : k.basis) diff -= (diff.cwiseProduct(kb).sum()) * kb;
            const double ref = std::max(first.norm(), other.norm());
            if (diff.norm() > opts.span_tol * ref) return false;
        }
    }
    return true;
}

TransversalityResult check_damir(const ModelData& model, const CheckOptions& opts) {
    const MatrixSpace r = sigma_square_range(model, opts);
    TransversalityResult out;
    if (r.dim() == 0) {
        out.v_meets_s_range_trivially = out.s_injective_on_range = true;
        return out;
    }
    const Mat& b = model.split.basis();
    Mat s(b.rows(), r.dim());
    for (Index j = 0; j < r.dim(); ++j) s.col(j) = model.apply_s(r.basis[j]);

    Eigen::JacobiSVD<Mat> svd(s);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    const double ref = s.colwise().norm().maxCoeff();
    if (ref > 0.0)
        for (Index i = 0; i < sv.size(); ++i)
            if (sv(i) > opts.rank_tol * ref) ++rank;
    out.s_injective_on_range = rank == r.dim();

    // Principal angles between two orthonormal frames detect a common direction.
    const Mat s_hat = range_basis(s, opts.rank_tol);
    const Mat v_hat = range_basis(b, opts.rank_tol);
    Mat both(b.rows(), s_hat.cols() + v_hat.cols());
    both << v_hat, s_hat;
    Eigen::JacobiSVD<Mat> joint(both);
    out.v_meets_s_range_trivially = joint.singularValues().minCoeff() > opts.rank_tol || both.cols() == 0;
    return out;
}

Mat quasi_exp_subspace(const CurveOperator& apply_a, const std::vector<Vec>& seeds, Index max_dim, double tol) {
    if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "no seed curves");
    const Index n = seeds.front().size();
    std::vector<Vec> q;
    std::vector<Vec> pending(seeds.rbegin(), seeds.rend());
    while (!pending.empty()) {
        Vec w = std::move(pending.back());
        pending.pop_back();
        if (w.size() != n) throw Error(ErrorKind::DimensionMismatch, "seed curves have different sizes");
        const double n0 = w.norm();
        if (!(n0 > 0.0)) continue;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& qi : q) w -= qi.dot(w) * qi;
        const double n1 = w.norm();
        if (n1 <= tol * n0) continue;
        q.push_back(w / n1);
        if (static_cast<Index>(q.size()) > max_dim)
            throw Error(ErrorKind::DimensionExceeded,
                        "A-invariant hull exceeds dimension " + std::to_string(max_dim));
        pending.push_back(apply_a(q.back()));
    }
    Mat out(n, static_cast<Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) out.col(static_cast<Index>(i)) = q[i];
    return out;
}

bool QeReport::ok() const {
    return quasi_exponential && a_sigma_in_v && sigma_square_constant && sigma_constant.value_or(true);
}

QeReport check_qe_affine(const ModelData& model, const CheckOptions& opts) {
    if (model.boundary_samples.empty()) throw Error(ErrorKind::InsufficientSamples, "no boundary samples supplied");
    const Mat& b = model.split.basis();
    const auto points = probe_points(b.cols());

    std::vector<Vec> hs;
    for (const auto& g0 : model.boundary_samples) {
        const Vec g = model.split.project_g(checked_curve(model, g0));
        for (const auto& v : points) hs.push_back(g + b * v);
    }

    QeReport rep;
    std::vector<std::vector<Vec>> per_factor;
    std::vector<Vec> seeds;
    for (const auto& h : hs) {
        const auto curves = model.sigma(h);
        per_factor.resize(curves.size());
        for (std::size_t k = 0; k < curves.size(); ++k) {
            per_factor[k].push_back(curves[k]);
            seeds.push_back(curves[k]);
        }
    }

    try {
        const Mat a_sigma = quasi_exp_subspace(model.apply_a, seeds, opts.qe_max_dim, opts.qe_tol);
        rep.quasi_exponential = true;
        rep.a_sigma_dim = a_sigma.cols();
        rep.a_sigma_in_v = true;
        for (Index j = 0; j < a_sigma.cols(); ++j)
            rep.a_sigma_in_v = rep.a_sigma_in_v && span_residual(a_sigma.col(j), b) <= opts.span_tol;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DimensionExceeded) throw;
    }

    const Mat sq0 = sigma_square_at(model, hs.front());
    double scale = max_abs(sq0), dev = 0.0;
    for (const auto& h : hs) {
        const Mat sq = sigma_square_at(model, h);
        scale = std::max(scale, max_abs(sq));
        dev = std::max(dev, max_abs(sq - sq0));
    }
    rep.sigma_square_constant = dev <= opts.affine_tol * scale;

    // One-dimensional factor directions meeting pairwise trivially force sigma itself constant.
    std::vector<Mat> dirs;
    bool shape = true;
    for (const auto& f : per_factor) {
        Mat cols(b.rows(), static_cast<Index>(f.size()));
        for (std::size_t i = 0; i < f.size(); ++i) cols.col(static_cast<Index>(i)) = f[i];
        Mat r = range_basis(cols, opts.rank_tol);
        if (r.cols() > 1) shape = false;
        dirs.push_back(std::move(r));
    }
    for (std::size_t i = 0; shape && i < dirs.size(); ++i)
        for (std::size_t j = i + 1; shape && j < dirs.size(); ++j) {
            if (dirs[i].cols() == 0 || dirs[j].cols() == 0) continue;
            if (std::abs(dirs[i].col(0).dot(dirs[j].col(0))) > 1.0 - opts.rank_tol) shape = false;
        }
    if (shape) {
        bool constant = true;
        for (std::size_t k = 0; k < per_factor.size(); ++k)
            for (const auto& c : per_factor[k]) {
                const double ref = std::max(c.norm(), per_factor[k].front().norm());
                if ((c - per_factor[k].front()).norm() > opts.affine_tol * ref) constant = false;
            }
        rep.sigma_constant = constant;
    }
    return rep;
}

InitialMembership maximal_initial_membership(const Vec& h, const ModelData& model, const CheckOptions& opts) {
    checked_curve(model, h);
    const SplitSpace& split = model.split;
    const Index m = split.cone_dim();
    InitialMembership out;
    out.v_coords = split.coordinates(h);
    const Vec g = h - split.basis() * out.v_coords;
    out.drift_coords = split.coordinates(model.apply_a(g) + model.apply_s(sigma_square_at(model, g)));

    bool closed = true, interior = true;
    const double thr_v = opts.cone_tol * std::max(1.0, out.v_coords.norm());
    const double thr_d = opts.cone_tol * std::max(1.0, out.drift_coords.norm());
    for (Index i = 0; i < m; ++i) {
        closed = closed && out.v_coords(i) >= -thr_v;
        interior = interior && out.drift_coords(i) > thr_d;
    }
    out.member = closed && interior;
    out.on_boundary = out.member && out.v_coords.norm() <= opts.cone_tol;
    return out;
}

std::vector<Vec> sample_boundary_curves(const ModelData& model, std::size_t count, std::uint64_t seed,
                                        const CheckOptions& opts) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(-0.05, 0.05), rate(0.2, 2.0);
    const Index m = model.split.cone_dim();
    std::vector<Vec> out;
    const std::size_t max_attempts = 1000 * std::max<std::size_t>(count, 1);
    for (std::size_t attempt = 0; out.size() < count && attempt < max_attempts; ++attempt) {
        const double a1 = amp(rng), a2 = amp(rng), a3 = amp(rng), k1 = rate(rng), k2 = rate(rng);
        const Vec raw = model.grid.tabulate(
            [&](double x) { return a1 * std::exp(-k1 * x) + a2 * x * std::exp(-k2 * x) + a3 / (1.0 + x); });
        const Vec g = model.split.project_g(raw);
        if (m > 0) {
            const Vec drift = model.split.coordinates(model.apply_a(g) + model.apply_s(sigma_square_at(model, g)));
            const double thr = opts.cone_tol * std::max(1.0, drift.norm());
            if ((drift.head(m).array() <= thr).any()) continue;
        }
        out.push_back(g);
    }
    if (out.size() < count) throw Error(ErrorKind::InsufficientSamples, "could not find enough boundary curves");
    return out;
}

}  // namespace affreal
