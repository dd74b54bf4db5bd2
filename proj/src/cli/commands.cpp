#include "affreal/cli/commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <json.hpp>

#include "affreal/cli/artifacts.hpp"
#include "affreal/cli/model_file.hpp"
#include "affreal/error.hpp"

namespace affreal::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kRejected = 1;
constexpr int kInputError = 2;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

// ---- riccati ----

struct RiccatiArgs {
    double rho = 0.0, gamma = 0.0, x_max = 10.0, dx = 0.005;
    std::string out;
};

int cmd_riccati(const RiccatiArgs& a) {
    if (!(a.rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "--rho must be > 0");
    const Grid grid = Grid::uniform(a.x_max, a.dx);
    const auto p = riccati_pair(a.rho, a.gamma, grid);
    const Vec& lam = p.lambda.values();
    const Vec& big = p.Lambda.values();
    const Vec rest = a.rho * a.rho * lam.cwiseProduct(big) + a.gamma * lam;
    const Vec fd = (d_dx(lam, grid.dx) + rest).cwiseAbs();
    const double analytic = (p.lambda_prime + rest).cwiseAbs().maxCoeff();
    if (!a.out.empty()) {
        std::string csv = "x,Lambda,lambda,residual\n";
        for (Index i = 0; i < grid.size; ++i)
            csv += format_number(grid.x(i)) + ',' + format_number(big(i)) + ',' + format_number(lam(i)) + ',' +
                   format_number(fd(i)) + '\n';
        write_file(a.out, csv);
    }
    std::cout << "max residual (finite difference): " << fmt(fd.maxCoeff()) << "\n"
              << "max residual (analytic derivative): " << fmt(analytic) << "\n";
    return kOk;
}

// ---- check ----

std::vector<Vec> samples_for(const LoadedModel& m) {
    return sample_boundary_curves(m.model_data(), m.boundary_samples, m.sample_seed, m.check);
}

int cmd_check(const std::string& file, bool as_json) {
    LoadedModel m = load_model(file);
    m.data->boundary_samples = samples_for(m);
    const ModelData& md = m.model_data();
    const auto rep = check_thm_main2(md, m.check);
    const MatrixSpace k = compute_K(md, m.check);
    const bool const_k = check_const_mod_K(md, k, m.check);
    const auto damir = check_damir(md, m.check);
    const bool pure_subspace = md.split.cone_dim() == 0;
    std::optional<QeReport> qe;
    if (pure_subspace) qe = check_qe_affine(md, m.check);
    const bool ok = rep.ok() && (!qe || qe->ok());

    if (as_json) {
        json j;
        j["tool"] = kToolName;
        j["version"] = kToolVersion;
        j["input"] = {{"file", fs::path(file).filename().string()}, {"sha256", sha256_hex(m.source_text)}};
        j["model"] = {{"kind", m.kind},
                      {"dim", md.split.dim()},
                      {"cone_dim", md.split.cone_dim()},
                      {"grid", {{"x_max", m.grid.x_max()}, {"dx", m.grid.dx}}}};
        j["samples"] = rep.samples;
        json conds = json::array();
        for (const auto& c : rep.conditions) conds.push_back({{"id", c.id}, {"ok", c.ok}});
        j["conditions"] = conds;
        json wit = json::array();
        for (const auto& w : rep.witnesses) {
            json vs = json::array();
            for (const auto& v : w.vectors) vs.push_back(vec_json(v));
            wit.push_back({{"condition", w.condition}, {"sample", w.sample}, {"magnitude", w.magnitude}, {"vectors", vs}});
        }
        j["witnesses"] = wit;
        j["K"] = {{"dim", k.dim()}, {"const_mod_K", const_k}};
        j["check_damir"] = {{"holds", damir.holds()},
                            {"v_meets_s_range_trivially", damir.v_meets_s_range_trivially},
                            {"s_injective_on_range", damir.s_injective_on_range}};
        if (qe) {
            json q = {{"quasi_exponential", qe->quasi_exponential},
                      {"a_sigma_dim", qe->a_sigma_dim},
                      {"a_sigma_in_v", qe->a_sigma_in_v},
                      {"sigma_square_constant", qe->sigma_square_constant}};
            q["sigma_constant"] = qe->sigma_constant ? json(*qe->sigma_constant) : json(nullptr);
            q["ok"] = qe->ok();
            j["quasi_exponential"] = q;
        } else {
            j["quasi_exponential"] = nullptr;
        }
        j["assumptions"] = {"boundary set open in the graph norm (declared, not computed)"};
        j["ok"] = ok;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "model " << m.kind << ": dim V = " << md.split.dim() << ", cone dim = " << md.split.cone_dim()
                  << ", " << rep.samples << " boundary samples\n";
        for (const auto& c : rep.conditions) std::cout << "  " << c.id << ": " << (c.ok ? "ok" : "FAILED") << "\n";
        for (const auto& w : rep.witnesses)
            std::cout << "    witness " << w.condition << " sample " << w.sample << " magnitude " << fmt(w.magnitude)
                      << "\n";
        std::cout << "  K: dim " << k.dim() << ", sigma^2 constant mod K: " << (const_k ? "yes" : "no") << "\n"
                  << "  check_damir: " << (damir.holds() ? "holds" : "fails")
                  << " (V cap S(R) = 0: " << (damir.v_meets_s_range_trivially ? "yes" : "no")
                  << ", ker S cap R = 0: " << (damir.s_injective_on_range ? "yes" : "no") << ")\n";
        if (qe)
            std::cout << "  quasi-exponential: " << (qe->quasi_exponential ? "yes" : "no") << ", dim A_sigma "
                      << qe->a_sigma_dim << ", A_sigma in V: " << (qe->a_sigma_in_v ? "yes" : "no")
                      << ", sigma^2 constant: " << (qe->sigma_square_constant ? "yes" : "no") << "\n";
        std::cout << "  assumed: boundary set open in the graph norm\n"
                  << (ok ? "affine realization: yes\n" : "affine realization: no\n");
    }
    return ok ? kOk : kRejected;
}

// ---- initial-set ----

struct Membership {
    bool member = false;
    bool boundary = false;
    std::vector<std::pair<std::string, double>> values;
};

Membership membership(const LoadedModel& m, const Vec& h) {
    Membership out;
    if (m.cir) {
        const auto c = cir_initial_set(ForwardCurve(m.grid, h), *m.cir);
        out = {c.member, c.on_boundary, {{"ell(h)", c.ell_h}, {"ell(h') + (rho^2 ell(lambda Lambda) + gamma) ell(h)", c.drift_term}}};
    } else if (m.two_factor) {
        const auto c = two_factor_initial_set(ForwardCurve(m.grid, h), *m.two_factor);
        out = {c.member, c.member && std::abs(c.ell_h) <= kDefaultTol, {{"ell(h)", c.ell_h}, {"ell(h' + gamma h)", c.drift_term}}};
    } else {
        const auto c = maximal_initial_membership(h, m.model_data(), m.check);
        out = {c.member, c.on_boundary, {}};
        for (Index i = 0; i < c.v_coords.size(); ++i) out.values.emplace_back("v" + std::to_string(i + 1), c.v_coords(i));
        for (Index i = 0; i < c.drift_coords.size(); ++i)
            out.values.emplace_back("drift" + std::to_string(i + 1), c.drift_coords(i));
    }
    return out;
}

int cmd_initial_set(const std::string& file, const std::string& curve) {
    const LoadedModel m = load_model(file);
    // an existing file is read as CSV, anything else as a curve expression
    Vec h;
    if (fs::is_regular_file(curve)) {
        h = read_curve_csv(curve, m.grid);
    } else {
        const double rho = m.hjmm ? m.hjmm->rho : 0.0, gamma = m.hjmm ? m.hjmm->gamma : 0.0;
        h = parse_curve(curve, m.grid, {rho, gamma, fs::current_path()});
    }
    const Membership r = membership(m, h);
    std::cout << "status: " << (r.member ? (r.boundary ? "member (boundary)" : "member") : "non-member") << "\n";
    for (const auto& [name, v] : r.values) std::cout << "  " << name << " = " << fmt(v) << "\n";
    if (m.cir) {
        const auto cross = maximal_initial_membership(h, m.model_data(), m.check);
        std::cout << "  maximal initial set: " << (cross.member ? "member" : "non-member") << "\n";
    }
    return r.member ? kOk : kRejected;
}

// ---- simulate ----

struct SimulateArgs {
    std::string model, mode = "both", out_dir;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

std::vector<std::size_t> record_steps(const std::vector<double>& requested, const std::vector<double>& times, double dt) {
    std::vector<std::size_t> steps;
    for (double t : requested) {
        const auto n = static_cast<long long>(std::llround(t / dt));
        if (n < 0 || static_cast<std::size_t>(n) >= times.size() || std::abs(times[static_cast<std::size_t>(n)] - t) > 1e-9)
            throw Error(ErrorKind::InvalidArgument, "record time " + fmt(t) + " is not on the time grid");
        steps.push_back(static_cast<std::size_t>(n));
    }
    if (steps.empty() || steps.back() != times.size() - 1) steps.push_back(times.size() - 1);
    return steps;
}

int cmd_simulate(const SimulateArgs& a) {
    if (a.mode != "fdr" && a.mode != "direct" && a.mode != "both")
        throw Error(ErrorKind::InvalidArgument, "--mode must be fdr, direct or both");
    LoadedModel m = load_model(a.model);
    if (!m.simulable()) throw Error(ErrorKind::InvalidArgument, "model kind '" + m.kind + "' cannot be simulated");
    if (!m.h0) throw Error(ErrorKind::Parse, "[model] h0 is required for simulate");
    SimConfig cfg = m.sim;
    if (a.paths) cfg.paths = *a.paths;
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    const bool fdr = a.mode != "direct", direct = a.mode != "fdr";
    if (direct && cfg.dt > m.grid.dx * (1.0 + 1e-12))
        throw Error(ErrorKind::CflViolated, "direct run needs dt <= dx (dt = " + fmt(cfg.dt) + ", dx = " + fmt(m.grid.dx) + ")");

    const HjmmModel& hm = *m.hjmm;
    const Vec& h0 = *m.h0;
    const Membership mem = membership(m, h0);
    if (!mem.member) {
        std::cerr << "NotInInitialSet: h0 is not in the set of initial points\n";
        for (const auto& [name, v] : mem.values) std::cerr << "  " << name << " = " << fmt(v) << "\n";
        return kRejected;
    }

    const Foliation fol = evolve_psi(hm, hm.split.project_g(h0), cfg.horizon, cfg.dt);
    std::vector<std::string> warnings;
    if (fol.exit_time) {
        warnings.push_back("leaf left the boundary set at t = " + fmt(*fol.exit_time) + "; horizon truncated");
        cfg.horizon = fol.horizon();
        std::erase_if(cfg.record_times, [&](double t) { return t > cfg.horizon + 1e-12; });
    }
    const ReductionCheck red = validate_reduction(hm, fol);
    const auto steps = record_steps(cfg.record_times, fol.times, cfg.dt);

    fs::create_directories(a.out_dir);
    const fs::path dir = a.out_dir;
    json artifacts = json::object();
    auto emit = [&](const std::string& name, const std::string& bytes) {
        write_file(dir / name, bytes);
        artifacts[name] = sha256_hex(bytes);
    };
    emit("model.ini", m.source_text);

    if (fdr || direct) emit("psi.csv", psi_csv(fol));
    if (fdr) {
        const StatePaths sp = simulate_state(hm, fol, hm.split.coordinates(h0), cfg);
        emit("paths.csv", paths_csv(sp));
        emit("curves.csv", snapshots_csv(reconstruct(fol, sp, hm), m.grid, fol.times, steps, m.snapshot_paths));
    }
    if (direct) {
        std::vector<double> rec;
        for (auto n : steps) rec.push_back(fol.times[n]);
        cfg.record_times = rec;
        const DirectRun run = simulate_direct(hm, h0, cfg, &fol, m.weight);
        emit("direct.csv", direct_csv(run, cfg.dt));
        emit("direct_summary.csv", direct_summary_csv(run));
        warnings.insert(warnings.end(), run.warnings.begin(), run.warnings.end());
    }

    json run;
    run["tool"] = kToolName;
    run["version"] = kToolVersion;
    run["command"] = "simulate";
    run["mode"] = a.mode;
    run["model_file"] = fs::path(a.model).filename().string();
    run["model_dir"] = fs::absolute(fs::path(a.model)).parent_path().string();
    json rec = json::array();
    for (auto n : steps) rec.push_back(fol.times[n]);
    run["config"] = {{"dt", cfg.dt},
                     {"horizon", cfg.horizon},
                     {"paths", cfg.paths},
                     {"seed", cfg.seed},
                     {"scheme", cfg.scheme == Scheme::FullTruncation ? "full_truncation" : "drift_implicit"},
                     {"record_times", rec}};
    run["foliation"] = {{"exit_time", fol.exit_time ? json(*fol.exit_time) : json(nullptr)},
                        {"reduction_max_drift_deviation", red.max_drift_deviation},
                        {"reduction_max_vol_deviation", red.max_vol_deviation}};
    run["artifacts"] = artifacts;
    run["warnings"] = warnings;
    write_file(dir / "run.json", run.dump(2) + "\n");
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::cout << "wrote " << a.mode << " run to " << dir.string() << " (" << cfg.paths << " paths, T = " << fmt(cfg.horizon)
              << ")\n";
    if (a.mode != "both") return kOk;
    const VerifyResult v = verify_run_dir(dir);
    for (const auto& w : v.report.weak)
        std::cout << "  " << w.functional << ": |diff| = " << fmt(std::abs(w.difference)) << ", 3 SE = " << fmt(3 * w.combined_se)
                  << (w.within_3se ? "  ok" : "  OUTSIDE") << "\n";
    std::cout << "  direct min ell = " << fmt(v.report.direct_min_ell) << ", max V-complement residual = "
              << fmt(v.report.direct_max_residual) << "\n";
    return v.ok() ? kOk : kRejected;
}

int cmd_verify(const std::string& dir) {
    const VerifyResult v = verify_run_dir(dir);
    for (const auto& w : v.report.weak)
        std::cout << w.functional << ": |diff| = " << fmt(std::abs(w.difference)) << ", 3 SE = " << fmt(3 * w.combined_se)
                  << (w.within_3se ? "  ok" : "  OUTSIDE") << "\n";
    std::cout << "verify.json rewritten in " << dir << "\n";
    return v.ok() ? kOk : kRejected;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Affine realizations of HJMM-type term structure equations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

    RiccatiArgs ra;
    auto* ric = app.add_subcommand("riccati", "Tabulate the Riccati pair (Lambda, lambda) and its residual");
    ric->add_option("--rho", ra.rho, "volatility level rho > 0")->required();
    ric->add_option("--gamma", ra.gamma, "mean reversion gamma")->required();
    ric->add_option("--xmax", ra.x_max, "grid end")->capture_default_str();
    ric->add_option("--dx", ra.dx, "grid spacing")->capture_default_str();
    ric->add_option("--out", ra.out, "CSV output path");

    std::string check_file;
    bool check_json = false;
    auto* chk = app.add_subcommand("check", "Run the affine-realization checks on a model file");
    chk->add_option("model", check_file)->required();
    chk->add_flag("--json", check_json, "print the report as JSON");

    std::string init_file, init_curve;
    auto* ini = app.add_subcommand("initial-set", "Test a curve for membership in the set of initial points");
    ini->add_option("model", init_file)->required();
    ini->add_option("--curve", init_curve, "curve CSV (header x,value) or curve expression")->required();

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Simulate the realization and/or the curve equation");
    sim->add_option("model", sa.model)->required();
    sim->add_option("--mode", sa.mode, "fdr, direct or both")->capture_default_str();
    sim->add_option("--out-dir", sa.out_dir)->required();
    sim->add_option("--paths", sa.paths, "override [sim] paths");
    sim->add_option("--seed", sa.seed, "override [sim] seed");
    sim->add_option("--threads", sa.threads, "worker threads (default: AFFREAL_THREADS or hardware)");

    std::string verify_dir;
    auto* ver = app.add_subcommand("verify", "Recompute verify.json from a stored run directory");
    ver->add_option("run-dir", verify_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*ric) return cmd_riccati(ra);
        if (*chk) return cmd_check(check_file, check_json);
        if (*ini) return cmd_initial_set(init_file, init_curve);
        if (*sim) return cmd_simulate(sa);
        if (*ver) return cmd_verify(verify_dir);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

}  // namespace affreal::cli
