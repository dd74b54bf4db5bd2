#include "affreal/cli/artifacts.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "affreal/error.hpp"

namespace affreal::cli {

using json = nlohmann::ordered_json;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::Io, "SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingArtifacts, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

namespace {

// Line-oriented reader for the numeric CSVs written above.
class CsvReader {
public:
    CsvReader(const std::string& text, std::string name) : text_(text), name_(std::move(name)) {}

    std::vector<std::string> header() {
        std::vector<std::string> out;
        const std::string line = next_line();
        std::string cell;
        std::istringstream in(line);
        while (std::getline(in, cell, ',')) out.push_back(cell);
        return out;
    }

    // false at end of input; fills exactly `n` numbers or throws.
    bool row(std::vector<double>& out, std::size_t n) {
        while (pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
        if (pos_ >= text_.size()) return false;
        ++line_;
        out.clear();
        const char* p = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        while (true) {
            double v = 0.0;
            auto r = std::from_chars(p, end, v);
            if (r.ec != std::errc{}) {
                if (end - p >= 3 && std::string_view(p, 3) == "nan") {
                    v = std::nan("");
                    r.ptr = p + 3;
                } else {
                    fail("malformed number");
                }
            }
            out.push_back(v);
            p = r.ptr;
            if (p == end || *p == '\n') break;
            if (*p != ',') fail("expected ','");
            ++p;
        }
        pos_ = static_cast<std::size_t>(p - text_.data());
        if (out.size() != n) fail("expected " + std::to_string(n) + " columns");
        return true;
    }

private:
    std::string next_line() {
        const auto e = text_.find('\n', pos_);
        if (e == std::string::npos && pos_ >= text_.size()) fail("empty file");
        std::string line = text_.substr(pos_, e == std::string::npos ? std::string::npos : e - pos_);
        pos_ = e == std::string::npos ? text_.size() : e + 1;
        ++line_;
        return line;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::Parse, name_ + ": line " + std::to_string(line_) + ": " + what);
    }

    const std::string& text_;
    std::string name_;
    std::size_t pos_ = 0;
    int line_ = 0;
};

void append(std::string& out, double v) { out += format_number(v); }

}  // namespace

std::string psi_csv(const Foliation& fol) {
    std::string out = "t";
    for (Index i = 0; i < fol.grid.size; ++i) {
        out += ',';
        append(out, fol.grid.x(i));
    }
    out += '\n';
    for (std::size_t n = 0; n < fol.times.size(); ++n) {
        append(out, fol.times[n]);
        for (Index i = 0; i < fol.grid.size; ++i) {
            out += ',';
            append(out, fol.psi[n](i));
        }
        out += '\n';
    }
    return out;
}

Foliation parse_psi_csv(const std::string& text, const Grid& grid) {
    CsvReader r(text, "psi.csv");
    const auto head = r.header();
    if (static_cast<Index>(head.size()) != grid.size + 1 || head.front() != "t")
        throw Error(ErrorKind::GridMismatch, "psi.csv header does not match the model grid");
    Foliation fol;
    fol.grid = grid;
    std::vector<double> row;
    const auto width = static_cast<std::size_t>(grid.size) + 1;
    while (r.row(row, width)) {
        fol.times.push_back(row[0]);
        fol.psi.push_back(Eigen::Map<const Vec>(row.data() + 1, grid.size));
    }
    if (fol.times.size() < 2) throw Error(ErrorKind::Parse, "psi.csv needs at least two time rows");
    fol.dt = fol.times[1] - fol.times[0];
    return fol;
}

std::string paths_csv(const StatePaths& paths) {
    std::string out = "path,t";
    for (Index k = 0; k < paths.dim; ++k) out += ",X" + std::to_string(k + 1);
    out += '\n';
    for (std::size_t p = 0; p < paths.paths; ++p)
        for (std::size_t n = 0; n < paths.times.size(); ++n) {
            out += std::to_string(p);
            out += ',';
            append(out, paths.times[n]);
            for (Index k = 0; k < paths.dim; ++k) {
                out += ',';
                append(out, paths.at(p, n, k));
            }
            out += '\n';
        }
    return out;
}

StatePaths parse_paths_csv(const std::string& text, Index dim) {
    CsvReader r(text, "paths.csv");
    if (static_cast<Index>(r.header().size()) != dim + 2)
        throw Error(ErrorKind::GridMismatch, "paths.csv does not match the state dimension");
    StatePaths sp;
    sp.dim = dim;
    std::vector<double> row;
    const auto width = static_cast<std::size_t>(dim) + 2;
    long long current = -1;
    while (r.row(row, width)) {
        const auto p = static_cast<long long>(row[0]);
        if (p == current + 1)
            current = p;
        else if (p != current)
            throw Error(ErrorKind::Parse, "paths.csv rows are not grouped by path");
        if (p == 0) sp.times.push_back(row[1]);
        for (std::size_t k = 0; k < static_cast<std::size_t>(dim); ++k) sp.data.push_back(row[2 + k]);
    }
    sp.paths = static_cast<std::size_t>(current + 1);
    if (sp.data.size() != sp.paths * sp.times.size() * static_cast<std::size_t>(dim))
        throw Error(ErrorKind::Parse, "paths.csv has ragged paths");
    return sp;
}

std::string direct_csv(const DirectRun& run, double dt) {
    std::string out = "path,t,ell,eval_x1,hw\n";
    for (std::size_t p = 0; p < run.paths; ++p) {
        const auto ip = static_cast<Index>(p);
        for (std::size_t j = 0; j < run.record_times.size(); ++j) {
            const auto jj = static_cast<Index>(j);
            const auto step = static_cast<Index>(std::llround(run.record_times[j] / dt));
            out += std::to_string(p);
            out += ',';
            append(out, run.record_times[j]);
            out += ',';
            append(out, run.ell(ip, step));
            out += ',';
            append(out, run.eval_x1(ip, jj));
            out += ',';
            append(out, run.hw(ip, jj));
            out += '\n';
        }
    }
    return out;
}

std::string direct_summary_csv(const DirectRun& run) {
    std::string out = "path,min_ell,negative_steps,steps,max_residual\n";
    for (std::size_t p = 0; p < run.paths; ++p) {
        const auto ip = static_cast<Index>(p);
        const auto neg = (run.ell.row(ip).array() < kNegativeNoise).count();
        out += std::to_string(p);
        out += ',';
        append(out, run.ell.row(ip).minCoeff());
        out += ',' + std::to_string(neg) + ',' + std::to_string(run.ell.cols()) + ',';
        append(out, run.max_residual.size() ? run.max_residual(ip) : std::nan(""));
        out += '\n';
    }
    return out;
}

EnsembleSummary parse_direct(const std::string& records, const std::string& summary) {
    std::vector<double> row;
    std::vector<double> t_last;
    std::vector<std::array<double, 3>> last;
    {
        CsvReader r(records, "direct.csv");
        r.header();
        while (r.row(row, 5)) {
            const auto p = static_cast<std::size_t>(row[0]);
            if (p == last.size()) {
                last.push_back({row[2], row[3], row[4]});
                t_last.push_back(row[1]);
            } else if (p + 1 == last.size() && row[1] > t_last.back()) {
                last.back() = {row[2], row[3], row[4]};
                t_last.back() = row[1];
            } else {
                throw Error(ErrorKind::Parse, "direct.csv rows are not grouped by path in time order");
            }
        }
    }
    EnsembleSummary s;
    const auto np = static_cast<Index>(last.size());
    s.ell_T.resize(np);
    s.eval_x1_T.resize(np);
    s.hw_T.resize(np);
    for (Index p = 0; p < np; ++p) {
        s.ell_T(p) = last[static_cast<std::size_t>(p)][0];
        s.eval_x1_T(p) = last[static_cast<std::size_t>(p)][1];
        s.hw_T(p) = last[static_cast<std::size_t>(p)][2];
    }
    CsvReader r(summary, "direct_summary.csv");
    r.header();
    double min_ell = std::numeric_limits<double>::infinity(), max_res = 0.0;
    long long negative = 0, total = 0;
    Index count = 0;
    bool any_res = false;
    while (r.row(row, 5)) {
        if (static_cast<Index>(row[0]) != count) throw Error(ErrorKind::Parse, "direct_summary.csv rows out of order");
        ++count;
        min_ell = std::min(min_ell, row[1]);
        negative += static_cast<long long>(row[2]);
        total += static_cast<long long>(row[3]);
        if (!std::isnan(row[4])) {
            max_res = any_res ? std::max(max_res, row[4]) : row[4];
            any_res = true;
        }
    }
    if (count != np) throw Error(ErrorKind::Parse, "direct.csv and direct_summary.csv disagree on the path count");
    s.min_ell = min_ell;
    s.negative_fraction = total ? static_cast<double>(negative) / static_cast<double>(total) : 0.0;
    s.max_residual = max_res;
    return s;
}

std::string snapshots_csv(const CurveEnsemble& ens, const Grid& grid, const std::vector<double>& times,
                          const std::vector<std::size_t>& steps, std::size_t count) {
    std::string out = "path,t";
    for (Index i = 0; i < grid.size; ++i) {
        out += ',';
        append(out, grid.x(i));
    }
    out += '\n';
    for (std::size_t p = 0; p < std::min(count, ens.paths()); ++p)
        for (std::size_t n : steps) {
            const Vec r = ens.curve(p, n);
            out += std::to_string(p);
            out += ',';
            append(out, times[n]);
            for (Index i = 0; i < grid.size; ++i) {
                out += ',';
                append(out, r(i));
            }
            out += '\n';
        }
    return out;
}

bool VerifyResult::ok() const {
    bool ok = report.short_rate_ok;
    for (const auto& w : report.weak) ok = ok && w.within_3se;
    return ok;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

VerifyResult verify_run_dir(const std::filesystem::path& dir) {
    const auto run_path = dir / "run.json";
    if (!std::filesystem::is_regular_file(run_path))
        throw Error(ErrorKind::MissingArtifacts, "no run.json in " + dir.string());
    json run;
    try {
        run = json::parse(read_file(run_path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "run.json: " + std::string(e.what()));
    }
    if (run.value("mode", "") != "both")
        throw Error(ErrorKind::MissingArtifacts, "verify needs a run made with --mode both");

    const std::vector<std::string> needed{"model.ini", "psi.csv", "paths.csv", "direct.csv", "direct_summary.csv"};
    std::map<std::string, std::string> bytes;
    json inputs = json::object();
    for (const auto& name : needed) {
        const auto path = dir / name;
        if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::MissingArtifacts, "missing " + name);
        bytes[name] = read_file(path);
        const std::string h = sha256_hex(bytes[name]);
        const auto& recorded = run["artifacts"];
        if (!recorded.contains(name) || recorded[name].get<std::string>() != h)
            throw Error(ErrorKind::HashMismatch, "input-hash mismatch for " + name);
        inputs[name] = h;
    }

    const LoadedModel model = load_model_text(bytes["model.ini"], run.value("model_dir", std::string(".")));
    if (!model.simulable()) throw Error(ErrorKind::InvalidArgument, "model in run directory cannot be simulated");
    const HjmmModel& hm = *model.hjmm;
    const Foliation fol = parse_psi_csv(bytes["psi.csv"], model.grid);
    const StatePaths sp = parse_paths_csv(bytes["paths.csv"], hm.split.dim());
    const EnsembleSummary fdr = summarize(fol, sp, hm, model.weight);
    const EnsembleSummary direct = parse_direct(bytes["direct.csv"], bytes["direct_summary.csv"]);
    if (direct.ell_T.size() != fdr.ell_T.size())
        throw Error(ErrorKind::GridMismatch, "FDR and direct ensembles have different path counts");

    VerifyResult res;
    res.report = verify_invariance(fdr, direct);
    json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["inputs"] = inputs;
    j["paths"] = sp.paths;
    j["horizon"] = fol.horizon();
    json weak = json::array();
    for (const auto& w : res.report.weak) {
        json e;
        e["functional"] = w.functional;
        e["mean_fdr"] = number_or_null(w.mean_fdr);
        e["se_fdr"] = number_or_null(w.se_fdr);
        e["mean_direct"] = number_or_null(w.mean_direct);
        e["se_direct"] = number_or_null(w.se_direct);
        e["difference"] = number_or_null(w.difference);
        e["combined_se"] = number_or_null(w.combined_se);
        e["within_3se"] = w.within_3se;
        weak.push_back(e);
    }
    j["weak_errors"] = weak;
    j["foliation_residual"] = {{"direct_max", number_or_null(res.report.direct_max_residual)},
                               {"fdr_max", number_or_null(res.report.fdr_max_residual)}};
    j["short_rate"] = {{"direct_min", res.report.direct_min_ell},
                       {"direct_negative_fraction", res.report.direct_negative_fraction},
                       {"fdr_min", res.report.fdr_min_ell},
                       {"ok", res.report.short_rate_ok}};
    j["ok"] = res.ok();
    res.json = j.dump(2) + "\n";
    write_file(dir / "verify.json", res.json);
    return res;
}

}  // namespace affreal::cli
