#include "affreal/cli/model_file.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "affreal/error.hpp"

namespace affreal::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_error(int line, const std::string& what) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what);
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

}  // namespace

IniDocument IniDocument::parse(const std::string& text) {
    IniDocument doc;
    std::istringstream in(text);
    std::string raw, current;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (const auto c = s.find('#'); c != std::string::npos) s = s.substr(0, c);
        s = trim(s);
        if (!s.empty() && s.front() == ';') continue;
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) parse_error(line, "malformed section header '" + s + "'");
            current = trim(s.substr(1, s.size() - 2));
            if (doc.sections_.count(current)) parse_error(line, "duplicate section [" + current + "]");
            doc.sections_[current];
            doc.section_lines_[current] = line;
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) parse_error(line, "expected key = value");
        if (current.empty()) parse_error(line, "key outside of any section");
        IniEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
        if (e.key.empty()) parse_error(line, "empty key");
        for (const auto& other : doc.sections_[current])
            if (other.key == e.key) parse_error(line, "duplicate key '" + e.key + "' in [" + current + "]");
        doc.sections_[current].push_back(std::move(e));
    }
    return doc;
}

const std::vector<IniEntry>& IniDocument::section(const std::string& name) const {
    static const std::vector<IniEntry> empty;
    const auto it = sections_.find(name);
    return it == sections_.end() ? empty : it->second;
}

const IniEntry* IniDocument::find(const std::string& section, const std::string& key) const {
    for (const auto& e : this->section(section))
        if (e.key == key) return &e;
    return nullptr;
}

std::string IniDocument::get(const std::string& section, const std::string& key, const std::string& fallback) const {
    const IniEntry* e = find(section, key);
    return e ? e->value : fallback;
}

std::string IniDocument::require(const std::string& section, const std::string& key) const {
    const IniEntry* e = find(section, key);
    if (!e) {
        const auto it = section_lines_.find(section);
        parse_error(it == section_lines_.end() ? 0 : it->second, "missing key '" + key + "' in [" + section + "]");
    }
    return e->value;
}

double IniDocument::get_double(const std::string& section, const std::string& key, double fallback) const {
    const IniEntry* e = find(section, key);
    if (!e) return fallback;
    const auto v = to_double(e->value);
    if (!v) parse_error(e->line, "'" + key + "' is not a number: " + e->value);
    return *v;
}

double IniDocument::require_double(const std::string& section, const std::string& key) const {
    require(section, key);
    return get_double(section, key, 0.0);
}

std::uint64_t IniDocument::get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    const IniEntry* e = find(section, key);
    if (!e) return fallback;
    std::uint64_t v = 0;
    const char* end = e->value.data() + e->value.size();
    auto [p, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc{} || p != end) parse_error(e->line, "'" + key + "' is not a non-negative integer: " + e->value);
    return v;
}

std::vector<double> IniDocument::get_list(const std::string& section, const std::string& key) const {
    const IniEntry* e = find(section, key);
    std::vector<double> out;
    if (!e || e->value.empty()) return out;
    for (const auto& item : split(e->value, ',')) {
        const auto v = to_double(item);
        if (!v) parse_error(e->line, "'" + key + "' has a non-numeric item: " + item);
        out.push_back(*v);
    }
    return out;
}

namespace {

class CurveParser {
public:
    CurveParser(const std::string& text, const Grid& grid, const CurveContext& ctx) : s_(text), grid_(grid), ctx_(ctx) {}

    Vec run() {
        Vec out = Vec::Zero(grid_.size);
        skip();
        if (pos_ == s_.size()) fail("empty curve expression");
        bool first = true;
        while (pos_ < s_.size()) {
            double sign = 1.0;
            if (s_[pos_] == '+' || s_[pos_] == '-') {
                sign = s_[pos_] == '-' ? -1.0 : 1.0;
                ++pos_;
                skip();
            } else if (!first) {
                fail("expected '+' or '-'");
            }
            out += sign * term();
            first = false;
            skip();
        }
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::Parse, what + " in curve '" + s_ + "' at column " + std::to_string(pos_ + 1));
    }

    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    std::optional<double> number() {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
        if (ec != std::errc{}) return std::nullopt;
        pos_ = static_cast<std::size_t>(p - s_.data());
        return v;
    }

    double required_number() {
        const auto v = number();
        if (!v) fail("expected a number");
        return *v;
    }

    Vec term() {
        if (const auto c = number()) {
            skip();
            if (pos_ < s_.size() && s_[pos_] == '*') {
                ++pos_;
                skip();
                return *c * atom();
            }
            return Vec::Constant(grid_.size, *c);
        }
        return atom();
    }

    Vec atom() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        const std::string name = s_.substr(start, pos_ - start);
        if (name.empty()) fail("expected a curve term");
        const bool has_arg = pos_ < s_.size() && s_[pos_] == ':';
        if (has_arg) ++pos_;
        auto need_arg = [&] {
            if (!has_arg) fail("'" + name + "' needs an argument");
        };
        if (name == "exp") {
            need_arg();
            const double a = required_number();
            return grid_.tabulate([a](double x) { return std::exp(-a * x); });
        }
        if (name == "xexp") {
            need_arg();
            const double a = required_number();
            return grid_.tabulate([a](double x) { return x * std::exp(-a * x); });
        }
        if (name == "poly") {
            need_arg();
            const double k = required_number();
            if (k < 0 || k != std::floor(k)) fail("poly needs a non-negative integer power");
            return grid_.tabulate([k](double x) { return std::pow(x, k); });
        }
        if (name == "const") {
            need_arg();
            return Vec::Constant(grid_.size, required_number());
        }
        if (name == "inv1p") return grid_.tabulate([](double x) { return 1.0 / (1.0 + x); });
        if (name == "riccati" || name == "riccati_Lambda") {
            if (ctx_.rho < 0.0) fail("riccati needs rho >= 0");
            const auto p = riccati_pair(ctx_.rho, ctx_.gamma, grid_);
            return name == "riccati" ? p.lambda.values() : p.Lambda.values();
        }
        if (name == "file") {
            need_arg();
            const std::size_t b = pos_;
            while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t') ++pos_;
            const std::filesystem::path rel = s_.substr(b, pos_ - b);
            if (rel.empty()) fail("file: needs a path");
            return read_curve_csv(rel.is_absolute() ? rel : ctx_.base_dir / rel, grid_);
        }
        pos_ = start;
        fail("unknown curve term '" + name + "'");
    }

    const std::string& s_;
    const Grid& grid_;
    const CurveContext& ctx_;
    std::size_t pos_ = 0;
};

}  // namespace

Vec parse_curve(const std::string& text, const Grid& grid, const CurveContext& ctx) {
    return CurveParser(text, grid, ctx).run();
}

Functional parse_functional(const std::string& text) {
    const std::string s = trim(text);
    if (s == "short_end") return Functional::short_end();
    auto bad = [&]() -> Error { return Error(ErrorKind::Parse, "bad functional '" + s + "'"); };
    if (s.rfind("point:", 0) == 0) {
        const auto x = to_double(trim(s.substr(6)));
        if (!x) throw bad();
        return Functional::point(*x);
    }
    if (s.rfind("combo:", 0) == 0) {
        std::vector<std::pair<double, double>> terms;
        for (const auto& item : split(s.substr(6), ';')) {
            const auto at = item.find('@');
            if (at == std::string::npos) throw bad();
            const auto w = to_double(trim(item.substr(0, at)));
            const auto x = to_double(trim(item.substr(at + 1)));
            if (!w || !x) throw bad();
            terms.emplace_back(*x, *w);
        }
        if (terms.empty()) throw bad();
        return Functional::point_combo(terms);
    }
    throw bad();
}

Vec read_curve_csv(const std::filesystem::path& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "x,value")
        throw Error(ErrorKind::Parse, path.string() + ": line 1: expected header 'x,value'");
    std::vector<double> values;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        const auto parts = split(line, ',');
        const auto x = parts.size() == 2 ? to_double(parts[0]) : std::nullopt;
        const auto v = parts.size() == 2 ? to_double(parts[1]) : std::nullopt;
        if (!x || !v) throw Error(ErrorKind::Parse, path.string() + ": line " + std::to_string(n) + ": expected x,value");
        const auto i = static_cast<Index>(values.size());
        if (i >= grid.size || std::abs(*x - grid.x(i)) > 1e-9 * std::max(1.0, std::abs(*x)))
            throw Error(ErrorKind::GridMismatch,
                        path.string() + ": line " + std::to_string(n) + ": x = " + parts[0] + " is not the next grid node");
        values.push_back(*v);
    }
    if (static_cast<Index>(values.size()) != grid.size)
        throw Error(ErrorKind::GridMismatch, path.string() + ": " + std::to_string(values.size()) + " nodes, grid has " +
                                                 std::to_string(grid.size));
    return Eigen::Map<const Vec>(values.data(), grid.size);
}

namespace {

// Re-raise value-level failures with the line that produced them.
template <class F>
auto at_line(const IniEntry* e, F&& f) {
    try {
        return f();
    } catch (const Error& err) {
        if (!e || err.kind() == ErrorKind::GridMismatch || err.kind() == ErrorKind::Io) throw;
        std::string what = err.what();
        const std::string prefix = std::string(to_string(err.kind())) + ": ";
        if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
        throw Error(ErrorKind::Parse, "line " + std::to_string(e->line) + ": " + what);
    }
}

Mat curves_from_section(const IniDocument& doc, const std::string& name, const Grid& grid, const CurveContext& ctx) {
    const auto& entries = doc.section(name);
    Mat out(grid.size, static_cast<Index>(entries.size()));
    for (std::size_t j = 0; j < entries.size(); ++j)
        out.col(static_cast<Index>(j)) = at_line(&entries[j], [&] { return parse_curve(entries[j].value, grid, ctx); });
    return out;
}

Scheme parse_scheme(const IniDocument& doc) {
    const std::string s = doc.get("sim", "scheme", "full_truncation");
    if (s == "full_truncation") return Scheme::FullTruncation;
    if (s == "drift_implicit") return Scheme::DriftImplicit;
    parse_error(doc.find("sim", "scheme")->line, "scheme must be full_truncation or drift_implicit");
}

}  // namespace

LoadedModel load_model_text(const std::string& text, const std::filesystem::path& base_dir) {
    const IniDocument doc = IniDocument::parse(text);
    LoadedModel m;
    m.source_text = text;

    const IniEntry* dx_entry = doc.find("space", "dx");
    m.grid = at_line(dx_entry, [&] {
        return Grid::uniform(doc.get_double("space", "x_max", 10.0), doc.get_double("space", "dx", 0.005));
    });
    m.weight = at_line(doc.find("space", "weight"), [&] { return Weight(doc.get_double("space", "weight", 4.0)); });

    m.kind = doc.require("model", "kind");
    const IniEntry* kind_entry = doc.find("model", "kind");
    const double rho = doc.get_double("model", "rho", 0.0);
    const double gamma = doc.get_double("model", "gamma", 0.0);
    const CurveContext ctx{rho, gamma, base_dir};
    auto ell = [&] {
        const IniEntry* e = doc.find("model", "ell");
        return at_line(e, [&] { return parse_functional(e ? e->value : "short_end"); });
    };
    auto check_sign = [&](const char* key, double v, bool strict) {
        if (strict ? v > 0.0 : v >= 0.0) return;
        parse_error(doc.find("model", key) ? doc.find("model", key)->line : kind_entry->line,
                    std::string(key) + (strict ? " must be > 0" : " must be >= 0"));
    };
    // rho = 0 is the deterministic case, kept for cross-checks
    auto positive = [&](const char* key, double v) { check_sign(key, v, std::string(key) != "rho"); };

    if (m.kind == "cir") {
        positive("rho", rho);
        m.cir = at_line(kind_entry, [&] { return make_cir_model(rho, gamma, ell(), m.grid); });
        m.hjmm = to_hjmm(*m.cir);
    } else if (m.kind == "two_factor") {
        positive("rho", rho);
        positive("gamma", gamma);
        m.two_factor = at_line(kind_entry, [&] {
            if (doc.find("model", "ell")) return make_two_factor_model(gamma, rho, m.grid, ell());
            const IniEntry* x1 = doc.find("model", "x1");
            return make_two_factor_model(gamma, rho, m.grid,
                                         x1 ? std::optional<double>(doc.get_double("model", "x1", 0.0)) : std::nullopt);
        });
        m.hjmm = to_hjmm(*m.two_factor);
    } else if (m.kind == "subspace_sqrt") {
        positive("rho", rho);
        positive("gamma", gamma);
        m.hjmm = at_line(kind_entry, [&] { return make_subspace_counterexample(gamma, rho, m.grid, ell()); });
    } else if (m.kind == "custom") {
        positive("rho", rho);
        const IniEntry* lam_entry = doc.find("model", "lambda");
        const Vec lambda = at_line(lam_entry, [&] { return parse_curve(doc.require("model", "lambda"), m.grid, ctx); });
        const Mat cone = curves_from_section(doc, "cone", m.grid, ctx);
        const Mat sub = curves_from_section(doc, "subspace", m.grid, ctx);
        Mat basis(m.grid.size, cone.cols() + sub.cols());
        basis << cone, sub;
        if (basis.cols() == 0) parse_error(kind_entry->line, "custom model needs [cone] or [subspace] curves");
        Mat functionals;
        if (const IniEntry* fe = doc.find("model", "functionals")) {
            const auto specs = split(fe->value, '|');
            if (static_cast<Index>(specs.size()) != basis.cols())
                parse_error(fe->line, "need one functional per basis curve, separated by '|'");
            functionals.resize(basis.cols(), m.grid.size);
            for (std::size_t k = 0; k < specs.size(); ++k)
                functionals.row(static_cast<Index>(k)) = at_line(fe, [&] { return parse_functional(specs[k]).row(m.grid); });
        } else {
            functionals = basis.completeOrthogonalDecomposition().pseudoInverse();
        }
        m.hjmm = at_line(kind_entry, [&] {
            return make_hjmm("custom", m.grid, rho, gamma, ell(), lambda, basis, cone.cols(), functionals);
        });
    } else if (m.kind == "linear") {
        const std::string gen = doc.get("model", "generator", "shift");
        const IniEntry* gen_entry = doc.find("model", "generator");
        CurveOperator a;
        if (gen == "shift") {
            a = shift_generator(m.grid);
        } else if (gen.rfind("heat:", 0) == 0) {
            const auto mass = to_double(trim(gen.substr(5)));
            if (!mass) parse_error(gen_entry->line, "heat:<mass> expected");
            a = heat_generator(m.grid, *mass);
        } else {
            parse_error(gen_entry ? gen_entry->line : kind_entry->line, "generator must be shift or heat:<mass>");
        }
        const IniEntry* sig_entry = doc.find("model", "sigma");
        if (!sig_entry) parse_error(kind_entry->line, "linear model needs sigma");
        std::vector<Vec> sigma;
        for (const auto& item : split(sig_entry->value, '|'))
            sigma.push_back(at_line(sig_entry, [&] { return parse_curve(item, m.grid, ctx); }));
        Mat sub;
        const IniEntry* auto_entry = doc.find("subspace", "auto");
        if (auto_entry && auto_entry->value == "true") {
            sub = at_line(auto_entry, [&] {
                return quasi_exp_subspace(a, sigma, static_cast<Index>(doc.get_uint("check", "qe_max_dim", 20)),
                                          doc.get_double("check", "qe_tol", 1e-4));
            });
        } else {
            sub = curves_from_section(doc, "subspace", m.grid, ctx);
        }
        if (sub.cols() == 0) parse_error(kind_entry->line, "linear model needs [subspace] curves or auto = true");
        m.data = at_line(kind_entry, [&] { return linear_model_data(m.grid, a, sigma, sub); });
    } else {
        parse_error(kind_entry->line, "unknown model kind '" + m.kind + "'");
    }
    if (m.hjmm) m.data = model_data(*m.hjmm);

    if (const IniEntry* e = doc.find("model", "h0")) m.h0 = at_line(e, [&] { return parse_curve(e->value, m.grid, ctx); });

    CheckOptions& c = m.check;
    c.span_tol = doc.get_double("check", "span_tol", c.span_tol);
    c.cone_tol = doc.get_double("check", "cone_tol", c.cone_tol);
    c.affine_tol = doc.get_double("check", "affine_tol", c.affine_tol);
    c.kernel_tol = doc.get_double("check", "kernel_tol", c.kernel_tol);
    c.rank_tol = doc.get_double("check", "rank_tol", c.rank_tol);
    c.qe_tol = doc.get_double("check", "qe_tol", c.qe_tol);
    c.qe_max_dim = static_cast<Index>(doc.get_uint("check", "qe_max_dim", static_cast<std::uint64_t>(c.qe_max_dim)));
    m.boundary_samples = doc.get_uint("check", "samples", m.boundary_samples);
    m.sample_seed = doc.get_uint("check", "seed", m.sample_seed);
    if (m.boundary_samples == 0) parse_error(doc.find("check", "samples")->line, "samples must be positive");

    SimConfig& s = m.sim;
    s.dt = doc.get_double("sim", "dt", s.dt);
    s.horizon = doc.get_double("sim", "horizon", s.horizon);
    s.paths = doc.get_uint("sim", "paths", s.paths);
    s.seed = doc.get_uint("sim", "seed", s.seed);
    s.scheme = parse_scheme(doc);
    s.threads = static_cast<unsigned>(doc.get_uint("sim", "threads", 0));
    s.record_times = doc.get_list("sim", "record_times");
    m.snapshot_paths = doc.get_uint("sim", "snapshot_paths", m.snapshot_paths);
    if (!(s.dt > 0.0) || !(s.horizon > 0.0) || s.paths == 0) {
        const IniEntry* e = doc.find("sim", "dt");
        parse_error(e ? e->line : 0, "sim needs dt > 0, horizon > 0 and paths > 0");
    }
    return m;
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    LoadedModel m = load_model_text(buf.str(), path.parent_path());
    m.path = path;
    return m;
}

}  // namespace affreal::cli
