#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affreal/fdr_sim.hpp"
#include "affreal/realization_check.hpp"

namespace affreal::cli {

struct IniEntry {
    std::string key;
    std::string value;
    int line = 0;
};

/// Sections keep their keys in file order; [cone] and [subspace] rely on that.
class IniDocument {
public:
    static IniDocument parse(const std::string& text);

    bool has_section(const std::string& name) const { return sections_.count(name) != 0; }
    const std::vector<IniEntry>& section(const std::string& name) const;
    const IniEntry* find(const std::string& section, const std::string& key) const;

    std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    double require_double(const std::string& section, const std::string& key) const;
    std::uint64_t get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key) const;

private:
    std::map<std::string, std::vector<IniEntry>> sections_;
    std::map<std::string, int> section_lines_;
};

/// Where curve expressions look up `riccati` and `file:` terms.
struct CurveContext {
    double rho = 0.0;
    double gamma = 0.0;
    std::filesystem::path base_dir;
};

/// Sum of terms like `0.02`, `0.01*xexp:1`, `-exp:0.5`, `2*riccati`, `file:h0.csv`.
Vec parse_curve(const std::string& text, const Grid& grid, const CurveContext& ctx);

/// `short_end`, `point:x` or `combo:w@x;w@x`.
Functional parse_functional(const std::string& text);

/// Curve CSV with header `x,value`; nodes must sit on the grid.
Vec read_curve_csv(const std::filesystem::path& path, const Grid& grid);

struct LoadedModel {
    std::string kind;
    std::string source_text;
    std::filesystem::path path;
    Grid grid{};
    Weight weight;
    std::optional<CirModel> cir;
    std::optional<TwoFactorModel> two_factor;
    std::optional<HjmmModel> hjmm;
    std::optional<ModelData> data;  // always set after loading
    std::optional<Vec> h0;
    CheckOptions check;
    std::size_t boundary_samples = 20;
    std::uint64_t sample_seed = 7;
    SimConfig sim;
    std::size_t snapshot_paths = 3;

    bool simulable() const { return hjmm.has_value(); }
    const ModelData& model_data() const { return *data; }
};

LoadedModel load_model(const std::filesystem::path& path);
LoadedModel load_model_text(const std::string& text, const std::filesystem::path& base_dir);

}  // namespace affreal::cli
