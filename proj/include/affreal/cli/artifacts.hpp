#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "affreal/cli/model_file.hpp"
#include "affreal/fdr_sim.hpp"

namespace affreal::cli {

inline constexpr const char* kToolName = "affreal";
inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest decimal that reads back to the same double.
std::string format_number(double v);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

std::string psi_csv(const Foliation& fol);
Foliation parse_psi_csv(const std::string& text, const Grid& grid);

std::string paths_csv(const StatePaths& paths);
StatePaths parse_paths_csv(const std::string& text, Index dim);

/// Rows: path, t, ell, eval_x1, hw at each record time.
std::string direct_csv(const DirectRun& run, double dt);
/// Rows: path, min_ell, negative_steps, steps, max_residual.
std::string direct_summary_csv(const DirectRun& run);
EnsembleSummary parse_direct(const std::string& records, const std::string& summary);

/// First `count` reconstructed curves at the given step indices.
std::string snapshots_csv(const CurveEnsemble& ens, const Grid& grid, const std::vector<double>& times,
                          const std::vector<std::size_t>& steps, std::size_t count);

struct VerifyResult {
    InvarianceReport report;
    std::string json;
    bool ok() const;
};

/// Recomputes verify.json from the artifacts of a `simulate --mode both` run and writes it.
/// Throws MissingArtifacts when something is absent and HashMismatch when a file changed.
VerifyResult verify_run_dir(const std::filesystem::path& dir);

}  // namespace affreal::cli
