#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "mixlq/verify.hpp"

namespace mixlq::io {

using nlohmann::json;

/// Parses a problem document:
///   {"dims": {"n","l1","l2","d"}, "horizon": T,
///    "schedule": {"breakpoints": [...],
///                 "frames": [{"A","B1","B2","C","D1","D2","Q","R1","R2"}]},
///    "G": [[...]], "x0": [...], "tolerances": {...}}
/// Matrices are row-major nested arrays; C, D1, D2 are length-d arrays of
/// matrices. Blocks whose expected size is zero may be omitted or written as
/// []. Throws ParseError for malformed documents; shapes are checked later by
/// validate().
ProblemSpec problem_from_json(const json& doc);
json problem_to_json(const ProblemSpec& spec);
ProblemSpec load_problem(const std::filesystem::path& path);

json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                          std::string_view name);

/// One row per node: t, row-major P1, row-major P2 and K when present.
void write_riccati_csv(std::ostream& os, const RiccatiSolution& sol);
/// One row per node: t, row-major M1, M2, M3.
void write_gains_csv(std::ostream& os, const GainSchedule& gains);

/// {"steps", "horizon", "M1": [...], "M2": [...], "M3": [...]} with one
/// matrix per grid node.
json gains_to_json(const GainSchedule& gains);
GainSchedule gains_from_json(const json& doc, const Dims& dims);

json cost_to_json(const CostEstimate& cost, std::uint64_t seed);
json are_to_json(const AREResult& are);
json residuals_to_json(const ResidualReport& rep);
json value_identity_to_json(const ValueIdentityReport& rep);
json suite_to_json(const PropertySuiteReport& rep);

/// Writes text to a file, throwing InvalidArgument when it cannot be opened.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mixlq::io
