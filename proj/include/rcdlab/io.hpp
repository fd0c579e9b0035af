#pragma once

#include "rcdlab/error.hpp"
#include "rcdlab/measures.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rcdlab::io {

using json = nlohmann::json;

/// Artifact schema; bump on any serialization change.
std::string schema_version();

/// Malformed or semantically invalid input. line/column are 1-based, 0 when unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : Error(what), line_(line), column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

json parse_json(std::string_view text, const std::string& origin = "<input>");
json read_json_file(const std::filesystem::path& path);

/// Deterministic dump: sorted keys, doubles at 17 significant digits.
std::string dump(const json& j, int indent = 2);

/// Writes to a sibling temp file and renames it into place.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// FNV-1a of the canonical dump, 16 hex digits.
std::string config_hash(const json& j);

json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& where);

/// {"points", "metric", "measure", "edges", "base_point"} or {"model", "n", ...}.
/// A {"file": path} indirection is resolved against base_dir. Validated on read unless told not to.
FiniteMMSpace space_from_json(const json& j, const std::filesystem::path& base_dir = {}, bool validate = true);
json space_to_json(const FiniteMMSpace& space);

/// Point index from an integer or a point id.
std::size_t point_from_json(const FiniteMMSpace& space, const json& j, const std::string& where);

/// Plain measure specs (no references to other tasks): a weight array, weights,
/// density, dirac, reference, cosine, bump, gaussian, random or a file.
ProbMeasure measure_from_json(const json& j, const SpacePtr& space, std::uint64_t seed,
                              const std::filesystem::path& base_dir = {});
json measure_to_json(const ProbMeasure& mu);

}  // namespace rcdlab::io
