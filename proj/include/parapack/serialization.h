#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "parapack/clustering.h"
#include "parapack/kalman.h"
#include "parapack/montecarlo.h"
#include "parapack/observability.h"

namespace parapack {

// JSON views for inspection. Matrices are row-major nested arrays;
// non-finite numbers become null.
void to_json(nlohmann::json& j, const CellParams& cell);
void to_json(nlohmann::json& j, const StateSpace& ss);
void to_json(nlohmann::json& j, const ObservabilityReport& report);
void to_json(nlohmann::json& j, const ClusterAssignment& assignment);
void to_json(nlohmann::json& j, const ClusteredPack& clustered);
void to_json(nlohmann::json& j, const FilterDesign& design);
void to_json(nlohmann::json& j, const FleetSpec& spec);
void to_json(nlohmann::json& j, const StudyConfig& config);

/// Summary written as study_summary.json. Contains no timestamps or
/// execution settings, so identical configs give identical bytes.
nlohmann::json study_summary_json(const StudyConfig& config, const StudyResult& result);

// Config parsing. Every loader rejects unknown fields and names the
// offending field path in its ConfigError. `source` prefixes messages and
// relative ocv_csv paths resolve against `base_dir`.

/// {"cells": [{q_coulombs, r_s_ohms, rc_pairs: [{r_ohms, c_farads}],
/// ocv_csv | chemistry}]} or {"fleet_spec": {...}}.
PackModel parse_pack_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                            const std::string& source);
PackModel load_pack_config(const std::filesystem::path& path);

FleetSpec parse_fleet_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           const std::string& source, const std::string& field = "fleet_spec");

StudyConfig parse_study_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                               const std::string& source);
StudyConfig load_study_config(const std::filesystem::path& path);

/// Reads and parses a JSON file; syntax errors become ConfigError.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace parapack
