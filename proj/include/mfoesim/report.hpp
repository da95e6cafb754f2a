/*
 * Copyright 2026 The mfoesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Machine-readable outputs: versioned JSON reports, flat CSVs, and a small
// JSON-schema checker used to re-validate every report after it is written.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfoesim/sim_engine.hpp"
#include "mfoesim/trace_model.hpp"

namespace mfoesim {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

Json params_json(const ModelParameters& p);
Json sim_report_json(const SimReport& r);
Json model_report_json(const ModelReport& r, const ModelParameters& params, const TraceMetadata& meta);
Json sweep_report_json(const std::vector<SweepCell>& cells, const ModelParameters& params, const TraceMetadata& meta);

void write_sim_faults_csv(const std::filesystem::path& path, const SimReport& r);
void write_model_timeline_csv(const std::filesystem::path& path, const ModelReport& r);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells);

inline constexpr std::string_view kSimFaultsHeader = "timestamp_cycles,core,outcome,latency_cycles";
inline constexpr std::string_view kTimelineHeader =
    "index,core,original_cycles,shifted_cycles,original_latency_cycles,modeled_latency_cycles,hit";
inline constexpr std::string_view kSweepHeader = "width,interval_ms,hit_rate,overhead_pct,speedup";

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

const Json& sim_report_schema();
const Json& model_report_schema();
const Json& sweep_report_schema();

/// Checks `doc` against the subset of JSON Schema used here (type,
/// required, properties, items, enum, const, minimum, maximum). Returns one
/// message per violation.
std::vector<std::string> validate_json(const Json& doc, const Json& schema);

void write_json(const std::filesystem::path& path, const Json& doc);
/// Re-reads a written report and validates it.
std::vector<std::string> validate_json_file(const std::filesystem::path& path, const Json& schema);
/// Re-reads a CSV: exact header, then rows with the header's column count.
std::vector<std::string> validate_csv_file(const std::filesystem::path& path, std::string_view header,
                                           std::size_t expected_rows);

}  // namespace mfoesim
