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

#include "mfoesim/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mfoesim {

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Json latency_json(const LatencySummary& s) {
  return Json{{"count", s.count}, {"mean", s.mean}, {"p95", s.p95}, {"max", s.max}};
}

Json trace_json(const TraceMetadata& meta, std::uint64_t records) {
  return Json{{"source", meta.source},
              {"core_count", meta.core_count},
              {"total_runtime_ns", meta.total_runtime_ns},
              {"records", records}};
}

}  // namespace

Json params_json(const ModelParameters& p) {
  return Json{
      {"mfoe_hit_cycles", p.mfoe_hit_cycles},
      {"mfoe_miss_penalty_cycles", p.mfoe_miss_penalty_cycles},
      {"baseline_fault_mean_cycles", p.baseline_fault_mean_cycles},
      {"baseline_fault_p95_cycles", p.baseline_fault_p95_cycles},
      {"background_throughput_pages_per_s", p.background_throughput_pages_per_s},
      {"init_throughput_pages_per_s", p.init_throughput_pages_per_s},
      {"clock_hz", p.clock_hz},
      {"sw_emulation_mean_ns", p.sw_emulation_mean_ns},
      {"sw_emulation_p95_ns", p.sw_emulation_p95_ns},
  };
}

Json sim_report_json(const SimReport& r) {
  const SimConfig& c = r.config;
  const WorkloadSpec& w = c.workload;
  Json outcomes = Json::object();
  for (std::size_t k = 0; k < kFaultKindCount; ++k) {
    outcomes[std::string(to_string(static_cast<FaultKind>(k)))] = r.outcomes[k];
  }
  Json cores = Json::array();
  for (std::size_t i = 0; i < r.cores.size(); ++i) {
    const CoreAccount& a = r.cores[i];
    cores.push_back(Json{{"core", i},
                         {"end_time_cycles", a.end_time},
                         {"compute_cycles", a.compute},
                         {"fault_overhead_cycles", a.fault_overhead},
                         {"stall_cycles", a.stall},
                         {"faults", a.faults}});
  }
  return Json{
      {"schema", "mfoesim.sim_report"},
      {"schema_version", kSchemaVersion},
      {"config",
       {{"mode", std::string(to_string(c.mode))},
        {"threads", w.threads},
        {"cores", c.effective_cores()},
        {"tlb_entries", c.tlb_entries},
        {"table_entries", c.table_entries},
        {"refresh_interval_ms", c.refresh_interval_ms},
        {"faults_per_thread", w.faults_per_thread},
        {"region_pages", w.region_pages != 0 ? w.region_pages : w.pages_needed()},
        {"stride", w.stride},
        {"redundant_accesses", w.redundant_accesses},
        {"interarrival_cycles", w.interarrival_cycles},
        {"numa_nodes", c.numa_nodes},
        {"total_frames", c.effective_total_frames()},
        {"quota_threshold", c.quota_threshold},
        {"prefault_throughput_pages_per_s", c.prefault_throughput_pages_per_s},
        {"seed", c.seed},
        {"params", params_json(c.params)}}},
      {"hit_rate", r.hit_rate},
      {"hits", r.hits},
      {"misses", r.misses},
      {"outcomes", outcomes},
      {"fault_latency_cycles", latency_json(r.fault_latency)},
      {"hit_latency_cycles", latency_json(r.hit_latency)},
      {"critical_path_speedup", r.critical_path_speedup},
      {"total_fault_overhead_cycles", r.total_fault_overhead},
      {"total_stall_cycles", r.total_stall},
      {"makespan_cycles", r.makespan},
      {"redundant_accesses", r.redundant_accesses},
      {"cores", cores},
      {"kernel",
       {{"ticks", r.kernel.ticks},
        {"harvested", r.kernel.harvested},
        {"refilled", r.kernel.refilled},
        {"fill_pages", r.kernel.fill_pages},
        {"prefault_pages", r.kernel.prefault_pages},
        {"cleanup_records", r.kernel.cleanup_records},
        {"frames_released", r.kernel.frames_released},
        {"pressure_disables", r.kernel.pressure_disables}}},
      {"frames",
       {{"total", r.census.total},
        {"free", r.census.free},
        {"valid_in_tables", r.census.valid_in_tables},
        {"mapped", r.census.mapped},
        {"balanced", r.census.balanced()}}},
  };
}

Json model_report_json(const ModelReport& r, const ModelParameters& params, const TraceMetadata& meta) {
  return Json{
      {"schema", "mfoesim.model_report"},
      {"schema_version", kSchemaVersion},
      {"trace", trace_json(meta, r.faults)},
      {"config",
       {{"table_width", r.config.table_width},
        {"refresh_interval_ms", r.config.refresh_interval_ms},
        {"cores", r.cores},
        {"initially_stocked", r.config.initially_stocked}}},
      {"params", params_json(params)},
      {"faults", r.faults},
      {"hits", r.hits},
      {"misses", r.misses},
      {"hit_rate", r.hit_rate},
      {"baseline_runtime_cycles", r.baseline_runtime},
      {"modeled_runtime_cycles", r.modeled_runtime},
      {"time_saved_cycles", r.time_saved},
      {"penalty_cycles", r.penalty},
      {"baseline_overhead_pct", 100.0 * r.baseline_overhead_fraction},
      {"residual_overhead_pct", 100.0 * r.residual_overhead_fraction},
      {"speedup", r.speedup},
  };
}

Json sweep_report_json(const std::vector<SweepCell>& cells, const ModelParameters& params, const TraceMetadata& meta) {
  Json rows = Json::array();
  std::uint64_t faults = 0;
  for (const SweepCell& c : cells) {
    faults = c.report.faults;
    rows.push_back(Json{{"width", c.width},
                        {"interval_ms", c.interval_ms},
                        {"hit_rate", c.report.hit_rate},
                        {"overhead_pct", 100.0 * c.report.residual_overhead_fraction},
                        {"speedup", c.report.speedup},
                        {"hits", c.report.hits},
                        {"misses", c.report.misses}});
  }
  return Json{{"schema", "mfoesim.sweep_report"},
              {"schema_version", kSchemaVersion},
              {"trace", trace_json(meta, faults)},
              {"params", params_json(params)},
              {"cells", rows}};
}

void write_sim_faults_csv(const std::filesystem::path& path, const SimReport& r) {
  auto out = open_out(path);
  out << kSimFaultsHeader << '\n';
  for (const FaultRecord& f : r.faults) {
    out << f.timestamp << ',' << f.core << ',' << to_string(f.kind) << ',' << f.latency << '\n';
  }
  close_out(out, path);
}

void write_model_timeline_csv(const std::filesystem::path& path, const ModelReport& r) {
  auto out = open_out(path);
  out << kTimelineHeader << '\n';
  for (const ShiftedFault& f : r.timeline) {
    out << f.index << ',' << f.core << ',' << f.original << ',' << f.shifted << ',' << f.original_latency << ','
        << f.modeled_latency << ',' << (f.hit ? 1 : 0) << '\n';
  }
  close_out(out, path);
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  auto out = open_out(path);
  out << kSweepHeader << '\n';
  for (const SweepCell& c : cells) {
    out << c.width << ',' << format_number(c.interval_ms) << ',' << format_number(c.report.hit_rate) << ','
        << format_number(100.0 * c.report.residual_overhead_fraction) << ',' << format_number(c.report.speedup) << '\n';
  }
  close_out(out, path);
}

void write_json(const std::filesystem::path& path, const Json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  close_out(out, path);
}

// ---------------------------------------------------------------------------
// Schemas

namespace {

constexpr const char* kParamsSchema = R"({
  "type": "object",
  "required": ["mfoe_hit_cycles", "mfoe_miss_penalty_cycles", "baseline_fault_mean_cycles",
               "baseline_fault_p95_cycles", "background_throughput_pages_per_s",
               "init_throughput_pages_per_s", "clock_hz", "sw_emulation_mean_ns", "sw_emulation_p95_ns"]
})";

constexpr const char* kTraceSchema = R"({
  "type": "object",
  "required": ["source", "core_count", "total_runtime_ns", "records"],
  "properties": {
    "source": {"type": "string"},
    "core_count": {"type": "integer", "minimum": 0},
    "total_runtime_ns": {"type": "number", "minimum": 0},
    "records": {"type": "integer", "minimum": 0}
  }
})";

constexpr const char* kLatencySchema = R"({
  "type": "object",
  "required": ["count", "mean", "p95", "max"],
  "properties": {
    "count": {"type": "integer", "minimum": 0},
    "mean": {"type": "number", "minimum": 0},
    "p95": {"type": "integer", "minimum": 0},
    "max": {"type": "integer", "minimum": 0}
  }
})";

Json with_sub(const char* text, std::initializer_list<std::pair<const char*, const char*>> subs) {
  Json s = Json::parse(text);
  for (const auto& [key, sub] : subs) s["properties"][key] = Json::parse(sub);
  return s;
}

}  // namespace

const Json& sim_report_schema() {
  static const Json schema = [] {
    Json s = with_sub(R"({
      "type": "object",
      "required": ["schema", "schema_version", "config", "hit_rate", "hits", "misses", "outcomes",
                   "fault_latency_cycles", "hit_latency_cycles", "critical_path_speedup",
                   "total_fault_overhead_cycles", "total_stall_cycles", "makespan_cycles", "cores",
                   "kernel", "frames"],
      "properties": {
        "schema": {"const": "mfoesim.sim_report"},
        "schema_version": {"const": 1},
        "config": {
          "type": "object",
          "required": ["mode", "threads", "cores", "tlb_entries", "table_entries", "refresh_interval_ms",
                       "faults_per_thread", "interarrival_cycles", "seed", "params"],
          "properties": {
            "mode": {"enum": ["hardware", "software", "baseline"]},
            "threads": {"type": "integer", "minimum": 1},
            "cores": {"type": "integer", "minimum": 1},
            "table_entries": {"type": "integer", "minimum": 1, "maximum": 65535},
            "refresh_interval_ms": {"type": "number", "minimum": 0}
          }
        },
        "hit_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "hits": {"type": "integer", "minimum": 0},
        "misses": {"type": "integer", "minimum": 0},
        "outcomes": {"type": "object"},
        "critical_path_speedup": {"type": "number", "minimum": 0},
        "total_fault_overhead_cycles": {"type": "integer", "minimum": 0},
        "total_stall_cycles": {"type": "integer", "minimum": 0},
        "makespan_cycles": {"type": "integer", "minimum": 0},
        "cores": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["core", "end_time_cycles", "compute_cycles", "fault_overhead_cycles", "stall_cycles", "faults"]
          }
        },
        "kernel": {"type": "object", "required": ["ticks", "harvested", "refilled"]},
        "frames": {
          "type": "object",
          "required": ["total", "free", "valid_in_tables", "mapped", "balanced"],
          "properties": {"balanced": {"type": "boolean"}}
        }
      }
    })",
                      {{"fault_latency_cycles", kLatencySchema}, {"hit_latency_cycles", kLatencySchema}});
    s["properties"]["config"]["properties"]["params"] = Json::parse(kParamsSchema);
    return s;
  }();
  return schema;
}

const Json& model_report_schema() {
  static const Json schema = with_sub(R"({
    "type": "object",
    "required": ["schema", "schema_version", "trace", "config", "params", "faults", "hits", "misses", "hit_rate",
                 "baseline_runtime_cycles", "modeled_runtime_cycles", "time_saved_cycles", "penalty_cycles",
                 "baseline_overhead_pct", "residual_overhead_pct", "speedup"],
    "properties": {
      "schema": {"const": "mfoesim.model_report"},
      "schema_version": {"const": 1},
      "config": {
        "type": "object",
        "required": ["table_width", "refresh_interval_ms", "cores", "initially_stocked"],
        "properties": {
          "table_width": {"type": "integer", "minimum": 1, "maximum": 65535},
          "refresh_interval_ms": {"type": "number", "minimum": 0},
          "cores": {"type": "integer", "minimum": 1},
          "initially_stocked": {"type": "boolean"}
        }
      },
      "faults": {"type": "integer", "minimum": 0},
      "hits": {"type": "integer", "minimum": 0},
      "misses": {"type": "integer", "minimum": 0},
      "hit_rate": {"type": "number", "minimum": 0, "maximum": 1},
      "baseline_runtime_cycles": {"type": "integer", "minimum": 0},
      "modeled_runtime_cycles": {"type": "integer", "minimum": 0},
      "time_saved_cycles": {"type": "integer"},
      "penalty_cycles": {"type": "integer", "minimum": 0},
      "baseline_overhead_pct": {"type": "number", "minimum": 0},
      "residual_overhead_pct": {"type": "number", "minimum": 0},
      "speedup": {"type": "number", "minimum": 0}
    }
  })",
                                      {{"trace", kTraceSchema}, {"params", kParamsSchema}});
  return schema;
}

const Json& sweep_report_schema() {
  static const Json schema = with_sub(R"({
    "type": "object",
    "required": ["schema", "schema_version", "trace", "params", "cells"],
    "properties": {
      "schema": {"const": "mfoesim.sweep_report"},
      "schema_version": {"const": 1},
      "cells": {
        "type": "array",
        "items": {
          "type": "object",
          "required": ["width", "interval_ms", "hit_rate", "overhead_pct", "speedup", "hits", "misses"],
          "properties": {
            "width": {"type": "integer", "minimum": 1, "maximum": 65535},
            "interval_ms": {"type": "number", "minimum": 0},
            "hit_rate": {"type": "number", "minimum": 0, "maximum": 1},
            "overhead_pct": {"type": "number", "minimum": 0},
            "speedup": {"type": "number", "minimum": 0}
          }
        }
      }
    }
  })",
                                      {{"trace", kTraceSchema}, {"params", kParamsSchema}});
  return schema;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

bool has_type(const Json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  throw std::logic_error("unknown schema type '" + t + "'");
}

void check(const Json& v, const Json& s, const std::string& where, std::vector<std::string>& errors) {
  const std::string at = where.empty() ? "/" : where;
  if (auto t = s.find("type"); t != s.end()) {
    bool ok = false;
    if (t->is_array()) {
      for (const auto& alt : *t) ok = ok || has_type(v, alt.get<std::string>());
    } else {
      ok = has_type(v, t->get<std::string>());
    }
    if (!ok) {
      errors.push_back(at + ": expected " + t->dump());
      return;
    }
  }
  if (auto c = s.find("const"); c != s.end() && v != *c) errors.push_back(at + ": expected " + c->dump());
  if (auto e = s.find("enum"); e != s.end() && std::find(e->begin(), e->end(), v) == e->end()) {
    errors.push_back(at + ": " + v.dump() + " not in " + e->dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (auto m = s.find("minimum"); m != s.end() && x < m->get<double>()) errors.push_back(at + ": below minimum");
    if (auto m = s.find("maximum"); m != s.end() && x > m->get<double>()) errors.push_back(at + ": above maximum");
  }
  if (v.is_object()) {
    if (auto req = s.find("required"); req != s.end()) {
      for (const auto& k : *req) {
        if (!v.contains(k.get<std::string>())) errors.push_back(at + ": missing '" + k.get<std::string>() + "'");
      }
    }
    if (auto props = s.find("properties"); props != s.end()) {
      for (const auto& [k, sub] : props->items()) {
        if (auto it = v.find(k); it != v.end()) check(*it, sub, where + "/" + k, errors);
      }
    }
  }
  if (v.is_array()) {
    if (auto items = s.find("items"); items != s.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], *items, where + "/" + std::to_string(i), errors);
    }
  }
}

}  // namespace

std::vector<std::string> validate_json(const Json& doc, const Json& schema) {
  std::vector<std::string> errors;
  check(doc, schema, "", errors);
  return errors;
}

std::vector<std::string> validate_json_file(const std::filesystem::path& path, const Json& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {"cannot read '" + path.string() + "'"};
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    return {path.string() + ": " + e.what()};
  }
  return validate_json(doc, schema);
}

std::vector<std::string> validate_csv_file(const std::filesystem::path& path, std::string_view header,
                                           std::size_t expected_rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {"cannot read '" + path.string() + "'"};
  std::vector<std::string> errors;
  std::string line;
  if (!std::getline(in, line) || line != header) {
    errors.push_back(path.string() + ": header mismatch");
    return errors;
  }
  const auto columns = std::count(header.begin(), header.end(), ',');
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (std::count(line.begin(), line.end(), ',') != columns) {
      errors.push_back(path.string() + ": row " + std::to_string(rows) + " has the wrong column count");
      if (errors.size() > 10) break;
    }
  }
  if (rows != expected_rows) {
    errors.push_back(path.string() + ": " + std::to_string(rows) + " rows, expected " + std::to_string(expected_rows));
  }
  return errors;
}

}  // namespace mfoesim
