#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "schedgraph/workload.hpp"

namespace schedgraph {

// JSON Lines trace format. The first line is a header
//   {"kind":"meta","seed":..,"horizon":..,"nodes":[{"node_id":..,"capacity":[..]},..]}
// followed by one task per line
//   {"kind":"task","task_id":..,"submit_time":..,"start_time":..,"end_time":..,
//    "demand":[..],"priority":..,"stage":..,"node_id":..,"outcome":"success",
//    "anomaly_label":"none"}
// Field names are case-sensitive. Doubles are written in shortest round-trip
// form, so serialize(parse(x)) reproduces x exactly.
void serialize_trace(const ScheduleTrace& trace, std::ostream& out);
std::string serialize_trace(const ScheduleTrace& trace);

// Throws ParseError (with the 1-based line number) on malformed input,
// ReferenceError on dangling node references and InvariantError on records
// that break TaskRecord invariants. Tasks are re-sorted by (submit_time,
// task_id). Empty input yields an empty trace.
ScheduleTrace parse_trace(std::istream& in);
ScheduleTrace parse_trace(const std::string& text);

ScheduleTrace read_trace_file(const std::filesystem::path& path);
void write_trace_file(const ScheduleTrace& trace, const std::filesystem::path& path);

}  // namespace schedgraph
