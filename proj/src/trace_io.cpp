#include "schedgraph/trace_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "schedgraph/error.hpp"

namespace schedgraph {

using nlohmann::json;

namespace {

json node_to_json(const ResourceNode& n) {
  return json{{"node_id", n.node_id}, {"capacity", n.capacity}};
}

json task_to_json(const TaskRecord& t) {
  json j;
  j["kind"] = "task";
  j["task_id"] = t.task_id;
  j["submit_time"] = t.submit_time;
  j["start_time"] = t.start_time;
  j["end_time"] = t.end_time;
  j["demand"] = t.resource_demand;
  j["priority"] = t.priority;
  j["stage"] = t.stage;
  j["node_id"] = t.node_id;
  j["outcome"] = to_string(t.outcome);
  j["anomaly_label"] = to_string(t.anomaly_label);
  return j;
}

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(line, std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(line, std::string("bad field '") + name + "': " + e.what());
  }
}

}  // namespace

void serialize_trace(const ScheduleTrace& trace, std::ostream& out) {
  json meta;
  meta["kind"] = "meta";
  meta["seed"] = trace.seed;
  meta["horizon"] = trace.horizon;
  meta["nodes"] = json::array();
  for (const auto& n : trace.nodes) meta["nodes"].push_back(node_to_json(n));
  out << meta.dump() << '\n';
  for (const auto& t : trace.tasks) out << task_to_json(t).dump() << '\n';
}

std::string serialize_trace(const ScheduleTrace& trace) {
  std::ostringstream os;
  serialize_trace(trace, os);
  return os.str();
}

ScheduleTrace parse_trace(std::istream& in) {
  ScheduleTrace trace;
  std::string line;
  std::size_t lineno = 0;
  bool seen_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record is not an object");
    const auto kind = field<std::string>(j, "kind", lineno);
    if (kind == "meta") {
      if (seen_meta) throw ParseError(lineno, "duplicate meta record");
      if (!trace.tasks.empty()) throw ParseError(lineno, "meta record must come first");
      seen_meta = true;
      trace.seed = field<std::uint64_t>(j, "seed", lineno);
      trace.horizon = field<double>(j, "horizon", lineno);
      for (const auto& n : field<json>(j, "nodes", lineno)) {
        ResourceNode node;
        node.node_id = field<std::int64_t>(n, "node_id", lineno);
        node.capacity = field<std::vector<double>>(n, "capacity", lineno);
        trace.nodes.push_back(std::move(node));
      }
    } else if (kind == "task") {
      if (!seen_meta) throw ParseError(lineno, "task record before meta record");
      TaskRecord t;
      t.task_id = field<std::int64_t>(j, "task_id", lineno);
      t.submit_time = field<double>(j, "submit_time", lineno);
      t.start_time = field<double>(j, "start_time", lineno);
      t.end_time = field<double>(j, "end_time", lineno);
      t.resource_demand = field<std::vector<double>>(j, "demand", lineno);
      t.priority = field<int>(j, "priority", lineno);
      t.stage = field<int>(j, "stage", lineno);
      t.node_id = field<std::int64_t>(j, "node_id", lineno);
      try {
        t.outcome = outcome_from_string(field<std::string>(j, "outcome", lineno));
        t.anomaly_label = anomaly_label_from_string(field<std::string>(j, "anomaly_label", lineno));
      } catch (const ParseError&) {
        throw;
      } catch (const ValidationError& e) {
        throw ParseError(lineno, e.what());
      }
      if (t.end_time < t.start_time || t.start_time < t.submit_time)
        throw InvariantError("line " + std::to_string(lineno) + ": task " +
                             std::to_string(t.task_id) +
                             " violates submit_time <= start_time <= end_time");
      trace.tasks.push_back(std::move(t));
    } else {
      throw ParseError(lineno, "unknown record kind '" + kind + "'");
    }
  }
  sort_tasks(trace.tasks);
  validate(trace);
  return trace;
}

ScheduleTrace parse_trace(const std::string& text) {
  std::istringstream is(text);
  return parse_trace(is);
}

ScheduleTrace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file '" + path.string() + "'");
  return parse_trace(in);
}

void write_trace_file(const ScheduleTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace file '" + path.string() + "'");
  serialize_trace(trace, out);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace schedgraph
