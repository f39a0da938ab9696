#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace schedgraph {

enum class Outcome { kSuccess, kFailure };

enum class AnomalyLabel { kNone, kStructuralShift, kResourceChange, kTaskDelay };

enum class DisturbanceKind { kStructuralShift, kResourceChange, kTaskDelay };

std::string_view to_string(Outcome o);
std::string_view to_string(AnomalyLabel l);
std::string_view to_string(DisturbanceKind k);
Outcome outcome_from_string(std::string_view s);
AnomalyLabel anomaly_label_from_string(std::string_view s);
DisturbanceKind disturbance_kind_from_string(std::string_view s);
AnomalyLabel label_for(DisturbanceKind k);

struct TaskRecord {
  std::int64_t task_id = 0;
  double submit_time = 0.0;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<double> resource_demand;  // one fraction per resource dimension
  int priority = 0;
  int stage = 0;
  std::int64_t node_id = 0;
  Outcome outcome = Outcome::kSuccess;
  AnomalyLabel anomaly_label = AnomalyLabel::kNone;

  double duration() const { return end_time - start_time; }
  bool anomalous() const { return anomaly_label != AnomalyLabel::kNone; }

  bool operator==(const TaskRecord&) const = default;
};

struct ResourceNode {
  std::int64_t node_id = 0;
  std::vector<double> capacity;

  bool operator==(const ResourceNode&) const = default;
};

struct ScheduleTrace {
  std::vector<TaskRecord> tasks;  // sorted by (submit_time, task_id)
  std::vector<ResourceNode> nodes;
  double horizon = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ScheduleTrace&) const = default;

  // Largest submit_time, 0 for an empty trace.
  double last_submit() const;
};

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::kTaskDelay;
  double onset = 0.0;
  double duration = 0.0;
  double magnitude = 1.0;
  double affected_fraction = 1.0;
};

struct GenConfig {
  std::size_t n_tasks = 500;
  std::size_t n_nodes = 4;
  double horizon = 500.0;
  double mean_interarrival = 1.0;
  std::uint64_t seed = 0;
  // Not part of the minimal generator contract, but needed to produce a
  // complete record.
  std::size_t n_resources = 2;
  double mean_duration = 4.0;
  int n_priorities = 4;
  int n_stages = 3;
  double failure_rate = 0.02;
  double node_capacity = 1.0;
  std::int64_t task_id_offset = 0;
};

void validate(const GenConfig& config);
void validate(const DisturbanceSpec& spec, double horizon);

// Checks every TaskRecord / ScheduleTrace invariant; throws InvariantError,
// ReferenceError or ValidationError on the first violation.
void validate(const ScheduleTrace& trace);

// Orders tasks by (submit_time, task_id).
void sort_tasks(std::vector<TaskRecord>& tasks);

// Seeded synthetic workload: exponential inter-arrivals, uniform demands in
// [0.05, 0.95], greedy earliest-start first-fit placement that respects node
// capacity over each task's whole execution interval. All labels are none.
ScheduleTrace generate_trace(const GenConfig& config);

// Returns a copy of `trace` where tasks submitted inside
// [onset, onset + duration] are mutated with probability affected_fraction
// and labelled with the disturbance kind. Other tasks are left untouched.
ScheduleTrace inject_disturbance(const ScheduleTrace& trace, const DisturbanceSpec& spec,
                                 std::uint64_t seed);

struct SliceSet {
  // slices[t] holds indices (into trace.tasks) of tasks with submit_time in
  // [t * stride, t * stride + window_len).
  std::vector<std::vector<std::size_t>> slices;
  // Tasks that fall in no slice (only possible when stride > window_len).
  std::vector<std::size_t> uncovered;
  double window_len = 0.0;
  double stride = 0.0;
};

// Slice starts run t * stride for t = 0, 1, ... while t * stride <=
// trace.last_submit(). Emits a warning through the logger when some task is
// uncovered.
SliceSet window_slice(const ScheduleTrace& trace, double window_len, double stride);

}  // namespace schedgraph
