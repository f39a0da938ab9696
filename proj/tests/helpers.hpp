#pragma once

#include <cstdint>
#include <vector>

#include "schedgraph/workload.hpp"

namespace testing_util {

inline schedgraph::TaskRecord task(std::int64_t id, double submit, double start, double end,
                                   std::int64_t node = 0, std::vector<double> demand = {0.5, 0.5}) {
  schedgraph::TaskRecord t;
  t.task_id = id;
  t.submit_time = submit;
  t.start_time = start;
  t.end_time = end;
  t.node_id = node;
  t.resource_demand = std::move(demand);
  t.priority = static_cast<int>(id % 3);
  return t;
}

inline schedgraph::ScheduleTrace trace_of(std::vector<schedgraph::TaskRecord> tasks, std::size_t n_nodes = 2,
                                          double horizon = 100.0) {
  schedgraph::ScheduleTrace tr;
  tr.horizon = horizon;
  for (std::size_t n = 0; n < n_nodes; ++n) tr.nodes.push_back({static_cast<std::int64_t>(n), {1.0, 1.0}});
  tr.tasks = std::move(tasks);
  schedgraph::sort_tasks(tr.tasks);
  return tr;
}

}  // namespace testing_util
