#include "schedgraph/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "schedgraph/error.hpp"
#include "schedgraph/rng.hpp"

namespace schedgraph {

std::string_view to_string(Outcome o) {
  return o == Outcome::kSuccess ? "success" : "failure";
}

std::string_view to_string(AnomalyLabel l) {
  switch (l) {
    case AnomalyLabel::kNone: return "none";
    case AnomalyLabel::kStructuralShift: return "structural_shift";
    case AnomalyLabel::kResourceChange: return "resource_change";
    case AnomalyLabel::kTaskDelay: return "task_delay";
  }
  return "none";
}

std::string_view to_string(DisturbanceKind k) { return to_string(label_for(k)); }

Outcome outcome_from_string(std::string_view s) {
  if (s == "success") return Outcome::kSuccess;
  if (s == "failure") return Outcome::kFailure;
  throw ValidationError("unknown outcome '" + std::string(s) + "'");
}

AnomalyLabel anomaly_label_from_string(std::string_view s) {
  if (s == "none") return AnomalyLabel::kNone;
  if (s == "structural_shift") return AnomalyLabel::kStructuralShift;
  if (s == "resource_change") return AnomalyLabel::kResourceChange;
  if (s == "task_delay") return AnomalyLabel::kTaskDelay;
  throw ValidationError("unknown anomaly_label '" + std::string(s) + "'");
}

DisturbanceKind disturbance_kind_from_string(std::string_view s) {
  if (s == "structural_shift") return DisturbanceKind::kStructuralShift;
  if (s == "resource_change") return DisturbanceKind::kResourceChange;
  if (s == "task_delay") return DisturbanceKind::kTaskDelay;
  throw ValidationError("unknown disturbance kind '" + std::string(s) + "'");
}

AnomalyLabel label_for(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::kStructuralShift: return AnomalyLabel::kStructuralShift;
    case DisturbanceKind::kResourceChange: return AnomalyLabel::kResourceChange;
    case DisturbanceKind::kTaskDelay: return AnomalyLabel::kTaskDelay;
  }
  return AnomalyLabel::kNone;
}

double ScheduleTrace::last_submit() const {
  return tasks.empty() ? 0.0 : tasks.back().submit_time;
}

void sort_tasks(std::vector<TaskRecord>& tasks) {
  std::stable_sort(tasks.begin(), tasks.end(), [](const TaskRecord& a, const TaskRecord& b) {
    if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
    return a.task_id < b.task_id;
  });
}

void validate(const GenConfig& c) {
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon))
    throw ValidationError("generate.horizon must be positive, got " + std::to_string(c.horizon));
  if (!(c.mean_interarrival > 0.0) || !std::isfinite(c.mean_interarrival))
    throw ValidationError("generate.mean_interarrival must be positive, got " +
                          std::to_string(c.mean_interarrival));
  if (c.n_nodes < 1) throw ValidationError("generate.n_nodes must be >= 1");
  if (c.n_resources < 1) throw ValidationError("generate.n_resources must be >= 1");
  if (!(c.mean_duration > 0.0)) throw ValidationError("generate.mean_duration must be positive");
  if (c.n_priorities < 1) throw ValidationError("generate.n_priorities must be >= 1");
  if (c.n_stages < 1) throw ValidationError("generate.n_stages must be >= 1");
  if (c.failure_rate < 0.0 || c.failure_rate > 1.0)
    throw ValidationError("generate.failure_rate must lie in [0, 1]");
  // Demands are drawn up to 0.95, so anything at or above that always fits.
  if (!(c.node_capacity >= 0.95)) throw ValidationError("generate.node_capacity must be >= 0.95");
}

void validate(const DisturbanceSpec& s, double horizon) {
  if (!(s.onset >= 0.0) || !(s.duration >= 0.0))
    throw ValidationError("disturbance onset and duration must be non-negative");
  if (s.onset + s.duration > horizon)
    throw ValidationError("disturbance window [" + std::to_string(s.onset) + ", " +
                          std::to_string(s.onset + s.duration) + "] exceeds horizon " +
                          std::to_string(horizon));
  if (!(s.magnitude > 0.0) || !std::isfinite(s.magnitude))
    throw ValidationError("disturbance magnitude must be positive");
  if (!(s.affected_fraction > 0.0 && s.affected_fraction <= 1.0))
    throw ValidationError("disturbance affected_fraction must lie in (0, 1]");
}

void validate(const ScheduleTrace& trace) {
  std::unordered_set<std::int64_t> node_ids;
  std::size_t dims = 0;
  for (const auto& n : trace.nodes) {
    if (!node_ids.insert(n.node_id).second)
      throw InvariantError("duplicate node_id " + std::to_string(n.node_id));
    if (n.capacity.empty()) throw InvariantError("node " + std::to_string(n.node_id) + " has no capacity");
    for (double c : n.capacity)
      if (!(c > 0.0) || !std::isfinite(c))
        throw InvariantError("node " + std::to_string(n.node_id) + " has non-positive capacity");
    dims = n.capacity.size();
  }
  std::unordered_set<std::int64_t> task_ids;
  const TaskRecord* prev = nullptr;
  for (const auto& t : trace.tasks) {
    const std::string who = "task " + std::to_string(t.task_id);
    if (!task_ids.insert(t.task_id).second) throw InvariantError("duplicate " + who);
    if (!std::isfinite(t.submit_time) || !std::isfinite(t.start_time) || !std::isfinite(t.end_time))
      throw InvariantError(who + " has non-finite times");
    if (t.submit_time < 0.0) throw InvariantError(who + " has negative submit_time");
    if (t.start_time < t.submit_time) throw InvariantError(who + ": start_time < submit_time");
    if (t.end_time < t.start_time) throw InvariantError(who + ": end_time < start_time");
    if (t.resource_demand.empty()) throw InvariantError(who + " has empty resource_demand");
    if (dims != 0 && t.resource_demand.size() != dims)
      throw InvariantError(who + " demand has " + std::to_string(t.resource_demand.size()) +
                           " dimensions, nodes have " + std::to_string(dims));
    for (double d : t.resource_demand)
      if (!(d >= 0.0 && d <= 1.0)) throw InvariantError(who + " demand outside [0, 1]");
    if (t.priority < 0) throw InvariantError(who + " has negative priority");
    if (!node_ids.contains(t.node_id))
      throw ReferenceError(who + " references unknown node_id " + std::to_string(t.node_id));
    if (prev != nullptr && (prev->submit_time > t.submit_time ||
                            (prev->submit_time == t.submit_time && prev->task_id > t.task_id)))
      throw InvariantError("tasks not sorted by (submit_time, task_id) at " + who);
    prev = &t;
  }
}

namespace {

struct Placed {
  double start;
  double end;
  const std::vector<double>* demand;
};

// Earliest start >= submit at which `demand` fits on a node for `duration`.
double earliest_fit(const std::vector<Placed>& running, double submit, double duration,
                    const std::vector<double>& demand, const std::vector<double>& capacity) {
  std::vector<double> candidates{submit};
  for (const auto& p : running)
    if (p.end > submit) candidates.push_back(p.end);
  std::sort(candidates.begin(), candidates.end());

  auto fits_at = [&](double x) {
    for (std::size_t r = 0; r < demand.size(); ++r) {
      double used = demand[r];
      for (const auto& p : running)
        if (p.start <= x && x < p.end) used += (*p.demand)[r];
      if (used > capacity[r] + 1e-12) return false;
    }
    return true;
  };

  for (double c : candidates) {
    bool ok = fits_at(c);
    for (std::size_t k = 0; ok && k < running.size(); ++k) {
      const double s = running[k].start;
      if (s > c && s < c + duration) ok = fits_at(s);
    }
    if (ok) return c;
  }
  // Unreachable when every demand fits an empty node: the last end time
  // leaves the node idle.
  return candidates.back();
}

}  // namespace

ScheduleTrace generate_trace(const GenConfig& config) {
  validate(config);
  ScheduleTrace trace;
  trace.horizon = config.horizon;
  trace.seed = config.seed;
  for (std::size_t n = 0; n < config.n_nodes; ++n)
    trace.nodes.push_back({static_cast<std::int64_t>(n),
                           std::vector<double>(config.n_resources, config.node_capacity)});

  Rng rng(derive_seed(config.seed, SeedStream::kGenerate));
  std::exponential_distribution<double> interarrival(1.0 / config.mean_interarrival);
  std::uniform_real_distribution<double> demand_dist(0.05, 0.95);
  std::uniform_real_distribution<double> duration_dist(0.5 * config.mean_duration,
                                                       1.5 * config.mean_duration);
  std::uniform_int_distribution<int> priority_dist(0, config.n_priorities - 1);
  std::uniform_int_distribution<int> stage_dist(0, config.n_stages - 1);
  std::bernoulli_distribution fail_dist(config.failure_rate);

  trace.tasks.reserve(config.n_tasks);
  double clock = 0.0;
  for (std::size_t i = 0; i < config.n_tasks; ++i) {
    TaskRecord t;
    t.task_id = config.task_id_offset + static_cast<std::int64_t>(i);
    clock += interarrival(rng);
    t.submit_time = clock;
    t.resource_demand.resize(config.n_resources);
    for (auto& d : t.resource_demand) d = demand_dist(rng);
    const double duration = duration_dist(rng);
    t.start_time = duration;  // stashed until placement
    t.priority = priority_dist(rng);
    t.stage = stage_dist(rng);
    t.outcome = fail_dist(rng) ? Outcome::kFailure : Outcome::kSuccess;
    trace.tasks.push_back(std::move(t));
  }

  std::vector<std::vector<Placed>> running(config.n_nodes);
  for (auto& t : trace.tasks) {
    const double duration = t.start_time;
    double best_start = 0.0;
    std::size_t best_node = 0;
    for (std::size_t n = 0; n < config.n_nodes; ++n) {
      auto& list = running[n];
      std::erase_if(list, [&](const Placed& p) { return p.end <= t.submit_time; });
      const double s = earliest_fit(list, t.submit_time, duration, t.resource_demand,
                                    trace.nodes[n].capacity);
      if (n == 0 || s < best_start) {
        best_start = s;
        best_node = n;
      }
    }
    t.start_time = best_start;
    t.end_time = best_start + duration;
    t.node_id = trace.nodes[best_node].node_id;
    running[best_node].push_back({t.start_time, t.end_time, &t.resource_demand});
  }
  return trace;
}

ScheduleTrace inject_disturbance(const ScheduleTrace& trace, const DisturbanceSpec& spec,
                                 std::uint64_t seed) {
  validate(spec, trace.horizon);
  if (spec.kind == DisturbanceKind::kStructuralShift && trace.nodes.size() < 2)
    throw ValidationError("structural_shift needs at least two resource nodes");

  ScheduleTrace out = trace;
  Rng rng(derive_seed(seed, SeedStream::kInject));
  std::bernoulli_distribution pick(spec.affected_fraction);
  const double lo = spec.onset;
  const double hi = spec.onset + spec.duration;

  std::vector<std::size_t> affected;
  for (std::size_t i = 0; i < out.tasks.size(); ++i) {
    const double s = out.tasks[i].submit_time;
    if (s < lo || s > hi) continue;
    if (pick(rng)) affected.push_back(i);
  }

  switch (spec.kind) {
    case DisturbanceKind::kTaskDelay:
      for (std::size_t i : affected) {
        auto& t = out.tasks[i];
        const double shift = spec.magnitude * t.duration();
        t.start_time += shift;
        t.end_time += shift;
      }
      break;
    case DisturbanceKind::kResourceChange:
      for (std::size_t i : affected)
        for (auto& d : out.tasks[i].resource_demand) d = std::min(1.0, d * (1.0 + spec.magnitude));
      break;
    case DisturbanceKind::kStructuralShift: {
      const auto n_nodes = static_cast<int>(out.nodes.size());
      std::uniform_int_distribution<int> other(0, n_nodes - 2);
      for (std::size_t i : affected) {
        auto& t = out.tasks[i];
        int cur = 0;
        while (out.nodes[cur].node_id != t.node_id) ++cur;
        int r = other(rng);
        if (r >= cur) ++r;
        t.node_id = out.nodes[r].node_id;
      }
      // Permute the start order of the affected tasks: their start slots are
      // shuffled among them, durations are kept, starts never precede submit.
      std::vector<std::size_t> by_start = affected;
      std::sort(by_start.begin(), by_start.end(), [&](std::size_t a, std::size_t b) {
        const auto& ta = out.tasks[a];
        const auto& tb = out.tasks[b];
        if (ta.start_time != tb.start_time) return ta.start_time < tb.start_time;
        return ta.task_id < tb.task_id;
      });
      std::vector<double> slots;
      for (std::size_t i : by_start) slots.push_back(out.tasks[i].start_time);
      std::shuffle(slots.begin(), slots.end(), rng);
      for (std::size_t k = 0; k < by_start.size(); ++k) {
        auto& t = out.tasks[by_start[k]];
        const double duration = t.duration();
        t.start_time = std::max(slots[k], t.submit_time);
        t.end_time = t.start_time + duration;
      }
      break;
    }
  }
  for (std::size_t i : affected) out.tasks[i].anomaly_label = label_for(spec.kind);
  return out;
}

SliceSet window_slice(const ScheduleTrace& trace, double window_len, double stride) {
  if (!(window_len > 0.0) || !(stride > 0.0))
    throw ValidationError("window_len and stride must be positive");
  SliceSet out;
  out.window_len = window_len;
  out.stride = stride;
  if (trace.tasks.empty()) return out;

  const double last = trace.last_submit();
  const auto n_slices = static_cast<std::size_t>(std::floor(last / stride)) + 1;
  out.slices.resize(n_slices);
  std::vector<bool> covered(trace.tasks.size(), false);
  for (std::size_t t = 0; t < n_slices; ++t) {
    const double lo = static_cast<double>(t) * stride;
    const double hi = lo + window_len;
    // Tasks are sorted by submit_time, so each slice is a contiguous run.
    auto first = std::lower_bound(trace.tasks.begin(), trace.tasks.end(), lo,
                                  [](const TaskRecord& r, double v) { return r.submit_time < v; });
    for (auto it = first; it != trace.tasks.end() && it->submit_time < hi; ++it) {
      const auto idx = static_cast<std::size_t>(it - trace.tasks.begin());
      out.slices[t].push_back(idx);
      covered[idx] = true;
    }
  }
  for (std::size_t i = 0; i < covered.size(); ++i)
    if (!covered[i]) out.uncovered.push_back(i);
  if (!out.uncovered.empty())
    spdlog::warn("window_slice: {} task(s) fall between windows (window_len={}, stride={})",
                 out.uncovered.size(), window_len, stride);
  return out;
}

}  // namespace schedgraph
