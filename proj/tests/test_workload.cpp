#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "helpers.hpp"
#include "schedgraph/error.hpp"
#include "schedgraph/workload.hpp"

using namespace schedgraph;
using testing_util::task;
using testing_util::trace_of;

namespace {

GenConfig small_config(std::uint64_t seed = 7) {
  GenConfig g;
  g.n_tasks = 200;
  g.n_nodes = 3;
  g.mean_interarrival = 1.0;
  g.seed = seed;
  return g;
}

}  // namespace

TEST(Generate, EmptyTraceKeepsNodes) {
  GenConfig g = small_config();
  g.n_tasks = 0;
  const auto t = generate_trace(g);
  EXPECT_TRUE(t.tasks.empty());
  EXPECT_EQ(t.nodes.size(), 3u);
}

TEST(Generate, SameSeedIsBitIdentical) {
  EXPECT_EQ(generate_trace(small_config(7)), generate_trace(small_config(7)));
  EXPECT_NE(generate_trace(small_config(7)), generate_trace(small_config(8)));
}

TEST(Generate, InterarrivalMeanConverges) {
  GenConfig g = small_config();
  g.n_tasks = 10000;
  const auto t = generate_trace(g);
  const double mean = t.tasks.back().submit_time / static_cast<double>(t.tasks.size());
  EXPECT_GE(mean, 0.95);
  EXPECT_LE(mean, 1.05);
}

TEST(Generate, RecordsAreValidAndUnlabelled) {
  const auto t = generate_trace(small_config());
  EXPECT_NO_THROW(validate(t));
  for (const auto& r : t.tasks) {
    EXPECT_EQ(r.anomaly_label, AnomalyLabel::kNone);
    EXPECT_LE(r.submit_time, r.start_time);
    EXPECT_LE(r.start_time, r.end_time);
    for (double d : r.resource_demand) {
      EXPECT_GE(d, 0.05);
      EXPECT_LE(d, 0.95);
    }
  }
}

TEST(Generate, PlacementRespectsCapacity) {
  const auto t = generate_trace(small_config(3));
  // At every start instant the demand running on that node fits.
  for (const auto& a : t.tasks) {
    std::vector<double> load(a.resource_demand.size(), 0.0);
    for (const auto& b : t.tasks)
      if (b.node_id == a.node_id && b.start_time <= a.start_time && a.start_time < b.end_time)
        for (std::size_t r = 0; r < load.size(); ++r) load[r] += b.resource_demand[r];
    for (double l : load) EXPECT_LE(l, 1.0 + 1e-12);
  }
}

TEST(Generate, RejectsBadConfig) {
  GenConfig g = small_config();
  g.horizon = 0.0;
  EXPECT_THROW(generate_trace(g), ValidationError);
  g = small_config();
  g.mean_interarrival = -1.0;
  EXPECT_THROW(generate_trace(g), ValidationError);
  g = small_config();
  g.n_nodes = 0;
  EXPECT_THROW(generate_trace(g), ValidationError);
}

TEST(Inject, DelayShiftsByMagnitudeTimesDuration) {
  auto tr = trace_of({task(1, 5.0, 6.0, 16.0)});
  const auto out = inject_disturbance(tr, {DisturbanceKind::kTaskDelay, 0.0, 10.0, 0.5, 1.0}, 1);
  EXPECT_DOUBLE_EQ(out.tasks[0].end_time - tr.tasks[0].end_time, 5.0);
  EXPECT_DOUBLE_EQ(out.tasks[0].start_time - tr.tasks[0].start_time, 5.0);
  EXPECT_EQ(out.tasks[0].anomaly_label, AnomalyLabel::kTaskDelay);
}

TEST(Inject, ResourceChangeClampsAtOne) {
  auto tr = trace_of({task(1, 5.0, 6.0, 16.0, 0, {0.6, 0.3})});
  const auto out = inject_disturbance(tr, {DisturbanceKind::kResourceChange, 0.0, 10.0, 1.0, 1.0}, 1);
  EXPECT_DOUBLE_EQ(out.tasks[0].resource_demand[0], 1.0);
  EXPECT_DOUBLE_EQ(out.tasks[0].resource_demand[1], 0.6);
}

TEST(Inject, EmptySelectionLeavesTraceUnchanged) {
  auto tr = generate_trace(small_config());
  // Window placed past every submit time.
  GenConfig g = small_config();
  const auto out = inject_disturbance(tr, {DisturbanceKind::kTaskDelay, g.horizon - 1.0, 0.5, 1.0, 1.0}, 1);
  EXPECT_EQ(out, tr);
}

TEST(Inject, LocalityAndLabelSoundness) {
  const auto tr = generate_trace(small_config());
  for (auto kind : {DisturbanceKind::kTaskDelay, DisturbanceKind::kResourceChange, DisturbanceKind::kStructuralShift}) {
    const DisturbanceSpec spec{kind, 40.0, 60.0, 1.0, 0.5};
    const auto out = inject_disturbance(tr, spec, 9);
    std::size_t labelled = 0;
    for (std::size_t i = 0; i < tr.tasks.size(); ++i) {
      const auto& a = tr.tasks[i];
      const auto& b = out.tasks[i];
      const bool inside = a.submit_time >= 40.0 && a.submit_time <= 100.0;
      if (!inside) EXPECT_EQ(a, b);
      if (b.anomalous()) {
        ++labelled;
        EXPECT_TRUE(inside);
        EXPECT_EQ(b.anomaly_label, label_for(kind));
      } else {
        EXPECT_EQ(a, b);
      }
    }
    EXPECT_GT(labelled, 0u);
    EXPECT_NO_THROW(validate(out));
  }
}

TEST(Inject, StructuralShiftMovesToAnotherNode) {
  const auto tr = generate_trace(small_config());
  const auto out = inject_disturbance(tr, {DisturbanceKind::kStructuralShift, 0.0, 200.0, 1.0, 1.0}, 4);
  for (std::size_t i = 0; i < tr.tasks.size(); ++i) {
    if (!out.tasks[i].anomalous()) continue;
    EXPECT_NE(out.tasks[i].node_id, tr.tasks[i].node_id);
    EXPECT_NEAR(out.tasks[i].duration(), tr.tasks[i].duration(), 1e-12);
    EXPECT_GE(out.tasks[i].start_time, out.tasks[i].submit_time);
  }
}

TEST(Inject, StructuralShiftNeedsTwoNodes) {
  auto tr = trace_of({task(1, 5.0, 6.0, 16.0)}, 1);
  EXPECT_THROW(inject_disturbance(tr, {DisturbanceKind::kStructuralShift, 0.0, 10.0, 1.0, 1.0}, 1),
               ValidationError);
}

TEST(Inject, WindowOutsideHorizonRejected) {
  auto tr = trace_of({task(1, 5.0, 6.0, 16.0)}, 2, 50.0);
  EXPECT_THROW(inject_disturbance(tr, {DisturbanceKind::kTaskDelay, 45.0, 10.0, 1.0, 1.0}, 1), ValidationError);
  EXPECT_THROW(inject_disturbance(tr, {DisturbanceKind::kTaskDelay, 0.0, 10.0, 1.0, 0.0}, 1), ValidationError);
}

TEST(Inject, Deterministic) {
  const auto tr = generate_trace(small_config());
  const DisturbanceSpec spec{DisturbanceKind::kStructuralShift, 10.0, 80.0, 1.0, 0.5};
  EXPECT_EQ(inject_disturbance(tr, spec, 3), inject_disturbance(tr, spec, 3));
}

TEST(Validate, CatchesBrokenRecords) {
  auto tr = trace_of({task(1, 5.0, 6.0, 16.0)});
  tr.tasks[0].end_time = 5.5;
  EXPECT_THROW(validate(tr), InvariantError);
  tr = trace_of({task(1, 5.0, 6.0, 16.0, 9)});
  EXPECT_THROW(validate(tr), ReferenceError);
  tr = trace_of({task(1, 5.0, 6.0, 16.0), task(1, 6.0, 7.0, 8.0)});
  EXPECT_THROW(validate(tr), ValidationError);
  tr = trace_of({task(1, 5.0, 6.0, 16.0, 0, {1.5, 0.1})});
  EXPECT_THROW(validate(tr), ValidationError);
}

TEST(SortTasks, TiesBrokenByTaskId) {
  std::vector<TaskRecord> ts{task(3, 1.0, 1.0, 2.0), task(1, 1.0, 1.0, 2.0), task(2, 0.5, 1.0, 2.0)};
  sort_tasks(ts);
  EXPECT_EQ(ts[0].task_id, 2);
  EXPECT_EQ(ts[1].task_id, 1);
  EXPECT_EQ(ts[2].task_id, 3);
}

TEST(WindowSlice, SingleTask) {
  const auto s = window_slice(trace_of({task(0, 0.0, 0.0, 1.0)}), 10.0, 10.0);
  ASSERT_EQ(s.slices.size(), 1u);
  EXPECT_EQ(s.slices[0], std::vector<std::size_t>{0});
}

TEST(WindowSlice, OverlappingWindowsHandEnumeration) {
  // Oracle: tests/oracles/derive.py
  const auto tr = trace_of({task(0, 0.0, 0.0, 1.0), task(1, 5.0, 5.0, 6.0), task(2, 12.0, 12.0, 13.0)});
  const auto s = window_slice(tr, 10.0, 5.0);
  const std::vector<std::vector<std::size_t>> expected{{0, 1}, {1, 2}, {2}};
  EXPECT_EQ(s.slices, expected);
  EXPECT_TRUE(s.uncovered.empty());
}

TEST(WindowSlice, GapLeavesTaskUncovered) {
  const auto tr = trace_of({task(0, 0.0, 0.0, 1.0), task(1, 7.0, 7.0, 8.0), task(2, 12.0, 12.0, 13.0)});
  const auto s = window_slice(tr, 5.0, 10.0);
  const std::vector<std::vector<std::size_t>> expected{{0}, {2}};
  EXPECT_EQ(s.slices, expected);
  EXPECT_EQ(s.uncovered, std::vector<std::size_t>{1});
}

TEST(WindowSlice, EveryTaskCoveredWhenStrideWithinWindow) {
  const auto tr = generate_trace(small_config());
  const auto s = window_slice(tr, 10.0, 7.0);
  std::vector<int> seen(tr.tasks.size(), 0);
  for (const auto& sl : s.slices)
    for (auto i : sl) ++seen[i];
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c >= 1; }));
}

TEST(Labels, StringRoundTrip) {
  for (auto l : {AnomalyLabel::kNone, AnomalyLabel::kStructuralShift, AnomalyLabel::kResourceChange,
                 AnomalyLabel::kTaskDelay})
    EXPECT_EQ(anomaly_label_from_string(to_string(l)), l);
  EXPECT_THROW(anomaly_label_from_string("bogus"), ValidationError);
}
