import { describe, expect, it } from "vitest";

import type { TaskSummary, TaskView } from "../src/api.js";
import { selectionUrl, taskUrl } from "../src/api.js";
import {
  applyCommitSuccess,
  applyConflict,
  bevFit,
  bevToCanvas,
  canCommit,
  initialState,
  nextPendingTask,
  proposalColor,
  selectByNumber,
  selectProposal,
  withConnectivity,
  withDetail,
  withTasks,
} from "../src/state.js";

function makeView(status: TaskView["status"] = "pending"): TaskView {
  const boundary = { floor_v: [384, 384], ceil_v: [128, 128] };
  return {
    task_id: "t1",
    status,
    panorama_url: null,
    frame: { width: 1024, height: 512, num_columns: 2, camera_height: 1.6 },
    source: {
      boundary,
      bev: [[1, -1], [1, 1], [-1, 1], [-1, -1]],
      label_kind: "extended",
      room_height: 3.2,
    },
    occluded_intervals: [[0, 0]],
    proposals: [
      { id: "p0-chord", kind: "chord", interval: [0, 0], boundary, bev: [[1, -1], [1, 1], [-1, 1]] },
      { id: "p0-L-first-z", kind: "L-first-z", interval: [0, 0], boundary, bev: [[1, -1], [1, 1], [-1, -1]] },
    ],
    selected_proposal_id: status === "selected" ? "p0-chord" : null,
  };
}

const tasks: TaskSummary[] = [
  { task_id: "t0", status: "selected", num_proposals: 2, selected_proposal_id: "p0-chord" },
  { task_id: "t1", status: "pending", num_proposals: 2, selected_proposal_id: null },
  { task_id: "t2", status: "clean", num_proposals: 0, selected_proposal_id: null },
  { task_id: "t3", status: "pending", num_proposals: 3, selected_proposal_id: null },
];

describe("selection rules", () => {
  it("picks an existing proposal on a pending task", () => {
    const s = withDetail(initialState(), makeView());
    expect(selectProposal(s, "p0-chord").localSelection).toBe("p0-chord");
  });

  it("ignores unknown proposal ids", () => {
    const s = withDetail(initialState(), makeView());
    expect(selectProposal(s, "nope").localSelection).toBeNull();
  });

  it("refuses selection on committed tasks", () => {
    const s = withDetail(initialState(), makeView("selected"));
    expect(selectProposal(s, "p0-L-first-z").localSelection).toBe("p0-chord");
  });

  it("maps number keys to proposal order", () => {
    const s = withDetail(initialState(), makeView());
    expect(selectByNumber(s, 2).localSelection).toBe("p0-L-first-z");
    expect(selectByNumber(s, 9).localSelection).toBeNull();
  });
});

describe("commit gating", () => {
  it("requires a selection, a pending task and connectivity", () => {
    let s = withDetail(initialState(), makeView());
    expect(canCommit(s)).toBe(false);
    s = selectProposal(s, "p0-chord");
    expect(canCommit(s)).toBe(true);
    expect(canCommit(withConnectivity(s, false))).toBe(false);
    expect(canCommit({ ...s, busy: true })).toBe(false);
  });

  it("never commits on a committed task", () => {
    const s = withDetail(initialState(), makeView("selected"));
    expect(canCommit(s)).toBe(false);
  });
});

describe("transitions", () => {
  it("commit success marks the task selected everywhere", () => {
    let s = withTasks(initialState(), tasks);
    s = withDetail(s, makeView());
    s = selectProposal(s, "p0-L-first-z");
    s = applyCommitSuccess(s);
    expect(s.current?.status).toBe("selected");
    expect(s.current?.selected_proposal_id).toBe("p0-L-first-z");
    expect(s.tasks.find((t) => t.task_id === "t1")?.status).toBe("selected");
  });

  it("conflict adopts the server's decision", () => {
    let s = withDetail(initialState(), makeView());
    s = selectProposal(s, "p0-L-first-z");
    s = applyConflict(s, "p0-chord");
    expect(s.current?.status).toBe("selected");
    expect(s.localSelection).toBe("p0-chord");
    expect(s.notice).toContain("already selected");
  });

  it("refreshing detail reconstructs state from the server view", () => {
    const s = withDetail(initialState(), makeView("selected"));
    expect(s.localSelection).toBe("p0-chord");
    expect(canCommit(s)).toBe(false);
  });
});

describe("auto-advance", () => {
  it("finds the next pending task after the current one", () => {
    expect(nextPendingTask(tasks, "t1")).toBe("t3");
    expect(nextPendingTask(tasks, "t3")).toBe("t1");
    expect(nextPendingTask(tasks, null)).toBe("t1");
  });

  it("returns null when nothing is pending", () => {
    const done = tasks.map((t) =>
      t.status === "pending" ? { ...t, status: "selected" as const } : t,
    );
    expect(nextPendingTask(done, "t0")).toBeNull();
  });
});

describe("bev fit", () => {
  it("keeps every point and the camera inside the canvas", () => {
    const sets: Array<Array<[number, number]>> = [
      [[4, -2], [4, 6], [-3, 6], [-3, -2]],
    ];
    const t = bevFit(sets, 512, 512, 20);
    for (const pt of [...sets[0], [0, 0] as [number, number]]) {
      const [x, y] = bevToCanvas(t, pt);
      expect(x).toBeGreaterThanOrEqual(19);
      expect(x).toBeLessThanOrEqual(493);
      expect(y).toBeGreaterThanOrEqual(19);
      expect(y).toBeLessThanOrEqual(493);
    }
  });

  it("flips z so up is up", () => {
    const t = bevFit([[[1, 1], [-1, -1]]], 100, 100, 10);
    const [, yHigh] = bevToCanvas(t, [0, 1]);
    const [, yLow] = bevToCanvas(t, [0, -1]);
    expect(yHigh).toBeLessThan(yLow);
  });

  it("degenerate extents stay finite", () => {
    const t = bevFit([[[0, 0]]], 100, 100, 10);
    const [x, y] = bevToCanvas(t, [0, 0]);
    expect(Number.isFinite(x)).toBe(true);
    expect(Number.isFinite(y)).toBe(true);
  });
});

describe("api urls", () => {
  it("escapes task ids", () => {
    expect(taskUrl("room/7")).toBe("/api/tasks/room%2F7");
    expect(selectionUrl("t1")).toBe("/api/tasks/t1/selection");
  });
});

describe("colors", () => {
  it("cycles deterministically", () => {
    expect(proposalColor(0)).toBe(proposalColor(6));
  });
});
