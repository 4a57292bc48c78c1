// Pure state machine for the review flow: task list -> detail -> pick a
// proposal -> commit -> auto-advance. Commit stays disabled unless the
// server says the task is still pending and the annotator picked a proposal.
export function initialState() {
    return {
        tasks: [],
        current: null,
        localSelection: null,
        online: true,
        busy: false,
        notice: "",
    };
}
export function withTasks(state, tasks) {
    return { ...state, tasks };
}
export function withDetail(state, view) {
    // committed tasks render read-only with the server's choice highlighted
    const localSelection = view.status === "selected" ? view.selected_proposal_id : null;
    return { ...state, current: view, localSelection, notice: "" };
}
export function withConnectivity(state, online) {
    return { ...state, online, notice: online ? state.notice : "offline" };
}
export function selectProposal(state, proposalId) {
    if (!state.current || state.current.status !== "pending")
        return state;
    if (!state.current.proposals.some((p) => p.id === proposalId))
        return state;
    return { ...state, localSelection: proposalId };
}
export function selectByNumber(state, n) {
    if (!state.current)
        return state;
    const proposal = state.current.proposals[n - 1];
    return proposal ? selectProposal(state, proposal.id) : state;
}
export function canCommit(state) {
    return (state.online &&
        !state.busy &&
        state.current !== null &&
        state.current.status === "pending" &&
        state.localSelection !== null);
}
export function applyCommitSuccess(state) {
    if (!state.current || !state.localSelection)
        return state;
    const chosen = state.localSelection;
    const current = {
        ...state.current,
        status: "selected",
        selected_proposal_id: chosen,
    };
    const tasks = state.tasks.map((t) => t.task_id === current.task_id
        ? { ...t, status: "selected", selected_proposal_id: chosen }
        : t);
    return { ...state, current, tasks, busy: false, notice: "committed" };
}
export function applyConflict(state, serverChoice) {
    // someone (or a script) already selected: show the server's decision
    if (!state.current)
        return state;
    const current = {
        ...state.current,
        status: "selected",
        selected_proposal_id: serverChoice,
    };
    return {
        ...state,
        current,
        localSelection: serverChoice,
        busy: false,
        notice: "already selected on the server",
    };
}
export function nextPendingTask(tasks, afterId) {
    if (tasks.length === 0)
        return null;
    const start = afterId ? tasks.findIndex((t) => t.task_id === afterId) : -1;
    for (let step = 1; step <= tasks.length; step += 1) {
        const candidate = tasks[(start + step) % tasks.length];
        if (candidate.status === "pending" && candidate.task_id !== afterId) {
            return candidate.task_id;
        }
    }
    return null;
}
export function bevFit(pointSets, width, height, margin = 20) {
    // fit all corner sets plus the camera origin into the canvas; y flips so
    // +z points up
    let minX = 0;
    let maxX = 0;
    let minY = 0;
    let maxY = 0;
    for (const points of pointSets) {
        for (const [x, y] of points) {
            minX = Math.min(minX, x);
            maxX = Math.max(maxX, x);
            minY = Math.min(minY, y);
            maxY = Math.max(maxY, y);
        }
    }
    const spanX = Math.max(maxX - minX, 1e-9);
    const spanY = Math.max(maxY - minY, 1e-9);
    const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
    return {
        scale,
        offsetX: width / 2 - scale * (minX + maxX) / 2,
        offsetY: height / 2 + scale * (minY + maxY) / 2,
    };
}
export function bevToCanvas(t, point) {
    return [t.offsetX + t.scale * point[0], t.offsetY - t.scale * point[1]];
}
export const PROPOSAL_COLORS = [
    "#e4572e",
    "#17bebb",
    "#ffc914",
    "#76b041",
    "#b33f62",
    "#4f86c6",
];
export function proposalColor(index) {
    return PROPOSAL_COLORS[index % PROPOSAL_COLORS.length];
}
