// DOM wiring: the task list sidebar, the dual-panel detail view, keyboard
// shortcuts (number keys pick a proposal, Enter commits) and auto-advance.
import { getTask, listTasks, postSelection } from "./api.js";
import { drawBev, drawPanorama } from "./render.js";
import { applyCommitSuccess, applyConflict, canCommit, initialState, nextPendingTask, proposalColor, selectByNumber, selectProposal, withConnectivity, withDetail, withTasks, } from "./state.js";
let state = initialState();
let panoramaImage = null;
const el = {
    taskList: document.getElementById("task-list"),
    pano: document.getElementById("pano"),
    bev: document.getElementById("bev"),
    proposals: document.getElementById("proposals"),
    commit: document.getElementById("commit"),
    status: document.getElementById("status"),
};
function setState(next) {
    state = next;
    render();
}
function render() {
    renderTaskList();
    renderDetail();
    el.commit.disabled = !canCommit(state);
    el.status.textContent = state.online ? state.notice : "offline";
    el.status.classList.toggle("offline", !state.online);
}
function renderTaskList() {
    el.taskList.replaceChildren();
    for (const task of state.tasks) {
        const item = document.createElement("button");
        item.className = `task ${task.status}`;
        if (state.current && state.current.task_id === task.task_id) {
            item.classList.add("active");
        }
        item.textContent = `${task.task_id} · ${task.status}`;
        item.onclick = () => void openTask(task.task_id);
        el.taskList.appendChild(item);
    }
}
function renderDetail() {
    const view = state.current;
    el.proposals.replaceChildren();
    if (!view)
        return;
    drawPanorama(el.pano, view, state.localSelection, panoramaImage);
    drawBev(el.bev, view, state.localSelection);
    view.proposals.forEach((p, idx) => {
        const row = document.createElement("button");
        row.className = "proposal";
        if (p.id === state.localSelection)
            row.classList.add("picked");
        if (view.status !== "pending")
            row.disabled = true;
        const swatch = document.createElement("span");
        swatch.className = "swatch";
        swatch.style.background = proposalColor(idx);
        row.appendChild(swatch);
        row.appendChild(document.createTextNode(` ${idx + 1}. ${p.id} (${p.kind})`));
        row.onclick = () => setState(selectProposal(state, p.id));
        el.proposals.appendChild(row);
    });
    if (view.status === "selected") {
        const note = document.createElement("p");
        note.textContent = `committed: ${view.selected_proposal_id}`;
        el.proposals.appendChild(note);
    }
}
async function refreshTasks() {
    setState(withTasks(state, await listTasks()));
}
async function openTask(taskId) {
    const view = await getTask(taskId);
    panoramaImage = null;
    if (view.panorama_url) {
        const img = new Image();
        img.onload = () => {
            panoramaImage = img;
            render();
        };
        img.src = view.panorama_url;
    }
    setState(withDetail(state, view));
}
async function commit() {
    if (!canCommit(state) || !state.current || !state.localSelection)
        return;
    const view = state.current;
    setState({ ...state, busy: true });
    const result = await postSelection(view.task_id, state.localSelection);
    if (result.ok) {
        setState(applyCommitSuccess(state));
        await refreshTasks();
        const next = nextPendingTask(state.tasks, view.task_id);
        if (next)
            await openTask(next);
    }
    else if (result.status === 409) {
        const fresh = await getTask(view.task_id);
        setState(applyConflict(withDetail(state, fresh), fresh.selected_proposal_id));
        await refreshTasks();
    }
    else {
        setState({ ...state, busy: false, notice: result.error ?? "commit failed" });
    }
}
function onKey(event) {
    if (event.key >= "1" && event.key <= "9") {
        setState(selectByNumber(state, Number(event.key)));
    }
    else if (event.key === "Enter") {
        void commit();
    }
}
async function init() {
    window.addEventListener("online", () => setState(withConnectivity(state, true)));
    window.addEventListener("offline", () => setState(withConnectivity(state, false)));
    document.addEventListener("keydown", onKey);
    el.commit.onclick = () => void commit();
    try {
        await refreshTasks();
        const first = nextPendingTask(state.tasks, null) ?? state.tasks[0]?.task_id;
        if (first)
            await openTask(first);
    }
    catch (err) {
        setState({ ...state, online: false, notice: String(err) });
    }
}
void init();
