// Typed client for the relabel service. The UI performs no geometry: every
// coordinate it renders arrives pre-projected from these endpoints.
export function taskUrl(id) {
    return `/api/tasks/${encodeURIComponent(id)}`;
}
export function selectionUrl(id) {
    return `${taskUrl(id)}/selection`;
}
export async function listTasks() {
    const res = await fetch("/api/tasks");
    if (!res.ok)
        throw new Error(`task list failed: ${res.status}`);
    const body = await res.json();
    return body.tasks;
}
export async function getTask(id) {
    const res = await fetch(taskUrl(id));
    if (!res.ok)
        throw new Error(`task ${id} failed: ${res.status}`);
    return (await res.json());
}
export async function postSelection(id, proposalId) {
    const res = await fetch(selectionUrl(id), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ proposal_id: proposalId }),
    });
    if (res.status === 204)
        return { ok: true, status: 204 };
    let message = `status ${res.status}`;
    try {
        const body = await res.json();
        if (body && typeof body.error === "string")
            message = body.error;
    }
    catch {
        // non-JSON error body: keep the status text
    }
    return { ok: false, status: res.status, error: message };
}
