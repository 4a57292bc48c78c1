// Typed client for the relabel service. The UI performs no geometry: every
// coordinate it renders arrives pre-projected from these endpoints.

export type TaskStatus = "pending" | "selected" | "clean" | "manual";

export interface TaskSummary {
  task_id: string;
  status: TaskStatus;
  num_proposals: number;
  selected_proposal_id: string | null;
}

export interface BoundaryPolyline {
  floor_v: number[];
  ceil_v: number[];
}

export interface ProposalView {
  id: string;
  kind: string;
  interval: [number, number];
  boundary: BoundaryPolyline;
  bev: Array<[number, number]>;
}

export interface FrameInfo {
  width: number;
  height: number;
  num_columns: number;
  camera_height: number;
}

export interface TaskView {
  task_id: string;
  status: TaskStatus;
  panorama_url: string | null;
  frame: FrameInfo;
  source: {
    boundary: BoundaryPolyline;
    bev: Array<[number, number]>;
    label_kind: string;
    room_height: number;
  };
  occluded_intervals: Array<[number, number]>;
  proposals: ProposalView[];
  selected_proposal_id: string | null;
}

export interface SelectionResult {
  ok: boolean;
  status: number;
  error?: string;
}

export function taskUrl(id: string): string {
  return `/api/tasks/${encodeURIComponent(id)}`;
}

export function selectionUrl(id: string): string {
  return `${taskUrl(id)}/selection`;
}

export async function listTasks(): Promise<TaskSummary[]> {
  const res = await fetch("/api/tasks");
  if (!res.ok) throw new Error(`task list failed: ${res.status}`);
  const body = await res.json();
  return body.tasks as TaskSummary[];
}

export async function getTask(id: string): Promise<TaskView> {
  const res = await fetch(taskUrl(id));
  if (!res.ok) throw new Error(`task ${id} failed: ${res.status}`);
  return (await res.json()) as TaskView;
}

export async function postSelection(
  id: string,
  proposalId: string,
): Promise<SelectionResult> {
  const res = await fetch(selectionUrl(id), {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ proposal_id: proposalId }),
  });
  if (res.status === 204) return { ok: true, status: 204 };
  let message = `status ${res.status}`;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") message = body.error;
  } catch {
    // non-JSON error body: keep the status text
  }
  return { ok: false, status: res.status, error: message };
}
