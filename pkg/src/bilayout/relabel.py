"""Semi-automatic relabeling: turn extended-type annotations whose boundary
self-occludes into enclosed-type proposals for a human to choose from.

Steps per annotation: count boundary crossings per column and mark occluded
columns (more than one crossing); classify corner visibility from the camera;
for each occluded interval locate the visible corners flanking the hidden
boundary arc; seal the arc with a straight chord and two axis-aligned
two-segment connections; validate; let the human (or a scripted selection)
pick one; emit the enclosed annotation.

Sessions persist as a manifest plus an append-only decision log, replayed on
load so selections survive crashes.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import (
    CameraFrame,
    LayoutAnnotation,
    LayoutError,
    column_longitudes,
    polygon_signed_area,
)
from .ioformats import (
    AnnotationDocument,
    canonical_dumps,
    document_from_dict,
    frame_from_dict,
    frame_to_dict,
    write_atomic,
)
from .metrics import circular_runs

VISIBLE = "visible"
INVISIBLE = "invisible"
GRAZING = "grazing"

PROPOSAL_KINDS = ("chord", "L-first-x", "L-first-z")
_BEHIND_RTOL = 1e-9
_DEDUP_DECIMALS = 12


class RelabelError(ValueError):
    """Invalid relabeling request (unknown ids, duplicate selection, ...)."""


class SelectionConflict(RelabelError):
    """The task already carries a selection."""


@dataclass(frozen=True, eq=False)
class OcclusionAnalysis:
    occluded_columns: np.ndarray
    crossing_counts: np.ndarray
    intervals: tuple[tuple[int, int], ...]

    @property
    def has_occlusion(self) -> bool:
        return bool(self.occluded_columns.any())


@dataclass(frozen=True)
class Candidate:
    """A proposal anchor: either an existing corner (by index) or a point
    synthesized on the visible boundary."""

    point: tuple[float, float]
    corner_index: int | None
    synthesized: bool


@dataclass(frozen=True)
class Proposal:
    id: str
    corners: np.ndarray
    kind: str
    interval: tuple[int, int]


def analyze_occlusion(ann: LayoutAnnotation, frame: CameraFrame) -> OcclusionAnalysis:
    """Mark columns whose viewing ray crosses the boundary more than once."""
    counts = _kernels.crossing_counts(
        ann.corners[:, 0], ann.corners[:, 1], column_longitudes(frame)
    )
    if (counts % 2 == 0).any():
        bad = int(np.nonzero(counts % 2 == 0)[0][0])
        raise LayoutError(
            f"{ann.id or 'annotation'}: even crossing count {int(counts[bad])} at "
            f"column {bad} (corrupted polygon)"
        )
    occluded = counts > 1
    return OcclusionAnalysis(
        occluded_columns=occluded,
        crossing_counts=counts,
        intervals=tuple(circular_runs(occluded)),
    )


def _orient(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def classify_visibility(ann: LayoutAnnotation, frame: CameraFrame | None = None) -> list[str]:
    """Per-corner visibility from the camera origin.

    A corner is visible when the open segment from the origin to it crosses
    no non-incident boundary edge; it grazes when that segment passes exactly
    through another vertex."""
    corners = ann.corners
    k = corners.shape[0]
    origin = np.zeros(2)
    status = []
    for i in range(k):
        c = corners[i]
        verdict = VISIBLE
        # another vertex strictly between the origin and this corner
        for j in range(k):
            if j == i:
                continue
            v = corners[j]
            if abs(_orient(origin, c, v)) <= 1e-12 * max(1.0, np.hypot(*c)):
                t = float(np.dot(v, c) / np.dot(c, c))
                if 1e-12 < t < 1.0 - 1e-12:
                    verdict = GRAZING
                    break
        for j in range(k):
            jn = (j + 1) % k
            if j == i or jn == i:
                continue  # incident edges never block their own corner
            a, b = corners[j], corners[jn]
            d1 = _orient(origin, c, a)
            d2 = _orient(origin, c, b)
            d3 = _orient(a, b, origin)
            d4 = _orient(a, b, c)
            if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0:
                verdict = INVISIBLE
                break
        status.append(verdict)
    return status


def _first_hit(ann: LayoutAnnotation, angle: float) -> tuple[float, float]:
    d = float(_kernels.first_hit_depths(
        ann.corners[:, 0], ann.corners[:, 1], np.array([angle]))[0])
    if not np.isfinite(d):
        raise LayoutError("ray hits no edge")
    return (d * np.cos(angle), d * np.sin(angle))


def _pocket_vertices(ann: LayoutAnnotation, frame: CameraFrame,
                     interval: tuple[int, int]) -> list[int]:
    """Corner indices hidden behind the first-hit surface inside the
    interval's angular span (bounded by the neighbouring clear columns)."""
    n = frame.num_columns
    theta = column_longitudes(frame)
    lo = theta[(interval[0] - 1) % n]
    hi = theta[(interval[1] + 1) % n]
    span = (hi - lo) % (2.0 * np.pi)
    angles = ann.corner_angles()
    ranges = ann.corner_ranges()
    pocket = []
    for i in range(ann.corners.shape[0]):
        rel = (angles[i] - lo) % (2.0 * np.pi)
        if rel > span:
            continue
        d_first = float(_kernels.first_hit_depths(
            ann.corners[:, 0], ann.corners[:, 1], np.array([angles[i]]))[0])
        if ranges[i] > d_first * (1.0 + _BEHIND_RTOL):
            pocket.append(i)
    return pocket


def candidate_corners(analysis: OcclusionAnalysis, visibility: list[str],
                      ann: LayoutAnnotation, frame: CameraFrame
                      ) -> list[tuple[Candidate, Candidate]]:
    """For each occluded interval, the pair of visible anchors that flank the
    hidden boundary arc, ordered so the polygon runs a -> pocket -> b.

    Grazing corners are skipped.  When an interval's hidden arc carries no
    corner at all, the first visible boundary point on the interval's
    bounding ray is synthesized as an anchor.
    """
    if not analysis.intervals:
        return []
    k = ann.corners.shape[0]
    n = frame.num_columns
    theta = column_longitudes(frame)
    pairs = []
    for interval in analysis.intervals:
        pocket = _pocket_vertices(ann, frame, interval)
        if pocket:
            runs = _index_runs(pocket, k)
            # use the run closest to the interval if several appear
            first, last = runs[0]
            a = _walk_visible(visibility, first, -1, k)
            b = _walk_visible(visibility, last, +1, k)
            if a is None or b is None:
                raise RelabelError(
                    f"{ann.id or 'annotation'}: no visible flanking corner for "
                    f"interval {interval}"
                )
            pairs.append((
                Candidate(point=tuple(ann.corners[a]), corner_index=a, synthesized=False),
                Candidate(point=tuple(ann.corners[b]), corner_index=b, synthesized=False),
            ))
        else:
            # vertex-free pocket: synthesize anchors on the bounding rays
            lo = theta[(interval[0] - 1) % n] / 2.0 + theta[interval[0]] / 2.0
            hi = theta[interval[1]] / 2.0 + theta[(interval[1] + 1) % n] / 2.0
            pairs.append((
                Candidate(point=_first_hit(ann, lo), corner_index=None, synthesized=True),
                Candidate(point=_first_hit(ann, hi), corner_index=None, synthesized=True),
            ))
    return pairs


def _index_runs(indices: list[int], k: int) -> list[tuple[int, int]]:
    """Group sorted vertex indices into maximal circular runs."""
    mask = np.zeros(k, dtype=bool)
    mask[indices] = True
    runs = circular_runs(mask)
    return [(s, e) for s, e in runs]


def _walk_visible(visibility: list[str], start: int, step: int, k: int) -> int | None:
    i = start
    for _ in range(k):
        i = (i + step) % k
        if visibility[i] == VISIBLE:
            return i
        if i == start:
            break
    return None


def _insertion_index(ann: LayoutAnnotation, point: tuple[float, float]) -> int:
    """Index of the edge (i, i+1) whose segment the point lies on."""
    corners = ann.corners
    k = corners.shape[0]
    best, best_dist = 0, np.inf
    p = np.asarray(point)
    for i in range(k):
        a = corners[i]
        b = corners[(i + 1) % k]
        e = b - a
        ll = float(e @ e)
        t = float(np.clip((p - a) @ e / ll, 0.0, 1.0))
        dist = float(np.hypot(*(a + t * e - p)))
        if dist < best_dist:
            best, best_dist = i, dist
    return best


def generate_proposals(ann: LayoutAnnotation,
                       candidates: list[tuple[Candidate, Candidate]],
                       frame: CameraFrame,
                       intervals: tuple[tuple[int, int], ...] | None = None
                       ) -> list[Proposal]:
    """Seal each occluded interval: replace the hidden arc between the two
    anchors with a chord or an axis-aligned two-segment connection.  Invalid
    polygons (non-simple, camera outside, area above the source) are dropped
    and identical survivors deduplicated."""
    if not candidates:
        raise RelabelError("no candidate corners: nothing to propose")
    intervals = intervals or tuple((0, 0) for _ in candidates)
    source_area = polygon_signed_area(ann.corners)
    proposals: list[Proposal] = []
    seen: set = set()
    for idx, ((cand_a, cand_b), interval) in enumerate(zip(candidates, intervals)):
        pa = np.asarray(cand_a.point)
        pb = np.asarray(cand_b.point)
        base = _kept_arc(ann, cand_a, cand_b)
        connections = {
            "chord": [pa, pb],
            "L-first-x": [pa, np.array([pb[0], pa[1]]), pb],
            "L-first-z": [pa, np.array([pa[0], pb[1]]), pb],
        }
        for kind in PROPOSAL_KINDS:
            corners = _clean_polygon(connections[kind] + base)
            if corners is None:
                continue
            try:
                proposal_ann = LayoutAnnotation(
                    corners=corners, room_height=ann.room_height,
                    label_kind="enclosed", id=f"{ann.id}-p{idx}-{kind}",
                )
            except LayoutError:
                continue
            if polygon_signed_area(corners) > source_area * (1.0 + 1e-9):
                continue
            key = _canonical_key(corners)
            if key in seen:
                continue
            seen.add(key)
            proposals.append(Proposal(
                id=f"p{idx}-{kind}", corners=corners, kind=kind, interval=interval,
            ))
    if not proposals:
        raise RelabelError(
            f"{ann.id or 'annotation'}: all proposals invalid; manual annotation needed"
        )
    return proposals


def _kept_arc(ann: LayoutAnnotation, cand_a: Candidate, cand_b: Candidate) -> list[np.ndarray]:
    """Corners kept between anchor b and anchor a, walking the visible side
    (counterclockwise from b around to a, excluding the anchors)."""
    corners = ann.corners
    k = corners.shape[0]
    if cand_b.corner_index is not None:
        start = (cand_b.corner_index + 1) % k
    else:
        start = (_insertion_index(ann, cand_b.point) + 1) % k
    if cand_a.corner_index is not None:
        stop = cand_a.corner_index
    else:
        stop = (_insertion_index(ann, cand_a.point) + 1) % k
    kept = []
    i = start
    while i != stop:
        kept.append(corners[i])
        i = (i + 1) % k
    if cand_a.corner_index is None:
        return kept  # synthesized anchor: its point opens the connection
    return kept


def _clean_polygon(points: list[np.ndarray]) -> np.ndarray | None:
    """Drop consecutive duplicates (including the wrap pair); None when fewer
    than 3 distinct corners survive."""
    cleaned: list[np.ndarray] = []
    for p in points:
        if cleaned and np.hypot(*(p - cleaned[-1])) < 1e-12:
            continue
        cleaned.append(np.asarray(p, dtype=np.float64))
    while len(cleaned) >= 2 and np.hypot(*(cleaned[0] - cleaned[-1])) < 1e-12:
        cleaned.pop()
    if len(cleaned) < 3:
        return None
    return np.asarray(cleaned)


def _canonical_key(corners: np.ndarray) -> tuple:
    rounded = np.round(corners, _DEDUP_DECIMALS)
    k = rounded.shape[0]
    start = int(np.lexsort((rounded[:, 1], rounded[:, 0]))[0])
    rolled = np.roll(rounded, -start, axis=0)
    return (k,) + tuple(map(tuple, rolled))


# -- session store ---------------------------------------------------------------

@dataclass
class RelabelTask:
    task_id: str
    annotation: LayoutAnnotation
    analysis: OcclusionAnalysis
    proposals: tuple[Proposal, ...]
    selection: str | None = None
    needs_manual: bool = False

    @property
    def status(self) -> str:
        if self.needs_manual:
            return "manual"
        if not self.proposals:
            return "clean"
        return "selected" if self.selection else "pending"


class RelabelSession:
    """Task list over one annotation document, persisted as `session.json`
    plus an append-only `decisions.jsonl`; selections replay on load.  All
    writes serialize through one lock."""

    def __init__(self, directory, frame: CameraFrame, tasks: list[RelabelTask]):
        self.directory = str(directory)
        self.frame = frame
        self.tasks: dict[str, RelabelTask] = {t.task_id: t for t in tasks}
        self.order = [t.task_id for t in tasks]
        self._lock = threading.Lock()

    # construction ---------------------------------------------------------

    @classmethod
    def create(cls, doc: AnnotationDocument, directory) -> "RelabelSession":
        os.makedirs(directory, exist_ok=True)
        os.makedirs(os.path.join(directory, "out"), exist_ok=True)
        tasks = []
        for ann in doc.annotations:
            analysis = analyze_occlusion(ann, doc.frame)
            proposals: tuple[Proposal, ...] = ()
            needs_manual = False
            if analysis.has_occlusion:
                visibility = classify_visibility(ann, doc.frame)
                try:
                    cands = candidate_corners(analysis, visibility, ann, doc.frame)
                    proposals = tuple(generate_proposals(
                        ann, cands, doc.frame, intervals=analysis.intervals))
                except RelabelError:
                    needs_manual = True
            tasks.append(RelabelTask(
                task_id=ann.id, annotation=ann, analysis=analysis,
                proposals=proposals, needs_manual=needs_manual,
            ))
        session = cls(directory, doc.frame, tasks)
        session._image_paths = dict(doc.image_paths)
        write_atomic(os.path.join(directory, "session.json"),
                     canonical_dumps(session.manifest_dict()))
        # an empty log marks the session as initialized
        log = os.path.join(directory, "decisions.jsonl")
        if not os.path.exists(log):
            with open(log, "w", encoding="utf-8"):
                pass
        return session

    @classmethod
    def load(cls, directory) -> "RelabelSession":
        path = os.path.join(directory, "session.json")
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        frame = frame_from_dict(data["frame"])
        tasks = []
        image_paths = {}
        for tdata in data["tasks"]:
            ann = document_from_dict(tdata["source"]).annotations[0]
            if tdata.get("image_path"):
                image_paths[ann.id] = tdata["image_path"]
            analysis = analyze_occlusion(ann, frame)
            proposals = tuple(
                Proposal(
                    id=p["id"],
                    corners=np.asarray(p["corners"], dtype=np.float64),
                    kind=p["kind"],
                    interval=tuple(p["interval"]),
                )
                for p in tdata["proposals"]
            )
            tasks.append(RelabelTask(
                task_id=tdata["task_id"], annotation=ann, analysis=analysis,
                proposals=proposals, needs_manual=bool(tdata.get("needs_manual")),
            ))
        session = cls(directory, frame, tasks)
        session._image_paths = image_paths
        for decision in session._read_decisions():
            task = session.tasks.get(decision["task_id"])
            if task is not None:
                task.selection = decision["proposal_id"]
        return session

    # persistence ----------------------------------------------------------

    def manifest_dict(self) -> dict:
        tasks = []
        image_paths = getattr(self, "_image_paths", {})
        for task_id in self.order:
            task = self.tasks[task_id]
            source_doc = {
                "schema_version": 1,
                "frame": frame_to_dict(self.frame),
                "annotations": [{
                    "id": task.annotation.id,
                    "label_kind": task.annotation.label_kind,
                    "room_height": task.annotation.room_height,
                    "corners": [[float(x), float(z)] for x, z in task.annotation.corners],
                }],
            }
            tasks.append({
                "task_id": task.task_id,
                "source": source_doc,
                "image_path": image_paths.get(task_id),
                "needs_manual": task.needs_manual,
                "occluded_intervals": [list(iv) for iv in task.analysis.intervals],
                "proposals": [
                    {
                        "id": p.id,
                        "kind": p.kind,
                        "interval": list(p.interval),
                        "corners": [[float(x), float(z)] for x, z in p.corners],
                    }
                    for p in task.proposals
                ],
            })
        return {
            "schema_version": 1,
            "frame": frame_to_dict(self.frame),
            "tasks": tasks,
        }

    def _read_decisions(self) -> list[dict]:
        path = os.path.join(self.directory, "decisions.jsonl")
        if not os.path.exists(path):
            return []
        decisions = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    decisions.append(json.loads(line))
        return decisions

    def _append_decision(self, decision: dict) -> None:
        path = os.path.join(self.directory, "decisions.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(decision, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # selection ------------------------------------------------------------

    def apply_selection(self, task_id: str, proposal_id: str) -> LayoutAnnotation:
        """Record a human decision and emit the enclosed annotation.  The log
        append is durable before the output is written or the call returns."""
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise RelabelError(f"unknown task {task_id!r}")
            if task.needs_manual:
                raise RelabelError(f"task {task_id!r} is flagged for manual annotation")
            if not task.proposals:
                raise RelabelError(f"task {task_id!r} has no occlusion; nothing to relabel")
            if task.selection is not None:
                raise SelectionConflict(
                    f"task {task_id!r} already selected {task.selection!r}")
            proposal = next((p for p in task.proposals if p.id == proposal_id), None)
            if proposal is None:
                raise RelabelError(f"unknown proposal {proposal_id!r} for task {task_id!r}")

            result = LayoutAnnotation(
                corners=proposal.corners,
                room_height=task.annotation.room_height,
                label_kind="enclosed",
                id=task.annotation.id,
            )
            self._append_decision({
                "task_id": task_id,
                "proposal_id": proposal_id,
                "timestamp": time.time(),
            })
            task.selection = proposal_id
            out_doc = {
                "schema_version": 1,
                "frame": frame_to_dict(self.frame),
                "annotations": [{
                    "id": result.id,
                    "label_kind": "enclosed",
                    "room_height": result.room_height,
                    "corners": [[float(x), float(z)] for x, z in result.corners],
                }],
            }
            write_atomic(os.path.join(self.directory, "out", f"{task_id}.json"),
                         canonical_dumps(out_doc))
            return result
