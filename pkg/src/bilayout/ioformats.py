"""On-disk schemas: annotation documents, corner-list import, and the small
depth/boundary interchange documents used by the convert command.

Serialization is canonical: sorted keys, two-space indentation, floats
written with 17 significant digits so 64-bit values roundtrip exactly.  The
same document therefore always produces the same bytes.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoundaryCurve,
    CameraFrame,
    HorizonDepth,
    LayoutAnnotation,
    LayoutError,
)

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Malformed document; the message carries the offending field path."""


@dataclass(frozen=True)
class AnnotationDocument:
    frame: CameraFrame
    annotations: tuple[LayoutAnnotation, ...]
    image_paths: dict[str, str]

    def by_id(self) -> dict[str, LayoutAnnotation]:
        return {a.id: a for a in self.annotations}


def _canonical(value, out: list, indent: int) -> None:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(value)
        for i, key in enumerate(keys):
            out.append(f'{pad}  {json.dumps(key)}: ')
            _canonical(value[key], out, indent + 1)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad + "  ")
            _canonical(item, out, indent + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise SchemaError("non-finite float cannot be serialized")
        out.append(format(float(value), ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif value is None:
        out.append("null")
    else:
        raise SchemaError(f"unsupported value type {type(value).__name__}")


def canonical_dumps(obj) -> str:
    out: list = []
    _canonical(obj, out, 0)
    out.append("\n")
    return "".join(out)


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _expect(mapping, key, kind, path):
    if not isinstance(mapping, dict):
        raise SchemaError(f"{path}: expected an object")
    if key not in mapping:
        raise SchemaError(f"{path}.{key}: missing")
    value = mapping[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{path}.{key}: expected a number")
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(f"{path}.{key}: expected {kind.__name__}")
    return value


def frame_from_dict(data, path="frame") -> CameraFrame:
    frame = CameraFrame(
        width=_expect(data, "width", int, path),
        height=_expect(data, "height", int, path),
        num_columns=_expect(data, "num_columns", int, path),
        camera_height=_expect(data, "camera_height", float, path),
    )
    return frame


def frame_to_dict(frame: CameraFrame) -> dict:
    return {
        "width": frame.width,
        "height": frame.height,
        "num_columns": frame.num_columns,
        "camera_height": frame.camera_height,
    }


def _annotation_from_dict(data, frame: CameraFrame, path: str) -> tuple[LayoutAnnotation, str | None]:
    ann_id = _expect(data, "id", str, path)
    corners = _expect(data, "corners", list, path)
    for i, pt in enumerate(corners):
        if (not isinstance(pt, list) or len(pt) != 2
                or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in pt)):
            raise SchemaError(f"{path}.corners[{i}]: expected [x, z]")
    room_height = _expect(data, "room_height", float, path)
    label_kind = _expect(data, "label_kind", str, path)
    image_path = data.get("image_path")
    if image_path is not None and not isinstance(image_path, str):
        raise SchemaError(f"{path}.image_path: expected a string")
    try:
        ann = LayoutAnnotation(
            corners=np.asarray(corners, dtype=np.float64),
            room_height=room_height,
            label_kind=label_kind,
            id=ann_id,
        )
    except LayoutError as exc:
        raise SchemaError(f"{path} (id={ann_id!r}): {exc}") from exc
    if room_height <= frame.camera_height:
        raise SchemaError(
            f"{path} (id={ann_id!r}): room_height {room_height} must exceed "
            f"camera_height {frame.camera_height}"
        )
    return ann, image_path


def document_from_dict(data) -> AnnotationDocument:
    version = _expect(data, "schema_version", int, "$")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"$.schema_version: unsupported version {version}")
    frame = frame_from_dict(_expect(data, "frame", dict, "$"), "$.frame")
    records = _expect(data, "annotations", list, "$")
    annotations = []
    image_paths = {}
    seen = set()
    for i, record in enumerate(records):
        ann, image_path = _annotation_from_dict(record, frame, f"$.annotations[{i}]")
        if ann.id in seen:
            raise SchemaError(f"$.annotations[{i}]: duplicate id {ann.id!r}")
        seen.add(ann.id)
        annotations.append(ann)
        if image_path:
            image_paths[ann.id] = image_path
    return AnnotationDocument(frame=frame, annotations=tuple(annotations),
                              image_paths=image_paths)


def document_to_dict(doc: AnnotationDocument) -> dict:
    records = []
    for ann in doc.annotations:
        record = {
            "id": ann.id,
            "label_kind": ann.label_kind,
            "room_height": ann.room_height,
            "corners": [[float(x), float(z)] for x, z in ann.corners],
        }
        if ann.id in doc.image_paths:
            record["image_path"] = doc.image_paths[ann.id]
        records.append(record)
    return {
        "schema_version": SCHEMA_VERSION,
        "frame": frame_to_dict(doc.frame),
        "annotations": records,
    }


def load_document(path) -> AnnotationDocument:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return document_from_dict(data)


def save_document(path, doc: AnnotationDocument) -> None:
    write_atomic(path, canonical_dumps(document_to_dict(doc)))


def import_corner_list(path, frame: CameraFrame, ann_id: str = "",
                       label_kind: str = "extended") -> LayoutAnnotation:
    """Import the corner-list interchange format: one "u v" integer pixel
    pair per line, a ceiling line then a floor line per corner, corners
    ordered by increasing longitude."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) % 2 != 0:
        raise SchemaError(f"{path}: odd line count {len(lines)}")
    if len(lines) < 6:
        raise SchemaError(f"{path}: need at least 3 corners")
    pairs = []
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) != 2:
            raise SchemaError(f"{path}:{i + 1}: expected 'u v'")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise SchemaError(f"{path}:{i + 1}: expected integer pixels") from exc

    h = frame.height
    corners = []
    heights = []
    last_u = None
    for c in range(len(pairs) // 2):
        (u_ceil, v_ceil), (u_floor, v_floor) = pairs[2 * c], pairs[2 * c + 1]
        if u_ceil != u_floor:
            raise SchemaError(f"{path}: corner {c}: ceiling/floor longitudes differ")
        if last_u is not None and u_ceil <= last_u:
            raise SchemaError(f"{path}: corner {c}: longitudes must increase")
        last_u = u_ceil
        if not (h / 2 < v_floor < h):
            raise SchemaError(f"{path}: corner {c}: floor pixel {v_floor} not below horizon")
        if not (0 < v_ceil < h / 2):
            raise SchemaError(f"{path}: corner {c}: ceiling pixel {v_ceil} not above horizon")
        theta = 2.0 * np.pi * ((u_floor + 0.5) / frame.width - 0.5)
        phi_floor = (0.5 - v_floor / h) * np.pi
        d = frame.camera_height / np.tan(-phi_floor)
        corners.append((d * np.cos(theta), d * np.sin(theta)))
        phi_ceil = (0.5 - v_ceil / h) * np.pi
        heights.append(frame.camera_height + d * np.tan(phi_ceil))
    return LayoutAnnotation(
        corners=np.asarray(corners, dtype=np.float64),
        room_height=float(np.mean(heights)),
        label_kind=label_kind,
        id=ann_id,
    )


def export_corner_list(path, ann: LayoutAnnotation, frame: CameraFrame) -> None:
    """Inverse of :func:`import_corner_list`, quantizing to integer pixels."""
    angles = np.arctan2(ann.corners[:, 1], ann.corners[:, 0])
    order = np.argsort(angles)
    lines = []
    for idx in order:
        x, z = ann.corners[idx]
        d = float(np.hypot(x, z))
        theta = float(angles[idx])
        u = int(round((theta / (2.0 * np.pi) + 0.5) * frame.width - 0.5))
        phi_floor = np.arctan(-frame.camera_height / d)
        phi_ceil = np.arctan((ann.room_height - frame.camera_height) / d)
        v_floor = int(round((0.5 - phi_floor / np.pi) * frame.height))
        v_ceil = int(round((0.5 - phi_ceil / np.pi) * frame.height))
        lines.append(f"{u} {v_ceil}")
        lines.append(f"{u} {v_floor}")
    write_atomic(path, "\n".join(lines) + "\n")


# -- depth / boundary interchange ------------------------------------------------

def depth_items_to_dict(frame: CameraFrame, items: list[tuple[str, HorizonDepth]]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "horizon_depth",
        "frame": frame_to_dict(frame),
        "items": [
            {"id": item_id, "depths": [float(d) for d in hd.depths],
             "room_height": hd.room_height}
            for item_id, hd in items
        ],
    }


def depth_items_from_dict(data) -> tuple[CameraFrame, list[tuple[str, HorizonDepth]]]:
    if data.get("kind") != "horizon_depth":
        raise SchemaError("$.kind: expected 'horizon_depth'")
    frame = frame_from_dict(_expect(data, "frame", dict, "$"), "$.frame")
    items = []
    for i, rec in enumerate(_expect(data, "items", list, "$")):
        depths = _expect(rec, "depths", list, f"$.items[{i}]")
        hd = HorizonDepth(depths=np.asarray(depths, dtype=np.float64),
                          room_height=_expect(rec, "room_height", float, f"$.items[{i}]"))
        if hd.depths.shape[0] != frame.num_columns:
            raise SchemaError(f"$.items[{i}].depths: expected {frame.num_columns} columns")
        items.append((_expect(rec, "id", str, f"$.items[{i}]"), hd))
    return frame, items


def boundary_items_to_dict(frame: CameraFrame,
                           items: list[tuple[str, BoundaryCurve]]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "boundary_curve",
        "frame": frame_to_dict(frame),
        "items": [
            {"id": item_id,
             "floor_v": [float(v) for v in bc.floor_v],
             "ceil_v": [float(v) for v in bc.ceil_v]}
            for item_id, bc in items
        ],
    }


def boundary_items_from_dict(data) -> tuple[CameraFrame, list[tuple[str, BoundaryCurve]]]:
    if data.get("kind") != "boundary_curve":
        raise SchemaError("$.kind: expected 'boundary_curve'")
    frame = frame_from_dict(_expect(data, "frame", dict, "$"), "$.frame")
    items = []
    for i, rec in enumerate(_expect(data, "items", list, "$")):
        bc = BoundaryCurve(
            floor_v=np.asarray(_expect(rec, "floor_v", list, f"$.items[{i}]"), dtype=np.float64),
            ceil_v=np.asarray(_expect(rec, "ceil_v", list, f"$.items[{i}]"), dtype=np.float64),
            frame=frame,
        )
        items.append((_expect(rec, "id", str, f"$.items[{i}]"), bc))
    return frame, items
