"""Command-line entry point.

Subcommands: convert, evaluate, detect-ambiguity, augment, model, relabel
(propose / apply / serve), bench.  Exit codes: 0 success, 1 usage, 2
validation, 3 I/O.  A config file (JSON with a "config" root) provides frame,
loss-weight, model and threshold defaults; flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import augment as augment_mod
from . import ioformats, metrics, relabel, service
from .geometry import (
    CameraFrame,
    HorizonDepth,
    LayoutError,
    annotation_to_boundary,
    annotation_to_depth,
    boundary_to_depth,
    depth_to_annotation,
    depth_to_boundary,
)
from .losses import LossWeights, branch_loss
from .model import (
    ModelConfig,
    ModelError,
    bilayout_forward,
    init_weights,
    load_checkpoint,
    save_checkpoint,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class CliConfig:
    frame: CameraFrame = field(default_factory=CameraFrame)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    subset_threshold: float = metrics.SUBSET_THRESHOLD
    gt_ambiguity_px: float = metrics.GT_AMBIGUITY_PX
    pred_ambiguity_px: float = metrics.PRED_AMBIGUITY_PX
    seed: int = 0


def load_config(path: str | None, args) -> CliConfig:
    data = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if "config" not in doc or not isinstance(doc["config"], dict):
            raise ioformats.SchemaError('config file needs a "config" root object')
        data = doc["config"]

    fr = dict(data.get("frame", {}))
    for key, flag in (("width", "width"), ("height", "height"),
                      ("num_columns", "num_columns"),
                      ("camera_height", "camera_height")):
        value = getattr(args, flag, None)
        if value is not None:
            fr[key] = value
    frame = CameraFrame(**fr)

    lw = data.get("loss_weights", {})
    weights = LossWeights(**{k: lw[k] for k in ("depth", "normal", "gradient", "height")
                             if k in lw})
    mc = dict(data.get("model", {}))
    if "scale_channels" in mc:
        mc["scale_channels"] = tuple(mc["scale_channels"])
    if "branches" in mc:
        mc["branches"] = tuple(mc["branches"])
    mc.setdefault("num_columns", frame.num_columns)
    model_cfg = ModelConfig(**mc)

    thresholds = data.get("thresholds", {})
    return CliConfig(
        frame=frame,
        loss_weights=weights,
        model=model_cfg,
        subset_threshold=float(thresholds.get("subset_iou", metrics.SUBSET_THRESHOLD)),
        gt_ambiguity_px=float(thresholds.get("gt_ambiguity_px", metrics.GT_AMBIGUITY_PX)),
        pred_ambiguity_px=float(thresholds.get("pred_ambiguity_px", metrics.PRED_AMBIGUITY_PX)),
        seed=int(data.get("seed", 0)),
    )


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file with a 'config' root")
    parser.add_argument("--width", type=int, help="panorama width in pixels")
    parser.add_argument("--height", type=int, help="panorama height in pixels")
    parser.add_argument("--num-columns", dest="num_columns", type=int,
                        help="number of layout columns")
    parser.add_argument("--camera-height", dest="camera_height", type=float,
                        help="camera height above the floor")


def build_parser() -> _Parser:
    parser = _Parser(prog="bilayout",
                     description="Panoramic room-layout toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert among annotation, depth and boundary forms")
    _add_common(p)
    p.add_argument("--input", required=True, help="input document (annotation/depth/boundary)")
    p.add_argument("--to", required=True, choices=["annotation", "depth", "boundary"])
    p.add_argument("--output", required=True)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--pred", required=True, help="extended-branch prediction document")
    p.add_argument("--pred-enclosed", help="enclosed-branch prediction document")
    p.add_argument("--gt", required=True, help="ground-truth document")
    p.add_argument("--branch", default="disambiguate",
                   choices=["extended", "enclosed", "disambiguate"])
    p.add_argument("--equivalent-branch", default="extended",
                   choices=["extended", "enclosed"],
                   help="branch used for the failure subset")
    p.add_argument("--subset", action="store_true", help="print the failure subset ids")
    p.add_argument("--subset-threshold", type=float)
    p.add_argument("--output", help="write the report JSON here")
    p.add_argument("--csv", help="write the per-sample CSV here")

    p = sub.add_parser("detect-ambiguity",
                       help="per-column ambiguity from dual predictions and dual GT")
    _add_common(p)
    p.add_argument("--pred-extended", required=True)
    p.add_argument("--pred-enclosed", required=True)
    p.add_argument("--gt-extended", required=True)
    p.add_argument("--gt-enclosed", required=True)
    p.add_argument("--gt-threshold", type=float, help="GT pixel threshold (default 2)")
    p.add_argument("--pred-threshold", type=float, help="prediction pixel threshold (default 10)")
    p.add_argument("--output", help="write the result JSON here")

    p = sub.add_parser("augment", help="apply layout-preserving augmentations")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--flip", action="store_true")
    p.add_argument("--rotate-columns", type=int, default=0)
    p.add_argument("--stretch-kx", type=float, default=1.0)
    p.add_argument("--stretch-kz", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--image", help="panorama image for luminance adjustment")
    p.add_argument("--image-output", help="where to write the adjusted image")
    p.add_argument("--random", action="store_true", help="sample a random spec per annotation")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("model", help="checkpoint management, smoke forward, gradient check")
    _add_common(p)
    p.add_argument("--checkpoint", help="load weights from this checkpoint")
    p.add_argument("--save", help="save (initialized or loaded) weights here")
    p.add_argument("--seed", type=int, help="init seed (default from config)")
    p.add_argument("--forward", action="store_true", help="run a forward pass on a fixture")
    p.add_argument("--image", help="fixture panorama (defaults to a synthetic gradient)")
    p.add_argument("--gradcheck", action="store_true",
                   help="check analytic loss gradients against finite differences")

    p = sub.add_parser("relabel", help="semi-automatic relabeling workflows")
    relabel_sub = p.add_subparsers(dest="relabel_command", required=True)

    rp = relabel_sub.add_parser("propose", help="build a session from a document")
    _add_common(rp)
    rp.add_argument("--input", required=True)
    rp.add_argument("--session-dir", required=True)

    ra = relabel_sub.add_parser("apply", help="apply a scripted selection")
    _add_common(ra)
    ra.add_argument("--session-dir", required=True)
    ra.add_argument("--choose", required=True, action="append",
                    metavar="TASK:PROPOSAL", help="may repeat")

    rs = relabel_sub.add_parser("serve", help="serve the annotator UI and API")
    _add_common(rs)
    rs.add_argument("--session-dir", required=True)
    rs.add_argument("--host", default="127.0.0.1")
    rs.add_argument("--port", type=int, default=8008)
    rs.add_argument("--ui-dir", help="override the bundled UI assets")

    p = sub.add_parser("bench", help="benchmark the kernel backends")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--columns", type=int, default=1024)
    p.add_argument("--resolution", type=int, default=1024)

    return parser


def _detect_document(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ioformats.SchemaError(f"{path}: expected a JSON object")
    kind = data.get("kind")
    if kind == "horizon_depth":
        return "depth", data
    if kind == "boundary_curve":
        return "boundary", data
    if "annotations" in data:
        return "annotation", data
    raise ioformats.SchemaError(f"{path}: unrecognized document")


def cmd_convert(args, cfg: CliConfig) -> int:
    kind, data = _detect_document(args.input)
    frame = cfg.frame
    if kind == "annotation":
        doc = ioformats.document_from_dict(data)
        frame = doc.frame
        items = [(a.id, annotation_to_depth(a, frame)) for a in doc.annotations]
        kinds = {a.id: a.label_kind for a in doc.annotations}
    elif kind == "depth":
        frame, items = ioformats.depth_items_from_dict(data)
        kinds = {}
    else:
        frame, curves = ioformats.boundary_items_from_dict(data)
        items = [(item_id, boundary_to_depth(bc)) for item_id, bc in curves]
        kinds = {}

    if args.to == "depth":
        out = ioformats.depth_items_to_dict(frame, items)
    elif args.to == "boundary":
        out = ioformats.boundary_items_to_dict(
            frame, [(i, depth_to_boundary(hd, frame)) for i, hd in items])
    else:
        doc = ioformats.AnnotationDocument(
            frame=frame,
            annotations=tuple(
                depth_to_annotation(hd, frame, label_kind=kinds.get(i, "extended"), id=i)
                for i, hd in items
            ),
            image_paths={},
        )
        out = ioformats.document_to_dict(doc)
    ioformats.write_atomic(args.output, ioformats.canonical_dumps(out))
    print(f"wrote {args.output} ({len(items)} items)")
    return EXIT_OK


def _paired_annotations(pred_doc, gt_doc, label):
    gt_by_id = gt_doc.by_id()
    pairs = []
    for ann in pred_doc.annotations:
        if ann.id not in gt_by_id:
            raise ioformats.SchemaError(f"{label}: id {ann.id!r} missing from ground truth")
        pairs.append((ann, gt_by_id[ann.id]))
    return pairs


def cmd_evaluate(args, cfg: CliConfig) -> int:
    pred_ext_doc = ioformats.load_document(args.pred)
    gt_doc = ioformats.load_document(args.gt)
    if args.pred_enclosed:
        pred_enc_doc = ioformats.load_document(args.pred_enclosed)
    else:
        if args.branch == "disambiguate":
            raise ioformats.SchemaError(
                "--branch disambiguate needs --pred-enclosed")
        pred_enc_doc = pred_ext_doc
    enc_by_id = pred_enc_doc.by_id()
    samples = []
    for pred_ext, gt in _paired_annotations(pred_ext_doc, gt_doc, "predictions"):
        if pred_ext.id not in enc_by_id:
            raise ioformats.SchemaError(
                f"enclosed predictions: id {pred_ext.id!r} missing")
        samples.append((pred_ext.id, pred_ext, enc_by_id[pred_ext.id], gt))
    threshold = args.subset_threshold if args.subset_threshold is not None \
        else cfg.subset_threshold
    report = metrics.evaluate(samples, equivalent_branch=args.equivalent_branch,
                              subset_threshold=threshold)
    agg = report.aggregate({"extended": "iou_extended", "enclosed": "iou_enclosed",
                            "disambiguate": "iou_disambiguate"}[args.branch])
    print(f"samples: {report.num_samples}")
    print(f"{args.branch} 2DIoU: {agg.iou2d:.6f}")
    print(f"{args.branch} 3DIoU: {agg.iou3d:.6f}")
    if args.subset:
        print("subset:", " ".join(report.subset_ids) or "(empty)")
    if args.output:
        ioformats.write_atomic(args.output, metrics.report_to_json(report) + "\n")
    if args.csv:
        ioformats.write_atomic(args.csv, metrics.report_to_csv(report))
    return EXIT_OK


def cmd_detect_ambiguity(args, cfg: CliConfig) -> int:
    docs = {name: ioformats.load_document(getattr(args, name)) for name in
            ("pred_extended", "pred_enclosed", "gt_extended", "gt_enclosed")}
    frame = docs["pred_extended"].frame
    gt_thresh = args.gt_threshold if args.gt_threshold is not None else cfg.gt_ambiguity_px
    pred_thresh = args.pred_threshold if args.pred_threshold is not None \
        else cfg.pred_ambiguity_px
    ids = [a.id for a in docs["pred_extended"].annotations]
    results = []
    for ann_id in ids:
        curves = {}
        for name, doc in docs.items():
            by_id = doc.by_id()
            if ann_id not in by_id:
                raise ioformats.SchemaError(f"{name}: id {ann_id!r} missing")
            curves[name] = annotation_to_boundary(by_id[ann_id], frame)
        res = metrics.detect_ambiguity(
            curves["pred_extended"], curves["pred_enclosed"],
            curves["gt_extended"], curves["gt_enclosed"],
            gt_thresh=gt_thresh, pred_thresh=pred_thresh,
        )
        results.append((ann_id, res))
        print(f"{ann_id}: precision={res.precision:.4f} recall={res.recall:.4f} "
              f"regions={list(res.regions)}")
    if args.output:
        payload = {
            "gt_threshold_px": gt_thresh,
            "pred_threshold_px": pred_thresh,
            "samples": [
                {
                    "id": ann_id,
                    "precision": r.precision,
                    "recall": r.recall,
                    "regions": [list(x) for x in r.regions],
                    "confidence": [float(c) for c in r.confidence],
                    "gt_mask": [bool(b) for b in r.gt_mask],
                    "pred_mask": [bool(b) for b in r.pred_mask],
                }
                for ann_id, r in results
            ],
        }
        ioformats.write_atomic(args.output, ioformats.canonical_dumps(payload))
    return EXIT_OK


def cmd_augment(args, cfg: CliConfig) -> int:
    doc = ioformats.load_document(args.input)
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    out = []
    for ann in doc.annotations:
        if args.random:
            spec = augment_mod.sample_spec(rng, doc.frame)
        else:
            spec = augment_mod.AugmentSpec(
                flip=args.flip,
                rotate_columns=args.rotate_columns,
                stretch_kx=args.stretch_kx,
                stretch_kz=args.stretch_kz,
                gamma=args.gamma,
            )
        out.append(augment_mod.apply_spec(ann, spec, doc.frame))
    new_doc = ioformats.AnnotationDocument(frame=doc.frame, annotations=tuple(out),
                                           image_paths=doc.image_paths)
    ioformats.save_document(args.output, new_doc)
    print(f"wrote {args.output} ({len(out)} annotations)")
    if args.image:
        from PIL import Image

        img = np.asarray(Image.open(args.image), dtype=np.float64) / 255.0
        gamma = args.gamma if not args.random else augment_mod.sample_spec(rng, doc.frame).gamma
        adjusted = augment_mod.luminance(img[..., :3], gamma)
        target = args.image_output or args.image + ".aug.png"
        Image.fromarray((adjusted * 255).round().astype(np.uint8)).save(target)
        print(f"wrote {target} (gamma={gamma:.3f})")
    return EXIT_OK


def _fixture_image(frame: CameraFrame) -> np.ndarray:
    h, w = frame.height, frame.width
    v = np.linspace(0.0, 1.0, h)[:, None]
    u = np.linspace(0.0, 1.0, w, endpoint=False)[None, :]
    return np.stack([
        0.5 + 0.5 * np.sin(2 * np.pi * u) * np.ones_like(v),
        np.broadcast_to(v, (h, w)),
        0.5 + 0.25 * np.cos(4 * np.pi * u) * (1 - v),
    ], axis=2)


def cmd_model(args, cfg: CliConfig) -> int:
    if args.checkpoint:
        weights = load_checkpoint(args.checkpoint)
        print(f"loaded {args.checkpoint}")
    else:
        seed = args.seed if args.seed is not None else cfg.seed
        weights = init_weights(cfg.model, seed=seed)
        print(f"initialized weights (seed={seed})")
    mc = weights.config
    print(f"config: N={mc.num_columns} D={mc.feature_dim} M={mc.num_layers} "
          f"heads={mc.num_heads} window={mc.window}")
    print(f"parameters: {weights.parameter_count()}")
    if args.save:
        save_checkpoint(args.save, weights)
        print(f"saved {args.save}")

    if args.forward:
        if args.image:
            from PIL import Image

            img = np.asarray(Image.open(args.image), dtype=np.float64) / 255.0
            img = img[..., :3]
        else:
            img = _fixture_image(cfg.frame)
        trace: list = []
        out = bilayout_forward(img, weights, trace=trace)
        worst = max(float(np.abs(w.sum(axis=-1) - 1.0).max()) for w in trace)
        print(f"extended: d[{out.extended.depths.shape[0]}] "
              f"in [{out.extended.depths.min():.4f}, {out.extended.depths.max():.4f}], "
              f"h={out.extended.room_height:.4f}")
        print(f"enclosed: d[{out.enclosed.depths.shape[0]}] "
              f"in [{out.enclosed.depths.min():.4f}, {out.enclosed.depths.max():.4f}], "
              f"h={out.enclosed.room_height:.4f}")
        print(f"attention row-sum max deviation: {worst:.3e}")

    if args.gradcheck:
        err = gradient_check(cfg, seed=args.seed if args.seed is not None else cfg.seed)
        print(f"max relative gradient error: {err:.3e}")
        if not err < 1e-5:
            print("error: gradcheck: analytic gradients disagree with finite differences",
                  file=sys.stderr)
            return EXIT_VALIDATION
    return EXIT_OK


def gradient_check(cfg: CliConfig, seed: int = 0, trials: int = 20,
                   step: float = 1e-6) -> float:
    """Compare analytic branch-loss gradients with central finite differences
    at random non-kink points; returns the worst relative error."""
    rng = np.random.default_rng(seed)
    frame = cfg.frame
    n = frame.num_columns
    worst = 0.0
    for _ in range(trials):
        pred = HorizonDepth(depths=rng.uniform(1.0, 6.0, n), room_height=rng.uniform(2.2, 3.8))
        gt = HorizonDepth(depths=rng.uniform(1.0, 6.0, n), room_height=rng.uniform(2.2, 3.8))
        breakdown = branch_loss(pred, gt, cfg.loss_weights, frame)
        for j in rng.choice(n, size=5, replace=False):
            bumped = pred.depths.copy()
            bumped[j] += step
            up = branch_loss(HorizonDepth(depths=bumped, room_height=pred.room_height),
                             gt, cfg.loss_weights, frame).branch_total
            bumped[j] -= 2 * step
            down = branch_loss(HorizonDepth(depths=bumped, room_height=pred.room_height),
                               gt, cfg.loss_weights, frame).branch_total
            fd = (up - down) / (2 * step)
            scale = max(abs(fd), abs(breakdown.grad_depths[j]), 1e-8)
            worst = max(worst, abs(fd - breakdown.grad_depths[j]) / scale)
    return worst


def cmd_relabel(args, cfg: CliConfig) -> int:
    if args.relabel_command == "propose":
        doc = ioformats.load_document(args.input)
        session = relabel.RelabelSession.create(doc, args.session_dir)
        pending = sum(1 for t in session.tasks.values() if t.status == "pending")
        print(f"session at {args.session_dir}: {len(session.tasks)} tasks, "
              f"{pending} pending")
        for task_id in session.order:
            task = session.tasks[task_id]
            print(f"  {task_id}: {task.status} ({len(task.proposals)} proposals)")
        return EXIT_OK
    if args.relabel_command == "apply":
        session = relabel.RelabelSession.load(args.session_dir)
        for choice in args.choose:
            if ":" not in choice:
                raise UsageError(f"--choose needs TASK:PROPOSAL, got {choice!r}")
            task_id, proposal_id = choice.split(":", 1)
            result = session.apply_selection(task_id, proposal_id)
            print(f"{task_id}: selected {proposal_id} "
                  f"({result.corners.shape[0]} corners, enclosed)")
        return EXIT_OK
    if args.relabel_command == "serve":
        print(f"serving session {args.session_dir} on http://{args.host}:{args.port}/")
        service.serve(args.session_dir, (args.host, args.port), ui_dir=args.ui_dir)
        return EXIT_OK
    raise UsageError(f"unknown relabel command {args.relabel_command!r}")


def cmd_bench(args, cfg: CliConfig) -> int:
    from .bench import run_benchmark

    run_benchmark(repeat=args.repeat, columns=args.columns,
                  resolution=args.resolution)
    return EXIT_OK


COMMANDS = {
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
    "detect-ambiguity": cmd_detect_ambiguity,
    "augment": cmd_augment,
    "model": cmd_model,
    "relabel": cmd_relabel,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(getattr(args, "config", None), args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LayoutError, ioformats.SchemaError, metrics.MetricError,
            relabel.RelabelError, ModelError, ValueError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
