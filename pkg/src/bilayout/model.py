"""Desk-scale forward pass of the dual-branch layout network.

Pipeline: a tiny deterministic feature pyramid stands in for the backbone,
the height-compression step flattens it to an (N x D) column feature, and a
stack of shared guidance layers (guided cross-attention against a per-branch
context embedding, then window / shifted-window / global self-attention)
produces one guided feature per branch.  Lightweight per-branch heads map the
guided features to positive horizon depths and a room height.

Everything runs in float64 on top of float32-stored weights; forward passes
are bit-reproducible for fixed weights and inputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import HorizonDepth

CHECKPOINT_MAGIC = b"BILAYOUT1"
_EXTRACTOR_SEED = 20240229  # fixed: the stand-in extractor is stateless


class ModelError(ValueError):
    """Bad model configuration, weights or input shapes."""


@dataclass(frozen=True)
class ModelConfig:
    num_columns: int = 256
    feature_dim: int = 512
    num_layers: int = 8
    num_heads: int = 8
    window: int = 16
    scale_channels: tuple[int, ...] = (16, 32, 64, 128)
    branches: tuple[str, ...] = ("extended", "enclosed")

    def __post_init__(self):
        if self.feature_dim % 4 != 0:
            raise ModelError("feature_dim must be divisible by 4")
        if self.feature_dim % self.num_heads != 0:
            raise ModelError("num_heads must divide feature_dim")
        if self.num_columns % self.window != 0:
            raise ModelError("window must divide num_columns")
        if self.window % 2 != 0:
            raise ModelError("window must be even (half-window shift)")
        if len(self.scale_channels) != 4:
            raise ModelError("exactly 4 feature scales expected")
        if self.num_layers < 0:
            raise ModelError("num_layers must be >= 0")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Multi-scale image features, each scale (channels, height, width)."""

    scales: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.scales) != 4:
            raise ModelError(f"expected 4 scales, got {len(self.scales)}")
        for s in self.scales:
            if s.ndim != 3:
                raise ModelError("each scale must be (channels, height, width)")
            if not np.isfinite(s).all():
                raise ModelError("non-finite feature values")


@dataclass(frozen=True, eq=False)
class BiLayoutOutput:
    extended: HorizonDepth
    enclosed: HorizonDepth
    guided_features: dict[str, np.ndarray] | None = None


class ModelWeights:
    """Flat name -> float32 tensor map plus its config.  Immutable by
    convention once built; forward passes never write into it."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = {k: np.asarray(v, dtype=np.float32) for k, v in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def parameter_count(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


def _tensor_spec(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    n, d = config.num_columns, config.feature_dim
    quarter = d // 4
    spec: list[tuple[str, tuple[int, ...]]] = []
    for l, c in enumerate(config.scale_channels):
        spec.append((f"shcm.scale{l}.weight", (2 * c, quarter)))
        spec.append((f"shcm.scale{l}.bias", (quarter,)))
    for branch in config.branches:
        spec.append((f"embedding.{branch}", (n, d)))
    spec.append(("pe_learn", (n, d)))

    def attn_block(prefix: str):
        spec.append((f"{prefix}.norm.scale", (d,)))
        spec.append((f"{prefix}.norm.bias", (d,)))
        for w in ("w_q", "w_k", "w_v", "w_o"):
            spec.append((f"{prefix}.{w}", (d, d)))
        spec.append((f"{prefix}.ff.norm.scale", (d,)))
        spec.append((f"{prefix}.ff.norm.bias", (d,)))
        spec.append((f"{prefix}.ff.w1", (d, d)))
        spec.append((f"{prefix}.ff.b1", (d,)))
        spec.append((f"{prefix}.ff.w2", (d, d)))
        spec.append((f"{prefix}.ff.b2", (d,)))

    for m in range(config.num_layers):
        attn_block(f"layers.{m}.gca")
        spec.append((f"layers.{m}.gca.norm_kv.scale", (d,)))
        spec.append((f"layers.{m}.gca.norm_kv.bias", (d,)))
        for stage in ("win", "shift", "glob"):
            attn_block(f"layers.{m}.swg.{stage}")
    for branch in config.branches:
        spec.append((f"head.{branch}.depth.weight", (d,)))
        spec.append((f"head.{branch}.depth.bias", ()))
        spec.append((f"head.{branch}.height.weight", (d,)))
        spec.append((f"head.{branch}.height.bias", ()))
    return spec


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Deterministic seeded initialization: uniform(-1, 1) / sqrt(D) for
    weight matrices and embeddings, identity-like norms, zero biases."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(config.feature_dim)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_spec(config):
        if name.endswith("norm.scale"):
            t = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias") or name.endswith(".b1") or name.endswith(".b2") \
                or name.endswith("norm.bias"):
            t = np.zeros(shape, dtype=np.float32)
        else:
            t = (rng.uniform(-1.0, 1.0, size=shape) * scale).astype(np.float32)
        tensors[name] = t
    return ModelWeights(config, tensors)


def head_parameter_count(config: ModelConfig) -> int:
    d = config.feature_dim
    return 2 * (d + 1)


# -- stand-in feature extractor ------------------------------------------------

def tiny_extractor(image: np.ndarray, num_columns: int | None = None,
                   channels: tuple[int, ...] = (16, 32, 64, 128)) -> FeatureMap:
    """Deterministic strided block-averaging pyramid over an equirectangular
    image.  Four scales with widths `num_columns / 2**l`; horizontal smoothing
    wraps at the seam, so the construction is equivariant to panorama
    rotations by whole blocks."""
    raw = np.asarray(image)
    img = raw.astype(np.float64)
    if np.issubdtype(raw.dtype, np.integer):
        img /= 255.0
    if img.ndim != 3 or img.shape[2] != 3:
        raise ModelError("image must be (H, W, 3)")
    h, w = img.shape[:2]
    if w != 2 * h:
        raise ModelError(f"equirectangular image needs W = 2H, got {w}x{h}")
    if num_columns is None:
        num_columns = w // 4
    rng = np.random.default_rng(_EXTRACTOR_SEED)
    scales = []
    for l, c in enumerate(channels):
        width = num_columns >> l
        if width < 4 or w % width != 0:
            raise ModelError(f"cannot build scale {l} of width {width} from W={w}")
        bx = w // width
        hl = max(h // bx, 1)
        by = h // hl
        pooled = img[: hl * by, : width * bx].reshape(hl, by, width, bx, 3).mean(axis=(1, 3))
        # circular 3-tap smoothing across the seam
        pooled = 0.5 * pooled + 0.25 * np.roll(pooled, 1, axis=1) + 0.25 * np.roll(pooled, -1, axis=1)
        lift = rng.uniform(-1.0, 1.0, size=(c, 3))
        feat = np.tensordot(lift, pooled, axes=([1], [2]))  # (c, hl, width)
        scales.append(feat)
    return FeatureMap(scales=tuple(scales))


def _resample_width(mat: np.ndarray, n: int) -> np.ndarray:
    """Linear interpolation along axis 0 from (w, d) to (n, d), circular."""
    w = mat.shape[0]
    if w == n:
        return mat
    pos = (np.arange(n) + 0.5) * (w / n) - 0.5
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    hi = (lo + 1) % w
    lo = lo % w
    return mat[lo] * (1.0 - frac)[:, None] + mat[hi] * frac[:, None]


def shcm_compress(features: FeatureMap, weights: ModelWeights) -> np.ndarray:
    """Height compression: per scale, concatenated mean+max pooling over the
    height axis, a per-column linear map to D/4, width resampling to N, and
    concatenation of the four scales into (N, D)."""
    cfg = weights.config
    if len(features.scales) != 4:
        raise ModelError("expected 4 feature scales")
    blocks = []
    for l, scale in enumerate(features.scales):
        c = scale.shape[0]
        if c != cfg.scale_channels[l]:
            raise ModelError(
                f"scale {l} has {c} channels, config expects {cfg.scale_channels[l]}"
            )
        pooled = np.concatenate([scale.mean(axis=1), scale.max(axis=1)], axis=0)  # (2c, w)
        w_mat = weights[f"shcm.scale{l}.weight"].astype(np.float64)
        b = weights[f"shcm.scale{l}.bias"].astype(np.float64)
        cols = pooled.T @ w_mat + b  # (w, D/4)
        blocks.append(_resample_width(cols, cfg.num_columns))
    return np.concatenate(blocks, axis=1)


# -- attention machinery -------------------------------------------------------

def sinusoidal_pe(n: int, d: int) -> np.ndarray:
    if d % 2 != 0:
        raise ModelError("positional encoding dimension must be even")
    pos = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(d // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * j / d)
    pe = np.empty((n, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def layer_norm(x: np.ndarray, scale: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + 1e-5) * scale + bias


def multi_head_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                         num_heads: int, trace: list | None = None) -> np.ndarray:
    """Scaled dot-product attention over the leading row axis.  Inputs may be
    (rows, D) or windowed (groups, rows, D); heads split the last axis."""
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = q[None], k[None], v[None]
    g, nq, d = q.shape
    nk = k.shape[1]
    if d % num_heads != 0:
        raise ModelError("num_heads must divide the feature dimension")
    dh = d // num_heads

    def split(x, rows):
        return x.reshape(g, rows, num_heads, dh).transpose(0, 2, 1, 3)

    qh = split(q, nq)
    kh = split(k, nk)
    vh = split(v, nk)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    if trace is not None:
        trace.append(weights)
    out = (weights @ vh).transpose(0, 2, 1, 3).reshape(g, nq, d)
    return out[0] if squeeze else out


def _feed_forward(x: np.ndarray, w: ModelWeights, prefix: str) -> np.ndarray:
    y = layer_norm(x, w[f"{prefix}.norm.scale"].astype(np.float64),
                   w[f"{prefix}.norm.bias"].astype(np.float64))
    y = y @ w[f"{prefix}.w1"].astype(np.float64) + w[f"{prefix}.b1"].astype(np.float64)
    y = np.where(y > 0, y, 0.0)
    return x + (y @ w[f"{prefix}.w2"].astype(np.float64) + w[f"{prefix}.b2"].astype(np.float64))


def guided_cross_attention(f_c: np.ndarray, embedding: np.ndarray,
                           weights: ModelWeights, layer: int,
                           trace: list | None = None) -> np.ndarray:
    """One guidance step: the image feature queries the context embedding,
    which serves as both key and value."""
    cfg = weights.config
    n, d = f_c.shape
    if embedding.shape[1] != d:
        raise ModelError("embedding width must match the feature dimension")
    p = f"layers.{layer}.gca"
    w64 = lambda name: weights[name].astype(np.float64)

    q_in = layer_norm(f_c, w64(f"{p}.norm.scale"), w64(f"{p}.norm.bias"))
    q_in = q_in + sinusoidal_pe(n, d)
    kv_in = layer_norm(embedding, w64(f"{p}.norm_kv.scale"), w64(f"{p}.norm_kv.bias"))
    kv_in = kv_in + w64("pe_learn")[: embedding.shape[0]]

    q = q_in @ w64(f"{p}.w_q")
    k = kv_in @ w64(f"{p}.w_k")
    v = kv_in @ w64(f"{p}.w_v")
    attn = multi_head_attention(q, k, v, cfg.num_heads, trace=trace)
    x = f_c + attn @ w64(f"{p}.w_o")
    return _feed_forward(x, weights, f"{p}.ff")


def _window_attention(x: np.ndarray, weights: ModelWeights, prefix: str,
                      num_heads: int, window: int | None, shift: int,
                      trace: list | None = None) -> np.ndarray:
    w64 = lambda name: weights[name].astype(np.float64)
    y = layer_norm(x, w64(f"{prefix}.norm.scale"), w64(f"{prefix}.norm.bias"))
    if shift:
        y = np.roll(y, -shift, axis=0)
    q = y @ w64(f"{prefix}.w_q")
    k = y @ w64(f"{prefix}.w_k")
    v = y @ w64(f"{prefix}.w_v")
    n, d = y.shape
    if window is not None:
        if n % window != 0:
            raise ModelError("window must divide the column count")
        shape = (n // window, window, d)
        attn = multi_head_attention(q.reshape(shape), k.reshape(shape),
                                    v.reshape(shape), num_heads, trace=trace)
        attn = attn.reshape(n, d)
    else:
        attn = multi_head_attention(q, k, v, num_heads, trace=trace)
    if shift:
        attn = np.roll(attn, shift, axis=0)
    x = x + attn @ w64(f"{prefix}.w_o")
    return _feed_forward(x, weights, f"{prefix}.ff")


def swg_self_attention(x: np.ndarray, weights: ModelWeights, layer: int,
                       trace: list | None = None) -> np.ndarray:
    """Window, shifted-window and global self-attention, circular along the
    panorama."""
    cfg = weights.config
    p = f"layers.{layer}.swg"
    x = _window_attention(x, weights, f"{p}.win", cfg.num_heads, cfg.window, 0, trace)
    x = _window_attention(x, weights, f"{p}.shift", cfg.num_heads, cfg.window,
                          cfg.window // 2, trace)
    x = _window_attention(x, weights, f"{p}.glob", cfg.num_heads, None, 0, trace)
    return x


def sfgm_forward(f_c: np.ndarray, embedding: np.ndarray, weights: ModelWeights,
                 trace: list | None = None) -> np.ndarray:
    """The shared guidance stack: alternating guided cross-attention and SWG
    self-attention, repeated for every layer.  The same layer parameters serve
    both branches; only the embedding differs."""
    x = f_c
    for m in range(weights.config.num_layers):
        x = guided_cross_attention(x, embedding, weights, m, trace)
        x = swg_self_attention(x, weights, m, trace)
    return x


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def prediction_head(f_g: np.ndarray, weights: ModelWeights, branch: str) -> HorizonDepth:
    """Per-column linear map to a raw depth plus a height from the column-mean
    feature, both through a softplus positivity map (floored at 1e-6)."""
    w64 = lambda name: weights[name].astype(np.float64)
    raw_d = f_g @ w64(f"head.{branch}.depth.weight") + float(weights[f"head.{branch}.depth.bias"])
    raw_h = f_g.mean(axis=0) @ w64(f"head.{branch}.height.weight") \
        + float(weights[f"head.{branch}.height.bias"])
    depths = _softplus(raw_d) + 1e-6
    height = float(_softplus(np.float64(raw_h)) + 1e-6)
    return HorizonDepth(depths=depths, room_height=height)


def bilayout_forward(inp, weights: ModelWeights, trace: list | None = None,
                     return_features: bool = False) -> BiLayoutOutput:
    """Full forward pass: image or FeatureMap in, one HorizonDepth per branch
    out.  Deterministic for fixed weights and input."""
    cfg = weights.config
    if set(cfg.branches) != {"extended", "enclosed"}:
        raise ModelError("forward pass needs both branches configured")
    if isinstance(inp, FeatureMap):
        fmap = inp
    else:
        fmap = tiny_extractor(inp, num_columns=cfg.num_columns,
                              channels=cfg.scale_channels)
    f_c = shcm_compress(fmap, weights)
    if f_c.shape != (cfg.num_columns, cfg.feature_dim):
        raise ModelError(f"compressed feature has shape {f_c.shape}")
    outputs = {}
    guided = {}
    for branch in cfg.branches:
        f_g = sfgm_forward(f_c, weights[f"embedding.{branch}"].astype(np.float64),
                           weights, trace)
        guided[branch] = f_g
        outputs[branch] = prediction_head(f_g, weights, branch)
    return BiLayoutOutput(
        extended=outputs["extended"],
        enclosed=outputs["enclosed"],
        guided_features=guided if return_features else None,
    )


# -- checkpoint container -------------------------------------------------------

def save_checkpoint(path, weights: ModelWeights) -> None:
    """Binary container: magic, little-endian uint64 header length, JSON
    header (config + tensor table), then row-major float32 tensor data in
    header order."""
    cfg = weights.config
    header = {
        "version": 1,
        "config": {
            "num_columns": cfg.num_columns,
            "feature_dim": cfg.feature_dim,
            "num_layers": cfg.num_layers,
            "num_heads": cfg.num_heads,
            "window": cfg.window,
            "scale_channels": list(cfg.scale_channels),
            "branches": list(cfg.branches),
        },
        "tensors": [
            {"name": name, "shape": list(weights[name].shape), "dtype": "float32"}
            for name, _ in _tensor_spec(cfg)
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, _ in _tensor_spec(cfg):
            fh.write(np.ascontiguousarray(weights[name], dtype=np.float32).tobytes())


def load_checkpoint(path) -> ModelWeights:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ModelError(f"not a layout checkpoint (magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise ModelError(f"unsupported checkpoint version {header.get('version')}")
        c = header["config"]
        config = ModelConfig(
            num_columns=c["num_columns"],
            feature_dim=c["feature_dim"],
            num_layers=c["num_layers"],
            num_heads=c["num_heads"],
            window=c["window"],
            scale_channels=tuple(c["scale_channels"]),
            branches=tuple(c["branches"]),
        )
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(4 * count)
            if len(data) != 4 * count:
                raise ModelError(f"truncated tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(data, dtype=np.float32).reshape(shape).copy()
    expected = [name for name, _ in _tensor_spec(config)]
    if list(tensors) != expected:
        raise ModelError("checkpoint tensor table does not match its config")
    return ModelWeights(config, tensors)
