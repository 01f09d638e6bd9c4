"""Procedural sprite scenes with exact ground truth.

Objects are textured discs (so any in-plane rotation stays inside the square
box) whose colour layout is fixed by ``object_id``.  Backgrounds are smooth
colour noise with a few blurred rectangles, fixed by ``background_id``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .features import FeatureConfig, crop_reference_kernel, extract_features
from .geometry import SquareBox, check_rotation, rot_z
from .tensor_core import resize_bilinear

REFERENCE_GRAY = 128


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in keys])


@dataclass(frozen=True)
class Sprite:
    base: np.ndarray
    ring: np.ndarray
    blob_pos: np.ndarray
    blob_sigma: np.ndarray
    blob_color: np.ndarray


def make_sprite(object_id: int) -> Sprite:
    g = _rng(7919, object_id)
    n = 4
    ang = g.uniform(0, 2 * math.pi) + np.arange(n) * (2 * math.pi / n) + g.uniform(-0.4, 0.4, n)
    rad = g.uniform(0.3, 0.6, n)
    pos = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    return Sprite(
        base=g.uniform(0.25, 0.75, 3),
        ring=g.uniform(0.0, 1.0, 3),
        blob_pos=pos,
        blob_sigma=g.uniform(0.14, 0.26, n),
        blob_color=g.uniform(0.0, 1.0, (n, 3)),
    )


def render_sprite(object_id: int, size: float, angle_deg: float, grid_u: np.ndarray, grid_v: np.ndarray,
                  center=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate sprite colour (``... x 3``, in [0, 1]) and alpha at pixel centres ``(grid_u, grid_v)``."""
    sp = make_sprite(object_id)
    r = size / 2.0
    du = (grid_u - center[0]) / r
    dv = (grid_v - center[1]) / r
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    # inverse rotation: image offset -> sprite coordinates
    p = c * du + s * dv
    q = -s * du + c * dv
    rr = np.hypot(p, q)
    col = np.broadcast_to(sp.base, p.shape + (3,)).copy()
    for (px, py), sg, bc in zip(sp.blob_pos, sp.blob_sigma, sp.blob_color):
        wgt = np.exp(-((p - px) ** 2 + (q - py) ** 2) / (2 * sg * sg))[..., None]
        col = col * (1 - wgt) + bc * wgt
    ring = np.clip((rr - 0.78) * r, 0.0, 1.0)[..., None]
    col = col * (1 - ring) + sp.ring * ring
    alpha = np.clip((1.0 - rr) * r + 0.5, 0.0, 1.0)
    return col, alpha


def render_background(background_id: int, height: int, width: int) -> np.ndarray:
    """Float RGB background in [0, 1]."""
    if background_id < 0:
        return np.full((height, width, 3), REFERENCE_GRAY / 255.0)
    g = _rng(104729, background_id)
    coarse = g.uniform(0.15, 0.85, (3, 7, 7)).astype(np.float32)
    bg = resize_bilinear(coarse, height, width, category="synthetic").transpose(1, 2, 0).astype(np.float64)
    fine = g.uniform(-0.12, 0.12, (3, 24, 24)).astype(np.float32)
    bg += resize_bilinear(fine, height, width, category="synthetic").transpose(1, 2, 0)
    vv, uu = np.mgrid[0:height, 0:width] + 0.5
    for _ in range(g.integers(3, 7)):
        w_, h_ = g.uniform(10, 50, 2)
        cu, cv = g.uniform(0, width), g.uniform(0, height)
        m = (np.clip(w_ / 2 - np.abs(uu - cu), 0, 1) * np.clip(h_ / 2 - np.abs(vv - cv), 0, 1))[..., None]
        bg = bg * (1 - m) + g.uniform(0, 1, 3) * m
    return np.clip(bg, 0.0, 1.0)


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    object_id: int
    center: tuple[float, float]
    size: float
    rotation_deg: float = 0.0
    background_id: int = 0
    illumination_gain: float = 1.0
    noise_sigma: float = 0.0
    frame: tuple[int, int] = (256, 256)  # (height, width)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "frame", tuple(int(f) for f in self.frame))

    @property
    def rotation(self) -> np.ndarray:
        return rot_z(math.radians(self.rotation_deg))

    @property
    def box(self) -> SquareBox:
        return SquareBox(self.center[0], self.center[1], self.size)

    def validate(self) -> None:
        h, w = self.frame
        b = self.box
        if self.size < 8:
            raise ParameterError(f"object size {self.size} is below 8 px")
        if b.x0 < 0 or b.y0 < 0 or b.x1 > w or b.y1 > h:
            raise ParameterError(f"object box {tuple(b)} leaves the {w}x{h} frame")
        if not 0.5 <= self.illumination_gain <= 2.0:
            raise ParameterError("illumination gain must lie in [0.5, 2.0]")
        if self.noise_sigma < 0:
            raise ParameterError("noise sigma must be non-negative")

    def to_json(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        d["frame"] = list(self.frame)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        return cls(**{**d, "center": tuple(d["center"]), "frame": tuple(d.get("frame", (256, 256)))})


def composite(canvas: np.ndarray, object_id: int, center, size: float, angle_deg: float, gain: float = 1.0) -> np.ndarray:
    """Alpha-blend a sprite onto a float RGB canvas (returns a new array)."""
    h, w = canvas.shape[:2]
    vv, uu = np.mgrid[0:h, 0:w] + 0.5
    col, alpha = render_sprite(object_id, size, angle_deg, uu, vv, center)
    col = np.clip(col * gain, 0.0, 1.0)
    a = alpha[..., None]
    return canvas * (1 - a) + col * a


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, SquareBox]:
    """Render the query image for ``spec`` and return it with its exact ground-truth box."""
    spec.validate()
    h, w = spec.frame
    img = composite(render_background(spec.background_id, h, w), spec.object_id, spec.center,
                    spec.size, spec.rotation_deg, spec.illumination_gain)
    if spec.noise_sigma > 0:
        img = img + _rng(31, spec.seed).normal(0.0, spec.noise_sigma / 255.0, img.shape)
    return to_uint8(img), spec.box


@dataclass
class ReferenceSet:
    kernels: list[np.ndarray]
    rotations: list[np.ndarray]
    s_r: float
    config_hash: str = ""

    def __post_init__(self):
        if len(self.kernels) != len(self.rotations):
            raise ParameterError("need exactly one rotation per reference kernel")
        for R in self.rotations:
            check_rotation(R)
        if self.kernels and len({k.shape for k in self.kernels}) != 1:
            raise ParameterError("all reference kernels must share the same dims")

    def __len__(self) -> int:
        return len(self.kernels)

    def permuted(self, order) -> "ReferenceSet":
        return ReferenceSet([self.kernels[i] for i in order], [self.rotations[i] for i in order],
                            self.s_r, self.config_hash)


def reference_frame(s_r: float, stride: int) -> tuple[int, SquareBox]:
    """Square frame side and centred object box; the box edges fall on cell borders when ``s_r`` is a stride multiple."""
    margin = stride * math.ceil(s_r / stride)
    side = int(round(s_r)) + 2 * margin
    return side, SquareBox(side / 2.0, side / 2.0, float(s_r))


def reference_angles(n_refs: int) -> list[float]:
    return [360.0 * i / n_refs for i in range(n_refs)]


def generate_reference_set(object_id: int, n_refs: int = 32, s_r: float = 40.0,
                           fx: FeatureConfig = FeatureConfig(), extractor=extract_features, angles=None
                           ) -> tuple[ReferenceSet, list[np.ndarray], list[SquareBox]]:
    """Render views on flat gray and cut their kernels.

    Views sit at ``n_refs`` evenly spaced in-plane angles unless explicit
    ``angles`` (degrees) are given.
    """
    if angles is None:
        if n_refs < 1:
            raise ParameterError("n_refs must be >= 1")
        angles = reference_angles(n_refs)
    elif len(angles) < 1:
        raise ParameterError("need at least one angle")
    side, box = reference_frame(s_r, fx.stride)
    images, kernels, rotations = [], [], []
    for ang in angles:
        img = to_uint8(composite(render_background(-1, side, side), object_id, (box.u, box.v), s_r, ang))
        fm = extractor(img, fx)
        images.append(img)
        kernels.append(crop_reference_kernel(fm, box, fx.kernel_size))
        rotations.append(rot_z(math.radians(ang)))
    return ReferenceSet(kernels, rotations, float(s_r), fx.config_hash()), images, [box] * len(images)


@dataclass(frozen=True)
class BenchConfig:
    n_objects: int = 5
    n_queries: int = 100
    n_refs: int = 32
    s_r: float = 40.0
    size_range: tuple[float, float] = (24.0, 96.0)
    frame: tuple[int, int] = (256, 256)
    gain_range: tuple[float, float] = (0.75, 1.33)
    noise_sigma: float = 4.0
    seed: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["size_range"] = list(self.size_range)
        d["frame"] = list(self.frame)
        d["gain_range"] = list(self.gain_range)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        for key in ("size_range", "frame", "gain_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def scene_seed(cfg: BenchConfig, object_id: int, query_index: int) -> int:
    return (cfg.seed * 1_000_003 + object_id * 10_007 + query_index) & 0xFFFFFFFF


def sample_scene(cfg: BenchConfig, object_id: int, query_index: int, scale_ratio: float = 1.0) -> SceneSpec:
    """Draw one query scene; ``scale_ratio > 1`` rescales the base size by a log-uniform factor in ``[1/p, p]``."""
    seed = scene_seed(cfg, object_id, query_index)
    g = _rng(17, seed)
    size = g.uniform(*cfg.size_range)
    angle = g.uniform(0.0, 360.0)
    gain = g.uniform(*cfg.gain_range)
    u_frac, v_frac = g.uniform(0.0, 1.0, 2)
    if scale_ratio != 1.0:
        size *= math.exp(_rng(23, seed).uniform(-math.log(scale_ratio), math.log(scale_ratio)))
    h, w = cfg.frame
    size = float(min(max(size, 8.0), min(h, w) - 2.0))
    half = size / 2.0
    u = half + 1.0 + u_frac * (w - size - 2.0)
    v = half + 1.0 + v_frac * (h - size - 2.0)
    return SceneSpec(seed=seed, object_id=object_id, center=(u, v), size=size, rotation_deg=angle,
                     background_id=seed, illumination_gain=gain, noise_sigma=cfg.noise_sigma, frame=cfg.frame)


def benchmark_specs(cfg: BenchConfig, scale_ratio: float = 1.0) -> list[SceneSpec]:
    return [sample_scene(cfg, o, i, scale_ratio) for o in range(cfg.n_objects) for i in range(cfg.n_queries)]


def truth_json(spec: SceneSpec) -> dict:
    return {"center": list(spec.center), "size": spec.size, "rotation_deg": spec.rotation_deg}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
