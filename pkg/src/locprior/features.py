"""Training-free feature extractor shared by query and reference images.

Nine channels per cell: box-averaged R, G, B; box-averaged ``|dI/dx|`` and
``|dI/dy|``; gradient magnitude soft-binned into four unsigned orientations
(0, 45, 90, 135 degrees).  Each channel is standardized over the map.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError, RangeError
from .geometry import SquareBox
from .instrument import add_call, add_macs
from .tensor_core import read_lpt1, resize_bilinear, write_lpt1

N_CHANNELS = 9
LUMA = np.array([0.299, 0.587, 0.114])
# per-pixel MACs of each extractor stage; feeds both the runtime counter and the cost model
STAGE_MACS = {"gray": 3, "gradient": 2, "magnitude": 2, "orientation": 2, "downsample": N_CHANNELS}
STANDARDIZE_MACS = 3  # per cell per channel: sum, sum of squares, apply


@dataclass(frozen=True)
class FeatureConfig:
    stride: int = 8
    kernel_size: int = 5
    eps: float = 1e-6

    def __post_init__(self):
        if self.stride < 1 or self.kernel_size < 1:
            raise ParameterError("stride and kernel_size must be >= 1")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureMap:
    tensor: np.ndarray  # C x H_f x W_f float32
    stride: int
    image_shape: tuple[int, int]
    config_hash: str = ""

    @property
    def shape(self):
        return self.tensor.shape

    def scaled(self, a: float) -> "FeatureMap":
        return FeatureMap((self.tensor * np.float32(a)).astype(np.float32), self.stride,
                          self.image_shape, self.config_hash)


def _box_downsample(a: np.ndarray, stride: int) -> np.ndarray:
    """Mean over ``stride x stride`` pixel cells of an ``H x W x C`` array; ragged edges allowed."""
    h, w = a.shape[:2]
    ys, xs = np.arange(0, h, stride), np.arange(0, w, stride)
    sums = np.add.reduceat(np.add.reduceat(a, ys, axis=0), xs, axis=1)
    counts = np.outer(np.diff(np.append(ys, h)), np.diff(np.append(xs, w)))
    return sums / counts[..., None]


def _standardize(chw: np.ndarray, eps: float) -> np.ndarray:
    mu = chw.mean(axis=(1, 2), keepdims=True)
    sd = chw.std(axis=(1, 2), keepdims=True)
    out = np.where(sd > eps, (chw - mu) / np.maximum(sd, eps), 0.0)
    return out


def pixel_channels(img: np.ndarray) -> np.ndarray:
    """Full-resolution ``H x W x 9`` channel stack before downsampling."""
    f = img.astype(np.float64) / 255.0
    gray = f @ LUMA
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    gx[:, 1:-1] = 0.5 * (gray[:, 2:] - gray[:, :-2])
    gy[1:-1, :] = 0.5 * (gray[2:, :] - gray[:-2, :])
    mag = np.hypot(gx, gy)
    # unsigned orientation in [0, pi) mapped onto 4 bins, linearly split between neighbours
    pos = (np.arctan2(gy, gx) % math.pi) / (math.pi / 4)
    lo = np.floor(pos).astype(int) % 4
    frac = pos - np.floor(pos)
    orient = np.zeros(gray.shape + (4,))
    rows, cols = np.indices(gray.shape)
    orient[rows, cols, lo] = mag * (1.0 - frac)
    orient[rows, cols, (lo + 1) % 4] += mag * frac
    return np.concatenate([f, np.abs(gx)[..., None], np.abs(gy)[..., None], orient], axis=2)


def extract_features(img: np.ndarray, config: FeatureConfig = FeatureConfig()) -> FeatureMap:
    """Map an ``H x W x 3`` uint8 image to a ``9 x ceil(H/s) x ceil(W/s)`` feature map."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected an H x W x 3 image, got shape {img.shape}")
    h, w = img.shape[:2]
    s = config.stride
    if h < s or w < s:
        raise DimensionError(f"image {h}x{w} is smaller than the stride {s}")
    add_call("extract_features")

    cells = _box_downsample(pixel_channels(img), s)
    chw = _standardize(cells.transpose(2, 0, 1), config.eps)
    add_macs("backbone", backbone_macs((h, w), config))
    return FeatureMap(chw.astype(np.float32), s, (h, w), config.config_hash())


def backbone_macs(image_shape, config: FeatureConfig = FeatureConfig()) -> int:
    h, w = image_shape
    hf, wf = -(-h // config.stride), -(-w // config.stride)
    return sum(STAGE_MACS.values()) * h * w + STANDARDIZE_MACS * N_CHANNELS * hf * wf


def box_to_cells(box: SquareBox, stride: int) -> tuple[int, int, int, int]:
    """Feature-cell span ``(r0, r1, c0, c1)`` (exclusive ends) covering ``box``, rounded outward."""
    tol = 1e-9
    r0 = math.floor(box.y0 / stride + tol)
    c0 = math.floor(box.x0 / stride + tol)
    r1 = math.ceil(box.y1 / stride - tol)
    c1 = math.ceil(box.x1 / stride - tol)
    return r0, max(r1, r0 + 1), c0, max(c1, c0 + 1)


def crop_reference_kernel(fm: FeatureMap, box: SquareBox, kernel_size: int | None = None) -> np.ndarray:
    """Cut the cells under ``box`` and resample them to ``kernel_size x kernel_size``.

    ``kernel_size=None`` keeps the crop at its native cell dims.
    """
    h, w = fm.image_shape
    if box.size <= 0 or box.x0 < 0 or box.y0 < 0 or box.x1 > w or box.y1 > h:
        raise RangeError(f"box {tuple(box)} is outside the {w}x{h} image")
    r0, r1, c0, c1 = box_to_cells(box, fm.stride)
    crop = fm.tensor[:, r0:r1, c0:c1]
    if kernel_size is None:
        return crop.copy()
    return resize_bilinear(crop, kernel_size, kernel_size)


def save_feature_map(fm: FeatureMap, path) -> None:
    """Write ``<path>`` as LPT1 and ``<path>.json`` as the metadata sidecar."""
    path = Path(path)
    write_lpt1(path, fm.tensor)
    meta = {"stride": fm.stride, "channels": int(fm.tensor.shape[0]),
            "config_hash": fm.config_hash, "image_shape": list(fm.image_shape)}
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2))


def load_feature_map(path) -> FeatureMap:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    return FeatureMap(read_lpt1(path), int(meta["stride"]), tuple(meta["image_shape"]), meta["config_hash"])
