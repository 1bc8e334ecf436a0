"""Inference-time fusion of per-view predictions and parameter sensitivity.

Predicted view-dependent volumes from the three axis views are blended
at arbitrary sample positions by inverse viewpoint-distance weighting:
each view contributes its trilinearly interpolated value with weight
1 / min(d(v, vi), d(v, -vi)), where d is great-circle distance on the
viewing sphere and -vi is the symmetrical (antipodal) viewpoint. The
result is a convex combination of the per-view samples.

Sensitivity of one simulation parameter is the mean over the three
views of |d(L1 norm of decoded view data)/d(parameter)|, computed by
backpropagation through predictor and decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .autoencoder import RayAutoencoder
from .ensemble import SimParams, Volume, grid_points
from .predictor import LatentPredictor
from .tensor import Tensor
from .viewsample import ViewConfig, ViewDependentVolume

MIN_ANGLE = 1e-6  # radians; clamp before inverting distances


def as_viewpoint(v) -> np.ndarray:
    """Validate a unit viewing-sphere direction."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"viewpoint must be a 3-vector, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"viewpoint must be unit length, |v| = {norm}")
    return v


def great_circle(v, vi) -> float:
    """Great-circle distance between two viewpoints, in [0, pi]."""
    v = as_viewpoint(v)
    vi = as_viewpoint(vi)
    return float(np.arccos(np.clip(np.dot(v, vi), -1.0, 1.0)))


def view_weight(v, vi) -> float:
    """Inverse distance to the nearer of vi and its antipode."""
    d = min(great_circle(v, vi), great_circle(v, -np.asarray(vi, dtype=np.float64)))
    return 1.0 / max(d, MIN_ANGLE)


def _view_grid_sample(values: np.ndarray, config: ViewConfig,
                      points: np.ndarray) -> np.ndarray:
    """Trilinear samples of one view's (W, H, L) data at unit-cube points.

    Image-plane axes live at W x H resolution, the ray axis at L; all
    three use the cell-centered convention with edge clamping.
    """
    d1, d2 = config.image_dims
    w, h, l = values.shape
    coords = np.empty((points.shape[0], 3))
    coords[:, 0] = points[:, d1] * w - 0.5
    coords[:, 1] = points[:, d2] * h - 0.5
    coords[:, 2] = points[:, config.axis] * l - 0.5

    out = None
    idx0 = []
    frac = []
    for ax, n in enumerate((w, h, l)):
        c = np.clip(coords[:, ax], 0.0, n - 1.0)
        i0 = np.floor(c).astype(np.intp)
        if n > 1:
            np.minimum(i0, n - 2, out=i0)
        idx0.append(i0)
        frac.append(c - i0)
    vals = values.astype(np.float64, copy=False)
    out = np.zeros(points.shape[0])
    for da in (0, 1):
        wa = frac[0] if da else 1.0 - frac[0]
        ia = np.minimum(idx0[0] + da, w - 1)
        for db in (0, 1):
            wb = frac[1] if db else 1.0 - frac[1]
            ib = np.minimum(idx0[1] + db, h - 1)
            for dc in (0, 1):
                wc = frac[2] if dc else 1.0 - frac[2]
                ic = np.minimum(idx0[2] + dc, l - 1)
                out += wa * wb * wc * vals[ia, ib, ic]
    return out


class FusedFieldSampler:
    """Lazy fused field over the unit cube for a fixed viewpoint.

    Positions outside the cube are treated as empty space and sample
    to zero.
    """

    def __init__(self, views: list[ViewDependentVolume], viewpoint):
        if not views:
            raise ValueError("need at least one view-dependent volume")
        self.views = views
        self.viewpoint = as_viewpoint(viewpoint)
        self.weights = np.array(
            [view_weight(self.viewpoint, vdv.config.viewpoint()) for vdv in views]
        )

    def sample(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        acc = np.zeros(points.shape[0])
        for vdv, q in zip(self.views, self.weights):
            acc += q * _view_grid_sample(vdv.values, vdv.config, points)
        acc /= self.weights.sum()
        inside = np.all((points >= 0.0) & (points <= 1.0), axis=1)
        acc[~inside] = 0.0
        return acc


def sample_fused(position, views: list[ViewDependentVolume], viewpoint) -> float:
    """Fused scalar at one world position (see :class:`FusedFieldSampler`)."""
    sampler = FusedFieldSampler(views, viewpoint)
    return float(sampler.sample(np.asarray(position, dtype=np.float64)[None, :])[0])


def fuse_to_grid(views: list[ViewDependentVolume], viewpoint, extents) -> Volume:
    """Dense fused volume on a full-resolution grid (for data-level metrics)."""
    sampler = FusedFieldSampler(views, viewpoint)
    pts = grid_points(extents)
    vals = sampler.sample(pts).reshape(tuple(extents)).astype(np.float32)
    first = views[0]
    params = first.params
    return Volume(vals, first.value_min, first.value_max, params=params,
                  normalized=True)


# ---------------------------------------------------------------------------
# sensitivity analysis
# ---------------------------------------------------------------------------

@dataclass
class SensitivityCurve:
    """Sensitivity of the predicted output to one parameter."""

    param_index: int
    param_name: str
    sample_values: np.ndarray
    sensitivities: np.ndarray

    def to_rows(self) -> list[tuple[float, float]]:
        return [(float(v), float(s))
                for v, s in zip(self.sample_values, self.sensitivities)]

    def to_csv(self) -> str:
        lines = ["parameter_value,sensitivity"]
        lines += [f"{v},{s}" for v, s in self.to_rows()]
        return "\n".join(lines) + "\n"


def _view_l1_derivative(values: np.ndarray, index: int,
                        predictor: LatentPredictor,
                        codec: RayAutoencoder) -> float:
    """d(L1 norm of decoded view data)/d(parameter index) by backprop."""
    x = Tensor(np.asarray(values, dtype=np.float32), requires_grad=True)
    field = predictor.forward_t(x)                    # (W, H, Ls, t)
    w, h, ls, t = field.shape
    rays = T.transpose(T.reshape(field, (w * h, ls, t)), (0, 2, 1))
    decoded = codec.decode_t(rays)
    scalar = T.reduce_sum(T.absolute(decoded))
    scalar.backward()
    return float(x.grad[index])


def sensitivity(params: SimParams, index: int, n_samples: int,
                pairs: list[tuple[LatentPredictor, RayAutoencoder]]) -> SensitivityCurve:
    """Mean absolute per-view derivative along a uniform parameter sweep.

    The chosen parameter is sampled uniformly across its range (other
    parameters fixed); at each sample the derivative is taken per
    selected view and the absolute values averaged.
    """
    if not 0 <= index < len(params.values):
        raise ValueError(f"parameter index {index} out of range")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    lo, hi = params.ranges[index]
    sample_values = np.linspace(lo, hi, n_samples)
    sens = np.empty(n_samples)
    for k, value in enumerate(sample_values):
        values = list(params.values)
        values[index] = float(value)
        derivs = [
            _view_l1_derivative(values, index, predictor, codec)
            for predictor, codec in pairs
        ]
        sens[k] = float(np.mean(np.abs(derivs)))
    return SensitivityCurve(index, params.names[index], sample_values, sens)
