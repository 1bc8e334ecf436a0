"""View-dependent resampling of volumes and per-pixel ray extraction.

A view is one of the three grid axes (with a sign). Resampling keeps
the full grid resolution along the chosen axis -- rays are never
interpolated lengthwise -- while the two image-plane axes are resampled
to the requested image extents by bilinear interpolation on a
cell-centered lattice: grid sample ``k`` sits at ``(k + 0.5) / N`` and
pixel ``(i, j)`` at ``((i + 0.5) / W, (j + 0.5) / H)`` in the unit
image plane. With matching extents the map is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import SimParams, Volume, load_array, save_array


@dataclass(frozen=True)
class ViewConfig:
    """A selected axis-parallel view and its image resolution."""

    axis: int
    width: int
    height: int
    ray_length: int
    sign: int = 1

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis}")
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be -1 or 1, got {self.sign}")
        if min(self.width, self.height, self.ray_length) < 1:
            raise ValueError("image extents and ray length must be positive")

    @property
    def image_dims(self) -> tuple:
        """The two non-axis grid dimensions, ascending: (width dim, height dim)."""
        dims = [0, 1, 2]
        dims.remove(self.axis)
        return tuple(dims)

    def output_extents(self) -> tuple:
        return (self.width, self.height, self.ray_length)

    def viewpoint(self) -> np.ndarray:
        v = np.zeros(3)
        v[self.axis] = float(self.sign)
        return v

    def to_dict(self) -> dict:
        return {"axis": self.axis, "width": self.width, "height": self.height,
                "ray_length": self.ray_length, "sign": self.sign}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewConfig":
        return cls(d["axis"], d["width"], d["height"], d["ray_length"],
                   d.get("sign", 1))


@dataclass
class ViewDependentVolume:
    """W x H x L0 resampled data for one view, in [-1, 1]."""

    values: np.ndarray
    config: ViewConfig
    value_min: float
    value_max: float
    params: SimParams | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.shape != self.config.output_extents():
            raise ValueError(
                f"values shape {self.values.shape} != config extents "
                f"{self.config.output_extents()}"
            )


def _plane_coords(n_pixels: int, n_grid: int) -> tuple:
    """Bilinear corner indices and fractions for one image-plane axis."""
    centers = (np.arange(n_pixels) + 0.5) * (n_grid / n_pixels) - 0.5
    centers = np.clip(centers, 0.0, n_grid - 1.0)
    i0 = np.floor(centers).astype(np.intp)
    i0 = np.minimum(i0, n_grid - 2) if n_grid > 1 else i0
    frac = centers - i0
    return i0, frac


def sample_view(volume: Volume, config: ViewConfig) -> ViewDependentVolume:
    """Resample a normalized volume for one axis-parallel view."""
    extents = volume.extents
    if extents[config.axis] != config.ray_length:
        raise ValueError(
            f"config ray length {config.ray_length} != volume extent "
            f"{extents[config.axis]} along axis {config.axis}"
        )
    d1, d2 = config.image_dims
    # Ray axis last; image-plane width dim first.
    vol = np.moveaxis(volume.values, config.axis, 2).astype(np.float64)
    n1, n2 = extents[d1], extents[d2]

    i0, fa = _plane_coords(config.width, n1)
    j0, fb = _plane_coords(config.height, n2)
    i1 = np.minimum(i0 + 1, n1 - 1)
    j1 = np.minimum(j0 + 1, n2 - 1)

    fa = fa[:, None, None]
    fb = fb[None, :, None]
    out = (
        vol[np.ix_(i0, j0)] * (1.0 - fa) * (1.0 - fb)
        + vol[np.ix_(i1, j0)] * fa * (1.0 - fb)
        + vol[np.ix_(i0, j1)] * (1.0 - fa) * fb
        + vol[np.ix_(i1, j1)] * fa * fb
    )
    return ViewDependentVolume(out.astype(np.float32), config,
                               volume.value_min, volume.value_max,
                               params=volume.params)


def extract_rays(vdv: ViewDependentVolume) -> np.ndarray:
    """All rays as a (W*H, 1, L0) batch; ray k = (i, j) with k = i*H + j."""
    w, h, l = vdv.values.shape
    return vdv.values.reshape(w * h, 1, l)


def reassemble_rays(rays: np.ndarray, config: ViewConfig) -> np.ndarray:
    """Inverse of :func:`extract_rays`: (W*H, 1, L0) back to (W, H, L0)."""
    w, h, l = config.width, config.height, config.ray_length
    if rays.shape != (w * h, 1, l):
        raise ValueError(f"rays shape {rays.shape} != ({w * h}, 1, {l})")
    return np.ascontiguousarray(rays.reshape(w, h, l))


def save_view_volume(base, vdv: ViewDependentVolume) -> None:
    header = {
        "view": vdv.config.to_dict(),
        "value_min": vdv.value_min,
        "value_max": vdv.value_max,
        "params": vdv.params.to_dict() if vdv.params else None,
    }
    save_array(base, vdv.values, header)


def load_view_volume(base) -> ViewDependentVolume:
    values, meta = load_array(base)
    params = SimParams.from_dict(meta["params"]) if meta.get("params") else None
    return ViewDependentVolume(values, ViewConfig.from_dict(meta["view"]),
                               meta["value_min"], meta["value_max"], params=params)
