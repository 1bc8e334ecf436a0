"""Perspective ray-casting volume renderer with piecewise-linear TFs.

Rays march the unit cube front to back at a fixed world-space step,
mapping each scalar sample through the transfer function and
compositing emission-absorption style:

    C <- C + (1 - A) * alpha * color
    A <- A + (1 - A) * alpha

with early termination once A > 0.999 and an opaque background blended
under the remaining transparency. Transfer-function opacity is defined
per sample at the reference step (the default step for the source);
marching at a different step renormalizes opacity by the step ratio so
that refining the step converges instead of changing optical depth. At
the reference step the per-sample alpha is applied exactly as given.
Given identical inputs the output image is byte-identical across runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .ensemble import Volume

ALPHA_CUTOFF = 0.999


@dataclass
class TransferFunction:
    """Piecewise-linear map from normalized scalar in [0, 1] to RGBA."""

    positions: np.ndarray
    rgba: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.rgba = np.asarray(self.rgba, dtype=np.float64)
        if self.positions.ndim != 1 or self.rgba.shape != (self.positions.size, 4):
            raise ValueError("transfer function needs n positions and n RGBA rows")
        if self.positions.size < 2:
            raise ValueError("transfer function needs at least 2 control points")
        if not (self.positions[0] == 0.0 and self.positions[-1] == 1.0):
            raise ValueError("control points must start at 0 and end at 1")
        if not np.all(np.diff(self.positions) > 0):
            raise ValueError("control point positions must be strictly increasing")
        if self.rgba.min() < 0.0 or self.rgba.max() > 1.0:
            raise ValueError("RGBA components must lie in [0, 1]")

    def sample(self, s: np.ndarray) -> np.ndarray:
        """RGBA at normalized scalars ``s`` (clamped to [0, 1]); shape (n, 4)."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
        out = np.empty(s.shape + (4,))
        for c in range(4):
            out[..., c] = np.interp(s, self.positions, self.rgba[:, c])
        return out

    def to_dict(self) -> dict:
        return {"points": [
            {"position": float(p), "rgba": [float(x) for x in row]}
            for p, row in zip(self.positions, self.rgba)
        ]}

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        pts = d["points"]
        return cls(np.array([p["position"] for p in pts]),
                   np.array([p["rgba"] for p in pts]))


def default_transfer_function() -> TransferFunction:
    """A generally useful ramp: transparent cool lows to opaque warm highs."""
    return TransferFunction(
        np.array([0.0, 0.35, 0.65, 1.0]),
        np.array([
            [0.1, 0.1, 0.6, 0.0],
            [0.2, 0.6, 0.9, 0.02],
            [0.9, 0.7, 0.2, 0.3],
            [1.0, 0.2, 0.1, 0.95],
        ]),
    )


@dataclass
class Camera:
    """Perspective pinhole camera."""

    eye: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    vfov_deg: float = 40.0
    width: int = 256
    height: int = 256

    def __post_init__(self):
        self.eye = np.asarray(self.eye, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        forward = self.look_at - self.eye
        if np.linalg.norm(forward) < 1e-12:
            raise ValueError("camera eye and look-at coincide")
        if not 0.0 < self.vfov_deg < 180.0:
            raise ValueError(f"vertical fov {self.vfov_deg} outside (0, 180)")
        f = forward / np.linalg.norm(forward)
        u = self.up / np.linalg.norm(self.up)
        if np.linalg.norm(np.cross(f, u)) < 1e-9:
            raise ValueError("up vector is parallel to the view direction")
        if self.width < 1 or self.height < 1:
            raise ValueError("image extents must be positive")

    def ray_directions(self) -> np.ndarray:
        """Unit direction through every pixel center, shape (H, W, 3)."""
        f = self.look_at - self.eye
        f = f / np.linalg.norm(f)
        r = np.cross(f, self.up / np.linalg.norm(self.up))
        r = r / np.linalg.norm(r)
        u = np.cross(r, f)
        half_h = np.tan(np.radians(self.vfov_deg) / 2.0)
        half_w = half_h * self.width / self.height
        xs = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        ys = 1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0
        dirs = (f[None, None, :]
                + xs[None, :, None] * half_w * r[None, None, :]
                + ys[:, None, None] * half_h * u[None, None, :])
        return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)

    def viewpoint(self) -> np.ndarray:
        """Viewing-sphere direction (from the look-at point toward the eye)."""
        v = self.eye - self.look_at
        return v / np.linalg.norm(v)

    def to_dict(self) -> dict:
        return {"eye": list(map(float, self.eye)),
                "look_at": list(map(float, self.look_at)),
                "up": list(map(float, self.up)),
                "vfov_deg": float(self.vfov_deg),
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(np.array(d["eye"]), np.array(d["look_at"]),
                   np.array(d.get("up", [0.0, 0.0, 1.0])),
                   d.get("vfov_deg", 40.0), d.get("width", 256),
                   d.get("height", 256))


@dataclass
class ImageRGB:
    """8-bit RGB image, row-major (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got {self.pixels.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(str(path), format="PNG")

    @classmethod
    def load(cls, path) -> "ImageRGB":
        return cls(np.asarray(Image.open(str(path)).convert("RGB")))


class VolumeSampler:
    """Trilinear sampler over a volume's unit cube, edge-clamped."""

    def __init__(self, volume: Volume):
        self.values = volume.values.astype(np.float64)
        self.tf_domain = volume.tf_domain()

    def sample(self, points: np.ndarray) -> np.ndarray:
        vals = self.values
        out = np.zeros(points.shape[0])
        idx0 = []
        frac = []
        for ax in range(3):
            n = vals.shape[ax]
            c = np.clip(points[:, ax] * n - 0.5, 0.0, n - 1.0)
            i0 = np.floor(c).astype(np.intp)
            if n > 1:
                np.minimum(i0, n - 2, out=i0)
            idx0.append(i0)
            frac.append(c - i0)
        for da in (0, 1):
            wa = frac[0] if da else 1.0 - frac[0]
            ia = np.minimum(idx0[0] + da, vals.shape[0] - 1)
            for db in (0, 1):
                wb = frac[1] if db else 1.0 - frac[1]
                ib = np.minimum(idx0[1] + db, vals.shape[1] - 1)
                for dc in (0, 1):
                    wc = frac[2] if dc else 1.0 - frac[2]
                    ic = np.minimum(idx0[2] + dc, vals.shape[2] - 1)
                    out += wa * wb * wc * vals[ia, ib, ic]
        return out


def _intersect_unit_cube(origins: np.ndarray, dirs: np.ndarray) -> tuple:
    """Slab-method entry/exit distances; t_near >= t_far marks a miss."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t0 = (0.0 - origins) * inv
    t1 = (1.0 - origins) * inv
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    # Axis-parallel rays: ignore the degenerate axis if inside its slab.
    parallel = dirs == 0.0
    inside = (origins >= 0.0) & (origins <= 1.0)
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    t_near = np.maximum(lo.max(axis=-1), 0.0)
    t_far = hi.min(axis=-1)
    return t_near, t_far


def render(source, camera: Camera, tf: TransferFunction,
           step: float | None = None,
           background=(0.0, 0.0, 0.0),
           reference_step: float | None = None) -> ImageRGB:
    """Ray-cast ``source`` (a Volume or any sampler object) to an image.

    A sampler object must expose ``sample(points) -> values`` and a
    ``tf_domain`` attribute mapping its value range onto the transfer
    function's [0, 1] domain. The default step (and default reference
    step) is half a voxel for volumes, 1/128 of the cube otherwise.
    """
    if isinstance(source, Volume):
        sampler = VolumeSampler(source)
        default_step = 0.5 / max(source.extents)
    else:
        sampler = source
        default_step = 1.0 / 128.0
    if step is None:
        step = default_step
    if reference_step is None:
        reference_step = default_step
    opacity_exponent = step / reference_step
    lo, hi = (sampler.tf_domain if not callable(sampler.tf_domain)
              else sampler.tf_domain())
    span = hi - lo

    h, w = camera.height, camera.width
    dirs = camera.ray_directions().reshape(-1, 3)
    origins = np.broadcast_to(camera.eye, dirs.shape)
    t_near, t_far = _intersect_unit_cube(origins, dirs)
    n_steps = np.maximum(np.floor((t_far - t_near) / step), 0.0).astype(np.int64)
    n_steps[t_far <= t_near] = 0

    color = np.zeros((dirs.shape[0], 3))
    alpha = np.zeros(dirs.shape[0])
    max_steps = int(n_steps.max()) if n_steps.size else 0
    for k in range(max_steps):
        active = (k < n_steps) & (alpha <= ALPHA_CUTOFF)
        if not active.any():
            break
        t = t_near[active] + (k + 0.5) * step
        pts = origins[active] + t[:, None] * dirs[active]
        values = sampler.sample(pts)
        rgba = tf.sample((values - lo) / span)
        a = rgba[:, 3]
        if opacity_exponent != 1.0:
            a = 1.0 - (1.0 - a) ** opacity_exponent
        trans = 1.0 - alpha[active]
        color[active] += (trans * a)[:, None] * rgba[:, :3]
        alpha[active] += trans * a

    color += (1.0 - alpha)[:, None] * np.asarray(background, dtype=np.float64)
    pixels = np.rint(np.clip(color, 0.0, 1.0) * 255.0).astype(np.uint8)
    return ImageRGB(pixels.reshape(h, w, 3))


def composite_ray(alphas: np.ndarray, colors: np.ndarray,
                  background=(0.0, 0.0, 0.0)) -> tuple:
    """Front-to-back compositing of one ray's samples; returns (rgb, alpha).

    Reference kernel for the renderer's accumulation loop (same update,
    same early termination)."""
    color = np.zeros(3)
    alpha = 0.0
    for a, c in zip(alphas, colors):
        if alpha > ALPHA_CUTOFF:
            break
        color += (1.0 - alpha) * a * np.asarray(c, dtype=np.float64)
        alpha += (1.0 - alpha) * a
    color += (1.0 - alpha) * np.asarray(background, dtype=np.float64)
    return color, alpha
