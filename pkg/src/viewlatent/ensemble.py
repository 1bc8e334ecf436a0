"""Synthetic parameterized ensemble: generation, persistence, normalization.

Members are dense scalar fields on a regular grid, produced by a fast
analytic stand-in for an expensive simulation. The field mixes a term
that is linear in its first parameter, a nonlinearly-shifting second
structure, and a fixed high-frequency ripple, so that parameter-space
interpolation baselines are not trivially competitive. A fourth
parameter is accepted but deliberately ignored by the field; it gives
sensitivity analysis a known-zero ground truth.

Files on disk: ``<name>.json`` header (extents, value range, parameters)
plus ``<name>.raw`` little-endian float32 payload, and one manifest JSON
per ensemble.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PARAM_NAMES = ("amplitude", "separation", "width", "inert")
DEFAULT_PARAM_RANGES = ((0.5, 2.0), (-1.0, 1.0), (0.0, 1.0), (0.0, 1.0))

SPLIT_RAE = "rae-train"
SPLIT_PREDICTOR = "predictor-train"
SPLIT_TEST = "test"


@dataclass
class SimParams:
    """A point in simulation-parameter space."""

    values: tuple
    names: tuple = DEFAULT_PARAM_NAMES
    ranges: tuple = DEFAULT_PARAM_RANGES

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        self.names = tuple(self.names)
        self.ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        if not (len(self.values) == len(self.names) == len(self.ranges)):
            raise ValueError("SimParams: values, names, ranges length mismatch")
        if len(self.values) < 1:
            raise ValueError("SimParams: need at least one parameter")
        for lo, hi in self.ranges:
            if not lo < hi:
                raise ValueError(f"SimParams: degenerate range [{lo}, {hi}]")

    def validate_in_range(self) -> None:
        for v, (lo, hi), name in zip(self.values, self.ranges, self.names):
            if not (lo <= v <= hi):
                raise ValueError(
                    f"parameter {name}={v} outside its range [{lo}, {hi}]"
                )

    def out_of_range_names(self) -> list[str]:
        return [
            name
            for v, (lo, hi), name in zip(self.values, self.ranges, self.names)
            if not (lo <= v <= hi)
        ]

    def normalized(self) -> np.ndarray:
        """Values affinely mapped to [-1, 1] per dimension."""
        out = np.empty(len(self.values), dtype=np.float64)
        for i, (v, (lo, hi)) in enumerate(zip(self.values, self.ranges)):
            out[i] = 2.0 * (v - lo) / (hi - lo) - 1.0
        return out

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "names": list(self.names),
            "ranges": [list(r) for r in self.ranges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(tuple(d["values"]), tuple(d["names"]),
                   tuple(tuple(r) for r in d["ranges"]))


@dataclass
class Volume:
    """Dense scalar field on a regular grid with value-range metadata.

    ``value_min``/``value_max`` describe the dataset the volume belongs
    to (a single member counts as a dataset of one); ``normalized``
    marks whether ``values`` have been mapped to [-1, 1].
    """

    values: np.ndarray
    value_min: float
    value_max: float
    params: SimParams | None = None
    normalized: bool = False

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError(f"Volume: bad extents {self.values.shape}")
        if not self.value_min <= self.value_max:
            raise ValueError("Volume: value_min > value_max")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Volume: non-finite values")

    @property
    def extents(self) -> tuple:
        return self.values.shape

    def tf_domain(self) -> tuple:
        """The (lo, hi) value pair that maps onto transfer-function [0, 1]."""
        return (-1.0, 1.0) if self.normalized else (self.value_min, self.value_max)


# ---------------------------------------------------------------------------
# the analytic field
# ---------------------------------------------------------------------------

def evaluate_field(points: np.ndarray, values) -> np.ndarray:
    """Evaluate the synthetic scalar field at arbitrary unit-cube points.

    ``points`` is ``(n, 3)``; ``values`` is the parameter vector (at
    least three entries; any further entries are ignored).
    """
    p = np.asarray(values, dtype=np.float64)
    if p.size < 3:
        raise ValueError("field needs at least three parameters")
    pts = np.asarray(points, dtype=np.float64)
    amp, sep, wid = p[0], p[1], p[2]
    c1 = np.array([0.5 + 0.25 * sep, 0.5, 0.5])
    c2 = np.array([0.5 - 0.25 * sep, 0.35, 0.6])
    d1 = ((pts - c1) ** 2).sum(axis=-1)
    d2 = ((pts - c2) ** 2).sum(axis=-1)
    s1 = 2.0 * 0.15 ** 2
    s2 = 2.0 * (0.1 * (1.0 + wid)) ** 2
    ripple = 0.05 * np.sin(8 * math.pi * pts[..., 0]) * np.sin(8 * math.pi * pts[..., 1])
    return amp * np.exp(-d1 / s1) + 0.5 * np.exp(-d2 / s2) + ripple


def grid_points(extents) -> np.ndarray:
    """Cell-centered unit-cube coordinates of every voxel, shape (n, 3)."""
    w, h, l = extents
    xs = (np.arange(w) + 0.5) / w
    ys = (np.arange(h) + 0.5) / h
    zs = (np.arange(l) + 0.5) / l
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)


def simulate(params: SimParams, extents) -> Volume:
    """Deterministic synthetic member for one parameter setting."""
    params.validate_in_range()
    if len(params.values) < 3:
        raise ValueError("simulate: need at least three parameters")
    vals = evaluate_field(grid_points(extents), params.values)
    vals = vals.reshape(tuple(int(e) for e in extents)).astype(np.float32)
    return Volume(vals, float(vals.min()), float(vals.max()), params=params)


# ---------------------------------------------------------------------------
# raw + JSON array persistence
# ---------------------------------------------------------------------------

def save_array(base, values: np.ndarray, header: dict) -> None:
    """Write ``<base>.json`` + ``<base>.raw`` for an arbitrary-rank array."""
    base = Path(base)
    values = np.ascontiguousarray(values, dtype=np.float32)
    meta = dict(header)
    meta["extents"] = list(values.shape)
    meta["dtype"] = "float32"
    meta["byte_order"] = "little"
    try:
        base.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        base.with_suffix(".raw").write_bytes(values.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"failed writing volume files at {base}: {exc}") from exc


def load_array(base) -> tuple[np.ndarray, dict]:
    base = Path(base)
    try:
        meta = json.loads(base.with_suffix(".json").read_text())
        payload = base.with_suffix(".raw").read_bytes()
    except OSError as exc:
        raise OSError(f"failed reading volume files at {base}: {exc}") from exc
    shape = tuple(meta["extents"])
    values = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return values, meta


def save_volume(base, volume: Volume) -> None:
    header = {
        "value_min": volume.value_min,
        "value_max": volume.value_max,
        "normalized": volume.normalized,
        "params": volume.params.to_dict() if volume.params else None,
    }
    save_array(base, volume.values, header)


def load_volume(base) -> Volume:
    values, meta = load_array(base)
    params = SimParams.from_dict(meta["params"]) if meta.get("params") else None
    return Volume(values, meta["value_min"], meta["value_max"],
                  params=params, normalized=bool(meta.get("normalized", False)))


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass
class MemberRecord:
    index: int
    params: SimParams
    path: str
    split: str


@dataclass
class EnsembleManifest:
    members: list[MemberRecord]
    value_min: float
    value_max: float
    extents: tuple
    seed: int
    root: Path = field(default=Path("."))
    config_hash: str | None = None

    def split(self, name: str) -> list[MemberRecord]:
        return [m for m in self.members if m.split == name]

    def load_member(self, member: MemberRecord) -> Volume:
        vol = load_volume(self.root / member.path)
        # Member headers carry their own range; analysis uses the
        # dataset-global one.
        vol.value_min = self.value_min
        vol.value_max = self.value_max
        return vol

    def param_space(self) -> SimParams:
        return self.members[0].params

    def to_dict(self) -> dict:
        return {
            "value_min": self.value_min,
            "value_max": self.value_max,
            "extents": list(self.extents),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "members": [
                {
                    "index": m.index,
                    "params": m.params.to_dict(),
                    "path": m.path,
                    "split": m.split,
                }
                for m in self.members
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "EnsembleManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        members = [
            MemberRecord(m["index"], SimParams.from_dict(m["params"]),
                         m["path"], m["split"])
            for m in d["members"]
        ]
        return cls(members, d["value_min"], d["value_max"], tuple(d["extents"]),
                   d["seed"], root=path.parent, config_hash=d.get("config_hash"))


def assign_splits(n_members: int, rng: np.random.Generator,
                  test_fraction: float = 0.2,
                  rae_fraction: float = 0.2) -> list[str]:
    """Random disjoint split assignment covering all members.

    ``test_fraction`` of all members go to the test split; of the
    remaining training members, ``rae_fraction`` (rounded up) train the
    ray autoencoder and the rest supervise the predictor.
    """
    if n_members < 3:
        raise ValueError("need at least 3 members (one per split)")
    order = rng.permutation(n_members)
    n_test = max(1, round(n_members * test_fraction))
    n_train = n_members - n_test
    n_rae = max(1, math.ceil(n_train * rae_fraction))
    splits = [""] * n_members
    for pos, idx in enumerate(order):
        if pos < n_test:
            splits[idx] = SPLIT_TEST
        elif pos < n_test + n_rae:
            splits[idx] = SPLIT_RAE
        else:
            splits[idx] = SPLIT_PREDICTOR
    return splits


def build_ensemble(n_members: int, seed: int, extents, out_dir,
                   param_names=DEFAULT_PARAM_NAMES,
                   param_ranges=DEFAULT_PARAM_RANGES,
                   test_fraction: float = 0.2,
                   rae_fraction: float = 0.2,
                   config_hash: str | None = None) -> EnsembleManifest:
    """Sample parameters uniformly, run members, write files, split."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lows = np.array([r[0] for r in param_ranges])
    highs = np.array([r[1] for r in param_ranges])
    samples = rng.uniform(lows, highs, size=(n_members, len(param_ranges)))
    splits = assign_splits(n_members, rng, test_fraction, rae_fraction)

    members = []
    vmin, vmax = math.inf, -math.inf
    for i in range(n_members):
        params = SimParams(tuple(samples[i]), param_names, param_ranges)
        vol = simulate(params, extents)
        vmin = min(vmin, vol.value_min)
        vmax = max(vmax, vol.value_max)
        name = f"member_{i:03d}"
        save_volume(out_dir / name, vol)
        members.append(MemberRecord(i, params, name, splits[i]))

    manifest = EnsembleManifest(members, vmin, vmax, tuple(extents), seed,
                                root=out_dir, config_hash=config_hash)
    manifest.save(out_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize(volume: Volume, value_min: float, value_max: float) -> Volume:
    """Affine map of [value_min, value_max] onto [-1, 1]."""
    if not value_min < value_max:
        raise ValueError(
            f"degenerate dataset range [{value_min}, {value_max}] cannot be normalized"
        )
    span = value_max - value_min
    vals = (volume.values.astype(np.float64) - value_min) * (2.0 / span) - 1.0
    return Volume(vals.astype(np.float32), value_min, value_max,
                  params=volume.params, normalized=True)


def denormalize(volume: Volume) -> Volume:
    """Inverse of :func:`normalize`, back to original units."""
    if not volume.value_min < volume.value_max:
        raise ValueError("degenerate dataset range cannot be denormalized")
    span = volume.value_max - volume.value_min
    vals = (volume.values.astype(np.float64) + 1.0) * (span / 2.0) + volume.value_min
    return Volume(vals.astype(np.float32), volume.value_min, volume.value_max,
                  params=volume.params, normalized=False)
