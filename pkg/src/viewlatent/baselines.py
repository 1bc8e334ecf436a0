"""Parameter-space interpolation baselines: IDW and Gaussian RBF.

Both interpolate stored training volumes voxelwise as a function of
the simulation parameters, with parameter values normalized per
dimension to [0, 1] before distances are taken. IDW blends the g
nearest members under Manhattan distance with weights 1/(d + delta).
RBF solves the usual kernel system with a Gaussian kernel whose width
is fitted by gradient descent on the leave-one-out error (Rippa's
closed form supplies the per-member LOO residuals).
"""

from __future__ import annotations

import numpy as np

from .ensemble import EnsembleManifest, MemberRecord, SimParams, Volume

IDW_DELTA = 1e-6
DEFAULT_IDW_NEIGHBORS = 3


def _normalized_params(values, ranges) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lows = np.array([r[0] for r in ranges])
    highs = np.array([r[1] for r in ranges])
    return (v - lows) / (highs - lows)


def _training_members(manifest: EnsembleManifest) -> list[MemberRecord]:
    return [m for m in manifest.members if m.split != "test"]


def idw_baseline(params: SimParams, manifest: EnsembleManifest,
                 g: int = DEFAULT_IDW_NEIGHBORS) -> Volume:
    """Inverse-distance-weighted mean of the g nearest training members."""
    members = _training_members(manifest)
    if not members:
        raise ValueError("manifest has no training members")
    if not 1 <= g <= len(members):
        raise ValueError(f"g={g} outside [1, {len(members)}]")
    q = _normalized_params(params.values, params.ranges)
    dists = np.array([
        np.abs(q - _normalized_params(m.params.values, m.params.ranges)).sum()
        for m in members
    ])
    nearest = np.argsort(dists, kind="stable")[:g]
    weights = 1.0 / (dists[nearest] + IDW_DELTA)
    weights /= weights.sum()
    acc = None
    for w, idx in zip(weights, nearest):
        vol = manifest.load_member(members[idx])
        acc = w * vol.values.astype(np.float64) if acc is None \
            else acc + w * vol.values.astype(np.float64)
    return Volume(acc.astype(np.float32), manifest.value_min, manifest.value_max,
                  params=params)


def _loo_mse(dist2: np.ndarray, values: np.ndarray, width: float,
             jitter: float = 1e-10) -> float:
    """Leave-one-out MSE of Gaussian-RBF interpolation (Rippa's formula)."""
    m = dist2.shape[0]
    kernel = np.exp(-dist2 / (2.0 * width ** 2)) + jitter * np.eye(m)
    kinv = np.linalg.inv(kernel)
    coeffs = kinv @ values
    resid = coeffs / np.diag(kinv)[:, None]
    return float(np.mean(resid ** 2))


def fit_rbf_width(dist2: np.ndarray, values: np.ndarray,
                  steps: int = 40, lr: float = 0.25) -> float:
    """Gradient descent on log-width minimizing the LOO error."""
    # Median pairwise distance is a sturdy starting point.
    off = dist2[~np.eye(dist2.shape[0], dtype=bool)]
    log_w = 0.5 * np.log(np.median(off) + 1e-12)
    h = 1e-3
    best = (_loo_mse(dist2, values, np.exp(log_w)), log_w)
    for _ in range(steps):
        ep = _loo_mse(dist2, values, np.exp(log_w + h))
        em = _loo_mse(dist2, values, np.exp(log_w - h))
        grad = (ep - em) / (2.0 * h)
        log_w -= lr * grad / (abs(grad) + 1e-12) * min(abs(grad), 0.5)
        err = _loo_mse(dist2, values, np.exp(log_w))
        if err < best[0]:
            best = (err, log_w)
    return float(np.exp(best[1]))


def rbf_baseline(params: SimParams, manifest: EnsembleManifest,
                 width: float | None = None) -> Volume:
    """Gaussian radial-basis interpolation over the training members."""
    members = _training_members(manifest)
    if not members:
        raise ValueError("manifest has no training members")
    coords = np.stack([
        _normalized_params(m.params.values, m.params.ranges) for m in members
    ])
    diffs = coords[:, None, :] - coords[None, :, :]
    dist2 = (diffs ** 2).sum(axis=-1)
    flat = np.stack([
        manifest.load_member(m).values.astype(np.float64).ravel() for m in members
    ])
    if width is None:
        width = fit_rbf_width(dist2, flat)
    m = len(members)
    kernel = np.exp(-dist2 / (2.0 * width ** 2)) + 1e-10 * np.eye(m)
    coeffs = np.linalg.solve(kernel, flat)
    q = _normalized_params(params.values, params.ranges)
    kq = np.exp(-((coords - q) ** 2).sum(axis=-1) / (2.0 * width ** 2))
    values = (kq @ coeffs).reshape(manifest.extents).astype(np.float32)
    return Volume(values, manifest.value_min, manifest.value_max, params=params)
