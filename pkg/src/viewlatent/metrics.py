"""Quantitative data- and image-level quality metrics.

Data level: PSNR relative to the dataset value range and normalized
maximum difference (an error bound in range units). Image level: SSIM
on luma with an 11x11 Gaussian window, earth mover's distance between
per-channel color histograms, and CIELUV difference images flagging
pixels with deltaE >= 6. A deterministic Fibonacci lattice supplies
near-uniform viewing-sphere directions for metric averaging.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

DIFF_THRESHOLD = 6.0

_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
# Reference white derived from the matrix itself (its row sums) so that
# pure white maps to exactly L*=100, u*=v*=0.
_WHITE_XYZ = tuple(_SRGB_TO_XYZ.sum(axis=1))


def psnr(a: np.ndarray, b: np.ndarray, value_range: float) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"extent mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(value_range ** 2 / mse)


def max_difference(a: np.ndarray, b: np.ndarray, value_range: float) -> float:
    """Maximum absolute difference normalized by the dataset value range."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"extent mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)) / value_range)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def _luma(pixels: np.ndarray) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def _gaussian_kernel(radius: int = 5, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _windowed(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def ssim(a, b) -> float:
    """Structural similarity on luma; 11x11 Gaussian window, sigma 1.5.

    Accepts ImageRGB-like objects (with ``.pixels``) or raw uint8 arrays.
    The mean is taken over the interior where the window fits fully.
    """
    pa = getattr(a, "pixels", a)
    pb = getattr(b, "pixels", b)
    if pa.shape != pb.shape:
        raise ValueError(f"extent mismatch: {pa.shape} vs {pb.shape}")
    x = _luma(pa)
    y = _luma(pb)
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    kernel = _gaussian_kernel()
    mx = _windowed(x, kernel)
    my = _windowed(y, kernel)
    vx = _windowed(x * x, kernel) - mx * mx
    vy = _windowed(y * y, kernel) - my * my
    cxy = _windowed(x * y, kernel) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)
            / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    r = kernel.size // 2
    interior = smap[r:smap.shape[0] - r or None, r:smap.shape[1] - r or None]
    return float(interior.mean() if interior.size else smap.mean())


# ---------------------------------------------------------------------------
# color-histogram EMD
# ---------------------------------------------------------------------------

def emd_color_hist(a, b, bins: int = 64) -> float:
    """Mean per-channel 1D earth mover's distance between color histograms.

    Per channel, histograms over [0, 255] are normalized to unit mass
    and the EMD is the mean absolute CDF difference (two unit spikes k
    bins apart give k/bins).
    """
    pa = getattr(a, "pixels", a)
    pb = getattr(b, "pixels", b)
    total = 0.0
    for c in range(3):
        ha, _ = np.histogram(pa[..., c].ravel(), bins=bins, range=(0, 256))
        hb, _ = np.histogram(pb[..., c].ravel(), bins=bins, range=(0, 256))
        ca = np.cumsum(ha / ha.sum())
        cb = np.cumsum(hb / hb.sum())
        total += float(np.abs(ca - cb).mean())
    return total / 3.0


# ---------------------------------------------------------------------------
# CIELUV difference images
# ---------------------------------------------------------------------------

def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    c = c / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_luv(pixels: np.ndarray) -> np.ndarray:
    """sRGB uint8 -> CIELUV (D65), shape (..., 3)."""
    lin = _srgb_to_linear(np.asarray(pixels, dtype=np.float64))
    xyz = lin @ _SRGB_TO_XYZ.T
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]

    xn, yn, zn = _WHITE_XYZ
    yr = y / yn
    eps = (6.0 / 29.0) ** 3
    lstar = np.where(yr > eps, 116.0 * np.cbrt(yr) - 16.0, (29.0 / 3.0) ** 3 * yr)

    denom = x + 15.0 * y + 3.0 * z
    denom_n = xn + 15.0 * yn + 3.0 * zn
    with np.errstate(invalid="ignore", divide="ignore"):
        up = np.where(denom > 0, 4.0 * x / denom, 4.0 * xn / denom_n)
        vp = np.where(denom > 0, 9.0 * y / denom, 9.0 * yn / denom_n)
    upn = 4.0 * xn / denom_n
    vpn = 9.0 * yn / denom_n
    ustar = 13.0 * lstar * (up - upn)
    vstar = 13.0 * lstar * (vp - vpn)
    return np.stack([lstar, ustar, vstar], axis=-1)


def _highlight_color(delta: np.ndarray) -> np.ndarray:
    """Yellow-to-red ramp over deltaE in [threshold, 100]."""
    t = np.clip((delta - DIFF_THRESHOLD) / (100.0 - DIFF_THRESHOLD), 0.0, 1.0)
    out = np.empty(delta.shape + (3,))
    out[..., 0] = 255.0
    out[..., 1] = 220.0 * (1.0 - t)
    out[..., 2] = 0.0
    return out


def difference_image(a, b, threshold: float = DIFF_THRESHOLD):
    """Flag noticeably different pixels (CIELUV deltaE >= threshold).

    Returns ``(image, flagged_fraction)`` where flagged pixels take a
    magnitude-coded highlight color over a grayscale of ``a``.
    """
    pa = getattr(a, "pixels", a)
    pb = getattr(b, "pixels", b)
    if pa.shape != pb.shape:
        raise ValueError(f"extent mismatch: {pa.shape} vs {pb.shape}")
    delta = np.linalg.norm(rgb_to_luv(pa) - rgb_to_luv(pb), axis=-1)
    flagged = delta >= threshold
    gray = _luma(pa)
    out = np.repeat(gray[..., None], 3, axis=-1)
    out[flagged] = _highlight_color(delta)[flagged]
    from .render import ImageRGB
    image = ImageRGB(np.rint(np.clip(out, 0, 255)).astype(np.uint8))
    return image, float(flagged.mean())


def cieluv_delta(rgb_a, rgb_b) -> float:
    """deltaE between two single sRGB colors (3-vectors, 0-255)."""
    la = rgb_to_luv(np.asarray(rgb_a, dtype=np.float64)[None, :])[0]
    lb = rgb_to_luv(np.asarray(rgb_b, dtype=np.float64)[None, :])[0]
    return float(np.linalg.norm(la - lb))


# ---------------------------------------------------------------------------
# viewpoint sampling
# ---------------------------------------------------------------------------

def sphere_viewpoints(n: int) -> np.ndarray:
    """Deterministic Fibonacci lattice of ``n`` unit directions, shape (n, 3)."""
    if n < 1:
        raise ValueError("need at least one viewpoint")
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    theta = golden * k
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)
