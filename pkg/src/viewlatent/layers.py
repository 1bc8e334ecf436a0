"""Network layers: convolutions, pooling, resampling, normalizations.

Convolutions are stride-1, zero-padded "same" maps implemented with an
im2col reshape plus one BLAS matmul; the backward pass scatters column
gradients back with per-tap slice accumulation. Layer classes own their
parameters and the persistent power-iteration state used by spectral
normalization.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

INSTANCE_NORM_EPS = 1e-5
SPECTRAL_NORM_EPS = 1e-12


# ---------------------------------------------------------------------------
# functional primitives
# ---------------------------------------------------------------------------

def conv1d(x, weight, bias) -> Tensor:
    """Same-length 1D convolution.

    ``x`` is ``(C_in, L)`` or batched ``(B, C_in, L)``; ``weight`` is
    ``(C_out, C_in, K)`` with odd ``K``; ``bias`` is ``(C_out,)``.
    """
    x = T._as_tensor(x)
    weight = T._as_tensor(weight)
    bias = T._as_tensor(bias)
    batched = x.ndim == 3
    if x.ndim not in (2, 3):
        raise ValueError(f"conv1d: expected rank 2 or 3 input, got rank {x.ndim}")
    xd = x.data if batched else x.data[None]
    b_, cin, length = xd.shape
    cout, wcin, k = weight.shape
    if wcin != cin:
        raise ValueError(
            f"conv1d: input has {cin} channels but weight expects {wcin}"
        )
    pad = k // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
    sb, sc, sl = xp.strides
    wins = np.lib.stride_tricks.as_strided(
        xp, (b_, cin, k, length), (sb, sc, sl, sl), writeable=False
    )
    cols = wins.transpose(1, 2, 0, 3).reshape(cin * k, b_ * length)
    wf = weight.data.reshape(cout, cin * k)
    y = (wf @ cols).reshape(cout, b_, length).transpose(1, 0, 2)
    y = y + bias.data[None, :, None]
    out = Tensor(y if batched else y[0])

    def _bw():
        g = out.grad if batched else out.grad[None]
        gf = g.transpose(1, 0, 2).reshape(cout, b_ * length)
        if bias.requires_grad:
            bias.accumulate_grad(gf.sum(axis=1))
        if weight.requires_grad:
            weight.accumulate_grad((gf @ cols.T).reshape(weight.shape))
        if x.requires_grad:
            dcols = (wf.T @ gf).reshape(cin, k, b_, length).transpose(2, 0, 1, 3)
            dxp = np.zeros_like(xp)
            for tap in range(k):
                dxp[:, :, tap:tap + length] += dcols[:, :, tap, :]
            dx = dxp[:, :, pad:pad + length]
            x.accumulate_grad(dx if batched else dx[0])

    return T._attach(out, (x, weight, bias), _bw)


def conv3d(x, weight, bias) -> Tensor:
    """Same-extent 3D convolution.

    ``x`` is ``(C_in, D1, D2, D3)`` or batched rank 5; ``weight`` is
    ``(C_out, C_in, K, K, K)``; ``bias`` is ``(C_out,)``.
    """
    x = T._as_tensor(x)
    weight = T._as_tensor(weight)
    bias = T._as_tensor(bias)
    batched = x.ndim == 5
    if x.ndim not in (4, 5):
        raise ValueError(f"conv3d: expected rank 4 or 5 input, got rank {x.ndim}")
    xd = x.data if batched else x.data[None]
    b_, cin, d1, d2, d3 = xd.shape
    cout, wcin, k, _, _ = weight.shape
    if wcin != cin:
        raise ValueError(
            f"conv3d: input has {cin} channels but weight expects {wcin}"
        )
    pad = k // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    sb, sc, s1, s2, s3 = xp.strides
    wins = np.lib.stride_tricks.as_strided(
        xp,
        (b_, cin, k, k, k, d1, d2, d3),
        (sb, sc, s1, s2, s3, s1, s2, s3),
        writeable=False,
    )
    n = d1 * d2 * d3
    cols = wins.transpose(1, 2, 3, 4, 0, 5, 6, 7).reshape(cin * k * k * k, b_ * n)
    wf = weight.data.reshape(cout, cin * k * k * k)
    y = (wf @ cols).reshape(cout, b_, d1, d2, d3).transpose(1, 0, 2, 3, 4)
    y = y + bias.data[None, :, None, None, None]
    out = Tensor(y if batched else y[0])

    def _bw():
        g = out.grad if batched else out.grad[None]
        gf = g.transpose(1, 0, 2, 3, 4).reshape(cout, b_ * n)
        if bias.requires_grad:
            bias.accumulate_grad(gf.sum(axis=1))
        if weight.requires_grad:
            weight.accumulate_grad((gf @ cols.T).reshape(weight.shape))
        if x.requires_grad:
            dcols = (wf.T @ gf).reshape(cin, k, k, k, b_, d1, d2, d3)
            dxp = np.zeros_like(xp)
            for t1 in range(k):
                for t2 in range(k):
                    for t3 in range(k):
                        dxp[:, :, t1:t1 + d1, t2:t2 + d2, t3:t3 + d3] += (
                            dcols[:, t1, t2, t3].transpose(1, 0, 2, 3, 4)
                        )
            dx = dxp[:, :, pad:pad + d1, pad:pad + d2, pad:pad + d3]
            x.accumulate_grad(dx if batched else dx[0])

    return T._attach(out, (x, weight, bias), _bw)


def avg_pool(x, axes, factor: int = 2) -> Tensor:
    """Mean-pool by ``factor`` along each axis in ``axes``."""
    x = T._as_tensor(x)
    axes = tuple(a % x.ndim for a in axes)
    for a in axes:
        if x.shape[a] % factor != 0:
            raise ValueError(
                f"avg_pool: extent {x.shape[a]} of axis {a} not divisible by {factor}"
            )
    split_shape = []
    mean_axes = []
    for i, n in enumerate(x.shape):
        if i in axes:
            split_shape.extend((n // factor, factor))
            mean_axes.append(len(split_shape) - 1)
        else:
            split_shape.append(n)
    out = Tensor(x.data.reshape(split_shape).mean(axis=tuple(mean_axes)))
    scale = 1.0 / factor ** len(axes)

    def _bw():
        if x.requires_grad:
            g = out.grad
            expanded = np.empty(split_shape, dtype=np.float32)
            gx = g.reshape(
                [1 if i in mean_axes else split_shape[i] for i in range(len(split_shape))]
            )
            np.copyto(expanded, gx)
            x.accumulate_grad(expanded.reshape(x.shape) * scale)

    return T._attach(out, (x,), _bw)


def nn_upsample(x, axes, factor: int = 2) -> Tensor:
    """Nearest-neighbor upsample by ``factor`` along each axis in ``axes``."""
    x = T._as_tensor(x)
    axes = tuple(a % x.ndim for a in axes)
    y = x.data
    for a in axes:
        y = np.repeat(y, factor, axis=a)
    out = Tensor(y)

    def _bw():
        if x.requires_grad:
            g = out.grad
            split_shape = []
            sum_axes = []
            for i, n in enumerate(x.shape):
                if i in axes:
                    split_shape.extend((n, factor))
                    sum_axes.append(len(split_shape) - 1)
                else:
                    split_shape.append(n)
            x.accumulate_grad(g.reshape(split_shape).sum(axis=tuple(sum_axes)))

    return T._attach(out, (x,), _bw)


def instance_norm(x, spatial_axes, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    """Normalize to zero mean / unit variance over ``spatial_axes``.

    Statistics are per remaining index (instance and channel); there are
    no learned affine parameters.
    """
    x = T._as_tensor(x)
    if x.ndim < 2:
        raise ValueError("instance_norm: input must have rank >= 2")
    ax = tuple(a % x.ndim for a in spatial_axes)
    mu = x.data.mean(axis=ax, keepdims=True)
    var = x.data.var(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (x.data - mu) * inv
    out = Tensor(xhat)

    def _bw():
        if x.requires_grad:
            g = out.grad
            gm = g.mean(axis=ax, keepdims=True)
            ghm = (g * xhat).mean(axis=ax, keepdims=True)
            x.accumulate_grad(inv * (g - gm - xhat * ghm))

    return T._attach(out, (x,), _bw)


# ---------------------------------------------------------------------------
# parameter initialization and spectral normalization state
# ---------------------------------------------------------------------------

def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, scale: float = 1.0):
    bound = scale * math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    return v / (np.linalg.norm(v) + SPECTRAL_NORM_EPS)


def power_iteration_step(w2d: np.ndarray, u: np.ndarray):
    """One spectral-norm power-iteration update; returns new ``(u, v)``."""
    v = _l2_normalize(w2d.T @ u)
    u = _l2_normalize(w2d @ v)
    return u.astype(np.float32), v.astype(np.float32)


class _ParamLayer:
    """Common plumbing: weight/bias tensors plus spectral-norm state."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray,
                 rng: np.random.Generator, spectral_norm: bool):
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)
        self.spectral_norm = spectral_norm
        out_ch = weight.shape[0]
        w2d = weight.reshape(out_ch, -1)
        self.u = _l2_normalize(
            rng.standard_normal(out_ch).astype(np.float32)
        ).astype(np.float32)
        self.v = _l2_normalize(w2d.T @ self.u).astype(np.float32)

    def effective_weight(self, train: bool) -> Tensor:
        """Normalized weight view; updates ``u``/``v`` only when training."""
        if not self.spectral_norm:
            return self.weight
        if train:
            w2d = self.weight.data.reshape(self.weight.shape[0], -1)
            self.u, self.v = power_iteration_step(w2d, self.u)
        sigma = T.sn_sigma(self.weight, self.u, self.v)
        return T.div(self.weight, T.add(sigma, Tensor(np.float32(SPECTRAL_NORM_EPS))))

    def parameters(self) -> list:
        return [self.weight, self.bias]

    def state_arrays(self) -> dict:
        return {"weight": self.weight.data, "bias": self.bias.data,
                "u": self.u, "v": self.v}

    def load_state(self, arrays: dict) -> None:
        self.weight.data = np.ascontiguousarray(arrays["weight"], dtype=np.float32)
        self.bias.data = np.ascontiguousarray(arrays["bias"], dtype=np.float32)
        self.u = np.ascontiguousarray(arrays["u"], dtype=np.float32)
        self.v = np.ascontiguousarray(arrays["v"], dtype=np.float32)

    def set_trainable(self, flag: bool) -> None:
        self.weight.requires_grad = flag
        self.bias.requires_grad = flag


class Conv1d(_ParamLayer):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, *,
                 kernel: int = 3, spectral_norm: bool = True, init_scale: float = 1.0):
        fan_in = in_ch * kernel
        w = kaiming_uniform(rng, (out_ch, in_ch, kernel), fan_in, init_scale)
        b = np.zeros(out_ch, dtype=np.float32)
        super().__init__(w, b, rng, spectral_norm)

    def __call__(self, x, train: bool = False) -> Tensor:
        return conv1d(x, self.effective_weight(train), self.bias)


class Conv3d(_ParamLayer):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, *,
                 kernel: int = 3, spectral_norm: bool = True, init_scale: float = 1.0):
        fan_in = in_ch * kernel ** 3
        w = kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel, kernel),
                            fan_in, init_scale)
        b = np.zeros(out_ch, dtype=np.float32)
        super().__init__(w, b, rng, spectral_norm)

    def __call__(self, x, train: bool = False) -> Tensor:
        return conv3d(x, self.effective_weight(train), self.bias)


class Linear(_ParamLayer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, *,
                 spectral_norm: bool = False, init_scale: float = 1.0):
        w = kaiming_uniform(rng, (out_features, in_features), in_features, init_scale)
        b = np.zeros(out_features, dtype=np.float32)
        super().__init__(w, b, rng, spectral_norm)

    def __call__(self, x, train: bool = False) -> Tensor:
        return T.linear(x, self.effective_weight(train), self.bias)
