"""Ray autoencoder: 1D residual compression of per-pixel rays.

The encoder lifts a ray to ``hidden_channels`` feature channels, halves
its length through ``stages`` pooling residual blocks, and projects to
``latent_channels`` bounded by tanh; the decoder mirrors it with
nearest-neighbor upsampling. A ray of length L becomes a latent of
extent (L / 2**stages) x latent_channels.

Training minimizes a histogram-weighted L1: per-sample weights are the
normalized inverse frequency of the target value's histogram bin, so
rare-but-important values are not drowned out by the common background.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .checkpoint import (file_digest, load_sidecar, load_tensors, save_sidecar,
                         save_tensors)
from .layers import Conv1d, avg_pool, instance_norm, nn_upsample
from .optim import Adam
from .tensor import Tensor
from .viewsample import ViewConfig, ViewDependentVolume

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; the model keeps the last finite state."""


@dataclass
class RayCodecConfig:
    """Hyperparameters for the ray autoencoder."""

    hidden_channels: int = 64        # channel count of every hidden layer
    latent_channels: int = 3
    stages: int = 4                  # number of x2 pooling stages
    batch_rays: int = 1024
    learning_rate: float = 5e-5
    final_learning_rate: float | None = None   # cosine decay target, if set
    epochs: int = 20
    histogram_bins: int = 32
    histogram_eps: float = 1e-3
    global_histogram: bool = False
    rays_per_epoch: int | None = None   # optional subsample for fast training
    shift_augment: int = 0              # max |ray shift| (edge-padded) per batch
    seed: int = 0

    @property
    def reduction(self) -> int:
        return 2 ** self.stages

    def latent_extents(self, ray_length: int) -> tuple:
        return (ray_length // self.reduction, self.latent_channels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RayCodecConfig":
        return cls(**d)


@dataclass
class RayLatentField:
    """Grid of per-ray latent codes, W x H x (L/s) x t in [-1, 1]."""

    values: np.ndarray
    view: ViewConfig
    params: object = None
    codec_id: str | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 4:
            raise ValueError(f"latent field must be rank 4, got {self.values.ndim}")


class _ResBlock1d:
    """conv-norm-relu x2, then x2 pool or upsample, plus a resampled skip."""

    def __init__(self, channels: int, rng: np.random.Generator, mode: str):
        self.conv1 = Conv1d(channels, channels, rng)
        self.conv2 = Conv1d(channels, channels, rng)
        self.mode = mode

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        h = T.relu(instance_norm(self.conv1(x, train), (2,)))
        h = T.relu(instance_norm(self.conv2(h, train), (2,)))
        if self.mode == "down":
            h = avg_pool(h, (2,))
            skip = avg_pool(x, (2,))
        else:
            h = nn_upsample(h, (2,))
            skip = nn_upsample(x, (2,))
        return T.add(h, skip)

    def layers(self):
        return [self.conv1, self.conv2]


class RayAutoencoder:
    """Encoder/decoder pair over ray batches of shape (B, 1, L)."""

    def __init__(self, config: RayCodecConfig, ray_length: int,
                 rng: np.random.Generator | None = None):
        if ray_length % config.reduction != 0:
            raise ValueError(
                f"ray length {ray_length} not divisible by reduction "
                f"{config.reduction} (stages={config.stages})"
            )
        if config.latent_channels < 1:
            raise ValueError("latent_channels must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.config = config
        self.ray_length = ray_length
        k = config.hidden_channels
        t = config.latent_channels
        self.lift = Conv1d(1, k, rng)
        self.enc_blocks = [_ResBlock1d(k, rng, "down") for _ in range(config.stages)]
        self.to_latent = Conv1d(k, t, rng)
        self.from_latent = Conv1d(t, k, rng)
        self.dec_blocks = [_ResBlock1d(k, rng, "up") for _ in range(config.stages)]
        self.to_ray = Conv1d(k, 1, rng, init_scale=0.1)

    def _layers(self):
        out = [self.lift]
        for blk in self.enc_blocks:
            out.extend(blk.layers())
        out.append(self.to_latent)
        out.append(self.from_latent)
        for blk in self.dec_blocks:
            out.extend(blk.layers())
        out.append(self.to_ray)
        return out

    def parameters(self):
        params = []
        for layer in self._layers():
            params.extend(layer.parameters())
        return params

    def set_trainable(self, flag: bool) -> None:
        for layer in self._layers():
            layer.set_trainable(flag)

    # -- forward ----------------------------------------------------------

    def encode_t(self, rays: Tensor, train: bool = False) -> Tensor:
        """(B, 1, L) -> latent (B, t, L/s), channels-first, tanh-bounded.

        The lift is a plain convolution: normalization lives inside the
        residual blocks only, so the skip paths keep each ray's absolute
        level (instance norm would strip the per-channel mean).
        """
        if rays.ndim != 3 or rays.shape[2] != self.ray_length:
            raise ValueError(
                f"expected rays (B, 1, {self.ray_length}), got {rays.shape}"
            )
        h = self.lift(rays, train)
        for blk in self.enc_blocks:
            h = blk(h, train)
        return T.tanh(self.to_latent(h, train))

    def decode_t(self, latents: Tensor, train: bool = False) -> Tensor:
        """Latent (B, t, L/s) -> reconstructed rays (B, 1, L)."""
        expected = self.ray_length // self.config.reduction
        if latents.ndim != 3 or latents.shape[1] != self.config.latent_channels \
                or latents.shape[2] != expected:
            raise ValueError(
                f"expected latents (B, {self.config.latent_channels}, {expected}), "
                f"got {latents.shape}"
            )
        h = self.from_latent(latents, train)
        for blk in self.dec_blocks:
            h = blk(h, train)
        return T.tanh(self.to_ray(h, train))

    def encode(self, rays: np.ndarray) -> np.ndarray:
        """(B, 1, L) -> (B, L/s, t) numpy latents (no graph)."""
        with T.no_grad():
            lat = self.encode_t(Tensor(rays))
        return np.ascontiguousarray(lat.data.transpose(0, 2, 1))

    def decode(self, latents: np.ndarray) -> np.ndarray:
        """(B, L/s, t) -> (B, 1, L) numpy rays (no graph)."""
        arr = np.asarray(latents, dtype=np.float32).transpose(0, 2, 1)
        with T.no_grad():
            rec = self.decode_t(Tensor(np.ascontiguousarray(arr)))
        return rec.data

    # -- persistence --------------------------------------------------------

    def state_arrays(self) -> dict:
        state = {}
        for i, layer in enumerate(self._layers()):
            for key, arr in layer.state_arrays().items():
                state[f"layer{i:02d}.{key}"] = arr
        return state

    def load_state(self, arrays: dict) -> None:
        for i, layer in enumerate(self._layers()):
            layer.load_state({
                key: arrays[f"layer{i:02d}.{key}"]
                for key in ("weight", "bias", "u", "v")
            })


# ---------------------------------------------------------------------------
# information-driven weighted L1
# ---------------------------------------------------------------------------

def histogram_weights(target: np.ndarray, bins: int, eps: float,
                      value_range: tuple | None = None) -> np.ndarray:
    """Per-sample inverse-frequency weights, normalized to mean 1.

    The histogram spans the batch min/max of ``target`` unless an
    explicit ``value_range`` is given (global-histogram mode). A
    constant batch collapses to a single occupied bin and unit weights.
    """
    flat = target.reshape(-1)
    lo, hi = value_range if value_range is not None else (flat.min(), flat.max())
    if not hi > lo:
        return np.ones(target.shape, dtype=np.float32)
    idx = ((flat - lo) / (hi - lo) * bins).astype(np.intp)
    np.clip(idx, 0, bins - 1, out=idx)
    counts = np.bincount(idx, minlength=bins)
    freq = counts / flat.size
    w = 1.0 / (freq[idx] + eps)
    w /= w.mean()
    return w.reshape(target.shape).astype(np.float32)


def weighted_l1_loss(pred: Tensor, target: np.ndarray, bins: int = 32,
                     eps: float = 1e-3,
                     value_range: tuple | None = None) -> Tensor:
    """Mean of weight * |pred - target| with histogram weights from the target."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    w = histogram_weights(target, bins, eps, value_range)
    diff = T.absolute(T.sub(pred, Tensor(target)))
    return T.reduce_mean(T.mul(diff, Tensor(w)))


# ---------------------------------------------------------------------------
# training and field encoding
# ---------------------------------------------------------------------------

def _shift_rays(batch: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Shift each ray along its length, repeating the edge value."""
    out = np.empty_like(batch)
    length = batch.shape[2]
    for i, s in enumerate(shifts):
        if s == 0:
            out[i] = batch[i]
        elif s > 0:
            out[i, :, s:] = batch[i, :, :length - s]
            out[i, :, :s] = batch[i, :, :1]
        else:
            out[i, :, :s] = batch[i, :, -s:]
            out[i, :, s:] = batch[i, :, -1:]
    return out


def train_on_rays(rays: np.ndarray, ray_length: int, config: RayCodecConfig,
                  holdout: np.ndarray | None = None) -> tuple:
    """Train an autoencoder on a (N, 1, L) ray set; returns (model, history).

    ``history`` is a list of per-epoch dicts (mean train loss, optional
    holdout L1). With ``shift_augment`` set, each batch ray is randomly
    shifted along its length (edge-padded), teaching the codec the
    translation phases the few training members undersample. A
    non-finite loss restores the last finite parameters and raises
    :class:`TrainingDiverged`.
    """
    rng = np.random.default_rng(config.seed)
    model = RayAutoencoder(config, ray_length, rng)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    n = rays.shape[0]
    global_range = None
    if config.global_histogram:
        global_range = (float(rays.min()), float(rays.max()))

    history = []
    snapshot = [p.data.copy() for p in opt.params]
    for epoch in range(config.epochs):
        if config.final_learning_rate is not None and config.epochs > 1:
            phase = epoch / (config.epochs - 1)
            opt.lr = (config.final_learning_rate
                      + (config.learning_rate - config.final_learning_rate)
                      * 0.5 * (1.0 + np.cos(np.pi * phase)))
        if config.rays_per_epoch is not None and config.rays_per_epoch < n:
            order = rng.choice(n, size=config.rays_per_epoch, replace=False)
        else:
            order = rng.permutation(n)
        losses = []
        for start in range(0, len(order), config.batch_rays):
            batch = rays[order[start:start + config.batch_rays]]
            if config.shift_augment > 0:
                shifts = rng.integers(-config.shift_augment,
                                      config.shift_augment + 1,
                                      size=batch.shape[0])
                batch = _shift_rays(batch, shifts)
            x = Tensor(batch)
            rec = model.decode_t(model.encode_t(x, train=True), train=True)
            loss = weighted_l1_loss(rec, batch, config.histogram_bins,
                                    config.histogram_eps, global_range)
            value = loss.item()
            if not np.isfinite(value):
                for p, saved in zip(opt.params, snapshot):
                    p.data = saved
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; last finite state restored"
                )
            snapshot = [p.data.copy() for p in opt.params]
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if holdout is not None:
            rec = model.decode(model.encode(holdout))
            entry["holdout_l1"] = float(np.mean(np.abs(rec - holdout)))
        history.append(entry)
        logger.debug("rae epoch %d loss %.5f", epoch, entry["loss"])
    return model, history


def encode_field(vdv: ViewDependentVolume, model: RayAutoencoder,
                 value_range: tuple | None = None,
                 codec_id: str | None = None,
                 chunk: int = 4096) -> RayLatentField:
    """Encode every ray of a view-dependent volume into a latent field."""
    if vdv.values.shape[2] != model.ray_length:
        raise ValueError(
            f"view data ray length {vdv.values.shape[2]} != model ray length "
            f"{model.ray_length}"
        )
    if value_range is not None:
        got = (vdv.value_min, vdv.value_max)
        if not np.allclose(got, value_range, rtol=0, atol=1e-12):
            raise ValueError(
                f"normalization mismatch: view data range {got}, "
                f"checkpoint range {tuple(value_range)}"
            )
    w, h, l = vdv.values.shape
    rays = vdv.values.reshape(w * h, 1, l)
    parts = [model.encode(rays[i:i + chunk]) for i in range(0, w * h, chunk)]
    lat = np.concatenate(parts, axis=0)
    field = lat.reshape(w, h, *model.config.latent_extents(l))
    return RayLatentField(field, vdv.config, params=vdv.params, codec_id=codec_id)


def decode_field(field: RayLatentField, model: RayAutoencoder,
                 chunk: int = 4096) -> np.ndarray:
    """Decode a latent field back to view-dependent data (W, H, L)."""
    w, h, ls, t = field.values.shape
    lat = field.values.reshape(w * h, ls, t)
    parts = [model.decode(lat[i:i + chunk]) for i in range(0, w * h, chunk)]
    rays = np.concatenate(parts, axis=0)
    return rays.reshape(w, h, model.ray_length)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_codec_checkpoint(path, model: RayAutoencoder, *, view: ViewConfig,
                          value_min: float, value_max: float,
                          history: list | None = None,
                          config_hash: str | None = None) -> str:
    """Write weights + sidecar; returns the checkpoint digest id."""
    save_tensors(path, model.state_arrays())
    digest = file_digest(path)
    save_sidecar(path, {
        "kind": "ray-codec",
        "id": digest,
        "config": model.config.to_dict(),
        "ray_length": model.ray_length,
        "view": view.to_dict(),
        "value_min": value_min,
        "value_max": value_max,
        "history": history or [],
        "config_hash": config_hash,
    })
    return digest


def load_codec_checkpoint(path) -> tuple[RayAutoencoder, dict]:
    meta = load_sidecar(path)
    config = RayCodecConfig.from_dict(meta["config"])
    model = RayAutoencoder(config, meta["ray_length"])
    model.load_state(load_tensors(path))
    model.set_trainable(False)
    return model, meta
