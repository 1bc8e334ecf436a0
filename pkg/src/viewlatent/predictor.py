"""Latent predictor: simulation parameters -> per-view ray-latent field.

A fully-connected lift maps the (range-normalized) parameter vector to
a small channels-first seed tensor, which residual 3D upsampling blocks
grow to the latent-field extents. Image axes double in every block;
the depth axis doubles only in the first ``depth_up_stages`` blocks,
since the latent depth is already a fraction of the image resolution.
Channel counts halve per block down to a floor of ``channel_factor``.

Supervision is the plain mean-L1 against ray-codec-encoded latent
fields; the predictor never sees raw volumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .autoencoder import RayLatentField, TrainingDiverged
from .checkpoint import (file_digest, load_sidecar, load_tensors, save_sidecar,
                         save_tensors)
from .ensemble import SimParams
from .layers import Conv3d, Linear, instance_norm, nn_upsample
from .optim import Adam
from .tensor import Tensor
from .viewsample import ViewConfig

logger = logging.getLogger(__name__)


@dataclass
class PredictorConfig:
    """Hyperparameters for the parameter-to-latent predictor."""

    channel_factor: int = 64         # seed has 16x this many channels
    image_up_stages: int = 6         # x2 blocks applied to both image axes
    depth_up_stages: int = 3         # how many of those also double the depth axis
    learning_rate: float = 5e-5
    final_learning_rate: float | None = None   # cosine decay target, if set
    epochs: int = 50
    seed: int = 0

    def seed_extents(self, width: int, height: int, latent_len: int) -> tuple:
        a, b = self.image_up_stages, self.depth_up_stages
        if b > a:
            raise ValueError("depth_up_stages cannot exceed image_up_stages")
        if width % (1 << a) or height % (1 << a):
            raise ValueError(
                f"image extents {width}x{height} not divisible by 2^{a}"
            )
        if latent_len % (1 << b):
            raise ValueError(
                f"latent length {latent_len} not divisible by 2^{b}"
            )
        return (width >> a, height >> a, latent_len >> b, 16 * self.channel_factor)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        return cls(**d)


class _UpBlock3d:
    """conv-norm-relu x2 then nearest-neighbor x2 upsample, with skip."""

    def __init__(self, in_ch: int, out_ch: int, up_depth: bool,
                 rng: np.random.Generator):
        self.conv1 = Conv3d(in_ch, out_ch, rng)
        self.conv2 = Conv3d(out_ch, out_ch, rng)
        self.skip = Conv3d(in_ch, out_ch, rng, kernel=1) if in_ch != out_ch else None
        self.up_axes = (1, 2, 3) if up_depth else (1, 2)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        h = T.relu(instance_norm(self.conv1(x, train), (1, 2, 3)))
        h = T.relu(instance_norm(self.conv2(h, train), (1, 2, 3)))
        h = nn_upsample(h, self.up_axes)
        s = self.skip(x, train) if self.skip is not None else x
        s = nn_upsample(s, self.up_axes)
        return T.add(h, s)

    def layers(self):
        out = [self.conv1, self.conv2]
        if self.skip is not None:
            out.append(self.skip)
        return out


class LatentPredictor:
    """Maps a parameter vector to a latent field (W, H, L/s, t)."""

    def __init__(self, config: PredictorConfig, param_space: SimParams,
                 view: ViewConfig, latent_len: int, latent_channels: int,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.config = config
        self.param_space = param_space
        self.view = view
        self.latent_len = latent_len
        self.latent_channels = latent_channels
        w0, h0, l0, c0 = config.seed_extents(view.width, view.height, latent_len)
        self.seed_shape = (c0, w0, h0, l0)
        d = len(param_space.values)
        self.fc = Linear(d, c0 * w0 * h0 * l0, rng)

        channels = [c0]
        for _ in range(config.image_up_stages):
            channels.append(max(channels[-1] // 2, config.channel_factor))
        self.blocks = [
            _UpBlock3d(channels[i], channels[i + 1],
                       up_depth=i < config.depth_up_stages, rng=rng)
            for i in range(config.image_up_stages)
        ]
        self.proj = Conv3d(channels[-1], latent_channels, rng, init_scale=0.1)

        lows = np.array([r[0] for r in param_space.ranges], dtype=np.float32)
        highs = np.array([r[1] for r in param_space.ranges], dtype=np.float32)
        self._mid = Tensor((lows + highs) / 2.0)
        self._scale = Tensor(2.0 / (highs - lows))

    def _layers(self):
        out = [self.fc]
        for blk in self.blocks:
            out.extend(blk.layers())
        out.append(self.proj)
        return out

    def parameters(self):
        params = []
        for layer in self._layers():
            params.extend(layer.parameters())
        return params

    def set_trainable(self, flag: bool) -> None:
        for layer in self._layers():
            layer.set_trainable(flag)

    def output_extents(self) -> tuple:
        return (self.view.width, self.view.height, self.latent_len,
                self.latent_channels)

    # -- forward ------------------------------------------------------------

    def forward_t(self, raw_params: Tensor, train: bool = False) -> Tensor:
        """Graph forward from a raw parameter vector to (W, H, L/s, t).

        The lift is a plain affine map; activations and normalization
        live inside the residual blocks, whose skip paths preserve the
        seed tensor's signed content.
        """
        x = T.mul(T.sub(raw_params, self._mid), self._scale)
        h = self.fc(x, train)
        h = T.reshape(h, self.seed_shape)
        for blk in self.blocks:
            h = blk(h, train)
        h = T.tanh(self.proj(h, train))
        return T.transpose(h, (1, 2, 3, 0))

    def predict(self, params: SimParams, codec_id: str | None = None) -> RayLatentField:
        """Latent field for one parameter setting (no graph).

        Out-of-range parameters are allowed -- extrapolation is the
        exploration use case -- but logged and flagged in provenance.
        """
        outside = params.out_of_range_names()
        if outside:
            logger.warning("extrapolating outside sampled ranges: %s",
                           ", ".join(outside))
        with T.no_grad():
            field = self.forward_t(Tensor(np.asarray(params.values,
                                                     dtype=np.float32)))
        out = RayLatentField(field.data, self.view, params=params,
                             codec_id=codec_id)
        out.out_of_range = outside
        return out

    # -- persistence ----------------------------------------------------------

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
# training
# ---------------------------------------------------------------------------

def train_predictor(training_fields: list[tuple[SimParams, np.ndarray]],
                    config: PredictorConfig, param_space: SimParams,
                    view: ViewConfig) -> tuple[LatentPredictor, list]:
    """Fit a predictor to (params, latent field) pairs with batch size 1."""
    if not training_fields:
        raise ValueError("no training members for predictor")
    first = training_fields[0][1]
    w, h, latent_len, t = first.shape
    if (w, h) != (view.width, view.height):
        raise ValueError(
            f"latent field extents {(w, h)} != view image extents "
            f"{(view.width, view.height)}"
        )
    rng = np.random.default_rng(config.seed)
    model = LatentPredictor(config, param_space, view, latent_len, t, rng)
    opt = Adam(model.parameters(), lr=config.learning_rate)

    history = []
    snapshot = [p.data.copy() for p in opt.params]
    for epoch in range(config.epochs):
        if config.final_learning_rate is not None and config.epochs > 1:
            phase = epoch / (config.epochs - 1)
            opt.lr = (config.final_learning_rate
                      + (config.learning_rate - config.final_learning_rate)
                      * 0.5 * (1.0 + np.cos(np.pi * phase)))
        order = rng.permutation(len(training_fields))
        losses = []
        for idx in order:
            params, target = training_fields[idx]
            x = Tensor(np.asarray(params.values, dtype=np.float32))
            pred = model.forward_t(x, train=True)
            loss = T.reduce_mean(T.absolute(T.sub(pred, Tensor(target))))
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
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
        logger.debug("predictor epoch %d loss %.5f", epoch, history[-1]["loss"])
    return model, history


def predict_view_data(params: SimParams, predictor: LatentPredictor,
                      predictor_meta: dict, codec, codec_meta: dict):
    """Full per-view inference: predict a latent field, decode it to data space.

    Both checkpoints must be bound to the same view and to each other
    (the predictor records the codec id it was trained against).
    """
    from .autoencoder import decode_field
    from .viewsample import ViewDependentVolume

    if predictor_meta.get("codec_id") != codec_meta.get("id"):
        raise ValueError(
            f"predictor is bound to codec {predictor_meta.get('codec_id')}, "
            f"got {codec_meta.get('id')}"
        )
    if predictor_meta.get("view") != codec_meta.get("view"):
        raise ValueError("predictor and codec are bound to different views")
    field = predictor.predict(params, codec_id=codec_meta.get("id"))
    values = decode_field(field, codec)
    vdv = ViewDependentVolume(values, predictor.view,
                              predictor_meta["value_min"],
                              predictor_meta["value_max"], params=params)
    vdv.out_of_range = getattr(field, "out_of_range", [])
    return vdv


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_predictor_checkpoint(path, model: LatentPredictor, *,
                              codec_id: str, value_min: float, value_max: float,
                              history: list | None = None,
                              config_hash: str | None = None) -> str:
    save_tensors(path, model.state_arrays())
    digest = file_digest(path)
    save_sidecar(path, {
        "kind": "latent-predictor",
        "id": digest,
        "config": model.config.to_dict(),
        "param_space": model.param_space.to_dict(),
        "view": model.view.to_dict(),
        "latent_len": model.latent_len,
        "latent_channels": model.latent_channels,
        "codec_id": codec_id,
        "value_min": value_min,
        "value_max": value_max,
        "history": history or [],
        "config_hash": config_hash,
    })
    return digest


def load_predictor_checkpoint(path) -> tuple[LatentPredictor, dict]:
    meta = load_sidecar(path)
    model = LatentPredictor(
        PredictorConfig.from_dict(meta["config"]),
        SimParams.from_dict(meta["param_space"]),
        ViewConfig.from_dict(meta["view"]),
        meta["latent_len"],
        meta["latent_channels"],
    )
    model.load_state(load_tensors(path))
    model.set_trainable(False)
    return model, meta
