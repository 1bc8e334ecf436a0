"""Pipeline configuration and stage orchestration over a run directory.

Each stage is idempotent given the same config and seed, writes its
artifacts under the run directory, and drops a machine-readable summary
JSON. Artifacts record the hash of the config that produced them;
evaluation refuses to mix artifacts from different configs unless
forced.

Run directory layout::

    run/
      config.json
      ensemble/manifest.json, member_###.{json,raw}
      checkpoints/codec_axis#.vdls(.json), predictor_axis#.vdls(.json)
      latents/axis#_member###.{json,raw}
      outputs/..., summaries/<stage>.json
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoencoder import (RayCodecConfig, RayLatentField, decode_field,
                          encode_field, load_codec_checkpoint,
                          save_codec_checkpoint, train_on_rays)
from .baselines import idw_baseline, rbf_baseline
from .ensemble import (DEFAULT_PARAM_NAMES, DEFAULT_PARAM_RANGES,
                       EnsembleManifest, SimParams, Volume, build_ensemble,
                       load_array, normalize, save_array, save_volume)
from .fusion import FusedFieldSampler, fuse_to_grid, sensitivity
from .metrics import (difference_image, emd_color_hist, max_difference, psnr,
                      ssim)
from .predictor import (PredictorConfig, load_predictor_checkpoint,
                        save_predictor_checkpoint, train_predictor)
from .render import Camera, TransferFunction, default_transfer_function, render
from .viewsample import ViewConfig, extract_rays, sample_view

logger = logging.getLogger(__name__)

DIAGONAL_VIEWPOINT = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
DEFAULT_EVAL_G = 3


class ConfigError(ValueError):
    """Invalid pipeline configuration; message lists field-level problems."""


class MissingArtifactError(RuntimeError):
    """An upstream artifact is absent; message names the producing command."""


@dataclass
class PipelineConfig:
    """Everything a full desk-scale run needs.

    The model sub-configs default to paper-scale hyperparameters; the
    pipeline defaults override them to a laptop-sized preset.
    """

    run_dir: str = "run"
    seed: int = 0
    n_members: int = 20
    extents: tuple = (64, 64, 64)
    test_fraction: float = 0.2
    rae_fraction: float = 0.2
    param_names: tuple = DEFAULT_PARAM_NAMES
    param_ranges: tuple = DEFAULT_PARAM_RANGES
    image_width: int | None = None      # None: match the volume plane (identity)
    image_height: int | None = None
    axes: tuple = (0, 1, 2)
    codec: RayCodecConfig = field(default_factory=lambda: RayCodecConfig(
        hidden_channels=8, epochs=30, learning_rate=2e-3, rays_per_epoch=4096))
    predictor: PredictorConfig = field(default_factory=lambda: PredictorConfig(
        channel_factor=4, image_up_stages=3, depth_up_stages=1,
        epochs=60, learning_rate=2e-3))
    render_width: int = 256
    render_height: int = 256
    render_step: float | None = None

    # -- structure ----------------------------------------------------------

    @property
    def root(self) -> Path:
        return Path(self.run_dir)

    def view_config(self, axis: int) -> ViewConfig:
        d1, d2 = [d for d in (0, 1, 2) if d != axis]
        return ViewConfig(
            axis=axis,
            width=self.image_width or self.extents[d1],
            height=self.image_height or self.extents[d2],
            ray_length=self.extents[axis],
        )

    def validate(self) -> None:
        problems = []
        if self.n_members < 3:
            problems.append(f"n_members: need >= 3, got {self.n_members}")
        if len(self.extents) != 3 or min(self.extents) < 1:
            problems.append(f"extents: bad {self.extents}")
        for axis in self.axes:
            if axis not in (0, 1, 2):
                problems.append(f"axes: invalid axis {axis}")
                continue
            try:
                view = self.view_config(axis)
            except ValueError as exc:
                problems.append(f"view axis {axis}: {exc}")
                continue
            if view.ray_length % self.codec.reduction:
                problems.append(
                    f"codec.stages: ray length {view.ray_length} (axis {axis}) "
                    f"not divisible by 2^{self.codec.stages}"
                )
                continue
            latent_len = view.ray_length // self.codec.reduction
            try:
                self.predictor.seed_extents(view.width, view.height, latent_len)
            except ValueError as exc:
                problems.append(f"predictor (axis {axis}): {exc}")
        if problems:
            raise ConfigError("; ".join(problems))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["extents"] = list(self.extents)
        d["axes"] = list(self.axes)
        d["param_names"] = list(self.param_names)
        d["param_ranges"] = [list(r) for r in self.param_ranges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "codec" in d:
            d["codec"] = RayCodecConfig.from_dict(d["codec"])
        if "predictor" in d:
            d["predictor"] = PredictorConfig.from_dict(d["predictor"])
        for key in ("extents", "axes", "param_names"):
            if key in d:
                d[key] = tuple(d[key])
        if "param_ranges" in d:
            d["param_ranges"] = tuple(tuple(r) for r in d["param_ranges"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _derived_seed(base: int, stage: str, axis: int = 0) -> int:
    digest = hashlib.sha256(f"{base}:{stage}:{axis}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _write_summary(cfg: PipelineConfig, stage: str, payload: dict) -> None:
    out = cfg.root / "summaries"
    out.mkdir(parents=True, exist_ok=True)
    payload = {"stage": stage, "config_hash": cfg.config_hash(),
               "elapsed_s": payload.pop("elapsed_s", None), **payload}
    (out / f"{stage}.json").write_text(json.dumps(payload, indent=2))


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run `viewlatent {producer}` first"
        )
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_gen_ensemble(cfg: PipelineConfig) -> EnsembleManifest:
    cfg.validate()
    started = time.time()
    cfg.root.mkdir(parents=True, exist_ok=True)
    cfg.save(cfg.root / "config.json")
    manifest = build_ensemble(
        cfg.n_members, cfg.seed, cfg.extents, cfg.root / "ensemble",
        param_names=cfg.param_names, param_ranges=cfg.param_ranges,
        test_fraction=cfg.test_fraction, rae_fraction=cfg.rae_fraction,
        config_hash=cfg.config_hash(),
    )
    _write_summary(cfg, "gen-ensemble", {
        "elapsed_s": time.time() - started,
        "members": len(manifest.members),
        "splits": {s: len(manifest.split(s)) for s in
                   ("rae-train", "predictor-train", "test")},
        "value_min": manifest.value_min,
        "value_max": manifest.value_max,
        "manifest": str(cfg.root / "ensemble" / "manifest.json"),
    })
    return manifest


def _load_manifest(cfg: PipelineConfig) -> EnsembleManifest:
    path = _require(cfg.root / "ensemble" / "manifest.json", "gen-ensemble")
    return EnsembleManifest.load(path)


def _member_view(manifest: EnsembleManifest, member, view: ViewConfig):
    vol = normalize(manifest.load_member(member), manifest.value_min,
                    manifest.value_max)
    return sample_view(vol, view)


def codec_path(cfg: PipelineConfig, axis: int) -> Path:
    return cfg.root / "checkpoints" / f"codec_axis{axis}.vdls"


def predictor_path(cfg: PipelineConfig, axis: int) -> Path:
    return cfg.root / "checkpoints" / f"predictor_axis{axis}.vdls"


def stage_train_rae(cfg: PipelineConfig, axes=None) -> dict:
    cfg.validate()
    started = time.time()
    manifest = _load_manifest(cfg)
    (cfg.root / "checkpoints").mkdir(parents=True, exist_ok=True)
    axes = cfg.axes if axes is None else axes
    results = {}
    for axis in axes:
        view = cfg.view_config(axis)
        rays = np.concatenate([
            extract_rays(_member_view(manifest, m, view))
            for m in manifest.split("rae-train")
        ])
        codec_cfg = dataclasses.replace(
            cfg.codec, seed=_derived_seed(cfg.seed, "rae", axis))
        model, history = train_on_rays(rays, view.ray_length, codec_cfg)
        path = codec_path(cfg, axis)
        digest = save_codec_checkpoint(
            path, model, view=view, value_min=manifest.value_min,
            value_max=manifest.value_max, history=history,
            config_hash=cfg.config_hash())
        results[axis] = {"path": str(path), "id": digest,
                         "final_loss": history[-1]["loss"]}
        logger.info("trained ray codec axis %d: loss %.5f", axis,
                    history[-1]["loss"])
    _write_summary(cfg, "train-rae", {
        "elapsed_s": time.time() - started,
        "axes": {str(k): v for k, v in results.items()},
    })
    return results


def _load_codec(cfg: PipelineConfig, axis: int):
    path = _require(codec_path(cfg, axis), "train-rae")
    return load_codec_checkpoint(path)


def _load_predictor(cfg: PipelineConfig, axis: int):
    path = _require(predictor_path(cfg, axis), "train-predictor")
    return load_predictor_checkpoint(path)


def latent_path(cfg: PipelineConfig, axis: int, member_index: int) -> Path:
    return cfg.root / "latents" / f"axis{axis}_member{member_index:03d}"


def stage_encode_latents(cfg: PipelineConfig, axes=None) -> dict:
    cfg.validate()
    started = time.time()
    manifest = _load_manifest(cfg)
    (cfg.root / "latents").mkdir(parents=True, exist_ok=True)
    axes = cfg.axes if axes is None else axes
    count = 0
    results = {}
    for axis in axes:
        model, meta = _load_codec(cfg, axis)
        view = ViewConfig.from_dict(meta["view"])
        paths = []
        for member in manifest.split("predictor-train"):
            vdv = _member_view(manifest, member, view)
            fieldv = encode_field(vdv, model,
                                  value_range=(meta["value_min"], meta["value_max"]),
                                  codec_id=meta["id"])
            base = latent_path(cfg, axis, member.index)
            save_array(base, fieldv.values, {
                "view": view.to_dict(),
                "params": member.params.to_dict(),
                "codec_id": meta["id"],
                "member_index": member.index,
                "config_hash": cfg.config_hash(),
            })
            paths.append(str(base))
            count += 1
        results[axis] = paths
    _write_summary(cfg, "encode-latents", {
        "elapsed_s": time.time() - started, "fields_written": count,
    })
    return results


def stage_train_predictor(cfg: PipelineConfig, axes=None) -> dict:
    cfg.validate()
    started = time.time()
    manifest = _load_manifest(cfg)
    axes = cfg.axes if axes is None else axes
    results = {}
    for axis in axes:
        _, codec_meta = _load_codec(cfg, axis)
        view = ViewConfig.from_dict(codec_meta["view"])
        fields = []
        for member in manifest.split("predictor-train"):
            base = latent_path(cfg, axis, member.index)
            _require(Path(str(base) + ".json"), "encode-latents")
            values, header = load_array(base)
            if header.get("codec_id") != codec_meta["id"]:
                raise MissingArtifactError(
                    f"latent field {base} was encoded by codec "
                    f"{header.get('codec_id')}, current is {codec_meta['id']}; "
                    "run `viewlatent encode-latents` again"
                )
            fields.append((member.params, values))
        pred_cfg = dataclasses.replace(
            cfg.predictor, seed=_derived_seed(cfg.seed, "predictor", axis))
        model, history = train_predictor(fields, pred_cfg,
                                         manifest.param_space(), view)
        path = predictor_path(cfg, axis)
        digest = save_predictor_checkpoint(
            path, model, codec_id=codec_meta["id"],
            value_min=manifest.value_min, value_max=manifest.value_max,
            history=history, config_hash=cfg.config_hash())
        results[axis] = {"path": str(path), "id": digest,
                         "final_loss": history[-1]["loss"]}
        logger.info("trained predictor axis %d: loss %.5f", axis,
                    history[-1]["loss"])
    _write_summary(cfg, "train-predictor", {
        "elapsed_s": time.time() - started,
        "axes": {str(k): v for k, v in results.items()},
    })
    return results


# ---------------------------------------------------------------------------
# loaded session (inference-side bundle)
# ---------------------------------------------------------------------------

@dataclass
class Session:
    """Immutable bundle of manifest plus per-axis codec/predictor pairs."""

    cfg: PipelineConfig
    manifest: EnsembleManifest
    codecs: dict
    predictors: dict

    @classmethod
    def load(cls, cfg: PipelineConfig) -> "Session":
        manifest = _load_manifest(cfg)
        codecs = {}
        predictors = {}
        for axis in cfg.axes:
            codecs[axis] = _load_codec(cfg, axis)
            predictors[axis] = _load_predictor(cfg, axis)
            pred_meta = predictors[axis][1]
            codec_meta = codecs[axis][1]
            if pred_meta["codec_id"] != codec_meta["id"]:
                raise MissingArtifactError(
                    f"axis {axis}: predictor bound to codec "
                    f"{pred_meta['codec_id']} but checkpoint is "
                    f"{codec_meta['id']}; retrain with `viewlatent train-predictor`"
                )
            for meta in (pred_meta, codec_meta):
                if (meta["value_min"], meta["value_max"]) != (
                        manifest.value_min, manifest.value_max):
                    raise MissingArtifactError(
                        f"axis {axis}: checkpoint normalization differs from "
                        "manifest; regenerate artifacts"
                    )
        return cls(cfg, manifest, codecs, predictors)

    def params_from_values(self, values) -> SimParams:
        space = self.manifest.param_space()
        return SimParams(tuple(values), space.names, space.ranges)

    def predict_views(self, params: SimParams) -> list:
        from .predictor import predict_view_data

        views = []
        for axis in self.cfg.axes:
            predictor, pred_meta = self.predictors[axis]
            codec, codec_meta = self.codecs[axis]
            views.append(predict_view_data(params, predictor, pred_meta,
                                           codec, codec_meta))
        return views

    def fused_sampler(self, params: SimParams, viewpoint) -> FusedFieldSampler:
        sampler = FusedFieldSampler(self.predict_views(params), viewpoint)
        sampler.tf_domain = (-1.0, 1.0)
        return sampler

    def provenance(self, params: SimParams) -> dict:
        return {
            "config_hash": self.cfg.config_hash(),
            "codec_ids": {str(a): self.codecs[a][1]["id"] for a in self.cfg.axes},
            "predictor_ids": {str(a): self.predictors[a][1]["id"]
                              for a in self.cfg.axes},
            "out_of_range": params.out_of_range_names(),
        }

    def sensitivity_pairs(self) -> list:
        return [(self.predictors[a][0], self.codecs[a][0]) for a in self.cfg.axes]


def stage_infer(cfg: PipelineConfig, values, out_name: str = "infer") -> dict:
    cfg.validate()
    started = time.time()
    session = Session.load(cfg)
    params = session.params_from_values(values)
    views = session.predict_views(params)
    fused = fuse_to_grid(views, DIAGONAL_VIEWPOINT, cfg.extents)
    out_dir = cfg.root / "outputs" / out_name
    out_dir.mkdir(parents=True, exist_ok=True)
    save_volume(out_dir / "fused", fused)
    from .viewsample import save_view_volume

    for vdv in views:
        save_view_volume(out_dir / f"view_axis{vdv.config.axis}", vdv)
    result = {
        "elapsed_s": time.time() - started,
        "fused": str(out_dir / "fused"),
        "provenance": session.provenance(params),
        "params": list(params.values),
    }
    _write_summary(cfg, "infer", dict(result))
    return result


def _camera_from_dict(cfg: PipelineConfig, d: dict | None) -> Camera:
    if d is not None:
        return Camera.from_dict(d)
    eye = np.array([0.5, 0.5, 0.5]) + 2.2 * DIAGONAL_VIEWPOINT
    return Camera(eye=eye, look_at=np.array([0.5, 0.5, 0.5]),
                  width=cfg.render_width, height=cfg.render_height)


def stage_render(cfg: PipelineConfig, values, camera: dict | None = None,
                 tf: dict | None = None, out_name: str = "render.png") -> dict:
    cfg.validate()
    started = time.time()
    session = Session.load(cfg)
    params = session.params_from_values(values)
    cam = _camera_from_dict(cfg, camera)
    tfn = TransferFunction.from_dict(tf) if tf else default_transfer_function()
    sampler = session.fused_sampler(params, cam.viewpoint())
    image = render(sampler, cam, tfn, step=cfg.render_step)
    out_dir = cfg.root / "outputs"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / out_name
    image.save(out_path)
    result = {
        "elapsed_s": time.time() - started,
        "image": str(out_path),
        "provenance": session.provenance(params),
    }
    _write_summary(cfg, "render", dict(result))
    return result


def stage_sensitivity(cfg: PipelineConfig, values, index: int,
                      n_samples: int = 5,
                      out_name: str | None = None) -> dict:
    cfg.validate()
    started = time.time()
    session = Session.load(cfg)
    params = session.params_from_values(values)
    curve = sensitivity(params, index, n_samples, session.sensitivity_pairs())
    out_dir = cfg.root / "outputs"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / (out_name or f"sensitivity_{curve.param_name}.csv")
    out_path.write_text(curve.to_csv())
    result = {
        "elapsed_s": time.time() - started,
        "csv": str(out_path),
        "parameter": curve.param_name,
        "rows": curve.to_rows(),
    }
    _write_summary(cfg, "sensitivity", dict(result))
    return result


# ---------------------------------------------------------------------------
# evaluation against ground truth and baselines
# ---------------------------------------------------------------------------

def _psnr_entry(a: Volume, b: Volume, value_range: float) -> dict:
    p = psnr(a.values, b.values, value_range)
    return {
        "psnr_db": None if p == float("inf") else p,
        "psnr_infinite": p == float("inf"),
        "md": max_difference(a.values, b.values, value_range),
    }


def stage_evaluate(cfg: PipelineConfig, g_values=(1, 2, 3, 4, 5),
                   force: bool = False, image_metrics: bool = True) -> dict:
    """Data- and image-level comparison on the test split.

    The surrogate prediction is the three predicted views fused at the
    diagonal viewpoint (equal weights); baselines interpolate raw
    training volumes in parameter space.
    """
    cfg.validate()
    started = time.time()
    session = Session.load(cfg)
    manifest = session.manifest
    expect = cfg.config_hash()
    artifacts = [("manifest", manifest.config_hash)]
    for axis in cfg.axes:
        artifacts.append((f"codec axis {axis}",
                          session.codecs[axis][1].get("config_hash")))
        artifacts.append((f"predictor axis {axis}",
                          session.predictors[axis][1].get("config_hash")))
    stale = [name for name, h in artifacts if h != expect]
    if stale and not force:
        raise MissingArtifactError(
            "config hash mismatch for: " + ", ".join(stale)
            + " (rerun the pipeline or pass --force)"
        )

    tfn = default_transfer_function()
    cam = _camera_from_dict(cfg, None)
    value_range = 2.0  # volumes are compared in normalized [-1, 1] space
    report = {"members": [], "config_hash": expect, "forced": bool(stale)}
    for member in manifest.split("test"):
        truth = normalize(manifest.load_member(member), manifest.value_min,
                          manifest.value_max)
        fused = fuse_to_grid(session.predict_views(member.params),
                             DIAGONAL_VIEWPOINT, cfg.extents)
        entry = {
            "member": member.index,
            "params": list(member.params.values),
            "surrogate": _psnr_entry(fused, truth, value_range),
            "baselines": {},
        }
        baseline_volumes = {}
        for g in g_values:
            vol = normalize(idw_baseline(member.params, manifest, g=g),
                            manifest.value_min, manifest.value_max)
            baseline_volumes[f"idw_g{g}"] = vol
            entry["baselines"][f"idw_g{g}"] = _psnr_entry(vol, truth, value_range)
        rbf = normalize(rbf_baseline(member.params, manifest),
                        manifest.value_min, manifest.value_max)
        baseline_volumes["rbf"] = rbf
        entry["baselines"]["rbf"] = _psnr_entry(rbf, truth, value_range)

        if image_metrics:
            truth_img = render(truth, cam, tfn, step=cfg.render_step)
            fused_img = render(fused, cam, tfn, step=cfg.render_step)
            _, flagged = difference_image(truth_img, fused_img)
            entry["surrogate"].update({
                "ssim": ssim(truth_img, fused_img),
                "emd": emd_color_hist(truth_img, fused_img),
                "flagged_fraction": flagged,
            })
            for key in (f"idw_g{DEFAULT_EVAL_G}", "rbf"):
                if key not in baseline_volumes:
                    continue
                img = render(baseline_volumes[key], cam, tfn,
                             step=cfg.render_step)
                _, flagged = difference_image(truth_img, img)
                entry["baselines"][key].update({
                    "ssim": ssim(truth_img, img),
                    "emd": emd_color_hist(truth_img, img),
                    "flagged_fraction": flagged,
                })
        report["members"].append(entry)

    report["elapsed_s"] = time.time() - started
    out_dir = cfg.root / "outputs"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "evaluation.json"
    out_path.write_text(json.dumps(report, indent=2))
    report["path"] = str(out_path)
    _write_summary(cfg, "evaluate", {
        "elapsed_s": report["elapsed_s"], "report": str(out_path),
        "members": len(report["members"]),
    })
    return report
