"""Shared oracles and fixtures.

The finite-difference helpers here are the independent check the
autodiff engine is verified against throughout the suite: central
differences of a scalar-valued closure, compared by max-normalized
maximum error.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from viewlatent.autoencoder import RayCodecConfig
from viewlatent.pipeline import (PipelineConfig, stage_encode_latents,
                                 stage_gen_ensemble, stage_train_predictor,
                                 stage_train_rae)
from viewlatent.predictor import PredictorConfig


def fd_gradient(fn, arr: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` w.r.t. ``arr`` in place."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    """Maximum absolute error normalized by the oracle's largest entry."""
    denom = max(float(np.max(np.abs(want))), 1e-6)
    return float(np.max(np.abs(np.asarray(got, dtype=np.float64) - want))) / denom


def tiny_pipeline_config(run_dir) -> PipelineConfig:
    """A seconds-scale pipeline: 6 members at 32^3, short training."""
    return PipelineConfig(
        run_dir=str(run_dir),
        seed=11,
        n_members=6,
        extents=(32, 32, 32),
        codec=RayCodecConfig(hidden_channels=4, latent_channels=2, stages=3,
                             batch_rays=512, learning_rate=2e-3, epochs=4,
                             rays_per_epoch=1024, seed=1),
        predictor=PredictorConfig(channel_factor=2, image_up_stages=2,
                                  depth_up_stages=1, learning_rate=2e-3,
                                  epochs=6, seed=2),
        render_width=48,
        render_height=48,
    )


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A fully trained tiny run directory shared by pipeline/service tests."""
    run_dir = tmp_path_factory.mktemp("tiny_run")
    cfg = tiny_pipeline_config(run_dir)
    stage_gen_ensemble(cfg)
    stage_train_rae(cfg)
    stage_encode_latents(cfg)
    stage_train_predictor(cfg)
    return cfg


def clone_config(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    return dataclasses.replace(cfg, **overrides)
