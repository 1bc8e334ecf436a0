"""Train the full surrogate and predict a volume it never simulated.

Pipeline: generate an ensemble, train one ray codec per axis view,
encode the remaining training members into latent fields, train one
parameter-to-latent predictor per view, then predict at held-out
parameters and compare against the actual simulation.

Run:  python3 demos/03_parameter_to_volume.py   (a few minutes)
Later demos reuse the run directory this one creates (demos/out/run).
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from viewlatent import PipelineConfig, RayCodecConfig, PredictorConfig, \
    Session, normalize, psnr
from viewlatent.fusion import fuse_to_grid
from viewlatent.pipeline import (DIAGONAL_VIEWPOINT, stage_encode_latents,
                                 stage_gen_ensemble, stage_train_predictor,
                                 stage_train_rae)

OUT = pathlib.Path(__file__).parent / "out"
RUN = OUT / "run"


def demo_config() -> PipelineConfig:
    return PipelineConfig(
        run_dir=str(RUN),
        seed=42,
        n_members=20,
        extents=(48, 48, 48),
        codec=RayCodecConfig(hidden_channels=8, latent_channels=3, stages=4,
                             batch_rays=1024, learning_rate=2e-3, epochs=40,
                             rays_per_epoch=4096),
        predictor=PredictorConfig(channel_factor=4, image_up_stages=3,
                                  depth_up_stages=0, learning_rate=2e-3,
                                  epochs=60),
    )


def ensure_trained() -> PipelineConfig:
    cfg = demo_config()
    if (RUN / "checkpoints" / "predictor_axis2.vdls").exists():
        print(f"reusing trained run at {RUN}")
        return cfg
    print("training the surrogate (this is the slow part)...")
    stage_gen_ensemble(cfg)
    stage_train_rae(cfg)
    stage_encode_latents(cfg)
    stage_train_predictor(cfg)
    return cfg


if __name__ == "__main__":
    cfg = ensure_trained()
    session = Session.load(cfg)
    manifest = session.manifest

    member = manifest.split("test")[0]
    print(f"\npredicting held-out member {member.index} "
          f"with params {[round(v, 3) for v in member.params.values]}")
    truth = normalize(manifest.load_member(member), manifest.value_min,
                      manifest.value_max)
    fused = fuse_to_grid(session.predict_views(member.params),
                         DIAGONAL_VIEWPOINT, cfg.extents)
    print(f"prediction PSNR vs simulation: "
          f"{psnr(fused.values, truth.values, 2.0):.1f} dB")

    mid = cfg.extents[2] // 2
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, (img, title) in zip(axes, [
            (truth.values[:, :, mid], "simulated (ground truth)"),
            (fused.values[:, :, mid], "surrogate prediction"),
            (np.abs(truth.values[:, :, mid] - fused.values[:, :, mid]),
             "absolute error")]):
        im = ax.imshow(img.T, origin="lower", cmap="magma")
        ax.set_title(title)
        ax.axis("off")
        fig.colorbar(im, ax=ax, shrink=0.75)
    fig.tight_layout()
    fig.savefig(OUT / "03_prediction_vs_truth.png", dpi=110)
    print(f"wrote {OUT / '03_prediction_vs_truth.png'}")
