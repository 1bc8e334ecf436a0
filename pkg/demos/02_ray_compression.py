"""Compress per-pixel rays with the ray autoencoder.

A volume viewed along one axis is a bundle of W*H rays of length L.
The autoencoder squeezes each ray into a (L/16) x 3 latent code -- a
5.3x reduction -- and reconstructs it. Training uses the
histogram-weighted L1 loss, which up-weights rare values (the bright
structure) so they are not sacrificed for the abundant background.

Run:  python3 demos/02_ray_compression.py   (about a minute)
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from viewlatent import (RayCodecConfig, SimParams, ViewConfig, extract_rays,
                        normalize, psnr, sample_view, simulate)
from viewlatent.autoencoder import train_on_rays

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

EXTENT = 64
vol = simulate(SimParams((1.6, 0.35, 0.45, 0.2)), (EXTENT,) * 3)
nvol = normalize(vol, vol.value_min, vol.value_max)
view = ViewConfig(axis=2, width=EXTENT, height=EXTENT, ray_length=EXTENT)
rays = extract_rays(sample_view(nvol, view))
print(f"{rays.shape[0]} rays of length {EXTENT}")

config = RayCodecConfig(hidden_channels=8, latent_channels=3, stages=4,
                        batch_rays=1024, learning_rate=3e-3,
                        final_learning_rate=2e-4, epochs=80,
                        rays_per_epoch=2048, histogram_eps=0.02, seed=0)
lat_len, lat_ch = config.latent_extents(EXTENT)
print(f"latent per ray: {lat_len} x {lat_ch} "
      f"({EXTENT / (lat_len * lat_ch):.1f}x compression)")

model, history = train_on_rays(rays, EXTENT, config)
losses = [h["loss"] for h in history]
print(f"weighted-L1 loss: {losses[0]:.4f} -> {losses[-1]:.4f}")

recon = model.decode(model.encode(rays))
print(f"reconstruction PSNR over all rays: {psnr(recon, rays, 2.0):.1f} dB")

fig, axes = plt.subplots(2, 3, figsize=(12, 6))
picks = [1057, 2080, 3111]
for col, k in enumerate(picks):
    axes[0, col].plot(rays[k, 0], label="original", lw=2)
    axes[0, col].plot(recon[k, 0], label="reconstructed", lw=1)
    axes[0, col].set_title(f"ray {k}")
    axes[0, col].legend()
latent = model.encode(rays[picks])
for col in range(3):
    axes[1, col].imshow(latent[col].T, aspect="auto", cmap="coolwarm",
                        vmin=-1, vmax=1)
    axes[1, col].set_ylabel("latent channel")
    axes[1, col].set_xlabel("latent position")
fig.suptitle("rays, reconstructions, and their latent codes")
fig.tight_layout()
fig.savefig(OUT / "02_ray_reconstructions.png", dpi=110)
print(f"wrote {OUT / '02_ray_reconstructions.png'}")

fig, ax = plt.subplots(figsize=(5, 3))
ax.plot(losses)
ax.set_xlabel("epoch")
ax.set_ylabel("weighted L1")
ax.set_title("training loss")
fig.tight_layout()
fig.savefig(OUT / "02_training_loss.png", dpi=110)
print(f"wrote {OUT / '02_training_loss.png'}")
