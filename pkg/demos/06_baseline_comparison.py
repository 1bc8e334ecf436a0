"""Compare the surrogate against parameter-space interpolation baselines.

IDW blends the g nearest stored training volumes (Manhattan distance in
normalized parameter space); RBF solves a Gaussian-kernel system with a
leave-one-out-fitted width. Both need the raw training volumes at
prediction time; the surrogate needs only its checkpoints.

Run:  python3 demos/06_baseline_comparison.py
"""

import importlib

import numpy as np

from viewlatent import Session, normalize, psnr, max_difference
from viewlatent.baselines import idw_baseline, rbf_baseline
from viewlatent.fusion import fuse_to_grid
from viewlatent.pipeline import DIAGONAL_VIEWPOINT

demo03 = importlib.import_module("03_parameter_to_volume")

cfg = demo03.ensure_trained()
session = Session.load(cfg)
manifest = session.manifest

rows = []
for member in manifest.split("test"):
    truth = normalize(manifest.load_member(member), manifest.value_min,
                      manifest.value_max)
    candidates = {
        "surrogate": fuse_to_grid(session.predict_views(member.params),
                                  DIAGONAL_VIEWPOINT, cfg.extents),
        "idw(g=3)": normalize(idw_baseline(member.params, manifest, g=3),
                              manifest.value_min, manifest.value_max),
        "rbf": normalize(rbf_baseline(member.params, manifest),
                         manifest.value_min, manifest.value_max),
    }
    rows.append((member.index, {
        name: (psnr(vol.values, truth.values, 2.0),
               max_difference(vol.values, truth.values, 2.0))
        for name, vol in candidates.items()
    }))

print(f"{'member':>6s}  {'surrogate':>18s}  {'idw(g=3)':>18s}  {'rbf':>18s}")
print(f"{'':6s}  {'PSNR dB / MD':>18s}  {'PSNR dB / MD':>18s}  "
      f"{'PSNR dB / MD':>18s}")
for index, metrics in rows:
    cells = [f"{metrics[k][0]:7.2f} / {metrics[k][1]:.4f}"
             for k in ("surrogate", "idw(g=3)", "rbf")]
    print(f"{index:6d}  {cells[0]:>18s}  {cells[1]:>18s}  {cells[2]:>18s}")

mean = {k: np.mean([m[k][0] for _, m in rows])
        for k in ("surrogate", "idw(g=3)", "rbf")}
print("\nmean PSNR:", {k: round(v, 2) for k, v in mean.items()})
