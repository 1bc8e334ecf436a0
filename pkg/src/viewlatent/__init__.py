"""View-dependent latent surrogate models for ensemble simulation visualization.

The package trains a per-view ray autoencoder and a parameter-to-latent
predictor over a synthetic ensemble, fuses the per-view predictions for
arbitrary viewpoints, renders them with user-specified transfer
functions, and evaluates against parameter-space interpolation
baselines. See ``demos/`` for narrative walkthroughs and ``cli.py`` for
the pipeline driver.
"""

__version__ = "0.1.0"

from .autoencoder import (RayAutoencoder, RayCodecConfig, RayLatentField,
                          encode_field, weighted_l1_loss)
from .ensemble import (EnsembleManifest, SimParams, Volume, build_ensemble,
                       denormalize, normalize, simulate)
from .fusion import (FusedFieldSampler, SensitivityCurve, fuse_to_grid,
                     great_circle, sample_fused, sensitivity, view_weight)
from .metrics import (difference_image, emd_color_hist, max_difference, psnr,
                      sphere_viewpoints, ssim)
from .pipeline import PipelineConfig, Session
from .predictor import LatentPredictor, PredictorConfig, predict_view_data
from .render import Camera, ImageRGB, TransferFunction, render
from .tensor import Tensor, no_grad
from .viewsample import ViewConfig, ViewDependentVolume, extract_rays, sample_view

__all__ = [
    "Camera",
    "EnsembleManifest",
    "FusedFieldSampler",
    "ImageRGB",
    "LatentPredictor",
    "PipelineConfig",
    "PredictorConfig",
    "RayAutoencoder",
    "RayCodecConfig",
    "RayLatentField",
    "SensitivityCurve",
    "Session",
    "SimParams",
    "Tensor",
    "TransferFunction",
    "ViewConfig",
    "ViewDependentVolume",
    "Volume",
    "__version__",
    "build_ensemble",
    "denormalize",
    "difference_image",
    "emd_color_hist",
    "encode_field",
    "extract_rays",
    "fuse_to_grid",
    "great_circle",
    "max_difference",
    "no_grad",
    "normalize",
    "predict_view_data",
    "psnr",
    "render",
    "sample_fused",
    "sample_view",
    "sensitivity",
    "simulate",
    "sphere_viewpoints",
    "ssim",
    "view_weight",
    "weighted_l1_loss",
]
