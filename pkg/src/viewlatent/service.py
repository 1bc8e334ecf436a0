"""HTTP exploration service over a trained run directory.

Endpoints:
  GET  /meta         parameter names/ranges, image extents, normalization
  POST /infer        {"params": [...]} -> fused-volume handle + stats
  POST /render       {"params", "camera"?, "tf"?} -> PNG bytes
  POST /sensitivity  {"params", "index", "n"?} -> curve rows + CSV

The session (manifest + three codec/predictor pairs) is loaded once at
startup and never mutated; request handling is read-only and bounded by
a semaphore sized to the CPU count. Responses carry provenance
(checkpoint ids, config hash, out-of-range flags). Malformed bodies
yield 400 with a JSON error; inference failures yield 500 with a
diagnostic id.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .fusion import fuse_to_grid, sensitivity
from .ensemble import save_volume
from .pipeline import (DIAGONAL_VIEWPOINT, PipelineConfig, Session,
                       _camera_from_dict)
from .render import TransferFunction, default_transfer_function, render

logger = logging.getLogger(__name__)


class InferRequest(BaseModel):
    params: list[float]


class RenderRequest(BaseModel):
    params: list[float]
    camera: dict | None = None
    tf: dict | None = None


class SensitivityRequest(BaseModel):
    params: list[float]
    index: int
    n: int = Field(default=5, ge=2)


def _check_param_count(session: Session, values: list[float]) -> None:
    expected = len(session.manifest.param_space().values)
    if len(values) != expected:
        raise ValueError(f"expected {expected} parameters, got {len(values)}")


def create_app(run_dir, frontend_dir=None, max_concurrency: int | None = None) -> FastAPI:
    cfg_path = Path(run_dir) / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"run config not found: {cfg_path}")
    cfg = PipelineConfig.load(cfg_path)
    cfg.run_dir = str(run_dir)
    session = Session.load(cfg)  # fails fast, naming any absent checkpoint
    bound = max_concurrency or os.cpu_count() or 4
    gate = threading.Semaphore(bound)

    app = FastAPI(title="viewlatent exploration service")
    app.state.session = session

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": "malformed request body",
                                     "detail": exc.errors()})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def _server_error(request: Request, exc: Exception):
        diagnostic = uuid.uuid4().hex[:12]
        logger.exception("request failed (diagnostic id %s)", diagnostic)
        return JSONResponse(status_code=500,
                            content={"error": str(exc),
                                     "diagnostic_id": diagnostic})

    @app.get("/meta")
    def meta():
        space = session.manifest.param_space()
        return {
            "parameters": [
                {"name": name, "min": lo, "max": hi}
                for name, (lo, hi) in zip(space.names, space.ranges)
            ],
            "image_extents": [cfg.render_width, cfg.render_height],
            "volume_extents": list(cfg.extents),
            "normalization": {"value_min": session.manifest.value_min,
                              "value_max": session.manifest.value_max},
            "config_hash": cfg.config_hash(),
            "checkpoints": {
                **{f"codec_{a}": session.codecs[a][1]["id"] for a in cfg.axes},
                **{f"predictor_{a}": session.predictors[a][1]["id"]
                   for a in cfg.axes},
            },
        }

    @app.post("/infer")
    def infer(req: InferRequest):
        with gate:
            _check_param_count(session, req.params)
            params = session.params_from_values(req.params)
            fused = fuse_to_grid(session.predict_views(params),
                                 DIAGONAL_VIEWPOINT, cfg.extents)
            handle = hashlib.sha256(
                json.dumps(req.params).encode()).hexdigest()[:16]
            out_dir = cfg.root / "outputs" / "service"
            out_dir.mkdir(parents=True, exist_ok=True)
            save_volume(out_dir / handle, fused)
            return {
                "handle": handle,
                "path": str(out_dir / handle),
                "stats": {
                    "min": float(fused.values.min()),
                    "max": float(fused.values.max()),
                    "mean": float(fused.values.mean()),
                },
                "provenance": session.provenance(params),
            }

    @app.post("/render")
    def render_endpoint(req: RenderRequest):
        with gate:
            _check_param_count(session, req.params)
            params = session.params_from_values(req.params)
            cam = _camera_from_dict(cfg, req.camera)
            tfn = (TransferFunction.from_dict(req.tf) if req.tf
                   else default_transfer_function())
            sampler = session.fused_sampler(params, cam.viewpoint())
            image = render(sampler, cam, tfn, step=cfg.render_step)
            provenance = session.provenance(params)
            return Response(
                content=image.to_png_bytes(), media_type="image/png",
                headers={"X-Viewlatent-Provenance": json.dumps(provenance)},
            )

    @app.post("/sensitivity")
    def sensitivity_endpoint(req: SensitivityRequest):
        with gate:
            _check_param_count(session, req.params)
            params = session.params_from_values(req.params)
            curve = sensitivity(params, req.index, req.n,
                                session.sensitivity_pairs())
            return {
                "parameter": curve.param_name,
                "index": curve.param_index,
                "rows": curve.to_rows(),
                "csv": curve.to_csv(),
                "provenance": session.provenance(params),
            }

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="frontend")

    return app
