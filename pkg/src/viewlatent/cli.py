"""Command-line pipeline driver.

Every subcommand reads the pipeline config (``--config`` JSON file plus
flag overrides), operates on a run directory, and is idempotent for a
fixed config and seed. The ``VIEWLATENT_RUNS`` environment variable
provides a root under which relative run directories are resolved.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline as P
from .pipeline import ConfigError, MissingArtifactError, PipelineConfig

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_MISSING = 3


def _resolve_run_dir(run_dir: str) -> str:
    root = os.environ.get("VIEWLATENT_RUNS")
    if root and not Path(run_dir).is_absolute():
        return str(Path(root) / run_dir)
    return run_dir


def _load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.load(args.config)
    else:
        candidate = Path(_resolve_run_dir(args.run_dir or "run")) / "config.json"
        cfg = PipelineConfig.load(candidate) if candidate.exists() else PipelineConfig()

    if args.run_dir:
        cfg.run_dir = args.run_dir
    cfg.run_dir = _resolve_run_dir(cfg.run_dir)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "members", None) is not None:
        cfg.n_members = args.members
    if getattr(args, "extent", None) is not None:
        cfg.extents = (args.extent,) * 3
    if getattr(args, "image_size", None) is not None:
        cfg.image_width = cfg.image_height = args.image_size

    codec_updates = {}
    for flag, field_name in (("rae_epochs", "epochs"), ("rae_lr", "learning_rate"),
                             ("rae_channels", "hidden_channels"),
                             ("latent_channels", "latent_channels"),
                             ("rae_stages", "stages")):
        value = getattr(args, flag, None)
        if value is not None:
            codec_updates[field_name] = value
    if codec_updates:
        cfg.codec = replace(cfg.codec, **codec_updates)

    pred_updates = {}
    for flag, field_name in (("predictor_epochs", "epochs"),
                             ("predictor_lr", "learning_rate"),
                             ("channel_factor", "channel_factor"),
                             ("image_up", "image_up_stages"),
                             ("depth_up", "depth_up_stages")):
        value = getattr(args, flag, None)
        if value is not None:
            pred_updates[field_name] = value
    if pred_updates:
        cfg.predictor = replace(cfg.predictor, **pred_updates)
    return cfg


def _parse_params(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--params: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="pipeline config JSON file")
    shared.add_argument("--run-dir", help="run directory (artifacts root)")
    shared.add_argument("--seed", type=int, help="master RNG seed")
    shared.add_argument("--members", type=int, help="ensemble size")
    shared.add_argument("--extent", type=int, help="cubic volume extent")
    shared.add_argument("--image-size", type=int,
                        help="sampled image-plane resolution (both axes)")
    shared.add_argument("--rae-epochs", type=int)
    shared.add_argument("--rae-lr", type=float)
    shared.add_argument("--rae-channels", type=int, help="hidden channel count")
    shared.add_argument("--latent-channels", type=int)
    shared.add_argument("--rae-stages", type=int, help="number of x2 pooling stages")
    shared.add_argument("--predictor-epochs", type=int)
    shared.add_argument("--predictor-lr", type=float)
    shared.add_argument("--channel-factor", type=int)
    shared.add_argument("--image-up", type=int, help="x2 image-axis up stages")
    shared.add_argument("--depth-up", type=int, help="x2 depth-axis up stages")

    parser = argparse.ArgumentParser(
        prog="viewlatent",
        description="surrogate-based ensemble visualization pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("gen-ensemble", parents=[shared],
                        help="sample parameters and write member volumes")

    rae = commands.add_parser("train-rae", parents=[shared],
                              help="train per-axis ray codecs")
    rae.add_argument("--axis", type=int, choices=(0, 1, 2))

    enc = commands.add_parser("encode-latents", parents=[shared],
                              help="encode predictor-training members")
    enc.add_argument("--axis", type=int, choices=(0, 1, 2))

    pred = commands.add_parser("train-predictor", parents=[shared],
                               help="train per-axis latent predictors")
    pred.add_argument("--axis", type=int, choices=(0, 1, 2))

    infer = commands.add_parser("infer", parents=[shared],
                                help="predict and fuse a full volume")
    infer.add_argument("--params", required=True,
                       help="comma-separated parameter values")
    infer.add_argument("--out", default="infer", help="output directory name")

    rend = commands.add_parser("render", parents=[shared],
                               help="render a predicted volume")
    rend.add_argument("--params", required=True)
    rend.add_argument("--camera", help="camera JSON file")
    rend.add_argument("--tf", help="transfer function JSON file")
    rend.add_argument("--out", default="render.png")

    ev = commands.add_parser("evaluate", parents=[shared],
                             help="metrics on the test split vs baselines")
    ev.add_argument("--g", default="1,2,3,4,5",
                    help="IDW neighbor counts, comma-separated")
    ev.add_argument("--force", action="store_true",
                    help="ignore config-hash mismatches")
    ev.add_argument("--no-images", action="store_true",
                    help="skip image-level metrics")

    sens = commands.add_parser("sensitivity", parents=[shared],
                               help="parameter sensitivity curve (CSV)")
    sens.add_argument("--params", required=True)
    sens.add_argument("--index", type=int, required=True)
    sens.add_argument("--samples", type=int, default=5)
    sens.add_argument("--out")

    serve = commands.add_parser("serve", parents=[shared],
                                help="run the exploration service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--frontend", help="static frontend directory to mount")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(args)
        axes = None
        if getattr(args, "axis", None) is not None:
            axes = (args.axis,)

        if args.command in ("train-rae", "encode-latents", "train-predictor"):
            # Persist the merged config so later stages and hash checks
            # see exactly what this stage ran with.
            cfg.validate()
            cfg.root.mkdir(parents=True, exist_ok=True)
            cfg.save(cfg.root / "config.json")

        if args.command == "gen-ensemble":
            manifest = P.stage_gen_ensemble(cfg)
            print(json.dumps({
                "members": len(manifest.members),
                "manifest": str(cfg.root / "ensemble" / "manifest.json"),
            }))
        elif args.command == "train-rae":
            out = P.stage_train_rae(cfg, axes)
            print(json.dumps({str(k): v for k, v in out.items()}))
        elif args.command == "encode-latents":
            out = P.stage_encode_latents(cfg, axes)
            print(json.dumps({str(k): len(v) for k, v in out.items()}))
        elif args.command == "train-predictor":
            out = P.stage_train_predictor(cfg, axes)
            print(json.dumps({str(k): v for k, v in out.items()}))
        elif args.command == "infer":
            out = P.stage_infer(cfg, _parse_params(args.params), args.out)
            print(json.dumps(out))
        elif args.command == "render":
            camera = json.loads(Path(args.camera).read_text()) if args.camera else None
            tf = json.loads(Path(args.tf).read_text()) if args.tf else None
            out = P.stage_render(cfg, _parse_params(args.params), camera, tf,
                                 args.out)
            print(json.dumps(out))
        elif args.command == "evaluate":
            g_values = tuple(int(x) for x in args.g.split(","))
            out = P.stage_evaluate(cfg, g_values, force=args.force,
                                   image_metrics=not args.no_images)
            print(json.dumps({"report": out["path"],
                              "members": len(out["members"])}))
        elif args.command == "sensitivity":
            out = P.stage_sensitivity(cfg, _parse_params(args.params),
                                      args.index, args.samples, args.out)
            print(json.dumps(out))
        elif args.command == "serve":
            import uvicorn

            from .service import create_app

            app = create_app(cfg.run_dir, frontend_dir=args.frontend)
            uvicorn.run(app, host=args.host, port=args.port)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
