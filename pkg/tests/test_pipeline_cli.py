"""Pipeline stages, run-directory artifacts, and the CLI driver."""

import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from viewlatent.ensemble import EnsembleManifest
from viewlatent.pipeline import (ConfigError, MissingArtifactError,
                                 PipelineConfig, Session, stage_evaluate,
                                 stage_gen_ensemble, stage_infer, stage_render,
                                 stage_sensitivity, stage_train_predictor)

from conftest import clone_config, tiny_pipeline_config


class TestConfig:
    def test_validation_reports_fields(self):
        cfg = PipelineConfig(n_members=1, extents=(30, 30, 30))
        with pytest.raises(ConfigError) as err:
            cfg.validate()
        message = str(err.value)
        assert "n_members" in message and "codec.stages" in message

    def test_json_roundtrip(self, tmp_path):
        cfg = tiny_pipeline_config(tmp_path)
        cfg.save(tmp_path / "config.json")
        loaded = PipelineConfig.load(tmp_path / "config.json")
        assert loaded.to_dict() == cfg.to_dict()
        assert loaded.config_hash() == cfg.config_hash()

    def test_hash_tracks_changes(self, tmp_path):
        cfg = tiny_pipeline_config(tmp_path)
        other = clone_config(cfg, seed=cfg.seed + 1)
        assert cfg.config_hash() != other.config_hash()

    def test_view_config_defaults_to_plane_extents(self, tmp_path):
        cfg = clone_config(tiny_pipeline_config(tmp_path),
                           extents=(32, 16, 8), codec=dataclasses.replace(
                               tiny_pipeline_config(tmp_path).codec, stages=1))
        view = cfg.view_config(0)
        assert (view.width, view.height, view.ray_length) == (16, 8, 32)


class TestStages:
    def test_artifacts_and_summaries(self, tiny_run):
        root = tiny_run.root
        assert (root / "ensemble" / "manifest.json").exists()
        for axis in (0, 1, 2):
            assert (root / "checkpoints" / f"codec_axis{axis}.vdls").exists()
            assert (root / "checkpoints" / f"predictor_axis{axis}.vdls").exists()
        for stage in ("gen-ensemble", "train-rae", "encode-latents",
                      "train-predictor"):
            summary = json.loads((root / "summaries" / f"{stage}.json").read_text())
            assert summary["config_hash"] == tiny_run.config_hash()

    def test_gen_is_idempotent(self, tiny_run, tmp_path):
        cfg = clone_config(tiny_run, run_dir=str(tmp_path / "again"))
        stage_gen_ensemble(cfg)
        first = (cfg.root / "ensemble" / "manifest.json").read_bytes()
        stage_gen_ensemble(cfg)
        assert (cfg.root / "ensemble" / "manifest.json").read_bytes() == first

    def test_missing_manifest_names_producer(self, tmp_path):
        cfg = tiny_pipeline_config(tmp_path / "empty")
        with pytest.raises(MissingArtifactError, match="gen-ensemble"):
            stage_train_predictor(cfg)

    def test_infer_writes_fused_volume(self, tiny_run):
        result = stage_infer(tiny_run, [1.0, 0.2, 0.5, 0.5], out_name="t_infer")
        fused = tiny_run.root / "outputs" / "t_infer" / "fused.raw"
        assert fused.exists()
        payload = np.frombuffer(fused.read_bytes(), dtype="<f4")
        assert payload.size == int(np.prod(tiny_run.extents))
        assert result["provenance"]["out_of_range"] == []

    def test_render_writes_png(self, tiny_run):
        result = stage_render(tiny_run, [1.0, 0.2, 0.5, 0.5],
                              out_name="t_render.png")
        path = tiny_run.root / "outputs" / "t_render.png"
        assert path.exists() and path.read_bytes()[:4] == b"\x89PNG"
        assert "provenance" in result

    def test_sensitivity_writes_csv(self, tiny_run):
        result = stage_sensitivity(tiny_run, [1.0, 0.2, 0.5, 0.5], index=3,
                                   n_samples=3, out_name="t_sens.csv")
        text = (tiny_run.root / "outputs" / "t_sens.csv").read_text()
        lines = text.strip().split("\n")
        assert lines[0] == "parameter_value,sensitivity"
        assert len(lines) == 4
        assert len(result["rows"]) == 3

    def test_out_of_range_inference_flagged(self, tiny_run):
        result = stage_infer(tiny_run, [9.0, 0.2, 0.5, 0.5],
                             out_name="t_extrapolate")
        assert result["provenance"]["out_of_range"] == ["amplitude"]


class TestEvaluate:
    def test_report_shape(self, tiny_run):
        report = stage_evaluate(tiny_run, g_values=(1, 2, 3),
                                image_metrics=True)
        manifest = EnsembleManifest.load(
            tiny_run.root / "ensemble" / "manifest.json")
        assert len(report["members"]) == len(manifest.split("test"))
        entry = report["members"][0]
        for key in ("psnr_db", "md", "ssim", "emd", "flagged_fraction"):
            assert key in entry["surrogate"]
        for g in (1, 2, 3):
            assert f"idw_g{g}" in entry["baselines"]
            assert "md" in entry["baselines"][f"idw_g{g}"]
        assert "rbf" in entry["baselines"]
        assert "ssim" in entry["baselines"]["idw_g3"]

    def test_hash_mismatch_refused_then_forced(self, tiny_run):
        stale = clone_config(
            tiny_run, predictor=dataclasses.replace(tiny_run.predictor,
                                                    epochs=tiny_run.predictor.epochs + 1))
        with pytest.raises(MissingArtifactError, match="hash"):
            stage_evaluate(stale, g_values=(1,), image_metrics=False)
        report = stage_evaluate(stale, g_values=(1,), force=True,
                                image_metrics=False)
        assert report["forced"]


class TestSession:
    def test_load_checks_bindings(self, tiny_run):
        session = Session.load(tiny_run)
        for axis in tiny_run.axes:
            assert (session.predictors[axis][1]["codec_id"]
                    == session.codecs[axis][1]["id"])

    def test_predict_views_shapes(self, tiny_run):
        session = Session.load(tiny_run)
        params = session.params_from_values([1.0, 0.0, 0.5, 0.5])
        views = session.predict_views(params)
        assert len(views) == 3
        for vdv, axis in zip(views, tiny_run.axes):
            assert vdv.config.axis == axis
            assert vdv.values.shape == tiny_run.view_config(axis).output_extents()


def _cli(args, env_dir):
    return subprocess.run(
        [sys.executable, "-m", "viewlatent.cli", *args],
        capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "VIEWLATENT_RUNS": str(env_dir)},
    )


class TestCli:
    def test_invalid_config_exits_2(self, tmp_path):
        proc = _cli(["gen-ensemble", "--run-dir", "bad", "--members", "1"],
                    tmp_path)
        assert proc.returncode == 2
        assert "n_members" in proc.stderr

    def test_missing_artifact_exits_3_naming_producer(self, tmp_path):
        proc = _cli(["gen-ensemble", "--run-dir", "partial", "--members", "4",
                     "--extent", "16", "--rae-stages", "2", "--image-up", "2",
                     "--depth-up", "1", "--channel-factor", "2",
                     "--rae-channels", "4"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        proc = _cli(["train-predictor", "--run-dir", "partial"], tmp_path)
        assert proc.returncode == 3
        assert "train-rae" in proc.stderr

    def test_full_chain_emits_png(self, tmp_path):
        common = ["--run-dir", "full"]
        setup = ["--members", "4", "--extent", "16", "--seed", "3",
                 "--rae-stages", "2", "--rae-channels", "4",
                 "--latent-channels", "2", "--rae-epochs", "2",
                 "--image-up", "2", "--depth-up", "1", "--channel-factor", "2",
                 "--predictor-epochs", "2"]
        for command in (["gen-ensemble"], ["train-rae"], ["encode-latents"],
                        ["train-predictor"]):
            proc = _cli(command + common + setup, tmp_path)
            assert proc.returncode == 0, f"{command}: {proc.stderr}"
        proc = _cli(["infer", *common, "--params", "1.0,0.0,0.5,0.5"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        proc = _cli(["render", *common, "--params", "1.0,0.0,0.5,0.5",
                     "--out", "cli.png"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        png = tmp_path / "full" / "outputs" / "cli.png"
        assert png.exists() and png.read_bytes()[:4] == b"\x89PNG"

    def test_config_file_override(self, tmp_path):
        cfg = tiny_pipeline_config(tmp_path / "cfgrun")
        cfg_path = tmp_path / "pipeline.json"
        cfg.save(cfg_path)
        proc = _cli(["gen-ensemble", "--config", str(cfg_path)], tmp_path)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "cfgrun" / "ensemble" / "manifest.json").exists()
