"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 1-7 and 10 are self-contained oracle checks; criteria 8 and 9
run on a shared desk-scale end-to-end training run (64^3 volumes, 20
members, 3 axes, 8 codec channels, predictor channel factor 4) built
once per module.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

import viewlatent.layers as L
import viewlatent.tensor as T
from viewlatent.autoencoder import (RayAutoencoder, RayCodecConfig,
                                    histogram_weights, load_codec_checkpoint,
                                    save_codec_checkpoint, weighted_l1_loss)
from viewlatent.baselines import idw_baseline
from viewlatent.ensemble import (SimParams, load_volume, normalize,
                                 save_volume, simulate)
from viewlatent.fusion import MIN_ANGLE, FusedFieldSampler, sensitivity
from viewlatent.metrics import (cieluv_delta, difference_image, emd_color_hist,
                                max_difference, psnr, ssim)
from viewlatent.pipeline import (DIAGONAL_VIEWPOINT, PipelineConfig, Session,
                                 stage_encode_latents, stage_gen_ensemble,
                                 stage_train_predictor, stage_train_rae)
from viewlatent.predictor import (LatentPredictor, PredictorConfig,
                                  load_predictor_checkpoint,
                                  save_predictor_checkpoint)
from viewlatent.render import (Camera, ImageRGB, TransferFunction,
                               composite_ray, default_transfer_function,
                               render)
from viewlatent.tensor import Tensor
from viewlatent.viewsample import ViewConfig, ViewDependentVolume, extract_rays, sample_view

from conftest import fd_gradient, max_rel_error

GRAD_TOL = 1e-3
GRAD_INSTANCES = 20


def _report(line: str) -> None:
    print(f"\n[acceptance] {line}")


# ---------------------------------------------------------------------------
# criterion 1: autodiff vs central finite differences for every layer
# ---------------------------------------------------------------------------

def _grad_check(make_output, tensors, rng) -> float:
    out = make_output()
    c = rng.standard_normal(out.shape).astype(np.float32)
    T.reduce_sum(T.mul(out, Tensor(c))).backward()

    def scalar():
        with T.no_grad():
            return float((make_output().data * c).sum(dtype=np.float64))

    worst = 0.0
    for t in tensors:
        worst = max(worst,
                    max_rel_error(t.grad, fd_gradient(scalar, t.data, h=1e-3)))
    return worst


def test_criterion_1_layer_gradients():
    started = time.time()
    rng = np.random.default_rng(2024)

    def rand(shape, scale=1.0):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    def signed_away_from_zero(shape):
        # relu's kink at 0 is non-differentiable; keep samples clear of it.
        mags = rng.uniform(0.1, 1.0, shape).astype(np.float32)
        signs = rng.choice([-1.0, 1.0], shape).astype(np.float32)
        return mags * signs

    worst = {}
    for _ in range(GRAD_INSTANCES):
        cin, cout = rng.integers(1, 4), rng.integers(1, 4)
        n = int(rng.integers(4, 9))

        x = Tensor(rand((cin, n)), requires_grad=True)
        w = Tensor(rand((cout, cin, 3), 0.5), requires_grad=True)
        b = Tensor(rand(cout), requires_grad=True)
        worst["conv1d"] = max(worst.get("conv1d", 0.0), _grad_check(
            lambda: L.conv1d(x, w, b), [x, w, b], rng))

        d = int(rng.integers(2, 5))
        x3 = Tensor(rand((cin, d, d, d)), requires_grad=True)
        w3 = Tensor(rand((cout, cin, 3, 3, 3), 0.4), requires_grad=True)
        b3 = Tensor(rand(cout), requires_grad=True)
        worst["conv3d"] = max(worst.get("conv3d", 0.0), _grad_check(
            lambda: L.conv3d(x3, w3, b3), [x3, w3, b3], rng))

        m = int(rng.integers(1, 5)) * 2
        xp = Tensor(rand((cin, m)), requires_grad=True)
        worst["avg_pool"] = max(worst.get("avg_pool", 0.0), _grad_check(
            lambda: L.avg_pool(xp, (1,)), [xp], rng))

        xu = Tensor(rand((cin, int(rng.integers(2, 6)))), requires_grad=True)
        worst["nn_upsample"] = max(worst.get("nn_upsample", 0.0), _grad_check(
            lambda: L.nn_upsample(xu, (1,)), [xu], rng))

        xn = Tensor(rand((cin, int(rng.integers(4, 9)))), requires_grad=True)
        worst["instance_norm"] = max(worst.get("instance_norm", 0.0), _grad_check(
            lambda: L.instance_norm(xn, (1,)), [xn], rng))

        fin, fout = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        xf = Tensor(rand(fin), requires_grad=True)
        wf = Tensor(rand((fout, fin), 0.5), requires_grad=True)
        bf = Tensor(rand(fout), requires_grad=True)
        worst["fully_connected"] = max(worst.get("fully_connected", 0.0),
                                       _grad_check(lambda: T.linear(xf, wf, bf),
                                                   [xf, wf, bf], rng))

        xt = Tensor(rand(8), requires_grad=True)
        worst["tanh"] = max(worst.get("tanh", 0.0),
                            _grad_check(lambda: T.tanh(xt), [xt], rng))

        xr = Tensor(signed_away_from_zero(8), requires_grad=True)
        worst["relu"] = max(worst.get("relu", 0.0),
                            _grad_check(lambda: T.relu(xr), [xr], rng))

        layer = L.Conv1d(cin, cout, np.random.default_rng(int(rng.integers(1e6))))
        xs = Tensor(rand((cin, n)), requires_grad=True)
        worst["sn_conv"] = max(worst.get("sn_conv", 0.0), _grad_check(
            lambda: layer(xs, train=False),
            [xs, layer.weight, layer.bias], rng))

    elapsed = time.time() - started
    for name, err in sorted(worst.items()):
        assert err < GRAD_TOL, f"{name}: relative error {err} >= {GRAD_TOL}"
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"
    _report(f"criterion 1 PASS: {GRAD_INSTANCES} instances/layer, worst "
            f"rel err {max(worst.values()):.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: spectral norm vs SVD oracle
# ---------------------------------------------------------------------------

def test_criterion_2_spectral_norm_oracle():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(50):
        w = rng.standard_normal((8, 8)).astype(np.float32)
        u = L._l2_normalize(rng.standard_normal(8).astype(np.float32))
        for _ in range(50):
            u, v = L.power_iteration_step(w, u)
        sigma = float(u @ w @ v)
        top = float(np.linalg.svd(w.astype(np.float64), compute_uv=False)[0])
        worst = max(worst, abs(sigma - top) / top)
    assert worst < 0.01
    _report(f"criterion 2 PASS: 50 matrices, worst deviation {worst:.2e}")


# ---------------------------------------------------------------------------
# criterion 3: weighted L1 exact cases
# ---------------------------------------------------------------------------

def test_criterion_3_weighted_l1():
    rng = np.random.default_rng(5)
    target = np.tile(np.array([0.125, 0.375, 0.625, 0.875],
                              dtype=np.float32), 16)
    pred = target + rng.uniform(-0.1, 0.1, target.shape).astype(np.float32)
    loss = weighted_l1_loss(Tensor(pred), target, bins=4, eps=0.0)
    plain = float(np.abs(pred - target).mean(dtype=np.float32))
    assert loss.item() == plain

    two_bin = np.concatenate([np.zeros(90), np.ones(10)]).astype(np.float32)
    weights = histogram_weights(two_bin, bins=2, eps=0.0)
    assert abs(weights[0] - 10.0 / 18.0) < 1e-6
    assert abs(weights[-1] - 5.0) < 1e-6
    _report("criterion 3 PASS: uniform histogram exact, 90/10 case to 1e-6")


# ---------------------------------------------------------------------------
# criterion 4: paper-scale shape ledger (construction only)
# ---------------------------------------------------------------------------

def test_criterion_4_shape_ledger():
    codec_cfg = RayCodecConfig()  # k_r=64, t=3, 16x reduction
    assert codec_cfg.latent_extents(512) == (32, 3)
    codec = RayAutoencoder(codec_cfg, 512)
    latent = codec.encode(np.zeros((1, 1, 512), dtype=np.float32))
    assert latent.shape == (1, 32, 3)

    pred_cfg = PredictorConfig()  # k_v=64, a=6, b=3
    assert pred_cfg.seed_extents(384, 384, 32) == (6, 6, 4, 16 * 64)
    space = SimParams((0.3, 0.0225, 0.7),
                      names=("m", "b", "h"),
                      ranges=((0.12, 0.55), (0.0215, 0.0235), (0.55, 0.85)))
    view = ViewConfig(axis=2, width=384, height=384, ray_length=512)
    model = LatentPredictor(pred_cfg, space, view, latent_len=32,
                            latent_channels=3)
    assert model.seed_shape == (1024, 6, 6, 4)
    assert model.output_extents() == (384, 384, 32, 3)
    _report("criterion 4 PASS: seed 6x6x4x1024, output 384x384x32x3, "
            "latent 32x3 at paper scale")


# ---------------------------------------------------------------------------
# criterion 5: compositor vs brute-force weighted average
# ---------------------------------------------------------------------------

def _oracle_fused(views, viewpoint, point):
    num = 0.0
    den = 0.0
    for vdv in views:
        vi = vdv.config.viewpoint()
        d = min(
            math.acos(max(-1.0, min(1.0, float(np.dot(viewpoint, vi))))),
            math.acos(max(-1.0, min(1.0, float(np.dot(viewpoint, -vi))))),
        )
        q = 1.0 / max(d, MIN_ANGLE)
        w, h, l = vdv.values.shape
        d1, d2 = vdv.config.image_dims
        coords = [point[d1] * w - 0.5, point[d2] * h - 0.5,
                  point[vdv.config.axis] * l - 0.5]
        value = 0.0
        base, fracs = [], []
        for c, n in zip(coords, (w, h, l)):
            c = min(max(c, 0.0), n - 1.0)
            i0 = min(int(math.floor(c)), n - 2) if n > 1 else 0
            base.append(i0)
            fracs.append(c - i0)
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    weight = ((fracs[0] if da else 1 - fracs[0])
                              * (fracs[1] if db else 1 - fracs[1])
                              * (fracs[2] if dc else 1 - fracs[2]))
                    value += weight * float(
                        vdv.values[min(base[0] + da, w - 1),
                                   min(base[1] + db, h - 1),
                                   min(base[2] + dc, l - 1)])
        num += q * value
        den += q
    return num / den


def test_criterion_5_compositor_oracle():
    rng = np.random.default_rng(99)
    extents = (7, 6, 5)
    views = []
    for axis in range(3):
        dims = [d for d in (0, 1, 2) if d != axis]
        cfg = ViewConfig(axis=axis, width=extents[dims[0]],
                         height=extents[dims[1]], ray_length=extents[axis])
        views.append(ViewDependentVolume(
            rng.uniform(-1, 1, cfg.output_extents()).astype(np.float32),
            cfg, -1.0, 1.0))

    worst = 0.0
    for _ in range(1000):
        point = rng.uniform(0, 1, 3)
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        sampler = FusedFieldSampler(views, v)
        got = float(sampler.sample(point[None, :])[0])
        want = _oracle_fused(views, v, point)
        worst = max(worst, abs(got - want))
        per_view = [
            _oracle_fused([vdv], v, point) for vdv in views
        ]
        assert min(per_view) - 1e-9 <= got <= max(per_view) + 1e-9
    assert worst < 1e-5

    # Degenerate case: the query viewpoint coincides with a selected one.
    for axis in range(3):
        point = rng.uniform(0, 1, 3)
        vi = views[axis].config.viewpoint()
        got = float(FusedFieldSampler(views, vi).sample(point[None, :])[0])
        own = _oracle_fused([views[axis]], vi, point)
        assert abs(got - own) <= 1e-5 * max(abs(own), 1e-9) + 1e-7
    _report(f"criterion 5 PASS: 1000 samples, worst |diff| {worst:.2e}, "
            "degenerate viewpoints match, convexity held")


# ---------------------------------------------------------------------------
# criterion 6: renderer analytic and determinism checks
# ---------------------------------------------------------------------------

def test_criterion_6_renderer():
    alpha, n = 0.08, 25
    _, accumulated = composite_ray(np.full(n, alpha),
                                   np.tile([1.0, 1.0, 1.0], (n, 1)))
    analytic = 1.0 - (1.0 - alpha) ** n
    assert abs(accumulated - analytic) < 1e-4

    from viewlatent.ensemble import Volume

    vol = Volume(np.zeros((8, 8, 8), dtype=np.float32), -1.0, 1.0,
                 normalized=True)
    cam = Camera(eye=np.array([0.5, 0.5, -1.0]),
                 look_at=np.array([0.5, 0.5, 0.5]),
                 up=np.array([0.0, 1.0, 0.0]), width=1, height=1)
    step = 0.04
    tf = TransferFunction(np.array([0.0, 1.0]),
                          np.array([[1, 1, 1, alpha], [1, 1, 1, alpha]]))
    img = render(vol, cam, tf, step=step, reference_step=step)
    n_marched = int(np.floor(1.0 / step))
    expected = 1.0 - (1.0 - alpha) ** n_marched
    assert img.pixels[0, 0, 0] == np.rint(expected * 255)

    transparent = TransferFunction(np.array([0.0, 1.0]),
                                   np.array([[1, 0, 0, 0.0], [1, 0, 0, 0.0]]))
    bg = (0.2, 0.4, 0.6)
    img_bg = render(vol, cam, transparent, background=bg)
    assert np.array_equal(img_bg.pixels[0, 0],
                          np.rint(np.array(bg) * 255).astype(np.uint8))

    rng = np.random.default_rng(8)
    noisy = Volume(np.tanh(rng.standard_normal((16, 16, 16))
                           ).astype(np.float32), -1.0, 1.0, normalized=True)
    cam2 = Camera(eye=np.array([2.1, 1.7, 1.3]),
                  look_at=np.array([0.5, 0.5, 0.5]), width=32, height=32)
    tfd = default_transfer_function()
    assert (render(noisy, cam2, tfd).to_png_bytes()
            == render(noisy, cam2, tfd).to_png_bytes())
    _report("criterion 6 PASS: analytic alpha within 1e-4, exact background, "
            "byte-identical repeats")


# ---------------------------------------------------------------------------
# criterion 7: metric identities and closed forms
# ---------------------------------------------------------------------------

def test_criterion_7_metrics():
    rng = np.random.default_rng(13)
    a = rng.uniform(0, 1, (10, 10, 10))
    assert psnr(a, a, 1.0) == math.inf
    assert max_difference(a, a, 1.0) == 0.0

    value_range = 2.5
    b = a * value_range
    offset = b + 0.01 * value_range
    assert abs(psnr(b, offset, value_range) - 40.0) < 0.01
    assert abs(max_difference(b, offset, value_range) - 0.01) < 1e-9

    img = ImageRGB(rng.integers(0, 256, (24, 24, 3), dtype=np.uint8))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)
    assert emd_color_hist(img, img) == 0.0
    _, fraction = difference_image(img, img)
    assert fraction == 0.0

    assert cieluv_delta([0, 0, 0], [255, 255, 255]) == pytest.approx(100.0,
                                                                     abs=1e-9)
    black = ImageRGB(np.zeros((1, 1, 3), dtype=np.uint8))
    white = ImageRGB(np.full((1, 1, 3), 255, dtype=np.uint8))
    _, fraction = difference_image(black, white)
    assert fraction == 1.0
    _report("criterion 7 PASS: identities exact, 40 dB closed form within "
            "0.01 dB, black/white deltaE = 100 flagged")


# ---------------------------------------------------------------------------
# criteria 8 + 9: desk-scale end-to-end run
# ---------------------------------------------------------------------------

DESK_TIME_BUDGET_S = 30 * 60


def desk_config(run_dir) -> PipelineConfig:
    return PipelineConfig(
        run_dir=str(run_dir),
        seed=42,
        n_members=20,
        extents=(64, 64, 64),
        codec=RayCodecConfig(hidden_channels=8, latent_channels=3, stages=4,
                             batch_rays=1024, learning_rate=3e-3, epochs=220,
                             rays_per_epoch=4096, histogram_eps=0.02,
                             shift_augment=10),
        predictor=PredictorConfig(channel_factor=4, image_up_stages=3,
                                  depth_up_stages=1, learning_rate=2e-3,
                                  epochs=150),
    )


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    cfg = desk_config(tmp_path_factory.mktemp("desk"))
    started = time.time()
    stage_gen_ensemble(cfg)
    stage_train_rae(cfg)
    stage_encode_latents(cfg)
    stage_train_predictor(cfg)
    elapsed = time.time() - started
    session = Session.load(cfg)
    return cfg, session, elapsed


def test_criterion_8_desk_run(desk_run):
    cfg, session, train_elapsed = desk_run
    manifest = session.manifest
    assert train_elapsed < DESK_TIME_BUDGET_S

    # (a) codec reconstruction PSNR on rays of held-out members
    holdout_psnrs = []
    for axis in cfg.axes:
        codec, _ = session.codecs[axis]
        view = cfg.view_config(axis)
        originals, recons = [], []
        for member in manifest.split("test"):
            vol = normalize(manifest.load_member(member), manifest.value_min,
                            manifest.value_max)
            rays = extract_rays(sample_view(vol, view))
            originals.append(rays)
            recons.append(codec.decode(codec.encode(rays)))
        holdout_psnrs.append(psnr(np.concatenate(recons),
                                  np.concatenate(originals), 2.0))
    assert min(holdout_psnrs) >= 30.0, f"ray PSNRs {holdout_psnrs}"

    # (b) fused prediction vs IDW(g=3) per test member
    wins = 0
    comparisons = []
    from viewlatent.fusion import fuse_to_grid

    for member in manifest.split("test"):
        truth = normalize(manifest.load_member(member), manifest.value_min,
                          manifest.value_max)
        fused = fuse_to_grid(session.predict_views(member.params),
                             DIAGONAL_VIEWPOINT, cfg.extents)
        idw = normalize(idw_baseline(member.params, manifest, g=3),
                        manifest.value_min, manifest.value_max)
        surrogate_db = psnr(fused.values, truth.values, 2.0)
        idw_db = psnr(idw.values, truth.values, 2.0)
        comparisons.append((member.index, surrogate_db, idw_db))
        wins += surrogate_db > idw_db
    assert wins >= 3, f"surrogate beat IDW on {wins}/4: {comparisons}"

    # (c) the inert parameter has the smallest mean sensitivity
    space = manifest.param_space()
    base = session.params_from_values([1.25, 0.0, 0.5, 0.5])
    means = []
    for index in range(len(space.values)):
        curve = sensitivity(base, index, 5, session.sensitivity_pairs())
        means.append(float(curve.sensitivities.mean()))
    inert_index = space.names.index("inert")
    assert int(np.argmin(means)) == inert_index, f"sensitivities {means}"

    _report(
        "criterion 8 PASS: "
        f"train {train_elapsed / 60:.1f} min; "
        f"(a) holdout ray PSNR {[f'{p:.1f}' for p in holdout_psnrs]} dB; "
        f"(b) surrogate beat IDW(g=3) on {wins}/4 members "
        f"{[(i, f'{s:.1f}', f'{b:.1f}') for i, s, b in comparisons]}; "
        f"(c) sensitivity means {[f'{m:.0f}' for m in means]} "
        f"(inert is minimum)"
    )


def test_criterion_9_sensitivity_gradients(desk_run):
    cfg, session, _ = desk_run
    predictor, codec = session.sensitivity_pairs()[0]
    space = session.manifest.param_space()
    rng = np.random.default_rng(4)
    lows = np.array([r[0] for r in space.ranges])
    highs = np.array([r[1] for r in space.ranges])

    worst = 0.0
    for _ in range(10):
        values = rng.uniform(lows, highs).astype(np.float32)
        index = int(rng.integers(len(values)))

        from viewlatent.fusion import _view_l1_derivative

        got = _view_l1_derivative(values, index, predictor, codec)

        probe = values.copy()

        def scalar():
            with T.no_grad():
                field = predictor.forward_t(Tensor(probe))
                w, h, ls, t = field.shape
                rays = field.data.reshape(w * h, ls, t).transpose(0, 2, 1)
                decoded = codec.decode_t(
                    Tensor(np.ascontiguousarray(rays))).data
                return float(np.abs(decoded, dtype=np.float64).sum())

        h_step = 1e-4
        orig = probe[index]
        probe[index] = orig + h_step
        f_plus = scalar()
        probe[index] = orig - h_step
        f_minus = scalar()
        probe[index] = orig
        fd = (f_plus - f_minus) / (2 * h_step)
        rel = abs(got - fd) / max(abs(fd), 1e-9)
        worst = max(worst, rel)
    assert worst < 0.05, f"worst relative derivative error {worst}"
    _report(f"criterion 9 PASS: 10 parameter points, worst rel err {worst:.3f}")


# ---------------------------------------------------------------------------
# criterion 10: persistence roundtrips
# ---------------------------------------------------------------------------

def test_criterion_10_persistence(tmp_path):
    rng = np.random.default_rng(3)
    codec_cfg = RayCodecConfig(hidden_channels=4, latent_channels=2, stages=2,
                               seed=1)
    codec = RayAutoencoder(codec_cfg, 16)
    view = ViewConfig(axis=0, width=8, height=8, ray_length=16)
    save_codec_checkpoint(tmp_path / "c.vdls", codec, view=view,
                          value_min=-1.0, value_max=1.0)
    codec_loaded, codec_meta = load_codec_checkpoint(tmp_path / "c.vdls")
    rays = np.tanh(rng.standard_normal((12, 1, 16))).astype(np.float32)
    assert np.array_equal(codec.encode(rays), codec_loaded.encode(rays))
    assert np.array_equal(codec.decode(codec.encode(rays)),
                          codec_loaded.decode(codec_loaded.encode(rays)))

    space = SimParams((1.0, 0.0, 0.5, 0.5))
    pred_cfg = PredictorConfig(channel_factor=2, image_up_stages=2,
                               depth_up_stages=1, seed=2)
    predictor = LatentPredictor(pred_cfg, space, view, latent_len=4,
                                latent_channels=2)
    save_predictor_checkpoint(tmp_path / "p.vdls", predictor,
                              codec_id=codec_meta["id"], value_min=-1.0,
                              value_max=1.0)
    pred_loaded, _ = load_predictor_checkpoint(tmp_path / "p.vdls")
    probe = SimParams((1.3, -0.4, 0.2, 0.9))
    assert np.array_equal(predictor.predict(probe).values,
                          pred_loaded.predict(probe).values)

    vol = simulate(SimParams((1.5, 0.25, 0.3, 0.1)), (9, 8, 7))
    save_volume(tmp_path / "vol", vol)
    loaded = load_volume(tmp_path / "vol")
    assert loaded.values.tobytes() == vol.values.tobytes()
    save_volume(tmp_path / "vol2", loaded)
    assert ((tmp_path / "vol.raw").read_bytes()
            == (tmp_path / "vol2.raw").read_bytes())
    assert ((tmp_path / "vol.json").read_text()
            == (tmp_path / "vol2.json").read_text())
    _report("criterion 10 PASS: checkpoint and volume roundtrips bit-exact")
