"""IDW and RBF parameter-space interpolation baselines."""

import numpy as np
import pytest

from viewlatent.baselines import (DEFAULT_IDW_NEIGHBORS, fit_rbf_width,
                                  idw_baseline, rbf_baseline)
from viewlatent.ensemble import build_ensemble


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("baseline_ens")
    return build_ensemble(8, seed=21, extents=(8, 8, 8), out_dir=out)


class TestIdw:
    def test_default_neighbor_count(self):
        assert DEFAULT_IDW_NEIGHBORS == 3

    def test_exact_member_returned_for_g1(self, manifest):
        member = manifest.split("predictor-train")[0]
        vol = idw_baseline(member.params, manifest, g=1)
        truth = manifest.load_member(member)
        assert np.array_equal(vol.values, truth.values)

    def test_exact_member_dominates_for_g3(self, manifest):
        member = manifest.split("predictor-train")[0]
        vol = idw_baseline(member.params, manifest, g=3)
        truth = manifest.load_member(member)
        assert np.max(np.abs(vol.values - truth.values)) < 1e-3

    def test_voxelwise_convexity(self, manifest):
        query = manifest.split("test")[0].params
        g = 4
        vol = idw_baseline(query, manifest, g=g)
        members = [m for m in manifest.members if m.split != "test"]
        stack = np.stack([manifest.load_member(m).values for m in members])
        # The blend of g members must stay inside the envelope of all
        # training members.
        assert np.all(vol.values <= stack.max(axis=0) + 1e-5)
        assert np.all(vol.values >= stack.min(axis=0) - 1e-5)

    def test_invalid_g_rejected(self, manifest):
        query = manifest.split("test")[0].params
        with pytest.raises(ValueError, match="g="):
            idw_baseline(query, manifest, g=0)
        with pytest.raises(ValueError, match="g="):
            idw_baseline(query, manifest, g=99)


class TestRbf:
    def test_interpolates_training_members(self, manifest):
        # Kernel interpolation reproduces its own data points.
        member = manifest.split("rae-train")[0]
        vol = rbf_baseline(member.params, manifest)
        truth = manifest.load_member(member)
        value_range = manifest.value_max - manifest.value_min
        assert np.max(np.abs(vol.values - truth.values)) < 1e-3 * value_range

    def test_prediction_is_finite_and_shaped(self, manifest):
        query = manifest.split("test")[0].params
        vol = rbf_baseline(query, manifest)
        assert vol.values.shape == tuple(manifest.extents)
        assert np.all(np.isfinite(vol.values))

    def test_width_fit_positive(self, manifest):
        members = [m for m in manifest.members if m.split != "test"]
        coords = np.stack([
            np.asarray(m.params.values, dtype=np.float64) for m in members
        ])
        diffs = coords[:, None, :] - coords[None, :, :]
        dist2 = (diffs ** 2).sum(axis=-1)
        rng = np.random.default_rng(0)
        values = rng.standard_normal((len(members), 50))
        width = fit_rbf_width(dist2, values)
        assert width > 0 and np.isfinite(width)

    def test_explicit_width_used(self, manifest):
        query = manifest.split("test")[0].params
        a = rbf_baseline(query, manifest, width=0.5)
        b = rbf_baseline(query, manifest, width=0.5)
        assert np.array_equal(a.values, b.values)
