"""Group-lasso and TV-inpainting baselines."""

import numpy as np
import pytest

from jointsparse.baselines import (
    GlOptions,
    TvOptions,
    solve_gl,
    spectral_norm_sq,
    tv_energy,
    tv_inpaint,
)
from jointsparse.errors import EmptyMask
from jointsparse.model import DictionaryPair, random_dictionary_pair
from jointsparse.rng import substream

from helpers import gl_identity_closed_form


class TestGroupLasso:
    def test_zero_signals_give_zero(self):
        dicts = random_dictionary_pair(6, 6, 10, seed=1)
        res = solve_gl(np.zeros(6), np.zeros(6), dicts, GlOptions(lam=0.5))
        np.testing.assert_array_equal(res.a, 0.0)
        np.testing.assert_array_equal(res.b, 0.0)

    def test_identity_dictionary_closed_form(self):
        rng = substream(2, "test-gl")
        n = 12
        y_int = rng.standard_normal(n)
        y_dep = rng.standard_normal(n)
        dicts = DictionaryPair(np.eye(n), np.eye(n))
        lam = 0.8
        res = solve_gl(y_int, y_dep, dicts, GlOptions(lam=lam, rel_tol=1e-14))
        # oracle: per-pair radial shrinkage by max(0, 1 - lam/(2||pair||))
        a_ref, b_ref = gl_identity_closed_form(y_int, y_dep, lam)
        np.testing.assert_allclose(res.a, a_ref, atol=1e-6)
        np.testing.assert_allclose(res.b, b_ref, atol=1e-6)

    def test_stationarity_conditions(self):
        dicts = random_dictionary_pair(10, 10, 16, seed=3)
        rng = substream(3, "test-gl-kkt")
        y_int = rng.standard_normal(10)
        y_dep = rng.standard_normal(10)
        lam = 0.6
        res = solve_gl(y_int, y_dep, dicts, GlOptions(lam=lam, rel_tol=1e-14, max_iter=30000))
        grad_a = 2.0 * dicts.phi_int.T @ (dicts.phi_int @ res.a - y_int)
        grad_b = 2.0 * dicts.phi_dep.T @ (dicts.phi_dep @ res.b - y_dep)
        norms = np.sqrt(res.a**2 + res.b**2)
        active = norms > 1e-7
        # active groups: smooth gradient balances the penalty direction
        for i in np.where(active)[0]:
            np.testing.assert_allclose(
                [grad_a[i], grad_b[i]],
                [-lam * res.a[i] / norms[i], -lam * res.b[i] / norms[i]],
                atol=1e-4,
            )
        # zero groups: smooth gradient within the penalty ball
        for i in np.where(~active)[0]:
            assert np.hypot(grad_a[i], grad_b[i]) <= lam + 1e-4

    def test_objective_monotone_under_restart(self):
        dicts = random_dictionary_pair(8, 8, 14, seed=5)
        rng = substream(5, "test-gl-mono")
        y_int = rng.standard_normal(8)
        y_dep = rng.standard_normal(8)
        lam = 0.4

        def objective(a, b):
            return (
                np.sum((y_int - dicts.phi_int @ a) ** 2)
                + np.sum((y_dep - dicts.phi_dep @ b) ** 2)
                + lam * np.sum(np.hypot(a, b))
            )

        values = []
        for iters in (1, 3, 10, 30, 100, 300):
            res = solve_gl(y_int, y_dep, dicts, GlOptions(lam=lam, max_iter=iters, rel_tol=0.0))
            values.append(objective(res.a, res.b))
        assert all(v2 <= v1 + 1e-12 for v1, v2 in zip(values, values[1:]))

    def test_nonconvergence_flag(self):
        dicts = random_dictionary_pair(8, 8, 14, seed=6)
        rng = substream(6, "test-gl-flag")
        res = solve_gl(
            rng.standard_normal(8), rng.standard_normal(8), dicts,
            GlOptions(lam=0.1, max_iter=2, rel_tol=1e-15),
        )
        assert not res.converged
        assert res.iterations == 2

    def test_masked_depth_term(self):
        dicts = random_dictionary_pair(8, 8, 12, seed=7)
        rng = substream(7, "test-gl-mask")
        y_int = rng.standard_normal(8)
        y_dep = rng.standard_normal(8)
        mask = np.array([True] * 4 + [False] * 4)
        res = solve_gl(y_int, y_dep, dicts, GlOptions(lam=0.3), mask_dep=mask)
        # masked entries must not influence the fit: perturbing them is a no-op
        y_dep2 = y_dep.copy()
        y_dep2[~mask] += 100.0
        res2 = solve_gl(y_int, y_dep2, dicts, GlOptions(lam=0.3), mask_dep=mask)
        np.testing.assert_allclose(res.b, res2.b, atol=1e-12)

    def test_deterministic(self):
        dicts = random_dictionary_pair(8, 8, 12, seed=8)
        rng = substream(8, "test-gl-det")
        y_int = rng.standard_normal(8)
        y_dep = rng.standard_normal(8)
        r1 = solve_gl(y_int, y_dep, dicts, GlOptions(lam=0.2))
        r2 = solve_gl(y_int, y_dep, dicts, GlOptions(lam=0.2))
        np.testing.assert_array_equal(r1.a, r2.a)
        np.testing.assert_array_equal(r1.b, r2.b)

    def test_spectral_norm_matches_svd(self):
        m = substream(9, "test-spec").standard_normal((9, 13))
        assert spectral_norm_sq(m) == pytest.approx(
            np.linalg.svd(m, compute_uv=False)[0] ** 2, rel=1e-9
        )


class TestTvInpaint:
    def test_fully_observed_identity(self):
        img = substream(10, "test-tv").standard_normal((7, 9))
        out = tv_inpaint(img, np.ones_like(img, dtype=bool))
        np.testing.assert_array_equal(out, img)

    def test_constant_image_completion(self):
        img = np.full((8, 8), 3.25)
        mask = np.zeros((8, 8), dtype=bool)
        mask[::3, ::2] = True
        out = tv_inpaint(img, mask, TvOptions(max_iter=2000, tol=1e-12))
        np.testing.assert_allclose(out, 3.25, atol=1e-10)

    def test_two_level_band_beats_nearest_fill(self):
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        mask = np.ones((8, 8), dtype=bool)
        mask[:, 3:5] = False  # hide the transition band
        out = tv_inpaint(img, mask, TvOptions(max_iter=4000, tol=1e-12))
        np.testing.assert_array_equal(out[mask], img[mask])
        # oracle: nearest-neighbor fill copies the left neighbor into the band
        nn = img.copy()
        nn[:, 3] = img[:, 2]
        nn[:, 4] = img[:, 5]
        assert tv_energy(out) <= tv_energy(nn) + 1e-9

    def test_constant_shift_equivariance(self):
        rng = substream(11, "test-tv-shift")
        img = rng.uniform(0.0, 1.0, (10, 10))
        mask = rng.random((10, 10)) < 0.3
        if not mask.any():
            mask[0, 0] = True
        opts = TvOptions(max_iter=800, tol=1e-10)
        out1 = tv_inpaint(img, mask, opts)
        out2 = tv_inpaint(img + 5.0, mask, opts)
        np.testing.assert_allclose(out2, out1 + 5.0, atol=1e-8)

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMask):
            tv_inpaint(np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))

    def test_deterministic(self):
        rng = substream(12, "test-tv-det")
        img = rng.uniform(0.0, 1.0, (9, 9))
        mask = rng.random((9, 9)) < 0.4
        o1 = tv_inpaint(img, mask)
        o2 = tv_inpaint(img, mask)
        np.testing.assert_array_equal(o1, o2)
