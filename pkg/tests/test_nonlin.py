import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochns import nonlin as nl
from stochns import spectral as sp
from stochns.errors import DomainError


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


class TestAdvect:
    @pytest.mark.parametrize("K", [2, 3, 4, 6, 8])
    def test_matches_oracle(self, K, rng):
        g = sp.make_grid(K)
        ws = nl.AdvectionWorkspace(g)
        for _ in range(5):
            a, b = sp.random_field(g, rng), sp.random_field(g, rng)
            fast = nl.advect(a, b, ws).coeffs
            slow = nl.advect_oracle(a, b).coeffs
            assert rel_err(fast, slow) <= 1e-12

    def test_closed_form(self):
        # u(cos x1) = (0, -sin x1); grad cos x2 = (0, -sin x2)
        g = sp.make_grid(4)
        a = sp.from_modes(g, {(1, 0): np.pi})
        b = sp.from_modes(g, {(0, 1): np.pi})
        w = nl.advect(a, b)
        x1, x2 = np.array([0.2, 1.1, -2.9]), np.array([-0.4, 2.2, 0.9])
        np.testing.assert_allclose(sp.evaluate(w, x1, x2), np.sin(x1) * np.sin(x2), atol=1e-14)

    def test_self_path_equals_general_path(self, rng):
        g = sp.make_grid(10)
        ws = nl.AdvectionWorkspace(g)
        psi = np.stack([sp.random_field(g, rng).coeffs for _ in range(40)])
        self_ = ws.self_advect_coeffs(psi)
        general = ws.advect_coeffs(psi, psi.copy())
        assert rel_err(self_, general) <= 1e-12

    def test_batch_matches_single(self, rng):
        g = sp.make_grid(6)
        ws = nl.AdvectionWorkspace(g)
        a = np.stack([sp.random_field(g, rng).coeffs for _ in range(70)])
        b = np.stack([sp.random_field(g, rng).coeffs for _ in range(70)])
        batch = ws.advect_coeffs(a, b)
        for i in (0, 33, 69):
            np.testing.assert_allclose(batch[i], ws.advect_coeffs(a[i], b[i]), atol=1e-12)

    @pytest.mark.parametrize("k", [(1, 0), (2, 1), (3, -3)])
    def test_single_mode_self_advection_vanishes(self, k):
        g = sp.make_grid(8)
        psi = sp.from_modes(g, {k: 1.3 - 0.4j})
        assert np.max(np.abs(nl.advect(psi, psi).coeffs)) < 1e-13

    def test_same_shell_self_advection_vanishes(self):
        g = sp.make_grid(8)
        psi = sp.from_modes(g, {(1, 2): 1.0, (2, 1): 0.5j, (-2, 1): 0.3})
        assert np.max(np.abs(nl.advect(psi, psi).coeffs)) < 1e-13

    def test_output_dealiased_and_real(self, rng):
        g = sp.make_grid(9)
        w = nl.advect(sp.random_field(g, rng), sp.random_field(g, rng))
        assert not np.any(w.coeffs[~g.dealias_mask])
        assert sp.hermitian_defect(w) < 1e-12

    def test_oracle_refused_for_large_grid(self, rng):
        g = sp.make_grid(9)
        x = sp.random_field(g, rng)
        with pytest.raises(DomainError):
            nl.advect_oracle(x, x)

    def test_grid_mismatch(self, rng):
        with pytest.raises(DomainError):
            nl.advect(sp.random_field(sp.make_grid(4), rng), sp.random_field(sp.make_grid(5), rng))

    def test_advection_grid_size(self):
        assert nl.AdvectionWorkspace(sp.make_grid(16)).L_advect == 32


class TestPairings:
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 7, 12]))
    def test_vanish(self, seed, K):
        rng = np.random.default_rng(seed)
        g = sp.make_grid(K)
        u, v, z = (sp.biot_savart(sp.random_field(g, rng, slope=1.0)) for _ in range(3))
        assert max(nl.pairing_checks(u, v, z).relative) <= 1e-12

    def test_scales_positive(self, rng):
        g = sp.make_grid(6)
        u, v, z = (sp.biot_savart(sp.random_field(g, rng)) for _ in range(3))
        r = nl.pairing_checks(u, v, z)
        assert min(r.energy_scale, r.antisymmetry_scale, r.enstrophy_scale) > 0


class TestDualNorm:
    def test_giga_ratio_finite(self, rng):
        g = sp.make_grid(8)
        ratios = [nl.giga_ratio(sp.random_field(g, rng), sp.random_field(g, rng))
                  for _ in range(10)]
        assert np.all(np.isfinite(ratios)) and min(ratios) > 0

    def test_zero_field(self, rng):
        g = sp.make_grid(4)
        with pytest.raises(DomainError):
            nl.giga_ratio(sp.VorticityField.zeros(g), sp.random_field(g, rng))

    def test_bilinear_dual_norm_homogeneous(self, rng):
        g = sp.make_grid(6)
        u, v = sp.random_field(g, rng), sp.random_field(g, rng)
        n1 = nl.bilinear_dual_norm(u, v)
        assert nl.bilinear_dual_norm(u * 2.0, v * 3.0) == pytest.approx(6 * n1, rel=1e-12)
