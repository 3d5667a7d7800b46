import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflx.errors import GridMismatchError, InvalidInputError
from dflx.spectral import (
    GridSpec,
    ScalarField,
    VectorField,
    derivative,
    divergence,
    divergence_defect,
    from_spectral,
    gradient,
    inner,
    leray_project,
    lp_norm,
    product,
    time_norm,
    to_spectral,
)

from conftest import random_scalar, random_vector


class TestGridSpec:
    def test_defaults(self):
        g = GridSpec.cube(16)
        assert g.domain_length == pytest.approx(2 * np.pi)
        assert g.size == 16 ** 3
        assert g.k_nyquist == 8

    @pytest.mark.parametrize("dims", [(8, 16, 16), (16, 24, 16), (16, 16)])
    def test_rejects_bad_dims(self, dims):
        with pytest.raises(InvalidInputError):
            GridSpec(dims)

    def test_rejects_bad_length(self):
        with pytest.raises(InvalidInputError):
            GridSpec((16, 16, 16), -1.0)


class TestFields:
    def test_non_finite_rejected(self, grid16):
        v = np.zeros(grid16.shape)
        v[0, 0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            ScalarField(grid16, v)

    def test_values_are_read_only(self, grid16):
        f = random_scalar(grid16)
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0

    def test_grid_mismatch(self, grid16):
        f = random_scalar(grid16)
        g = random_scalar(GridSpec.cube(32))
        with pytest.raises(GridMismatchError):
            product(f, g)


class TestTransforms:
    def test_constant_field_has_only_mean(self, grid16):
        F = to_spectral(ScalarField(grid16, np.full(grid16.shape, 2.5)))
        c = np.array(F.coeffs)
        assert c[0, 0, 0] == pytest.approx(2.5)
        c[0, 0, 0] = 0
        assert np.max(np.abs(c)) < 1e-14

    def test_cosine_has_two_modes(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y, z: np.cos(x))
        c = np.abs(np.array(to_spectral(f).coeffs))
        nz = np.argwhere(c > 1e-12)
        assert sorted(map(tuple, nz)) == [(1, 0, 0), (15, 0, 0)]
        assert c[1, 0, 0] == pytest.approx(0.5)

    def test_round_trip(self, grid32):
        f = random_scalar(grid32, 3)
        g = from_spectral(to_spectral(f))
        err = np.linalg.norm(g.values - f.values) / np.linalg.norm(f.values)
        assert err < 1e-12

    def test_hermitian(self, grid16):
        F = to_spectral(random_scalar(grid16, 1))
        assert F.hermitian_defect() < 1e-12

    def test_parseval_many_fields(self, grid16):
        for seed in range(100):
            f = random_scalar(grid16, seed)
            F = to_spectral(f)
            spectral = np.sqrt(np.sum(np.abs(F.coeffs) ** 2) * grid16.volume)
            assert abs(lp_norm(f, 2) - spectral) / spectral < 1e-12


class TestDerivative:
    def test_cosine(self, grid32):
        f = ScalarField.from_function(grid32, lambda x, y, z: np.cos(x))
        d = derivative(f, 1)
        x = grid32.coordinates()[0]
        assert np.max(np.abs(d.values + np.sin(x))) < 1e-12

    def test_independence(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y, z: np.sin(3 * x) + np.cos(x))
        assert np.max(np.abs(derivative(f, 2).values)) == 0.0

    def test_mixed_partials_commute(self, grid16):
        f = random_scalar(grid16, 2)
        a = derivative(derivative(f, 1), 2).values
        b = derivative(derivative(f, 2), 1).values
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))

    def test_non_default_box(self):
        g = GridSpec.cube(16, 1.0)
        f = ScalarField.from_function(g, lambda x, y, z: np.sin(2 * np.pi * z))
        d = derivative(f, 3)
        z = g.coordinates()[2]
        assert np.max(np.abs(d.values - 2 * np.pi * np.cos(2 * np.pi * z))) < 1e-11

    @pytest.mark.parametrize("axis", [0, 4, "x"])
    def test_bad_axis(self, grid16, axis):
        with pytest.raises(InvalidInputError):
            derivative(random_scalar(grid16), axis)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        grid = GridSpec.cube(16)
        f, g = random_scalar(grid, seed), random_scalar(grid, seed + 1)
        lhs = derivative(f * a + g * b, 3).values
        rhs = a * derivative(f, 3).values + b * derivative(g, 3).values
        scale = max(1.0, np.max(np.abs(rhs)))
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * scale


class TestProjection:
    def test_shear_is_divergence_free(self, grid16):
        x1, x2, x3 = grid16.coordinates()
        v = np.zeros((3,) + grid16.shape)
        v[0] = np.sin(x2) + np.cos(3 * x2)
        u = VectorField(grid16, v)
        assert np.max(np.abs(divergence(u).values)) == 0.0

    def test_gradient_projects_to_zero(self, grid16):
        phi = random_scalar(grid16, 4)
        u = leray_project(gradient(phi))
        assert np.max(np.abs(u.values)) < 1e-12 * np.max(np.abs(gradient(phi).values))

    def test_idempotent(self, grid32):
        u = random_vector(grid32, 5)
        p1 = leray_project(u)
        p2 = leray_project(p1)
        assert np.linalg.norm(p2.values - p1.values) < 1e-12 * np.linalg.norm(p1.values)

    def test_projected_divergence(self, grid32):
        u = random_vector(grid32, 6)
        p = leray_project(u)
        assert lp_norm(divergence(p), 2) <= 1e-10 * lp_norm(u, 2) / grid32.domain_length
        assert divergence_defect(p) < 1e-10
        assert divergence_defect(u) > 1e-3

    def test_preserves_hermitian_symmetry(self, grid16):
        p = leray_project(random_vector(grid16, 7))
        for c in p.components:
            assert to_spectral(c).hermitian_defect() < 1e-12


class TestNorms:
    def test_constant_unit_box(self):
        g = GridSpec.cube(16, 1.0)
        f = ScalarField(g, np.full(g.shape, -3.0))
        for p in (1, 1.5, 2, 3, 7, np.inf, "inf"):
            assert lp_norm(f, p) == pytest.approx(3.0, rel=1e-13)

    def test_sine_l2(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y, z: np.sin(x))
        assert lp_norm(f, 2) == pytest.approx(np.sqrt(4 * np.pi ** 3), rel=1e-13)
        assert lp_norm(f, 2) == pytest.approx(11.1366, abs=1e-4)

    def test_vector_norm_uses_magnitude(self, grid16):
        v = np.zeros((3,) + grid16.shape)
        v[0], v[1] = 3.0, 4.0
        u = VectorField(grid16, v)
        assert lp_norm(u, 3) == pytest.approx(5.0 * grid16.volume ** (1 / 3))

    def test_p_below_one(self, grid16):
        with pytest.raises(InvalidInputError):
            lp_norm(random_scalar(grid16), 0.5)

    def test_inner_matches_parseval(self, grid16):
        f, g = random_scalar(grid16, 1), random_scalar(grid16, 2)
        F, G = to_spectral(f), to_spectral(g)
        spec = np.sum(F.coeffs * np.conj(G.coeffs)).real * grid16.volume
        assert inner(f, g) == pytest.approx(spec, rel=1e-11)


class TestProduct:
    def test_dealiased_product_of_low_modes_is_exact(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y, z: np.cos(2 * x) + np.sin(y))
        g = ScalarField.from_function(grid16, lambda x, y, z: np.sin(3 * x + z))
        p = product(f, g)
        assert np.max(np.abs(p.values - f.values * g.values)) < 1e-13

    def test_dealiased_product_drops_aliases(self, grid16):
        # cos(5x)*cos(5x) = (1 + cos(10x))/2; k=10 is outside the 16-point lattice
        f = ScalarField.from_function(grid16, lambda x, y, z: np.cos(5 * x))
        p = product(f, f)
        assert np.max(np.abs(p.values - 0.5)) < 1e-13
        raw = product(f, f, dealias=False)
        assert np.max(np.abs(raw.values - 0.5)) > 0.1


class TestTimeNorm:
    def test_constant_series(self):
        assert time_norm([2.0] * 11, 0.1, 3) == pytest.approx(2.0)

    def test_inf(self):
        assert time_norm([1.0, -4.0, 2.0], 0.5, np.inf) == 4.0

    def test_linear_l2(self):
        t = np.linspace(0, 1, 2001)
        assert time_norm(t, t[1], 2) == pytest.approx(np.sqrt(1 / 3), rel=1e-6)
