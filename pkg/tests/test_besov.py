import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflx.besov import (
    ShiftSet,
    coro13_interpolation_check,
    default_shifts,
    dyadic_besov,
    estimate_regularity,
    finite_difference_seminorm,
    gn_checks,
    lemma26_check,
    tail_indicator,
    vmo_indicator,
    weighted_blocks,
)
from dflx.errors import InvalidInputError
from dflx.generators import LacunarySpec, lacunary_field, lacunary_scalar, random_divfree, taylor_green
from dflx.littlewood_paley import build_partition
from dflx.spectral import GridSpec, ScalarField, VectorField, lp_norm

from conftest import phi_oracle, random_scalar


@pytest.fixture(scope="module")
def grid32():
    return GridSpec.cube(32)


@pytest.fixture(scope="module")
def part32(grid32):
    return build_partition(grid32)


@pytest.fixture(scope="module")
def grid64():
    return GridSpec.cube(64)


@pytest.fixture(scope="module")
def part64(grid64):
    return build_partition(grid64)


@pytest.fixture(scope="module")
def flat_field(grid64, part64):
    return lacunary_field(grid64, LacunarySpec(1 / 3, 1 / 3, seed=4), part64)


def _cos(grid, k):
    x = grid.coordinates()
    return ScalarField(grid, np.cos(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]) + 0 * x[0])


def _horizontal(u):
    return VectorField(u.grid, np.stack([u.values[0], u.values[1], np.zeros(u.grid.shape)]))


class TestDyadicBesov:
    def test_zero_field(self, grid32, part32):
        rep = dyadic_besov(ScalarField.zeros(grid32), 0.5, 3, np.inf, part32)
        assert rep.norm_value == 0.0
        assert all(v == 0.0 for v in rep.per_j.values())
        assert rep.is_cN is True

    @pytest.mark.parametrize("p", [2, 3, np.inf])
    def test_single_mode_against_multiplier(self, grid32, part32, p):
        f = _cos(grid32, (4, 0, 0))
        alpha = 0.4
        rep = dyadic_besov(f, alpha, p, np.inf, part32, fit=False)
        base = lp_norm(f, p)
        for j, v in rep.per_j.items():
            expected = 2 ** (j * alpha) * abs(phi_oracle(4.0, j)) * base
            assert v == pytest.approx(expected, rel=1e-12, abs=1e-13)
        assert {j for j, v in rep.per_j.items() if v > 1e-12} <= {1, 2, 3}
        assert rep.norm_value == pytest.approx(max(rep.per_j.values()), rel=1e-15)

    def test_lq_sum(self, grid32, part32):
        f = random_scalar(grid32, 1)
        rep = dyadic_besov(f, 0.3, 2, 2, part32, fit=False)
        assert rep.norm_value == pytest.approx(math.sqrt(sum(v * v for v in rep.per_j.values())), rel=1e-13)

    def test_lacunary_flat_and_slope(self, part64, flat_field):
        h = _horizontal(flat_field)
        per_j = weighted_blocks(h, part64, 1 / 3, 3)
        shells = [per_j[j] for j in range(1, part64.resolved_j_max + 1)]
        np.testing.assert_allclose(shells, 1.0, rtol=0.05)
        a_hat, width = estimate_regularity(h, 3, part64, range(1, part64.resolved_j_max + 1))
        assert abs(a_hat - 1 / 3) <= 0.1
        assert width >= 0

    @given(scale=st.floats(min_value=-50, max_value=50).filter(lambda s: abs(s) > 1e-3))
    @settings(max_examples=20, deadline=None)
    def test_scaling(self, scale):
        grid = GridSpec.cube(16)
        part = build_partition(grid)
        f = random_scalar(grid, 2)
        for p, q in [(2, np.inf), (3, 1), (np.inf, 2)]:
            a = dyadic_besov(f, 0.3, p, q, part, fit=False).norm_value
            b = dyadic_besov(f * scale, 0.3, p, q, part, fit=False).norm_value
            assert b == pytest.approx(abs(scale) * a, rel=1e-12)

    def test_translation_invariance(self, grid32, part32):
        f = random_scalar(grid32, 3)
        a = dyadic_besov(f, 0.5, 3, np.inf, part32, fit=False).per_j
        b = dyadic_besov(f.translate((3, -5, 7)), 0.5, 3, np.inf, part32, fit=False).per_j
        for j in a:
            assert b[j] == pytest.approx(a[j], rel=1e-12, abs=1e-14)

    def test_monotone_in_alpha(self, grid32, part32):
        f = lacunary_scalar(grid32, 0.5, seed=1, j_range=(1, 2, 3), part=part32)
        values = [dyadic_besov(f, a, 3, np.inf, part32, fit=False).norm_value for a in (0.1, 0.3, 0.6, 0.9)]
        assert all(x <= y for x, y in zip(values[:-1], values[1:]))

    def test_invalid_exponent(self, grid32, part32):
        with pytest.raises(InvalidInputError):
            dyadic_besov(random_scalar(grid32), 0.5, 0.5, np.inf, part32)


class TestFiniteDifference:
    def test_constant_is_zero(self, grid32):
        f = ScalarField(grid32, np.full(grid32.shape, 2.5))
        assert finite_difference_seminorm(f, 0.5, 3) == 0.0

    @pytest.mark.parametrize("k", [(1, 0, 0), (2, 3, 0), (1, 1, 4)])
    def test_cosine_closed_form(self, grid32, k):
        f = _cos(grid32, k)
        alpha = 0.4
        shifts = default_shifts(grid32)
        dx = grid32.spacing[0]
        cos_l2 = math.sqrt(grid32.volume / 2)
        expected = 0.0
        for s, length in zip(shifts.shifts, shifts.lengths(grid32)):
            phase = sum(ki * si * dx for ki, si in zip(k, s))
            expected = max(expected, length ** (-alpha) * 2 * abs(math.sin(phase / 2)) * cos_l2)
        assert finite_difference_seminorm(f, alpha, 2, shifts) == pytest.approx(expected, rel=1e-10)

    def test_single_shift(self, grid32):
        f = _cos(grid32, (3, 0, 0))
        dx = grid32.spacing[0]
        value = finite_difference_seminorm(f, 0.0, 2, ShiftSet(((2, 0, 0),)))
        assert value == pytest.approx(2 * abs(math.sin(3 * dx)) * math.sqrt(grid32.volume / 2), rel=1e-12)

    def test_empty_shift_set(self):
        with pytest.raises(InvalidInputError):
            ShiftSet(())

    def test_default_shifts_cover_scales(self, grid32):
        shifts = default_shifts(grid32)
        lengths = shifts.lengths(grid32)
        assert lengths.min() == pytest.approx(grid32.spacing[0])
        assert lengths.max() <= grid32.domain_length / 4 + 1e-12
        assert (1, 0, 0) in shifts.shifts and (1, 1, 1) in shifts.shifts

    def test_equivalent_to_dyadic_on_lacunary(self, part64, flat_field):
        h = _horizontal(flat_field)
        fd = finite_difference_seminorm(h, 1 / 3, 3)
        dy = max(v for j, v in weighted_blocks(h, part64, 1 / 3, 3).items() if j >= 0)
        assert np.isfinite(fd)
        assert 0.1 <= fd / dy <= 10

    def test_hoelder_embedding_ratio_bounded(self, grid32, part32):
        ratios = []
        for seed in range(6):
            for alpha in (0.3, 0.5, 0.7):
                f = lacunary_scalar(grid32, alpha, seed=seed, part=part32)
                besov = max(v for j, v in weighted_blocks(f, part32, alpha, 3).items() if j >= 0)
                hoelder = finite_difference_seminorm(f, alpha, np.inf)
                ratios.append(besov / hoelder)
        assert max(ratios) / min(ratios) < 10


class TestTail:
    def test_band_limited(self, grid64, part64):
        tail, is_cN = tail_indicator(taylor_green(grid64), 1 / 3, 3, part64)
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in tail.values())
        assert is_cN

    def test_flat_is_not_cN(self, part64, flat_field):
        tail, is_cN = tail_indicator(_horizontal(flat_field), 1 / 3, 3, part64)
        assert len(tail) == 3
        assert not is_cN

    def test_damped_is_cN(self, grid64, part64):
        u = lacunary_field(grid64, LacunarySpec(1 / 3, 1 / 3, seed=4, damping=True), part64)
        tail, is_cN = tail_indicator(_horizontal(u), 1 / 3, 3, part64)
        values = list(tail.values())
        assert all(b < a for a, b in zip(values[:-1], values[1:]))
        assert is_cN


class TestVMO:
    def test_constant(self, grid32):
        f = ScalarField(grid32, np.ones(grid32.shape))
        out = vmo_indicator(f, 0.5, 2, [0.3, 0.6])
        assert all(v == 0.0 for v in out.values())

    def test_smooth_rate(self, grid64):
        f = _cos(grid64, (1, 0, 0))
        eps = [0.15, 0.3, 0.6]
        out = vmo_indicator(f, 0.5, 2, eps)
        slope = np.polyfit(np.log(eps), np.log([out[e] for e in eps]), 1)[0]
        assert slope == pytest.approx(0.5, abs=0.1)

    def test_rough_field_stays_away_from_zero(self, part64, flat_field):
        h = _horizontal(flat_field)
        eps = [0.15, 0.3, 0.6, 1.2]
        out = vmo_indicator(h, 1 / 3, 3, eps)
        values = [out[e] for e in eps]
        assert min(values) >= 0.3 * max(values)

    def test_range_checked(self, grid32):
        with pytest.raises(InvalidInputError):
            vmo_indicator(random_scalar(grid32), 0.5, 2, [0.01])
        with pytest.raises(InvalidInputError):
            vmo_indicator(random_scalar(grid32), 0.5, 2, [2.0])


class TestRegularity:
    def test_high_alpha(self, grid64, part64):
        f = lacunary_scalar(grid64, 0.9, seed=2, part=part64)
        a_hat, _ = estimate_regularity(f, 3, part64, range(1, part64.resolved_j_max + 1))
        assert a_hat == pytest.approx(0.9, abs=0.1)

    def test_white_field(self, grid64, part64):
        u = random_divfree(grid64, spectrum_slope=-1.0, seed=3, k_max=grid64.k_nyquist)
        a_hat, _ = estimate_regularity(u, 2, part64, range(1, part64.resolved_j_max + 1))
        assert a_hat == pytest.approx(0.0, abs=0.1)

    def test_too_few_shells(self, grid32, part32):
        with pytest.raises(InvalidInputError):
            estimate_regularity(_cos(grid32, (3, 0, 0)), 3, part32)


class TestLemma26:
    def test_single_mode_closed_form(self, grid32, part32):
        f = _cos(grid32, (3, 0, 0))  # |k| = 3 sits on the plateau of shell 1
        q = 4.0
        out = lemma26_check(f, q, part32)
        cos_l2 = math.sqrt(grid32.volume / 2)
        rhs = cos_l2 ** ((6 - q) / (2 * q)) * (3 * cos_l2) ** ((3 * q - 6) / (2 * q))
        assert out["lhs"] == pytest.approx(lp_norm(f, q), rel=1e-12)
        assert out["rhs_shape"] == pytest.approx(rhs, rel=1e-12)
        assert np.isfinite(out["ratio"])

    def test_homogeneous(self, grid32, part32):
        f = random_scalar(grid32, 5)
        a = lemma26_check(f, 3.0, part32)["ratio"]
        b = lemma26_check(f * 7.5, 3.0, part32)["ratio"]
        assert b == pytest.approx(a, rel=1e-12)

    def test_family_bounded(self, grid32, part32):
        ratios = [lemma26_check(random_divfree(grid32, seed=s), 4.0, part32)["ratio"] for s in range(20)]
        assert max(ratios) / min(ratios) < 50

    def test_q_range(self, grid32, part32):
        for q in (2.0, 6.0):
            with pytest.raises(InvalidInputError):
                lemma26_check(random_scalar(grid32), q, part32)


class TestCoro13:
    def test_exponent_collapse(self, grid32, part32):
        ratios = coro13_interpolation_check(random_scalar(grid32, 6), 3.0, part32)
        for r in ratios.values():
            assert r == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p1", [1.0, 1.5, 2.0, 2.5])
    def test_random_fields_below_one(self, grid32, part32, p1):
        for seed in range(3):
            ratios = coro13_interpolation_check(random_scalar(grid32, seed), p1, part32)
            assert max(ratios.values()) <= 1 + 1e-10

    def test_single_mode(self, grid32, part32):
        ratios = coro13_interpolation_check(_cos(grid32, (3, 0, 0)), 2.0, part32)
        assert set(ratios) == {1}
        assert ratios[1] <= 1.0


class TestGagliardoNirenberg:
    def test_gn1_endpoint(self, grid32):
        u = random_divfree(grid32, seed=1)
        assert gn_checks(u, 4, 4)["ratio"] == pytest.approx(1.0, rel=1e-12)

    def test_gn1_family(self, grid32):
        snaps = [[random_divfree(grid32, seed=10 * s + t) for t in range(3)] for s in range(8)]
        ratios = [gn_checks(s, 3, 6, dt=0.1)["ratio"] for s in snaps]
        assert max(ratios) <= 1 + 1e-12
        assert max(ratios) / min(ratios) < 20

    def test_gn2(self, grid32):
        snaps = [random_divfree(grid32, seed=s) for s in range(3)]
        out = gn_checks(snaps, 7, 3.5, dt=0.1, kind="gn2")
        assert 0 < out["ratio"] <= 1 + 1e-12
        assert np.isfinite(out["ratio_gradient"]) and out["ratio_gradient"] > 0

    @pytest.mark.parametrize("kind, p, q", [("gn1", 3, 5), ("gn1", 6, 3), ("gn2", 4, 3.5), ("gn2", 4, 4), ("gn3", 4, 4)])
    def test_constraints(self, grid32, kind, p, q):
        with pytest.raises(InvalidInputError):
            gn_checks(random_scalar(grid32), p, q, kind=kind)
