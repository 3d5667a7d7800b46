import dataclasses

import numpy as np
import pytest

import dflx.dynamics as dyn
from dflx.dynamics import (
    EvolutionConfig,
    dealias_mask,
    energy_balance_report,
    evolve,
    nonlinear_term,
    step,
    truncate,
)
from dflx.errors import IntegrationError, InvalidInputError
from dflx.flux import ns_energy_criteria, resolved_energy, total_flux
from dflx.generators import random_divfree, taylor_green
from dflx.littlewood_paley import build_partition
from dflx.spectral import (
    GridSpec,
    VectorField,
    derivative,
    divergence_defect,
    inner,
    leray_project,
    lp_norm,
    wavenumbers,
)


@pytest.fixture(scope="module")
def g16():
    return GridSpec.cube(16)


def _band_limited(grid, seed, kmax):
    """Divergence-free random field with modes |k| <= kmax."""
    u = random_divfree(grid, seed=seed)
    return truncate(u, M=kmax)


def _shear(grid, k=2, amp=1.0):
    x = grid.coordinates()
    v = np.zeros((3,) + grid.shape)
    v[0] = amp * np.broadcast_to(np.sin(k * x[1]), grid.shape)
    return VectorField(grid, v)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(nu=-1.0, dt=0.1, t_end=1.0),
            dict(nu=0.0, dt=0.0, t_end=1.0),
            dict(nu=0.0, dt=0.1, t_end=-1.0),
            dict(nu=0.0, dt=0.1, t_end=1.0, dealias="none"),
            dict(nu=0.0, dt=0.1, t_end=1.0, integrator="euler"),
            dict(nu=0.0, dt=0.1, t_end=1.0, snapshot_every=0),
            dict(nu=0.0, dt=0.1, t_end=1.0, M=0),
            dict(nu=0.0, dt=0.3, t_end=1.0),
            dict(nu=0.0, dt=0.1, t_end=1.0, snapshot_every=3),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            EvolutionConfig(**kwargs)

    def test_steps_and_cutoff(self, g16):
        cfg = EvolutionConfig(0.0, 0.1, 1.0, snapshot_every=5)
        assert cfg.n_steps == 10
        assert cfg.cutoff(g16) == 5
        assert cfg.to_dict()["snapshot_every"] == 5
        with pytest.raises(InvalidInputError):
            EvolutionConfig(0.0, 0.1, 1.0, M=6).cutoff(g16)


class TestMasks:
    def test_spherical(self, g16):
        k = wavenumbers(g16)
        mag = np.sqrt(sum(c.astype(float) ** 2 for c in k))
        np.testing.assert_array_equal(dealias_mask(g16, 5), mag <= 5)

    def test_two_thirds(self, g16):
        mask = dealias_mask(g16, 5, "two-thirds")
        k = wavenumbers(g16)
        assert mask[5, 5, 5] and not mask[6, 0, 0] and mask[11, 0, 0] and not mask[0, 0, 6]
        assert mask.sum() > dealias_mask(g16, 5).sum()
        assert np.all(mask == ((np.abs(k[0]) <= 5) & (np.abs(k[1]) <= 5) & (np.abs(k[2]) <= 5)))

    def test_unknown_rule(self, g16):
        with pytest.raises(InvalidInputError):
            dealias_mask(g16, 5, "cubic")


class TestNonlinearTerm:
    def test_shear_is_steady(self, g16):
        assert np.max(np.abs(nonlinear_term(_shear(g16)).values)) < 1e-13

    def test_energy_neutral(self, g16):
        for seed in range(3):
            u = truncate(random_divfree(g16, seed=seed))
            Nu = nonlinear_term(u)
            scale = lp_norm(u, 2) ** 3
            assert abs(sum(inner(Nu.component(a), u.component(a)) for a in (1, 2, 3))) < 1e-12 * scale

    def test_divergence_free(self, g16):
        assert divergence_defect(nonlinear_term(truncate(random_divfree(g16, seed=4)))) < 1e-10

    @pytest.mark.parametrize("flow", ["random", "taylor_green"])
    def test_advective_form_oracle(self, g16, flow):
        # with |k| <= 2 every product mode has |k| <= 4 < 5 = M, so no truncation acts
        u = _band_limited(g16, 5, 2) if flow == "random" else taylor_green(g16)
        adv = np.zeros((3,) + g16.shape)
        for i in range(3):
            for j in range(3):
                adv[i] += u.values[j] * derivative(u.component(i + 1), j + 1).values
        expected = leray_project(VectorField(g16, -adv))
        np.testing.assert_allclose(nonlinear_term(u).values, expected.values, atol=1e-12)


class TestEvolution:
    def test_stokes_single_mode(self, g16):
        nu, k, T = 0.05, 2, 1.0
        traj = evolve(_shear(g16, k), EvolutionConfig(nu, 0.05, T, snapshot_every=5))
        for t, f in traj.snapshots:
            np.testing.assert_allclose(f.values, np.exp(-nu * k * k * t) * _shear(g16, k).values, atol=1e-13)

    def test_heat_flow(self, g16):
        u = truncate(random_divfree(g16, seed=1))
        traj = evolve(u, EvolutionConfig(0.1, 0.1, 0.5, nonlinear=False))
        k = wavenumbers(g16)
        k2 = sum(c.astype(float) ** 2 for c in k)
        expected = np.fft.irfftn(np.fft.rfftn(u.values, axes=(1, 2, 3)) * np.exp(-0.1 * k2 * 0.5), s=g16.shape, axes=(1, 2, 3))
        np.testing.assert_allclose(traj.final.values, expected, atol=1e-12)

    def test_inviscid_conservation(self, g16):
        u = random_divfree(g16, seed=3)
        traj = evolve(u, EvolutionConfig(0.0, 5e-3, 0.4, snapshot_every=20))
        assert energy_balance_report(traj)["max_drift"] < 1e-11 * traj.energy[0]

    def test_drift_order(self, g16):
        u = random_divfree(g16, seed=3)
        drift = [
            energy_balance_report(evolve(u, EvolutionConfig(0.0, dt, 0.4, snapshot_every=4)))["max_drift"]
            for dt in (2e-2, 1e-2)
        ]
        assert drift[0] / drift[1] > 12

    def test_viscous_decay(self, g16):
        traj = evolve(random_divfree(g16, seed=2), EvolutionConfig(0.05, 1e-2, 0.5, snapshot_every=10))
        assert np.all(np.diff(traj.energy) <= 1e-14 * traj.energy[0])
        rep = energy_balance_report(traj)
        assert abs(rep["R_equality"]) <= rep["tolerance"]
        assert rep["inequality_holds"] and rep["max_drift"] is None

    def test_invariants(self, g16):
        u = truncate(random_divfree(g16, seed=6))
        traj = evolve(u, EvolutionConfig(0.01, 1e-2, 0.2, snapshot_every=10))
        for _, f in traj.snapshots:
            assert divergence_defect(f) < 1e-10
            assert np.max(np.abs(f.values.mean(axis=(1, 2, 3)))) < 1e-14

    def test_step_matches_evolve(self, g16):
        u = truncate(random_divfree(g16, seed=7))
        cfg = EvolutionConfig(0.02, 1e-2, 1e-2)
        np.testing.assert_allclose(step(u, cfg).values, evolve(u, cfg).final.values, atol=1e-14)

    def test_flux_drives_resolved_energy(self):
        grid = GridSpec.cube(32)
        part = build_partition(grid)
        dt = 1e-3
        traj = evolve(random_divfree(grid, seed=1), EvolutionConfig(0.0, dt, 2 * dt))
        (_, a), (_, b), (_, c) = traj.snapshots
        for N in (0, 1):
            rate = (resolved_energy(c, part, N) - resolved_energy(a, part, N)) / (2 * dt)
            assert rate == pytest.approx(total_flux(b, part, N), rel=1e-5)

    def test_snapshots(self, g16):
        traj = evolve(taylor_green(g16), EvolutionConfig(0.0, 0.01, 0.1, snapshot_every=5))
        assert [t for t, _ in traj.snapshots] == pytest.approx([0.0, 0.05, 0.1])
        assert traj.energy.size == 11 and traj.dissipation.size == 11
        assert len(traj.max_velocity) == 3

    def test_cfl_at_start(self, g16):
        with pytest.raises(InvalidInputError):
            evolve(taylor_green(g16, amplitude=100.0), EvolutionConfig(0.0, 0.01, 0.1))

    def test_blowup_guard(self, g16, monkeypatch):
        monkeypatch.setattr(dyn, "BLOWUP_FACTOR", 0.5)
        with pytest.raises(IntegrationError):
            evolve(taylor_green(g16), EvolutionConfig(1.0, 0.1, 1.0))


class TestBalance:
    def test_needs_three_snapshots(self, g16):
        traj = evolve(taylor_green(g16), EvolutionConfig(0.0, 0.01, 0.02, snapshot_every=2))
        with pytest.raises(InvalidInputError):
            energy_balance_report(traj)

    def test_quadrature_pair(self):
        t = np.linspace(0, 1, 9)
        fine, coarse = dyn._quadrature_pair(t ** 3, 1 / 8)
        assert fine == pytest.approx(0.25, abs=1e-15) and coarse == pytest.approx(0.25, abs=1e-15)
        fine, coarse = dyn._quadrature_pair(np.exp(-t[:7]), 1 / 8)
        assert abs(fine - (1 - np.exp(-0.75))) < abs(coarse - (1 - np.exp(-0.75)))


@pytest.fixture(scope="module")
def traj():
    grid = GridSpec.cube(16)
    return evolve(random_divfree(grid, seed=2), EvolutionConfig(0.05, 1e-2, 0.2, snapshot_every=5))


class TestCriteria:
    def test_cases(self, traj):
        for case, params in [
            (1, dict(p1=4, q1=4, p2=4, q2=4)),
            (2, dict(p=4, q=6)),
            (3, dict(p=2, q=3)),
        ]:
            v = ns_energy_criteria(traj, 0.05, case, params)
            assert v.satisfied and all(np.isfinite(x) for x in v.norms.values())
            assert v.to_dict()["case"] == case

    def test_besov_case(self):
        grid = GridSpec.cube(32)
        u = random_divfree(grid, seed=2, rms=0.5)
        traj = evolve(u, EvolutionConfig(0.05, 1e-2, 0.04, snapshot_every=2))
        v = ns_energy_criteria(traj, 0.05, 4, dict(alpha=0.5, beta=0.25, j_range=[0, 1, 2, 3]))
        assert v.satisfied
        assert {"alpha_hat", "beta_hat", "u_h L^3 B^alpha_3inf"} <= set(v.norms)
        assert v.params["j_range"] == [0, 1, 2, 3]

    def test_zero_field(self):
        grid = GridSpec.cube(16)
        traj = evolve(VectorField.zeros(grid), EvolutionConfig(0.1, 0.1, 0.4))
        v = ns_energy_criteria(traj, 0.1, 2, dict(p=4, q=6))
        assert v.energy_residual == 0.0 and v.satisfied

    @pytest.mark.parametrize(
        "case, params",
        [
            (1, dict(p1=4, q1=4, p2=3, q2=4)),
            (2, dict(p=4, q=5)),
            (2, dict(p=1.5, q=2.0)),
            (3, dict(p=2, q=2)),
            (4, dict(alpha=0.3, beta=0.5)),
            (4, dict(alpha=0.5, beta=0.2)),
            (5, {}),
        ],
    )
    def test_constraints(self, traj, case, params):
        with pytest.raises(InvalidInputError):
            ns_energy_criteria(traj, 0.05, case, params)

    def test_viscosity_mismatch(self, traj):
        with pytest.raises(InvalidInputError):
            ns_energy_criteria(traj, 0.1, 2, dict(p=4, q=6))

    def test_nonuniform_snapshots(self, traj):
        snaps = list(traj.snapshots)
        snaps[1] = (snaps[1][0] + 0.01, snaps[1][1])
        bad = dataclasses.replace(traj, snapshots=snaps)
        with pytest.raises(InvalidInputError):
            ns_energy_criteria(bad, 0.05, 2, dict(p=4, q=6))
