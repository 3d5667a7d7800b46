"""Verification suites: one per acceptance criterion, each returning a :class:`SuiteResult`.

Every suite builds its own fields from fixed seeds, so results are
deterministic.  A suite is a list of named checks ``value <op> threshold``; it
passes when every check does.  ``run_suites`` evaluates suites in order,
optionally in worker processes (``DFLX_THREADS`` caps the pool), and returns
them in the requested order.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .besov import coro13_interpolation_check, lemma26_check
from .dynamics import EvolutionConfig, energy_balance_report, evolve
from .errors import InvalidInputError
from .flux import _FluxContext, flux_scan, ns_energy_criteria, resolved_energy, sn_commutator, total_flux
from .generators import (
    LacunarySpec,
    abc_flow,
    ccfs_field,
    critical_window,
    lacunary_field,
    lacunary_scalar,
    random_divfree,
    taylor_green,
)
from .littlewood_paley import build_partition, decompose
from .mollifier import cet_identity_residual, commutator_rate, make_mollifier, rate_check_lemma22
from .spectral import GridSpec, ScalarField, VectorField, lp_norm, time_norm


@dataclass
class Check:
    label: str
    value: float
    threshold: float
    op: str = "<"

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        if isinstance(v, float) and math.isnan(v):
            return False
        return {"<": v < t, "<=": v <= t, ">": v > t, ">=": v >= t}[self.op]

    def to_dict(self) -> dict:
        return {"label": self.label, "value": self.value, "op": self.op, "threshold": self.threshold,
                "passed": self.passed}


@dataclass
class SuiteResult:
    name: str
    criterion: int
    checks: List[Check] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = math.inf

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def within_budget(self) -> bool:
        return self.runtime <= self.budget

    def add(self, label: str, value: float, threshold: float, op: str = "<") -> Check:
        c = Check(label, float(value), float(threshold), op)
        self.checks.append(c)
        return c

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        worst = [c.label for c in self.checks if not c.passed]
        tail = f"; failing: {', '.join(worst[:3])}" if worst else ""
        return (f"criterion {self.criterion:2d} [{self.name}] {state} "
                f"({len(self.checks)} checks, {self.runtime:.1f}s / budget {self.budget:.0f}s){tail}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "criterion": self.criterion,
            "passed": self.passed,
            "runtime_s": self.runtime,
            "budget_s": self.budget,
            "checks": [c.to_dict() for c in self.checks],
            "details": self.details,
        }


def _horizontal(u: VectorField) -> VectorField:
    return VectorField(u.grid, np.stack([u.values[0], u.values[1], np.zeros(u.grid.shape)]))


def _random_scalar(grid: GridSpec, seed: int) -> ScalarField:
    return ScalarField(grid, np.random.default_rng(seed).standard_normal(grid.shape))


# ---------------------------------------------------------------------------
# criterion 1-3: exact identities
# ---------------------------------------------------------------------------


def suite_partition(n: int = 64, n_fields: int = 50) -> SuiteResult:
    res = SuiteResult("partition", 1, budget=30.0)
    part = build_partition(GridSpec.cube(n))
    res.add("partition of unity, max |sum - 1|", np.max(np.abs(part.partition_sum() - 1.0)), 1e-12)
    worst = 0.0
    for seed in range(n_fields):
        f = _random_scalar(part.grid, seed)
        rec = decompose(f, part).reconstruct()
        worst = max(worst, np.linalg.norm(rec.values - f.values) / np.linalg.norm(f.values))
    res.add(f"block reconstruction, max relative L2 error over {n_fields} fields", worst, 1e-10)
    return res


def suite_decomposition(n: int = 64, n_fields: int = 30) -> SuiteResult:
    res = SuiteResult("decomposition", 2, budget=120.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    flows = [(f"random_divfree seed {s}", random_divfree(grid, seed=s)) for s in range(n_fields)]
    flows += [("taylor_green", taylor_green(grid)), ("abc", abc_flow(grid))]
    worst = {}
    for name, u in flows:
        ctx = _FluxContext(u)
        r = 0.0
        for N in range(0, part.j_max + 1):
            filt = ctx.filtered(part.low_pass_multiplier(N))
            r = max(r, filt.residual(filt.terms(3)))
        worst[name] = r
    res.add(f"I+II+III+IV identity, {n_fields} random fields, all N", max(v for k, v in worst.items() if k.startswith("random")), 1e-10)
    res.add("I+II+III+IV identity, Taylor-Green, all N", worst["taylor_green"], 1e-10)
    res.add("I+II+III+IV identity, ABC, all N", worst["abc"], 1e-10)
    return res


def suite_cet(n: int = 32, n_pairs: int = 20) -> SuiteResult:
    res = SuiteResult("cet", 3, budget=60.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    eps_choices = [3 * grid.spacing[0] * 1.05, 0.7, grid.domain_length / 8]
    sn, moll = [], []
    for i in range(n_pairs):
        f, g = _random_scalar(grid, 2 * i), _random_scalar(grid, 2 * i + 1)
        sn.append(cet_identity_residual(f, g, part=part, N=i % (part.j_max + 1)))
        moll.append(cet_identity_residual(f, g, m=make_mollifier(grid, eps_choices[i % 3])))
    res.add(f"low-pass form, max residual over {n_pairs} pairs", max(sn), 1e-8)
    res.add(f"mollifier form, max residual over {n_pairs} pairs", max(moll), 1e-8)
    return res


# ---------------------------------------------------------------------------
# criterion 4-5: flux rates
# ---------------------------------------------------------------------------

RATE_CASES = ((0.5, 0.25, False), (0.5, 0.4, False), (0.7, 0.15, False), (1 / 3, 1 / 3, True))


def suite_rates(n: int = 128) -> SuiteResult:
    res = SuiteResult("rates", 4, budget=300.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    Ns = range(1, part.resolved_j_max + 1)
    for alpha, beta, damped in RATE_CASES:
        u = lacunary_field(grid, LacunarySpec(alpha, beta, seed=0, phase_mode="aligned", damping=damped), part)
        rep = flux_scan(u, part, Ns, alpha, beta)
        floor = min(3 * alpha - 1, 2 * alpha + beta - 1, alpha + 2 * beta - 1) - 0.2
        tag = f"alpha={alpha:.3g}, beta={beta:.3g}{' damped' if damped else ''}"
        res.add(f"{tag}: fitted decay exponent", rep.fitted_decay, floor, ">=")
        res.add(f"{tag}: shells in the fit", len(rep.fit_points), 4, ">=")
        res.details[tag] = {"totals": {str(N): rep.total[N] for N in rep.N_values},
                            "fitted_decay": rep.fitted_decay, "fit_points": rep.fit_points}
        if damped:
            top = [abs(rep.total[N]) for N in rep.N_values[-3:]]
            res.add(f"{tag}: top-3 |flux| strictly decreasing (count of increases)",
                    sum(b >= a for a, b in zip(top[:-1], top[1:])), 0, "<=")
    return res


def suite_witness(n: int = 128) -> SuiteResult:
    res = SuiteResult("witness", 5, budget=120.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    u = ccfs_field(grid, seed=0, part=part)
    Ns = critical_window(part)
    flux = np.abs([total_flux(u, part, N) for N in Ns])
    res.add("cut-offs in the window", len(Ns), min(4, part.resolved_j_max - 1), ">=")
    res.add("min |flux| over the window", flux.min(), 0.0, ">")
    res.add("max/min |flux| over the window", flux.max() / flux.min(), 10.0)
    res.details["flux"] = {str(N): float(v) for N, v in zip(Ns, flux)}
    return res


# ---------------------------------------------------------------------------
# criterion 6-8: commutators, mollifier rates, interpolation
# ---------------------------------------------------------------------------


def suite_commutator(n: int = 32, n_samples: int = 5) -> SuiteResult:
    res = SuiteResult("commutator", 6, budget=60.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    x = grid.coordinates()
    f = ScalarField(grid, np.broadcast_to(np.cos(3 * x[0]) * np.sin(2 * x[1]) + np.cos(x[2]), grid.shape))
    g = ScalarField(grid, np.broadcast_to(np.sin(x[0] + x[1]) * np.cos(2 * x[2]), grid.shape))
    bandwidth = math.sqrt(13.0)
    # S_N is the identity on |k| <= 3/4 2^N, which must cover the product band 2K
    band_N = [N for N in range(part.j_max + 1) if 0.75 * 2 ** N >= 2 * bandwidth]
    worst = max(np.max(np.abs(sn_commutator(f, g, part, N).values)) for N in band_N)
    res.add(f"band-limited pair, max |commutator| for N in {band_N}", worst, 1e-12)

    dt = 0.1
    samples = [lacunary_field(grid, LacunarySpec(0.5, 0.5, seed=s), part) for s in range(n_samples)]
    norms = [
        time_norm([lp_norm(sn_commutator(u.component(1), u.component(2), part, N), 2) for u in samples], dt, 2)
        for N in range(part.j_max + 1)
    ]
    peak = int(np.argmax(norms))
    after = norms[peak:]
    res.add("generator pairs: increases after the peak", sum(b >= a for a, b in zip(after[:-1], after[1:])), 0, "<=")
    res.add("generator pairs: final / peak", norms[-1] / norms[peak], 1e-3)
    res.details["L2L2 norms"] = {str(N): v for N, v in enumerate(norms)}
    res.details["peak_N"] = peak
    return res


def suite_mollifier(n: int = 256) -> SuiteResult:
    res = SuiteResult("mollifier", 7, budget=120.0)
    grid = GridSpec.cube(n)
    part = build_partition(grid)
    eps = [3 * grid.spacing[0] * 2 ** i for i in range(4)]
    f = lacunary_scalar(grid, 0.5, seed=1, part=part)
    r0 = rate_check_lemma22(f, 0.5, eps, k=0)
    f3 = lacunary_scalar(grid, 1 / 3, seed=2, part=part)
    r1 = rate_check_lemma22(f3, 1 / 3, eps, k=1)
    r2 = rate_check_lemma22(f3, 1 / 3, eps, k=2)
    g3 = lacunary_scalar(grid, 1 / 3, seed=3, part=part)
    rc = commutator_rate(f3, g3, eps, 2 / 3)
    res.add("octaves of eps", r0["octaves"], 3.0 - 1e-9, ">=")
    res.add("|slope - alpha|, ||f^eps - f||_3, alpha=1/2", abs(r0["slope"] - 0.5), 0.15, "<=")
    res.add("|slope - (alpha-1)|, ||grad f^eps||_3, alpha=1/3", abs(r1["slope"] - r1["expected"]), 0.15, "<=")
    res.add("|slope - (alpha-2)|, ||grad^2 f^eps||_3, alpha=1/3", abs(r2["slope"] - r2["expected"]), 0.15, "<=")
    res.add("commutator slope, alpha=beta=1/3", rc["slope"], 2 / 3 - 0.15, ">=")
    res.details.update(eps=eps, slopes={"k0": r0["slope"], "k1": r1["slope"], "k2": r2["slope"],
                                        "commutator": rc["slope"]})
    return res


def suite_interpolation(n_fields: int = 50) -> SuiteResult:
    res = SuiteResult("interpolation", 8, budget=60.0)
    grid = GridSpec.cube(64)
    part = build_partition(grid)
    fields = [lacunary_scalar(grid, a, seed=s, part=part) for s, a in enumerate((1 / 3, 0.5, 0.7))]
    fields += [random_divfree(grid, seed=s) for s in range(2)]
    worst = 0.0
    for f in fields:
        for p1 in (1.0, 1.5, 2.0, 2.5, 3.0):
            worst = max(worst, max(coro13_interpolation_check(f, p1, part).values()))
    res.add("max per-shell interpolation ratio", worst, 1 + 1e-10, "<=")
    for slope in (-5 / 3, -3.0):
        top = {}
        for n in (32, 64):
            g = GridSpec.cube(n)
            pg = build_partition(g)
            top[n] = max(
                lemma26_check(random_divfree(g, spectrum_slope=slope, seed=s), 4.0, pg)["ratio"]
                for s in range(n_fields)
            )
        res.add(f"block-sum ratio growth 32^3 -> 64^3, spectrum slope {slope:.3g}", top[64] / top[32], 2.0)
        res.details[f"max ratio, slope {slope:.3g}"] = {str(k): v for k, v in top.items()}
    return res


# ---------------------------------------------------------------------------
# criterion 9-10: dynamics
# ---------------------------------------------------------------------------


def _shear(grid: GridSpec, k: int) -> VectorField:
    x = grid.coordinates()
    v = np.zeros((3,) + grid.shape)
    v[0] = np.broadcast_to(np.sin(k * x[1]), grid.shape)
    return VectorField(grid, v)


def suite_dynamics() -> SuiteResult:
    res = SuiteResult("dynamics", 9, budget=300.0)
    g32 = GridSpec.cube(32)

    traj = evolve(taylor_green(g32), EvolutionConfig(0.0, 1e-3, 1.0, snapshot_every=100))
    drift = energy_balance_report(traj)["max_drift"] / traj.config.t_end
    res.add("inviscid energy drift per unit time, Taylor-Green 32^3, dt=1e-3", drift, 1e-8)

    part = build_partition(g32)
    dt = 1e-3
    traj = evolve(random_divfree(g32, seed=1), EvolutionConfig(0.0, dt, 2 * dt))
    (_, a), (_, b), (_, c) = traj.snapshots
    for N in (0, 1, 2):
        rate = (resolved_energy(c, part, N) - resolved_energy(a, part, N)) / (2 * dt)
        flux = total_flux(b, part, N)
        res.add(f"d/dt resolved energy vs flux, N={N} (relative)", abs(rate - flux) / abs(flux), 1e-3)

    nu, k = 0.1, 3
    traj = evolve(_shear(g32, k), EvolutionConfig(nu, 1e-2, 1.0, snapshot_every=10))
    err = max(np.max(np.abs(f.values - math.exp(-nu * k * k * t) * _shear(g32, k).values)) for t, f in traj.snapshots)
    res.add("viscous shear mode vs closed form, max error", err, 1e-8)

    g64 = GridSpec.cube(64)
    traj = evolve(taylor_green(g64), EvolutionConfig(1e-2, 1e-3, 0.2, snapshot_every=20))
    rep = energy_balance_report(traj)
    res.add("energy-equality residual |R|/E0, Taylor-Green 64^3, nu=1e-2", abs(rep["R_relative"]), 1e-5)
    res.details["energy_balance"] = rep
    return res


CRITERIA_CASES = ((1, dict(p1=4, q1=4, p2=4, q2=4)), (2, dict(p=4, q=6)), (3, dict(p=2, q=3)))


def suite_criteria() -> SuiteResult:
    res = SuiteResult("criteria", 10, budget=180.0)
    g32 = GridSpec.cube(32)
    trajs = {
        "stokes": (0.05, evolve(random_divfree(g32, seed=4), EvolutionConfig(0.05, 2e-3, 0.2, snapshot_every=25, nonlinear=False))),
        "taylor_green": (1e-2, evolve(taylor_green(g32), EvolutionConfig(1e-2, 1e-3, 0.1, snapshot_every=10))),
    }
    for name, (nu, traj) in trajs.items():
        for case, params in CRITERIA_CASES:
            v = ns_energy_criteria(traj, nu, case, params)
            res.add(f"{name} case {case}: satisfied", float(v.satisfied), 1.0, ">=")
            res.add(f"{name} case {case}: |R| - budget", abs(v.energy_residual) - v.tolerance, 0.0, "<=")

    g64 = GridSpec.cube(64)
    part = build_partition(g64)
    alpha, beta = 0.5, 0.25
    js = [0, 1, 2, 3]
    u = lacunary_field(g64, LacunarySpec(alpha, beta, j_range=tuple(js), seed=3), part)
    traj = evolve(u, EvolutionConfig(1e-2, 1e-3, 0.02, snapshot_every=5))
    v = ns_energy_criteria(traj, 1e-2, 4, dict(alpha=alpha, beta=beta, j_range=js), part)
    res.add("lacunary case 4: satisfied", float(v.satisfied), 1.0, ">=")
    res.add("lacunary case 4: |alpha_hat - alpha|", abs(v.norms["alpha_hat"] - alpha), 0.1, "<=")
    res.add("lacunary case 4: |beta_hat - beta|", abs(v.norms["beta_hat"] - beta), 0.1, "<=")
    res.details["case4"] = v.to_dict()
    return res


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "partition": suite_partition,
    "decomposition": suite_decomposition,
    "cet": suite_cet,
    "rates": suite_rates,
    "witness": suite_witness,
    "commutator": suite_commutator,
    "mollifier": suite_mollifier,
    "interpolation": suite_interpolation,
    "dynamics": suite_dynamics,
    "criteria": suite_criteria,
}

GROUPS: Dict[str, List[str]] = {
    "identities": ["partition", "decomposition", "cet"],
    "onsager": list(SUITES),
    "all": list(SUITES),
}


def expand(names: Sequence[str]) -> List[str]:
    out: List[str] = []
    for name in names:
        members = GROUPS.get(name, [name])
        for m in members:
            if m not in SUITES:
                raise InvalidInputError(f"unknown suite {m!r}; choose from {sorted(SUITES) + sorted(GROUPS)}")
            if m not in out:
                out.append(m)
    return out


def run_suite(name: str) -> SuiteResult:
    start = time.perf_counter()
    res = SUITES[name]()
    res.runtime = time.perf_counter() - start
    return res


def default_jobs() -> int:
    value = os.environ.get("DFLX_THREADS")
    try:
        return max(1, int(value)) if value else 1
    except ValueError:
        return 1


def run_suites(names: Sequence[str], jobs: int | None = None) -> List[SuiteResult]:
    """Run suites (groups are expanded) and return results in suite order."""
    order = expand(names)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(order) == 1:
        return [run_suite(n) for n in order]
    with ProcessPoolExecutor(max_workers=min(jobs, len(order))) as pool:
        return list(pool.map(run_suite, order))
