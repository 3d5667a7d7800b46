"""Dyadic energy flux, its anisotropic commutator decomposition and the
kernel-convolution bounds that control it.

For a divergence-free field ``u`` and the low-pass filter ``S_N`` the resolved
energy ``E_N = 1/2 ||S_N u||^2`` changes at the rate

    Pi_N = sum_{i,j} int S_N(u_i u_j) d_i S_N u_j dx.

Writing ``C_N(f, g) = S_N(fg) - S_N f S_N g`` and using the cancellation
``sum int S_N u_i S_N u_j d_i S_N u_j = 0`` gives ``Pi_N = I + II + III + IV`` with

    I   = sum_{i,j in h} int C_N(u_i, u_j) d_i S_N u_j
    II  = sum_{i in h}   int C_N(u_i, u_v) d_i S_N u_v
    III = sum_{j in h}   int C_N(u_v, u_j) d_v S_N u_j
    IV  = - int C_N(u_v, u_v) (d_h1 S_N u_h1 + d_h2 S_N u_h2)

where ``v`` is the vertical axis and ``h`` the two others.  Products are
computed alias-free on a 3/2-padded grid, so every pairing is the exact
integral of trigonometric polynomials and the identity holds to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from ._fit import fit_line
from .errors import InvalidInputError
from .littlewood_paley import DyadicPartition, build_partition, stacked_block_norms
from .spectral import (
    PaddedProducts,
    ScalarField,
    VectorField,
    array_lp,
    derivative_multiplier,
    divergence_defect,
    gradient,
    irfft3,
    lp_norm,
    rfft3,
    same_grid,
    spectral_inner,
    time_norm,
)

DIV_TOL = 1e-10
FLOOR = 1e-30
ROUNDOFF = 1e-12  # flux totals below this fraction of the Cauchy-Schwarz scale are round-off


def _axes(vertical_axis: int) -> tuple[list[int], int]:
    if vertical_axis not in (1, 2, 3):
        raise InvalidInputError(f"vertical_axis must be 1, 2 or 3, got {vertical_axis}")
    v = vertical_axis - 1
    return [a for a in range(3) if a != v], v


def _check_divfree(u: VectorField, tol: float = DIV_TOL) -> None:
    d = divergence_defect(u)
    if d > tol:
        raise InvalidInputError(f"field is not divergence-free (relative defect {d:.3e})")


class _FluxContext:
    """Caches the padded-grid samples of ``u`` and the exact lattice coefficients of ``u_i u_j``."""

    def __init__(self, u: VectorField):
        self.grid = u.grid
        self.pp = PaddedProducts(u.grid)
        self.u_hat = rfft3(u.values)
        phys = [self.pp.physical(self.u_hat[i]) for i in range(3)]
        self.prod_hat = {}
        for i in range(3):
            for j in range(i, 3):
                self.prod_hat[(i, j)] = self.pp.back(phys[i] * phys[j])
        self.deriv = [derivative_multiplier(self.grid, a) for a in range(3)]

    def product(self, i: int, j: int) -> np.ndarray:
        return self.prod_hat[(min(i, j), max(i, j))]

    def filtered(self, m: np.ndarray) -> "_Filtered":
        return _Filtered(self, m)


class _Filtered:
    """Quantities for one filter symbol ``m`` (``rho(2^-N k)`` or a mollifier transform)."""

    def __init__(self, ctx: _FluxContext, m: np.ndarray):
        self.ctx = ctx
        self.m = m
        self.su_hat = ctx.u_hat * m
        self._phys = None
        self._comm = {}

    def grad(self, i: int, j: int) -> np.ndarray:
        """Coefficients of ``d_i S u_j``."""
        return self.ctx.deriv[i] * self.su_hat[j]

    def total(self) -> float:
        return sum(self.total_parts())

    def total_parts(self) -> list[float]:
        """The nine contributions ``int S(u_i u_j) d_i S u_j``; their sum is the flux."""
        if not hasattr(self, "_parts"):
            self._parts = [
                spectral_inner(self.m * self.ctx.product(i, j), self.grad(i, j), self.ctx.grid)
                for i in range(3)
                for j in range(3)
            ]
        return self._parts

    def scale(self) -> float:
        """``sum_{ij} ||S(u_i u_j)||_2 ||d_i S u_j||_2``: Cauchy-Schwarz size of the flux contributions."""
        g = self.ctx.grid
        acc = 0.0
        for i in range(3):
            for j in range(3):
                a = self.m * self.ctx.product(i, j)
                b = self.grad(i, j)
                acc += np.sqrt(max(spectral_inner(a, a, g), 0.0) * max(spectral_inner(b, b, g), 0.0))
        return acc

    def residual(self, terms: Sequence[float]) -> float:
        """Identity defect of ``terms`` (computed by :meth:`terms` on this object)."""
        return relative_residual(self.total(), terms, self.scale() + getattr(self, "_pair_scale", 0.0))

    def commutator_hat(self, i: int, j: int) -> np.ndarray:
        key = (min(i, j), max(i, j))
        if key not in self._comm:
            if self._phys is None:
                self._phys = [self.ctx.pp.physical(self.su_hat[a]) for a in range(3)]
            s_prod = self.ctx.pp.back(self._phys[key[0]] * self._phys[key[1]])
            self._comm[key] = self.m * self.ctx.product(*key) - s_prod
        return self._comm[key]

    def pair(self, i: int, j: int, di: int, dj: int) -> float:
        """``int C(u_i, u_j) d_di S u_dj``."""
        g = self.ctx.grid
        c, d = self.commutator_hat(i, j), self.grad(di, dj)
        self._pair_scale = getattr(self, "_pair_scale", 0.0) + np.sqrt(
            max(spectral_inner(c, c, g), 0.0) * max(spectral_inner(d, d, g), 0.0)
        )
        return spectral_inner(c, d, g)

    def trilinear(self) -> float:
        """``sum_{i,j} int S u_i S u_j d_i S u_j`` (vanishes for divergence-free ``u``)."""
        if self._phys is None:
            self._phys = [self.ctx.pp.physical(self.su_hat[a]) for a in range(3)]
        acc = 0.0
        for i in range(3):
            for j in range(3):
                ss = self.ctx.pp.back(self._phys[i] * self._phys[j])
                acc += spectral_inner(ss, self.grad(i, j), self.ctx.grid)
        return acc

    def terms(self, vertical_axis: int = 3, split_last: bool = False) -> tuple[float, ...]:
        h, v = _axes(vertical_axis)
        I = sum(self.pair(i, j, i, j) for i in h for j in h)
        II = sum(self.pair(i, v, i, v) for i in h)
        III = sum(self.pair(v, j, v, j) for j in h)
        last = [-self.pair(v, v, a, a) for a in h]
        if split_last:
            return (I, II, III, last[0], last[1])
        return (I, II, III, last[0] + last[1])


def _check_N(part: DyadicPartition, N: int) -> None:
    if not (0 <= N <= part.j_max):
        raise InvalidInputError(f"N={N} outside 0..{part.j_max}")


# ---------------------------------------------------------------------------
# single-N quantities
# ---------------------------------------------------------------------------


def resolved_energy(u: VectorField, part: DyadicPartition, N: int) -> float:
    """``1/2 ||S_N u||_2^2``."""
    part.check_grid(u.grid)
    _check_N(part, N)
    s_hat = rfft3(u.values) * part.low_pass_multiplier(N)
    return 0.5 * sum(spectral_inner(s_hat[i], s_hat[i], u.grid) for i in range(3))


def sn_commutator(f: ScalarField, g: ScalarField, part: DyadicPartition, N: int) -> ScalarField:
    """``S_N(fg) - S_N f S_N g`` with alias-free products."""
    grid = same_grid(f, g)
    part.check_grid(grid)
    _check_N(part, N)
    m = part.low_pass_multiplier(N)
    pp = PaddedProducts(grid)
    f_hat, g_hat = rfft3(f.values), rfft3(g.values)
    full = pp.product_hat(f_hat, g_hat)
    low = pp.product_hat(f_hat * m, g_hat * m)
    return ScalarField(grid, irfft3(m * full - low, grid.shape))


def total_flux(u: VectorField, part: DyadicPartition, N: int, *, check: bool = True) -> float:
    """``sum_{ij} int S_N(u_i u_j) d_i S_N u_j dx``."""
    part.check_grid(u.grid)
    _check_N(part, N)
    if check:
        _check_divfree(u)
    return _FluxContext(u).filtered(part.low_pass_multiplier(N)).total()


def anisotropic_decomposition(
    u: VectorField, part: DyadicPartition, N: int, vertical_axis: int = 3, *, check: bool = True
) -> tuple[float, float, float, float]:
    """``(I, II, III, IV)`` for the given vertical axis."""
    part.check_grid(u.grid)
    _check_N(part, N)
    if check:
        _check_divfree(u)
    return _FluxContext(u).filtered(part.low_pass_multiplier(N)).terms(vertical_axis)


def trilinear_cancellation(u: VectorField, part: DyadicPartition, N: int) -> float:
    """``sum_{ij} int S_N u_i S_N u_j d_i S_N u_j dx``; zero for divergence-free fields."""
    part.check_grid(u.grid)
    _check_N(part, N)
    return _FluxContext(u).filtered(part.low_pass_multiplier(N)).trilinear()


def relative_residual(total: float, terms: Sequence[float], scale: float = 0.0) -> float:
    """``|sum(terms) - total|`` relative to the magnitudes that enter the comparison.

    ``scale`` adds the size of the contributions that cancel inside ``total``, so
    a flux that vanishes up to round-off is not compared with round-off alone.
    """
    return abs(sum(terms) - total) / (abs(total) + sum(abs(t) for t in terms) + scale + FLOOR)


# ---------------------------------------------------------------------------
# kernels and bound sequences
# ---------------------------------------------------------------------------


def gamma1(j: int, alpha: float) -> float:
    """``2^{j alpha}`` for ``j <= 0``, ``2^{-(1-alpha) j}`` for ``j > 0``."""
    return 2.0 ** (j * alpha) if j <= 0 else 2.0 ** (-(1.0 - alpha) * j)


def gamma0(j: int) -> float:
    """``2^{j}`` for ``j <= 0``, ``2^{-j}`` for ``j > 0``."""
    return 2.0 ** j if j <= 0 else 2.0 ** (-j)


def kernel_function(kernel: str, alpha: Optional[float] = None) -> Callable[[int], float]:
    if kernel == "gamma0":
        return gamma0
    if kernel in ("gamma1", "gamma2"):
        if alpha is None or not (0 < alpha < 1):
            raise InvalidInputError(f"{kernel} needs an exponent in (0, 1), got {alpha}")
        return lambda j: gamma1(j, alpha)
    raise InvalidInputError(f"unknown kernel {kernel!r}")


def kernel_convolve(seq: Dict[int, float], kernel, N: int, alpha: Optional[float] = None) -> float:
    """``(Gamma * d)(N) = sum_j Gamma(N - j) d_j`` over the stored ``j`` (zero elsewhere)."""
    gamma = kernel if callable(kernel) else kernel_function(kernel, alpha)
    return float(sum(gamma(N - j) * d for j, d in seq.items()))


@dataclass(frozen=True)
class BoundSequences:
    alpha: float
    beta: float
    d_h: Dict[int, float]
    d_v: Dict[int, float]

    def kernels(self, N: int) -> tuple[float, float]:
        return (
            kernel_convolve(self.d_h, "gamma1", N, self.alpha),
            kernel_convolve(self.d_v, "gamma2", N, self.beta),
        )


def _check_exponents(alpha: float, beta: float) -> None:
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not (0.0 < v < 1.0):
            raise InvalidInputError(f"{name} must lie in (0, 1), got {v}")


def bound_sequences(
    u: VectorField, part: DyadicPartition, alpha: float, beta: float, vertical_axis: int = 3
) -> BoundSequences:
    """``d_h[j] = 2^{j alpha} ||Delta_j u_h||_3`` and ``d_v[j] = 2^{j beta} ||Delta_j u_v||_3``."""
    _check_exponents(alpha, beta)
    part.check_grid(u.grid)
    h, v = _axes(vertical_axis)
    js = part.j_values
    nh = stacked_block_norms(np.asarray(u.values)[h], part, 3.0, js)
    nv = stacked_block_norms(np.asarray(u.values)[[v]], part, 3.0, js)
    return BoundSequences(
        alpha,
        beta,
        {j: 2.0 ** (j * alpha) * nh[j] for j in js},
        {j: 2.0 ** (j * beta) * nv[j] for j in js},
    )


def bounds_from_sequences(seqs: BoundSequences, N: int) -> tuple[float, float, float, float]:
    a, b = seqs.alpha, seqs.beta
    g1, g2 = seqs.kernels(N)
    b_I = 2.0 ** ((1 - 3 * a) * N) * g1 ** 3
    b_II = 2.0 ** ((1 - a - 2 * b) * N) * g1 * g2 ** 2
    b_III = 2.0 ** ((1 - 2 * a - b) * N) * g1 ** 2 * g2
    return (b_I, b_II, b_III, b_II)


def theoretical_bounds(
    u: VectorField, part: DyadicPartition, alpha: float, beta: float, N: int, vertical_axis: int = 3
) -> tuple[float, float, float, float]:
    """``(b_I, b_II, b_III, b_IV)`` with unit constants."""
    return bounds_from_sequences(bound_sequences(u, part, alpha, beta, vertical_axis), N)


def decay_exponents(alpha: float, beta: float) -> dict:
    return {
        "I": 3 * alpha - 1,
        "II": alpha + 2 * beta - 1,
        "III": 2 * alpha + beta - 1,
        "IV": alpha + 2 * beta - 1,
    }


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


@dataclass
class FluxReport:
    alpha: float
    beta: float
    vertical_axis: int
    N_values: list
    total: Dict[int, float] = field(default_factory=dict)
    terms: Dict[int, tuple] = field(default_factory=dict)
    identity_residual: Dict[int, float] = field(default_factory=dict)
    kernel_values: Dict[int, tuple] = field(default_factory=dict)
    bounds: Dict[int, tuple] = field(default_factory=dict)
    fitted_decay: float = math.inf
    fit_points: list = field(default_factory=list)
    roundoff: Dict[int, bool] = field(default_factory=dict)

    def checked_residual(self) -> float:
        """Largest identity residual over the rows that are not at round-off level."""
        return max((r for N, r in self.identity_residual.items() if not self.roundoff.get(N, False)), default=0.0)

    def to_dict(self) -> dict:
        rows = []
        for N in self.N_values:
            rows.append(
                {
                    "N": N,
                    "total": self.total[N],
                    "terms": list(self.terms[N]),
                    "residual": self.identity_residual[N],
                    "roundoff": self.roundoff.get(N, False),
                    "kernels": list(self.kernel_values[N]),
                    "bounds": list(self.bounds[N]),
                }
            )
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "vertical_axis": self.vertical_axis,
            "rows": rows,
            "fitted_decay": self.fitted_decay,
            "fit_points": self.fit_points,
        }

    def csv_rows(self) -> list[list]:
        out = []
        for N in self.N_values:
            out.append(
                [N, self.total[N], *self.terms[N], self.identity_residual[N], *self.bounds[N]]
            )
        return out

    CSV_HEADER = ["N", "total", "I", "II", "III", "IV", "residual", "bI", "bII", "bIII", "bIV"]


def fit_decay(
    Ns: Sequence[int], values: Sequence[float], rel_floor: float = 1e-10, abs_floor: float = 0.0
) -> tuple[float, list]:
    """Exponent ``s`` in ``|value| ~ 2^{-s N}``.

    Points below ``rel_floor`` times the largest magnitude, or below
    ``abs_floor``, are treated as zero.
    A sequence that reaches zero at the end of the range decays faster than any
    power and yields ``+inf``.
    """
    mags = np.abs(np.asarray(values, dtype=float))
    if mags.size == 0:
        raise InvalidInputError("empty N range")
    top = mags.max()
    if top <= max(FLOOR, abs_floor):
        return math.inf, []
    alive = (mags > rel_floor * top) & (mags > abs_floor)
    if not alive[-1]:
        return math.inf, [int(n) for n, a in zip(Ns, alive) if a]
    pts = [int(n) for n, a in zip(Ns, alive) if a]
    if len(pts) < 2:
        return math.inf, pts
    fit = fit_line(pts, np.log2(mags[alive]))
    return -fit.slope, pts


def flux_scan(
    u: VectorField,
    part: DyadicPartition,
    N_range: Iterable[int],
    alpha: float,
    beta: float,
    vertical_axis: int = 3,
    *,
    min_points: int = 4,
    check: bool = True,
) -> FluxReport:
    """Total flux, decomposition, kernels and bounds for every ``N`` in the range."""
    Ns = sorted(int(n) for n in N_range)
    if len(Ns) == 0:
        raise InvalidInputError("empty N range")
    if len(Ns) < min_points:
        raise InvalidInputError(f"need at least {min_points} values of N, got {len(Ns)}")
    for N in Ns:
        _check_N(part, N)
    part.check_grid(u.grid)
    if check:
        _check_divfree(u)
    seqs = bound_sequences(u, part, alpha, beta, vertical_axis)
    ctx = _FluxContext(u)
    report = FluxReport(alpha, beta, vertical_axis, Ns)
    noise = 0.0
    # rows whose Cauchy-Schwarz scale is round-off compared with the unfiltered
    # field carry no resolved content; their relative residual is meaningless
    full_scale = ctx.filtered(np.ones_like(part.low_pass_multiplier(Ns[0]))).scale()
    for N in Ns:
        filt = ctx.filtered(part.low_pass_multiplier(N))
        report.roundoff[N] = bool(filt.scale() <= ROUNDOFF * full_scale)
        total = filt.total()
        terms = filt.terms(vertical_axis)
        report.total[N] = total
        report.terms[N] = terms
        report.identity_residual[N] = filt.residual(terms)
        noise = max(noise, ROUNDOFF * filt.scale())
        report.kernel_values[N] = seqs.kernels(N)
        report.bounds[N] = bounds_from_sequences(seqs, N)
    report.fitted_decay, report.fit_points = fit_decay(Ns, [report.total[N] for N in Ns], abs_floor=noise)
    return report


def bound_constant(reports: Sequence[FluxReport], term: int) -> dict:
    """Fit one constant ``C`` for ``|term| <= C * b_term`` across a family of scans.

    ``C`` is the largest ratio over the lower half of the ``N`` range; the
    check is that the upper half never needs more than ``slack * C``.
    Returns ``{'C', 'max_ratio_upper', 'growth'}``.
    """
    lower, upper = [], []
    for rep in reports:
        Ns = rep.N_values
        split = Ns[len(Ns) // 2]
        for N in Ns:
            b = rep.bounds[N][term]
            if b <= 0:
                continue
            r = abs(rep.terms[N][term]) / b
            (lower if N < split else upper).append(r)
    C = max(lower) if lower else 0.0
    up = max(upper) if upper else 0.0
    return {"C": C, "max_ratio_upper": up, "growth": up / C if C > 0 else math.inf}


# ---------------------------------------------------------------------------
# mollifier form
# ---------------------------------------------------------------------------


def mollifier_flux_decomposition(u: VectorField, mollifier, vertical_axis: int = 3, *, check: bool = True) -> dict:
    """Five-term split of ``sum int (u_i u_j)^eps d_i u_j^eps`` with mollifier commutators.

    Returns ``{'total', 'terms': (I, II, III, IV, V), 'residual'}``; ``IV`` and
    ``V`` are the two horizontal-derivative halves of the vertical-vertical term.
    """
    same_grid(u, mollifier.kernel)
    if check:
        _check_divfree(u)
    filt = _FluxContext(u).filtered(mollifier.multiplier)
    total = filt.total()
    terms = filt.terms(vertical_axis, split_last=True)
    return {"total": total, "terms": terms, "residual": filt.residual(terms)}


# ---------------------------------------------------------------------------
# energy-equality criteria for trajectories
# ---------------------------------------------------------------------------


@dataclass
class CriteriaVerdict:
    case: int
    params: dict
    norms: Dict[str, float]
    energy_residual: float
    tolerance: float
    satisfied: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "params": self.params,
            "norms": self.norms,
            "energy_residual": self.energy_residual,
            "tolerance": self.tolerance,
            "satisfied": self.satisfied,
            "notes": self.notes,
        }


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9


def ns_energy_criteria(traj, nu: float, case: int, params: Optional[dict] = None, part: Optional[DyadicPartition] = None) -> CriteriaVerdict:
    """Evaluate one of the four anisotropic energy-equality conditions on a trajectory.

    Case parameters:

    1. ``p1, q1, p2, q2`` with ``1/p1 + 1/p2 = 1/2`` and ``1/q1 + 1/q2 = 1/2``
       (norms of ``u_h`` in ``L^p1 L^q1`` and ``L^4 L^4``, ``u_3`` in ``L^p2 L^q2``).
    2. ``p, q`` with ``2/p + 3/q = 1``, ``q >= 3`` (``u_h`` in ``L^p L^q``).
    3. ``p, q`` with ``2/p + 3/q = 2``, ``q >= 3/2`` (``grad u_h`` in ``L^p L^q``).
    4. ``alpha, beta`` with ``1/3 <= alpha <= 1/2``, ``beta >= (1 - alpha)/2``
       (``u_h`` in ``L^3 B^alpha_{3,inf}``, ``u_3`` in ``L^3 B^beta_{3,inf}``);
       optional ``j_range`` restricts the regularity fits.

    Norms are time quadratures over the snapshots.  The verdict is satisfied when
    every norm is finite and the energy-balance residual is within the
    integrator budget.  It describes the computed trajectory only.
    """
    from .besov import estimate_regularity, weighted_blocks
    from .dynamics import energy_balance_report

    params = dict(params or {})
    if abs(float(traj.config.nu) - float(nu)) > 1e-15 * max(1.0, abs(nu)):
        raise InvalidInputError(f"trajectory was computed with nu={traj.config.nu}, not {nu}")
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise InvalidInputError("need at least two snapshots")
    times = np.array([t for t, _ in snaps])
    steps = np.diff(times)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
        raise InvalidInputError("snapshots are not uniformly spaced in time")
    dt = float(steps[0])
    fields = [f for _, f in snaps]
    grid = fields[0].grid
    h = lambda f: VectorField(grid, np.stack([f.values[0], f.values[1], np.zeros(grid.shape)]))
    norms: Dict[str, float] = {}
    notes = ["verdict concerns the computed Galerkin trajectory, not weak solutions of the PDE"]

    if case == 1:
        p1, q1, p2, q2 = (float(params[k]) for k in ("p1", "q1", "p2", "q2"))
        if not (_close(1 / p1 + 1 / p2, 0.5) and _close(1 / q1 + 1 / q2, 0.5)):
            raise InvalidInputError("case 1 needs 1/p1 + 1/p2 = 1/2 and 1/q1 + 1/q2 = 1/2")
        norms["u_h L^p1 L^q1"] = time_norm([lp_norm(h(f), q1) for f in fields], dt, p1)
        norms["u_h L^4 L^4"] = time_norm([lp_norm(h(f), 4) for f in fields], dt, 4)
        norms["u_3 L^p2 L^q2"] = time_norm([lp_norm(f.component(3), q2) for f in fields], dt, p2)
    elif case == 2:
        p, q = float(params["p"]), float(params["q"])
        if q < 3 or not _close(2 / p + 3 / q, 1.0):
            raise InvalidInputError("case 2 needs 2/p + 3/q = 1 and q >= 3")
        norms["u_h L^p L^q"] = time_norm([lp_norm(h(f), q) for f in fields], dt, p)
    elif case == 3:
        p, q = float(params["p"]), float(params["q"])
        if q < 1.5 or not _close(2 / p + 3 / q, 2.0):
            raise InvalidInputError("case 3 needs 2/p + 3/q = 2 and q >= 3/2")
        vals = []
        for f in fields:
            g = np.concatenate([gradient(f.component(1)).values, gradient(f.component(2)).values])
            mag = np.sqrt(np.sum(g * g, axis=0))
            vals.append(array_lp(mag, q, grid.cell_volume))
        norms["grad u_h L^p L^q"] = time_norm(vals, dt, p)
    elif case == 4:
        alpha, beta = float(params["alpha"]), float(params["beta"])
        if not (1 / 3 - 1e-12 <= alpha <= 0.5 + 1e-12) or beta < (1 - alpha) / 2 - 1e-12:
            raise InvalidInputError("case 4 needs 1/3 <= alpha <= 1/2 and beta >= (1 - alpha)/2")
        part = part or build_partition(grid)
        bh = [max(weighted_blocks(h(f), part, alpha, 3).values()) for f in fields]
        bv = [max(weighted_blocks(f.component(3), part, beta, 3).values()) for f in fields]
        norms["u_h L^3 B^alpha_3inf"] = time_norm(bh, dt, 3)
        norms["u_3 L^3 B^beta_3inf"] = time_norm(bv, dt, 3)
        j_range = params.get("j_range")
        a_hat, a_w = estimate_regularity(h(fields[0]), 3, part, j_range)
        b_hat, b_w = estimate_regularity(fields[0].component(3), 3, part, j_range)
        a_end, _ = estimate_regularity(h(fields[-1]), 3, part, j_range)
        b_end, _ = estimate_regularity(fields[-1].component(3), 3, part, j_range)
        norms.update(
            alpha_hat=a_hat, alpha_hat_width=a_w, beta_hat=b_hat, beta_hat_width=b_w,
            alpha_hat_final=a_end, beta_hat_final=b_end,
        )
    else:
        raise InvalidInputError(f"case must be 1..4, got {case}")

    balance = energy_balance_report(traj)
    finite = all(np.isfinite(v) for v in norms.values())
    satisfied = bool(finite and abs(balance["R_equality"]) <= balance["tolerance"])
    return CriteriaVerdict(
        case=case,
        params={k: (list(v) if isinstance(v, (tuple, range)) else v) for k, v in params.items()},
        norms=norms,
        energy_residual=balance["R_equality"],
        tolerance=balance["tolerance"],
        satisfied=satisfied,
        notes=notes,
    )
