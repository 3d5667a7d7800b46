"""Besov norms (dyadic and finite-difference), tail and VMO indicators,
regularity estimation and interpolation-inequality checks.

All scalar routines also accept a :class:`VectorField`, in which case the
pointwise Euclidean magnitude is used inside every Lebesgue norm.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from ._fit import fit_line
from .errors import InvalidInputError
from .littlewood_paley import DyadicPartition, block_norms
from .spectral import (
    GridSpec,
    ScalarField,
    VectorField,
    array_lp,
    gradient,
    lp_norm,
    parse_exponent,
    time_norm,
)

ENERGY_FLOOR = 1e-13


@dataclass(frozen=True)
class BesovReport:
    alpha: float
    p: float
    q: float
    per_j: Dict[int, float]
    norm_value: float
    tail: Dict[int, float]
    is_cN: Optional[bool] = None
    fd_seminorm: Optional[float] = None
    alpha_hat: Optional[float] = None
    alpha_hat_width: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "p": self.p,
            "q": self.q,
            "per_j": {str(j): v for j, v in sorted(self.per_j.items())},
            "norm_value": self.norm_value,
            "tail": {str(j): v for j, v in sorted(self.tail.items())},
            "is_cN": self.is_cN,
            "fd_seminorm": self.fd_seminorm,
            "alpha_hat": self.alpha_hat,
            "alpha_hat_width": self.alpha_hat_width,
        }


def _sequence_norm(values: Sequence[float], q: float) -> float:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return 0.0
    if q == np.inf:
        return float(np.max(v))
    return float(np.sum(v ** q) ** (1.0 / q))


def weighted_blocks(f, part: DyadicPartition, alpha: float, p) -> Dict[int, float]:
    """``j -> 2^{j alpha} ||Delta_j f||_{L^p}`` for ``-1 <= j <= j_max``."""
    norms = block_norms(f, part, p)
    return {j: 2.0 ** (j * alpha) * v for j, v in norms.items()}


def tail_window(part: DyadicPartition, n_tail: int = 3) -> list[int]:
    """The top ``n_tail`` shells that the grid fully resolves."""
    top = part.resolved_j_max
    return list(range(max(0, top - n_tail + 1), top + 1))


def _tail_verdict(per_j: Dict[int, float], window: Sequence[int], tau: float) -> bool:
    peak = max(per_j.values()) if per_j else 0.0
    tail = [per_j[j] for j in window]
    if peak == 0.0 or np.mean(tail) <= tau * peak:
        return True
    # A tail that shrinks by at least a factor (1 - tau) per shell is also read as
    # decaying: the finite grid cannot show the limit itself, only its trend.
    return all(b <= (1.0 - tau) * a for a, b in zip(tail[:-1], tail[1:]))


def dyadic_besov(
    f,
    alpha: float,
    p,
    q,
    part: DyadicPartition,
    *,
    tau: float = 0.05,
    n_tail: int = 3,
    fit: bool = True,
    fd: bool = False,
) -> BesovReport:
    """Inhomogeneous Besov norm ``|| (2^{j alpha} ||Delta_j f||_p)_j ||_{l^q}``."""
    p = parse_exponent(p)
    q = parse_exponent(q)
    per_j = weighted_blocks(f, part, alpha, p)
    window = tail_window(part, n_tail)
    alpha_hat = width = None
    if fit:
        try:
            alpha_hat, width = estimate_regularity(f, p, part)
        except InvalidInputError:
            pass
    return BesovReport(
        alpha=float(alpha),
        p=p,
        q=q,
        per_j=per_j,
        norm_value=_sequence_norm(per_j.values(), q),
        tail={j: per_j[j] for j in window},
        is_cN=_tail_verdict(per_j, window, tau),
        fd_seminorm=finite_difference_seminorm(f, alpha, p) if fd else None,
        alpha_hat=alpha_hat,
        alpha_hat_width=width,
    )


def tail_indicator(f, alpha: float, p, part: DyadicPartition, tau: float = 0.05, n_tail: int = 3):
    """Top-shell values of ``2^{j alpha}||Delta_j f||_p`` and the c(N) verdict.

    The verdict is true when the tail mean is at most ``tau`` times the largest
    weighted block, or when the tail shrinks by a factor ``1 - tau`` per shell.
    """
    per_j = weighted_blocks(f, part, alpha, p)
    window = tail_window(part, n_tail)
    return {j: per_j[j] for j in window}, _tail_verdict(per_j, window, tau)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSet:
    """Lattice translation vectors (in grid cells) for the finite-difference seminorm."""

    shifts: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if len(self.shifts) == 0:
            raise InvalidInputError("shift set is empty")
        object.__setattr__(self, "shifts", tuple(tuple(int(c) for c in s) for s in self.shifts))

    def lengths(self, grid: GridSpec) -> np.ndarray:
        dx = np.array(grid.spacing)
        return np.array([np.linalg.norm(np.array(s) * dx) for s in self.shifts])


def default_shifts(grid: GridSpec) -> ShiftSet:
    """Axis-aligned and diagonal shifts at dyadic lengths from one cell to a quarter box."""
    shifts = []
    s = 1
    limit = min(grid.dims) // 4
    while s <= limit:
        for pattern in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
            vec = tuple(s * c for c in pattern)
            if np.linalg.norm(np.array(vec) * np.array(grid.spacing)) <= grid.domain_length / 4 + 1e-12:
                shifts.append(vec)
        s *= 2
    return ShiftSet(tuple(shifts))


def _stack(f) -> np.ndarray:
    if isinstance(f, VectorField):
        return np.asarray(f.values)
    if isinstance(f, ScalarField):
        return np.asarray(f.values)[None]
    raise InvalidInputError(f"expected a field, got {type(f).__name__}")


def _increment_norm(stack: np.ndarray, shift, q: float, cell_volume: float) -> float:
    diff = np.roll(stack, [-c for c in shift], axis=(1, 2, 3)) - stack
    mag = np.sqrt(np.sum(diff * diff, axis=0)) if diff.shape[0] > 1 else np.abs(diff[0])
    return array_lp(mag, q, cell_volume)


def finite_difference_seminorm(f, alpha: float, q, shifts: Optional[ShiftSet] = None) -> float:
    """``max_y |y|^{-alpha} ||f(. + y) - f||_{L^q}`` over exact lattice shifts."""
    q = parse_exponent(q)
    grid = f.grid
    if shifts is None:
        shifts = default_shifts(grid)
    if not isinstance(shifts, ShiftSet):
        shifts = ShiftSet(tuple(shifts))
    stack = _stack(f)
    lengths = shifts.lengths(grid)
    best = 0.0
    for shift, length in zip(shifts.shifts, lengths):
        if length == 0:
            continue
        best = max(best, length ** (-alpha) * _increment_norm(stack, shift, q, grid.cell_volume))
    return best


def vmo_indicator(
    f, alpha: float, q, eps_list: Sequence[float], max_offsets: int = 48, seed: int = 0
) -> Dict[float, float]:
    """``eps -> eps^{-alpha} (mean over |y| <= eps of mean_x |f(x+y) - f(x)|^q)^{1/q}``.

    Offsets are lattice vectors inside the ball of radius ``eps``; when there are
    more than ``max_offsets`` a fixed pseudo-random subset is used.
    """
    q = parse_exponent(q)
    if q == np.inf:
        raise InvalidInputError("VMO indicator needs a finite exponent")
    grid = f.grid
    dx = np.array(grid.spacing)
    stack = _stack(f)
    rng = np.random.default_rng(seed)
    out = {}
    for eps in eps_list:
        eps = float(eps)
        if not (dx.max() < eps < grid.domain_length / 4):
            raise InvalidInputError(
                f"eps={eps} outside ({dx.max():.4g}, {grid.domain_length / 4:.4g})"
            )
        r = [int(np.floor(eps / d)) for d in dx]
        offsets = [
            o
            for o in itertools.product(*(range(-ri, ri + 1) for ri in r))
            if any(o) and np.linalg.norm(np.array(o) * dx) <= eps
        ]
        if len(offsets) > max_offsets:
            idx = rng.choice(len(offsets), size=max_offsets, replace=False)
            offsets = [offsets[i] for i in sorted(idx)]
        acc = 0.0
        for o in offsets:
            acc += _increment_norm(stack, o, q, grid.cell_volume) ** q / grid.volume
        osc = (acc / len(offsets)) ** (1.0 / q)
        out[eps] = eps ** (-alpha) * osc
    return out


# ---------------------------------------------------------------------------
# regularity estimation
# ---------------------------------------------------------------------------


def default_fit_shells(part: DyadicPartition) -> list[int]:
    return list(range(0, part.resolved_j_max + 1))


def estimate_regularity(
    f, p, part: DyadicPartition, j_range: Optional[Sequence[int]] = None, min_shells: int = 4
) -> tuple[float, float]:
    """Fit ``log2 ||Delta_j f||_p = -alpha_hat * j + c`` over shells carrying energy.

    Returns ``(alpha_hat, stderr)``.  Shells whose block norm is below
    ``1e-13 * ||f||_p`` are excluded.
    """
    p = parse_exponent(p)
    js = default_fit_shells(part) if j_range is None else [j for j in j_range if j >= 0]
    norms = block_norms(f, part, p, js)
    floor = ENERGY_FLOOR * lp_norm(f, p)
    active = [j for j in js if norms[j] > floor and norms[j] > 0]
    if len(active) < min_shells:
        raise InvalidInputError(
            f"only {len(active)} active shells (need {min_shells}) for a regularity fit"
        )
    fit = fit_line(active, np.log2([norms[j] for j in active]))
    return -fit.slope, fit.stderr


# ---------------------------------------------------------------------------
# interpolation inequalities
# ---------------------------------------------------------------------------


def lemma26_check(f, q: float, part: DyadicPartition) -> dict:
    """Compare ``sum_j ||Delta_j f||_q`` with ``||f||_2^{(6-q)/2q} ||grad f||_2^{(3q-6)/2q}``."""
    q = float(q)
    if not (2.0 < q < 6.0):
        raise InvalidInputError(f"q must lie in (2, 6), got {q}")
    norms = block_norms(f, part, q)
    lhs = float(sum(norms.values()))
    if isinstance(f, VectorField):
        grad_sq = sum(lp_norm(gradient(c), 2) ** 2 for c in f.components)
        grad = float(np.sqrt(grad_sq))
    else:
        grad = lp_norm(gradient(f), 2)
    rhs = lp_norm(f, 2) ** ((6 - q) / (2 * q)) * grad ** ((3 * q - 6) / (2 * q))
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return {"lhs": lhs, "rhs_shape": float(rhs), "ratio": float(ratio)}


def coro13_interpolation_check(f, p1: float, part: DyadicPartition) -> Dict[int, float]:
    """Per-shell ratio of ``2^{j/3}||Delta_j f||_3`` to its Lebesgue-interpolation bound.

    The bound is ``||Delta_j f||_2^{1-p1/3} (2^{j/p1} ||Delta_j f||_r)^{p1/3}`` with
    ``r = 2 p1/(p1 - 1)``; Hoelder's inequality makes every ratio at most 1.
    Shells whose block is below ``1e-13`` of the largest one are omitted.
    """
    p1 = float(p1)
    if not (1.0 <= p1 <= 3.0):
        raise InvalidInputError(f"p1 must lie in [1, 3], got {p1}")
    r = np.inf if p1 == 1.0 else 2 * p1 / (p1 - 1)
    n3 = block_norms(f, part, 3)
    n2 = block_norms(f, part, 2)
    nr = block_norms(f, part, r)
    floor = ENERGY_FLOOR * max(n3.values())
    out = {}
    for j in range(0, part.j_max + 1):
        if n3[j] <= floor:
            continue
        lhs = 2.0 ** (j / 3) * n3[j]
        rhs = n2[j] ** (1 - p1 / 3) * (2.0 ** (j / p1) * nr[j]) ** (p1 / 3)
        out[j] = lhs / rhs
    return out


def _validate_gn(kind: str, p: float, q: float) -> None:
    if kind == "gn1":
        if q < 4 or abs(2 / p + 2 / q - 1) > 1e-12:
            raise InvalidInputError(f"gn1 needs 2/p + 2/q = 1 and q >= 4, got p={p}, q={q}")
    elif kind == "gn2":
        if not (3 < q < 4) or abs(1 / p + 3 / q - 1) > 1e-12:
            raise InvalidInputError(f"gn2 needs 1/p + 3/q = 1 and 3 < q < 4, got p={p}, q={q}")
    else:
        raise InvalidInputError(f"unknown inequality {kind!r}")


def gn_checks(snapshots, p: float, q: float, dt: float = 1.0, kind: str = "gn1") -> dict:
    """Ratios of ``||f||_{L^4 L^4}`` to the right-hand sides of the two interpolation bounds.

    ``snapshots`` is one field or a uniformly spaced sequence of fields; time
    norms are trapezoid quadratures (a single field is an instantaneous slice).

    * ``gn1`` (``2/p + 2/q = 1``, ``q >= 4``):
      ``||f||_{L^inf L^2}^{(q-4)/(2q-4)} ||f||_{L^p L^q}^{q/(2q-4)}``.
    * ``gn2`` (``1/p + 3/q = 1``, ``3 < q < 4``):
      ``||f||_{L^2 L^6}^{3(4-q)/(2(6-q))} ||f||_{L^p L^q}^{q/(2(6-q))}`` and the
      same with ``||grad f||_{L^2 L^2}`` in place of the ``L^2 L^6`` factor.

    The Lebesgue forms hold with constant 1 (Hoelder); the gradient form carries
    the Sobolev constant.
    """
    p = parse_exponent(p)
    q = float(q)
    _validate_gn(kind, p, q)
    if isinstance(snapshots, (ScalarField, VectorField)):
        snapshots = [snapshots]
    snapshots = list(snapshots)
    n4 = [lp_norm(s, 4) for s in snapshots]
    nq = [lp_norm(s, q) for s in snapshots]
    lhs = time_norm(n4, dt, 4)
    if kind == "gn1":
        a = (q - 4) / (2 * q - 4)
        rhs = time_norm([lp_norm(s, 2) for s in snapshots], dt, np.inf) ** a * time_norm(nq, dt, p) ** (1 - a)
        return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}
    a = 3 * (4 - q) / (2 * (6 - q))
    b = q / (2 * (6 - q))
    lpq = time_norm(nq, dt, p)
    rhs6 = time_norm([lp_norm(s, 6) for s in snapshots], dt, 2) ** a * lpq ** b
    grads = []
    for s in snapshots:
        comps = s.components if isinstance(s, VectorField) else [s]
        grads.append(np.sqrt(sum(lp_norm(gradient(c), 2) ** 2 for c in comps)))
    rhs_grad = time_norm(grads, dt, 2) ** a * lpq ** b
    return {
        "lhs": lhs,
        "rhs": rhs6,
        "ratio": lhs / rhs6 if rhs6 > 0 else 0.0,
        "rhs_gradient": rhs_grad,
        "ratio_gradient": lhs / rhs_grad if rhs_grad > 0 else 0.0,
    }
