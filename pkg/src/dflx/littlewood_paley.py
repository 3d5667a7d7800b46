"""Smooth dyadic partition of unity, Littlewood-Paley blocks and low-pass filters.

The radial profile ``rho`` equals 1 on ``|xi| <= 3/4`` and 0 on ``|xi| >= 4/3``;
in between it is a C-infinity step assembled from the ``exp(-1/(1 - t^2))``
bump.  The annular pieces are ``phi(xi) = rho(xi/2) - rho(xi)`` so that

    rho(k) + sum_{j=0}^{J} phi(2^-j k) = rho(2^-(J+1) k)

telescopes exactly.  Frequencies are lattice indices ``k``; blocks are

    Delta_{-1} = rho(D),  Delta_j = phi(2^-j D) (j >= 0),  Delta_j = 0 (j <= -2),

and the low-pass filter is ``S_N = rho(2^-N D) = sum_{j <= N-1} Delta_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from .errors import GridMismatchError, InvalidInputError
from .spectral import (
    GridSpec,
    ScalarField,
    VectorField,
    array_lp,
    irfft3,
    lattice_magnitude,
    parse_exponent,
    rfft3,
)


@dataclass(frozen=True)
class BumpProfile:
    """Radii of the smooth step: ``rho = 1`` inside ``inner`` and ``0`` outside ``outer``."""

    inner: float = 0.75
    outer: float = 4.0 / 3.0

    def __post_init__(self) -> None:
        if not (0 < self.inner < self.outer <= 2 * self.inner):
            raise InvalidInputError(
                f"profile radii need 0 < inner < outer <= 2*inner, got {self.inner}, {self.outer}"
            )

    def rho(self, r: np.ndarray) -> np.ndarray:
        t = (np.asarray(r, dtype=float) - self.inner) / (self.outer - self.inner)
        return smooth_step(t)


def _bump(t: np.ndarray) -> np.ndarray:
    """``exp(-1/(1-(1-t)^2))`` for ``t`` in (0, 1], 0 for ``t <= 0``; flat to all orders at 0."""
    out = np.zeros_like(t)
    pos = t > 0
    s = 1.0 - t[pos]
    out[pos] = np.exp(-1.0 / (1.0 - s * s))
    return out


def smooth_step(t) -> np.ndarray:
    """C-infinity step: 1 for ``t <= 0``, 0 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = _bump(1.0 - t)
    b = _bump(t)
    return a / (a + b)


DEFAULT_PROFILE = BumpProfile()


class DyadicPartition:
    """Sampled partition on a grid's frequency lattice (rfft layout).

    ``rho_samples`` holds ``rho(|k|)``; annular multipliers ``phi(2^-j k)`` are
    produced on demand by :meth:`multiplier` and cached.
    """

    j_min = -1

    def __init__(self, grid: GridSpec, profile: BumpProfile = DEFAULT_PROFILE):
        self.grid = grid
        self.profile = profile
        self.k_nyquist = grid.k_nyquist
        self.j_max = int(math.ceil(math.log2(self.k_nyquist))) + 1
        if self.j_max < 2:
            raise InvalidInputError("grid too small to host two dyadic shells")
        self._kmag = lattice_magnitude(grid)
        self._cache: Dict[tuple, np.ndarray] = {}
        self.rho_samples = self.low_pass_multiplier(0)

    def __repr__(self) -> str:
        return f"DyadicPartition(dims={self.grid.dims}, j_max={self.j_max})"

    @property
    def j_values(self) -> list[int]:
        return list(range(self.j_min, self.j_max + 1))

    @property
    def resolved_j_max(self) -> int:
        """Largest shell whose plateau ``4/3*2^j <= |k| <= 3/2*2^j`` fits below Nyquist."""
        return int(math.floor(math.log2(self.k_nyquist / 1.5)))

    def low_pass_multiplier(self, N: int) -> np.ndarray:
        key = ("rho", N)
        if key not in self._cache:
            m = self.profile.rho(self._kmag / 2.0 ** N)
            m.flags.writeable = False
            self._cache[key] = m
        return self._cache[key]

    def multiplier(self, j: int) -> np.ndarray:
        """Symbol of ``Delta_j`` on the rfft lattice."""
        if j > self.j_max:
            raise InvalidInputError(f"block index {j} exceeds j_max={self.j_max}")
        if j <= -2:
            return np.zeros_like(self._kmag)
        if j == -1:
            return self.rho_samples
        key = ("phi", j)
        if key not in self._cache:
            m = self.low_pass_multiplier(j + 1) - self.low_pass_multiplier(j)
            m.flags.writeable = False
            self._cache[key] = m
        return self._cache[key]

    @property
    def phi_samples(self) -> list[np.ndarray]:
        return [self.multiplier(j) for j in range(0, self.j_max + 1)]

    def partition_sum(self) -> np.ndarray:
        total = np.array(self.rho_samples, copy=True)
        for j in range(0, self.j_max + 1):
            total += self.multiplier(j)
        return total

    def check_grid(self, grid: GridSpec) -> None:
        if grid != self.grid:
            raise GridMismatchError(f"partition built for {self.grid.dims}, field on {grid.dims}")

    def pure_shell_mask(self, j: int) -> np.ndarray:
        """Lattice points where ``Delta_j`` acts as the identity (``phi(2^-j k) = 1``)."""
        if j < 0:
            raise InvalidInputError("pure shells exist for j >= 0")
        k2 = np.rint(self._kmag ** 2)
        return (16 * 4 ** j <= 9 * k2) & (4 * k2 <= 9 * 4 ** j)


def build_partition(grid: GridSpec, profile: BumpProfile = DEFAULT_PROFILE) -> DyadicPartition:
    return DyadicPartition(grid, profile)


def _check_N(part: DyadicPartition, N: int) -> None:
    if not (0 <= N <= part.j_max + 1):
        raise InvalidInputError(f"low-pass index N={N} outside 0..{part.j_max + 1}")


def block(f: ScalarField, part: DyadicPartition, j: int) -> ScalarField:
    """``Delta_j f``."""
    part.check_grid(f.grid)
    if j <= -2:
        return ScalarField.zeros(f.grid)
    m = part.multiplier(j)
    return ScalarField(f.grid, irfft3(rfft3(f.values) * m, f.grid.shape))


def low_pass(f: ScalarField, part: DyadicPartition, N: int, method: str = "multiplier") -> ScalarField:
    """``S_N f``: ``rho(2^-N D) f`` or, with ``method='sum'``, ``sum_{j<=N-1} Delta_j f``."""
    part.check_grid(f.grid)
    _check_N(part, N)
    f_hat = rfft3(f.values)
    if method == "multiplier":
        m = part.low_pass_multiplier(N)
    elif method == "sum":
        m = sum((part.multiplier(j) for j in range(-1, N)), np.zeros_like(part.rho_samples))
    else:
        raise InvalidInputError(f"unknown low-pass method {method!r}")
    return ScalarField(f.grid, irfft3(f_hat * m, f.grid.shape))


@dataclass(frozen=True)
class BlockDecomposition:
    grid: GridSpec
    blocks: Dict[int, ScalarField] = field(default_factory=dict)

    def reconstruct(self) -> ScalarField:
        total = np.zeros(self.grid.shape)
        for b in self.blocks.values():
            total += b.values
        return ScalarField(self.grid, total)


def decompose(f: ScalarField, part: DyadicPartition) -> BlockDecomposition:
    part.check_grid(f.grid)
    f_hat = rfft3(f.values)
    blocks = {
        j: ScalarField(f.grid, irfft3(f_hat * part.multiplier(j), f.grid.shape)) for j in part.j_values
    }
    return BlockDecomposition(f.grid, blocks)


def block_norms(f, part: DyadicPartition, p, js: Iterable[int] | None = None) -> Dict[int, float]:
    """``j -> ||Delta_j f||_{L^p}``; vector fields use the pointwise Euclidean magnitude."""
    part.check_grid(f.grid)
    p = parse_exponent(p)
    js = part.j_values if js is None else list(js)
    if isinstance(f, VectorField):
        stack = f.values
    else:
        stack = f.values[None]
    return stacked_block_norms(stack, part, p, js)


def stacked_block_norms(stack: np.ndarray, part: DyadicPartition, p: float, js: Iterable[int]) -> Dict[int, float]:
    """Block norms of the Euclidean magnitude of a ``(c, *dims)`` component stack."""
    grid = part.grid
    hats = rfft3(stack)
    out = {}
    for j in js:
        if j <= -2:
            out[j] = 0.0
            continue
        comps = irfft3(hats * part.multiplier(j), grid.shape)
        mag = np.sqrt(np.sum(comps * comps, axis=0)) if comps.shape[0] > 1 else np.abs(comps[0])
        out[j] = array_lp(mag, p, grid.cell_volume)
    return out


def low_pass_kernel(part: DyadicPartition, N: int) -> np.ndarray:
    """Lattice kernel ``K`` with ``S_N f(x) = sum_y K(y) f(x - y)`` (circular convolution)."""
    _check_N(part, N)
    return irfft3(part.low_pass_multiplier(N), part.grid.shape)


def kernel_constant(profile: BumpProfile = DEFAULT_PROFILE, r_max: float = 800.0, dr: float = 0.05) -> float:
    """``integral |h(z)| (|z| + 1)^2 dz`` for ``h`` the inverse Fourier transform of ``rho`` on R^3.

    The dilation ``2^{3N} h(2^N y)`` leaves this integral unchanged, so it is
    the supremum over ``N`` of the scaled kernel moments.  ``h`` is radial:
    ``h(r) = (2 pi^2 r)^-1 int_0^outer rho(s) s sin(r s) ds``.
    """
    s = np.linspace(0.0, profile.outer, 4001)
    w = np.full(s.size, s[1] - s[0])
    w[0] = w[-1] = 0.5 * (s[1] - s[0])
    rho_s = profile.rho(s) * s * w
    r = np.arange(dr, r_max, dr)
    h = np.empty_like(r)
    for lo in range(0, r.size, 2000):
        rr = r[lo:lo + 2000]
        h[lo:lo + 2000] = np.sin(np.outer(rr, s)) @ rho_s / (2 * np.pi ** 2 * rr)
    integrand = np.abs(h) * (r + 1.0) ** 2 * 4 * np.pi * r * r
    return float(np.trapezoid(np.concatenate([[0.0], integrand]), np.concatenate([[0.0], r])))
