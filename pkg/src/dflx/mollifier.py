"""Compactly supported mollifier, mollification, commutators and rate harnesses.

The kernel is ``eta(x) = C0 exp(-1/(1 - |x|^2))`` on the unit ball, with
``eta_eps(x) = eps^-3 eta(x/eps)`` wrapped onto the torus by minimum-image
distance.  The sampled kernel is renormalised so that its quadrature mass is
exactly one; convolution is carried out spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from ._fit import loglog_slope
from .errors import InvalidInputError
from .littlewood_paley import DyadicPartition, low_pass_kernel
from .spectral import (
    GridSpec,
    PaddedProducts,
    ScalarField,
    array_lp,
    derivative_multiplier,
    irfft3,
    lp_norm,
    parse_exponent,
    rfft3,
    same_grid,
)


@lru_cache(maxsize=1)
def bump_constant() -> float:
    """``C0`` with ``int_{R^3} C0 exp(-1/(1-|x|^2)) dx = 1``."""
    val, _ = integrate.quad(lambda r: 4 * np.pi * r * r * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0)
    return 1.0 / val


@dataclass(frozen=True, eq=False)
class MollifierSpec:
    epsilon: float
    kernel: ScalarField
    normalization: float
    raw_mass: float
    multiplier: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.kernel.grid


def _min_image(grid: GridSpec) -> np.ndarray:
    r2 = 0.0
    for n, d, ax in zip(grid.dims, grid.spacing, range(3)):
        x = np.arange(n) * d
        x = np.minimum(x, grid.domain_length - x)
        shape = [1, 1, 1]
        shape[ax] = n
        r2 = r2 + (x * x).reshape(shape)
    return np.sqrt(r2)


def make_mollifier(grid: GridSpec, epsilon: float) -> MollifierSpec:
    """Periodised ``eta_eps`` samples with unit quadrature mass."""
    eps = float(epsilon)
    dx = max(grid.spacing)
    if not np.isfinite(eps) or eps < 3 * dx * (1 - 1e-12):
        raise InvalidInputError(f"eps={eps} is below three grid cells ({3 * dx:.4g})")
    if eps > grid.domain_length / 8 * (1 + 1e-12):
        raise InvalidInputError(f"eps={eps} exceeds an eighth of the box ({grid.domain_length / 8:.4g})")
    r = _min_image(grid) / eps
    eta = np.zeros(grid.shape)
    inside = r < 1.0
    eta[inside] = bump_constant() * np.exp(-1.0 / (1.0 - r[inside] ** 2)) / eps ** 3
    raw_mass = float(np.sum(eta) * grid.cell_volume)
    eta /= raw_mass
    kernel = ScalarField(grid, eta)
    mult = (rfft3(eta) * grid.cell_volume).real
    mult.flags.writeable = False
    return MollifierSpec(
        epsilon=eps,
        kernel=kernel,
        normalization=float(np.sum(eta) * grid.cell_volume),
        raw_mass=raw_mass,
        multiplier=mult,
    )


def mollify(f: ScalarField, m: MollifierSpec) -> ScalarField:
    """``f * eta_eps`` (periodic convolution)."""
    grid = same_grid(f, m.kernel)
    return ScalarField(grid, irfft3(rfft3(f.values) * m.multiplier, grid.shape))


def cet_commutator(f: ScalarField, g: ScalarField, m: MollifierSpec, dealias: bool = True) -> ScalarField:
    """``(fg)^eps - f^eps g^eps``.

    With ``dealias`` the products are exact trigonometric products projected to
    the lattice; otherwise they are plain products of grid samples.
    """
    grid = same_grid(f, g, m.kernel)
    f_hat, g_hat = rfft3(f.values), rfft3(g.values)
    mult = m.multiplier
    if dealias:
        pp = PaddedProducts(grid)
        full = pp.product_hat(f_hat, g_hat)
        low = pp.product_hat(f_hat * mult, g_hat * mult)
        return ScalarField(grid, irfft3(mult * full - low, grid.shape))
    fe = irfft3(f_hat * mult, grid.shape)
    ge = irfft3(g_hat * mult, grid.shape)
    fg = irfft3(rfft3(f.values * g.values) * mult, grid.shape)
    return ScalarField(grid, fg - fe * ge)


def _lattice_kernel(grid: GridSpec, m: Optional[MollifierSpec], part, N) -> np.ndarray:
    if m is not None:
        return np.asarray(m.kernel.values) * grid.cell_volume
    if part is None or N is None:
        raise InvalidInputError("give a mollifier or a partition together with N")
    return low_pass_kernel(part, N)


def _direct_convolve(K: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """``sum_y K(y) h(x - y)`` for a stack of fields, summed directly over all lattice shifts.

    The sum over the last two axes is written as a dense block-circulant matrix
    so that the quadrature runs through BLAS; the first axis is looped.
    """
    n1, n2, n3 = K.shape
    i2 = np.arange(n2)
    i3 = np.arange(n3)
    d2 = (i2[:, None] - i2[None, :]) % n2  # x2 - z2
    d3 = (i3[:, None] - i3[None, :]) % n3
    rows = fields.reshape(fields.shape[0], n1, n2 * n3)
    out = np.zeros_like(rows)
    for s1 in range(n1):
        plane = K[s1]
        # M[(x2, x3), (z2, z3)] = K[s1, x2 - z2, x3 - z3]
        M = plane[d2[:, None, :, None], d3[None, :, None, :]].reshape(n2 * n3, n2 * n3)
        shifted = np.roll(rows, s1, axis=1)
        out += shifted @ M.T
    return out.reshape(fields.shape)


def cet_identity_residual(
    f: ScalarField,
    g: ScalarField,
    m: Optional[MollifierSpec] = None,
    part: Optional[DyadicPartition] = None,
    N: Optional[int] = None,
    weight_tol: float = 1e-13,
    max_shift_loop: int = 4096,
) -> float:
    """Max-norm defect of the increment identity, relative to ``||f||_inf ||g||_inf``.

    For lattice weights ``K`` with unit sum (the sampled mollifier, or the
    kernel of ``S_N``) and ``f^K = K * f``:

        (fg)^K - f^K g^K = sum_y K(y) (f(x-y) - f(x)) (g(x-y) - g(x)) - (f - f^K)(g - g^K).

    The left side is computed spectrally, the increment sum directly in
    physical space.  Shifts are visited by decreasing ``|K|`` and dropped once
    their total weight is below ``weight_tol``.  When more than
    ``max_shift_loop`` shifts remain (the ``S_N`` kernel is not compactly
    supported) the increment product is expanded,
    ``sum K (fg)(x-y) - g sum K f(x-y) - f sum K g(x-y) + fg sum K``, and each
    sum is evaluated as a dense lattice quadrature over every shift.
    """
    grid = same_grid(f, g)
    K = _lattice_kernel(grid, m, part, N)
    K_hat = rfft3(K)
    conv = lambda a: irfft3(rfft3(a) * K_hat, grid.shape)
    fv, gv = np.asarray(f.values), np.asarray(g.values)
    fK, gK = conv(fv), conv(gv)
    lhs = conv(fv * gv) - fK * gK

    flat = np.abs(K).ravel()
    order = np.argsort(flat)[::-1]
    tail = np.cumsum(flat[order][::-1])[::-1]  # weight of this shift and all smaller ones
    keep = order[tail > weight_tol]
    if keep.size <= max_shift_loop:
        acc = np.zeros(grid.shape)
        for idx in keep:
            shift = np.unravel_index(idx, grid.shape)
            w = K.ravel()[idx]
            df = np.roll(fv, shift, axis=(0, 1, 2)) - fv
            dg = np.roll(gv, shift, axis=(0, 1, 2)) - gv
            acc += w * df * dg
    else:
        sums = _direct_convolve(K, np.stack([fv * gv, fv, gv]))
        acc = sums[0] - gv * sums[1] - fv * sums[2] + fv * gv * float(np.sum(K))
    rhs = acc - (fv - fK) * (gv - gK)
    scale = max(np.max(np.abs(fv)) * np.max(np.abs(gv)), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _deriv_power_norm(f_hat: np.ndarray, grid: GridSpec, k: int, q: float) -> float:
    """``|| |grad^k f| ||_q`` with the Frobenius magnitude of the ``k``-th derivative tensor."""
    if k == 0:
        return array_lp(np.abs(irfft3(f_hat, grid.shape)), q, grid.cell_volume)
    D = [derivative_multiplier(grid, a) for a in range(3)]
    sq = np.zeros(grid.shape)
    for idx in np.ndindex(*(3,) * k):
        mult = 1.0
        for a in idx:
            mult = mult * D[a]
        comp = irfft3(f_hat * mult, grid.shape)
        sq += comp * comp
    return array_lp(np.sqrt(sq), q, grid.cell_volume)


def _check_eps_list(eps_list: Sequence[float]) -> list[float]:
    eps = sorted(float(e) for e in eps_list)
    if len(eps) < 3:
        raise InvalidInputError("need at least three eps values")
    return eps


def rate_check_lemma22(
    f: ScalarField, alpha: float, eps_list: Sequence[float], k: int = 0, q=3, tol: float = 0.15
) -> dict:
    """Slope of ``log ||f^eps - f||_q`` (``k = 0``) or ``log ||grad^k f^eps||_q`` against ``log eps``.

    Expected slopes are ``alpha`` and ``alpha - k``.  When ``alpha - k >= 0``
    the derivative norm of a band-limited field saturates; the slope is then
    reported but not judged (``within`` is ``None``).
    """
    if k not in (0, 1, 2):
        raise InvalidInputError("k must be 0, 1 or 2")
    q = parse_exponent(q)
    eps = _check_eps_list(eps_list)
    grid = f.grid
    f_hat = rfft3(f.values)
    norms = []
    for e in eps:
        m = make_mollifier(grid, e)
        fe_hat = f_hat * m.multiplier
        if k == 0:
            norms.append(_deriv_power_norm(fe_hat - f_hat, grid, 0, q))
        else:
            norms.append(_deriv_power_norm(fe_hat, grid, k, q))
    fit = loglog_slope(eps, norms)
    expected = alpha if k == 0 else alpha - k
    judged = k == 0 or expected < 0
    return {
        "eps": eps,
        "norms": norms,
        "slope": fit.slope,
        "stderr": fit.stderr,
        "expected": expected,
        "within": (abs(fit.slope - expected) <= tol) if judged else None,
        "octaves": math.log2(eps[-1] / eps[0]),
    }


def commutator_rate(
    f: ScalarField,
    g: ScalarField,
    eps_list: Sequence[float],
    expected: float,
    p=1.5,
    tol: float = 0.15,
) -> dict:
    """Fit ``log ||(fg)^eps - f^eps g^eps||_p`` against ``log eps``; pass if slope >= expected - tol.

    ``prefactor_decreasing`` reports whether ``norm / eps^expected`` shrinks
    monotonically as ``eps`` decreases (the little-o trend; not certifiable).
    """
    p = parse_exponent(p)
    eps = _check_eps_list(eps_list)
    norms = [lp_norm(cet_commutator(f, g, make_mollifier(f.grid, e)), p) for e in eps]
    fit = loglog_slope(eps, norms)
    pref = [n / e ** expected for n, e in zip(norms, eps)]
    return {
        "eps": eps,
        "norms": norms,
        "slope": fit.slope,
        "stderr": fit.stderr,
        "expected": expected,
        "passed": fit.slope >= expected - tol,
        "prefactor_decreasing": all(a <= b for a, b in zip(pref[:-1], pref[1:])),
    }
