"""Divergence-free synthetic fields with prescribed dyadic regularity, plus classic flows.

Lacunary fields place Fourier modes only on the *plateaus* of the dyadic
partition (``4/3 * 2^j <= |k| <= 3/2 * 2^j``), where ``Delta_j`` acts as the
identity and every other block vanishes.  Each shell's content is therefore
exactly ``Delta_j u``, and its ``L^3`` norm can be set by a single rescale.

Two mode families keep the field divergence-free without any projection:

* horizontal modes ``(-k2, k1, 0)/|k_h| e^{ik.x}`` feed ``u_h`` only;
* vertical modes ``(0, 0, 1) e^{ik.x}`` with ``k3 = 0`` feed ``u_3`` only.

so ``u_h`` and ``u_3`` can be tuned independently per shell.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .besov import estimate_regularity
from .errors import GeneratorError, InvalidInputError
from .littlewood_paley import DyadicPartition, block_norms, build_partition
from .spectral import (
    GridSpec,
    ScalarField,
    VectorField,
    array_lp,
    irfft3,
    lattice_magnitude,
    leray_project_hat,
    rfft3,
    wavenumbers,
)

PHASE_MODES = ("random", "aligned")


@dataclass(frozen=True)
class LacunarySpec:
    """Targets for :func:`lacunary_field`.

    ``alpha``/``beta`` set ``||Delta_j u_h||_3 = 2^{-j alpha}`` and
    ``||Delta_j u_3||_3 = 2^{-j beta}``.  ``damping`` multiplies both by
    ``1/j`` so the weighted block sequence tends to zero.  ``modes_per_shell``
    caps the number of lattice points used per shell and family (0 = all).
    In ``aligned`` mode every shell is a dyadic dilation of the base shell
    ``j_range[0]``, which makes the field exactly self-similar.
    """

    alpha: float
    beta: float
    j_range: Optional[tuple[int, ...]] = None
    seed: int = 0
    modes_per_shell: int = 0
    phase_mode: str = "random"
    damping: bool = False
    vertical: bool = True

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidInputError(f"{name} must lie in (0, 1), got {v}")
        if self.phase_mode not in PHASE_MODES:
            raise InvalidInputError(f"phase_mode must be one of {PHASE_MODES}")
        if self.modes_per_shell < 0:
            raise InvalidInputError("modes_per_shell must be >= 0")
        if self.j_range is not None:
            js = tuple(int(j) for j in self.j_range)
            if not js or min(js) < 0:
                raise InvalidInputError(f"invalid shell range {self.j_range}")
            object.__setattr__(self, "j_range", js)


def default_shells(part: DyadicPartition) -> tuple[int, ...]:
    return tuple(range(1, part.resolved_j_max + 1))


def _shell_points(part: DyadicPartition, j: int, family: str) -> np.ndarray:
    """rfft-lattice indices ``(i1, i2, i3)`` of one family on the plateau of shell ``j``."""
    k1, k2, k3 = wavenumbers(part.grid)
    mask = part.pure_shell_mask(j)
    if family == "h":
        mask = mask & ((k1 != 0) | (k2 != 0))
    else:
        mask = mask & (k3 == 0)
    return np.argwhere(mask)


def _family_coeffs(grid: GridSpec, points: np.ndarray, coeffs: np.ndarray, family: str) -> np.ndarray:
    """Hermitian-consistent rfft arrays (3 components) for the given points."""
    n1, n2, _ = grid.dims
    k1, k2, k3 = (np.asarray(k).ravel() for k in wavenumbers(grid))
    out = np.zeros((3,) + grid.rfft_shape, dtype=np.complex128)
    i1, i2, i3 = points.T
    kk1, kk2 = k1[i1], k2[i2]
    if family == "h":
        kh = np.sqrt(kk1 ** 2 + kk2 ** 2)
        vec = [-kk2 / kh, kk1 / kh]
        comps = (0, 1)
    else:
        vec = [np.ones_like(kk1, dtype=float)]
        comps = (2,)
    on_plane = i3 == 0
    for c, v in zip(comps, vec):
        np.add.at(out[c], (i1, i2, i3), coeffs * v)
        # the k3 = 0 plane stores both k and -k explicitly
        m1 = (-i1[on_plane]) % n1
        m2 = (-i2[on_plane]) % n2
        np.add.at(out[c], (m1, m2, i3[on_plane]), np.conj(coeffs[on_plane]) * v[on_plane])
    return out


def _random_coeffs(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _pick(rng: np.random.Generator, points: np.ndarray, limit: int) -> np.ndarray:
    if limit and len(points) > limit:
        idx = np.sort(rng.choice(len(points), size=limit, replace=False))
        return points[idx]
    return points


def _dilate(grid: GridSpec, points: np.ndarray, factor: int) -> np.ndarray:
    """Map rfft indices of lattice vectors ``m`` to those of ``factor * m``."""
    n1, n2, _ = grid.dims
    k1, k2, k3 = (np.asarray(k).ravel() for k in wavenumbers(grid))
    i1, i2, i3 = points.T
    return np.stack(
        [
            (factor * k1[i1]).astype(int) % n1,
            (factor * k2[i2]).astype(int) % n2,
            (factor * k3[i3]).astype(int),
        ],
        axis=1,
    )


def _shell_family(part, spec, rng, j, family, base_cache) -> np.ndarray:
    grid = part.grid
    if spec.phase_mode == "aligned":
        jb = base_cache["jb"]
        if family not in base_cache:
            pts = _pick(rng, _shell_points(part, jb, family), spec.modes_per_shell)
            base_cache[family] = (pts, _random_coeffs(rng, len(pts)))
        pts, coeffs = base_cache[family]
        pts = _dilate(grid, pts, 2 ** (j - jb))
    else:
        pts = _pick(rng, _shell_points(part, j, family), spec.modes_per_shell)
        coeffs = _random_coeffs(rng, len(pts))
    if len(pts) == 0:
        raise GeneratorError(f"shell {j} has no admissible {family!r} modes on this grid")
    return irfft3(_family_coeffs(grid, pts, coeffs, family), grid.shape)


def lacunary_field(
    grid: GridSpec,
    spec: LacunarySpec,
    part: Optional[DyadicPartition] = None,
    *,
    check: bool = True,
) -> VectorField:
    """Divergence-free field with ``||Delta_j u_h||_3 = w_j 2^{-j alpha}``, ``||Delta_j u_3||_3 = w_j 2^{-j beta}``.

    ``w_j = 1/max(j, 1)`` with damping, else 1.  With ``check`` the shell norms
    are re-measured through the partition (and, without damping, the fitted
    regularity exponents) and a :class:`GeneratorError` is raised on a miss.
    """
    part = part or build_partition(grid)
    part.check_grid(grid)
    js = spec.j_range or default_shells(part)
    if max(js) > part.resolved_j_max:
        raise InvalidInputError(
            f"shell {max(js)} has no plateau below Nyquist (max {part.resolved_j_max})"
        )
    rng = np.random.default_rng(spec.seed)
    base_cache = {"jb": min(js)}
    total = np.zeros((3,) + grid.shape)
    for j in sorted(js):
        w = 1.0 / max(j, 1) if spec.damping else 1.0
        families = [("h", spec.alpha, (0, 1))]
        if spec.vertical:
            families.append(("v", spec.beta, (2,)))
        for family, exponent, comps in families:
            shell = _shell_family(part, spec, rng, j, family, base_cache)
            mag = np.sqrt(np.sum(shell[list(comps)] ** 2, axis=0))
            norm = array_lp(mag, 3, grid.cell_volume)
            if norm == 0.0:
                raise GeneratorError(f"shell {j} family {family!r} vanished; reseed")
            total += shell * (w * 2.0 ** (-j * exponent) / norm)
    u = VectorField(grid, total)
    if check:
        verify_lacunary(u, spec, part)
    return u


def verify_lacunary(u: VectorField, spec: LacunarySpec, part: DyadicPartition, rel_tol: float = 0.05) -> dict:
    """Re-measure a lacunary field: shell ``L^3`` norms and fitted exponents."""
    js = spec.j_range or default_shells(part)
    h = VectorField(u.grid, np.stack([u.values[0], u.values[1], np.zeros(u.grid.shape)]))
    targets = [("h", h, spec.alpha)]
    if spec.vertical:
        targets.append(("v", u.component(3), spec.beta))
    report = {}
    for name, f, exponent in targets:
        norms = block_norms(f, part, 3, js)
        for j in js:
            w = 1.0 / max(j, 1) if spec.damping else 1.0
            target = w * 2.0 ** (-j * exponent)
            if abs(norms[j] - target) > rel_tol * target:
                raise GeneratorError(
                    f"shell {j} ({name}) L3 norm {norms[j]:.4g} misses target {target:.4g}"
                )
        entry = {"shell_norms": norms}
        if not spec.damping and len(js) >= 4:
            a_hat, width = estimate_regularity(f, 3, part, js)
            if abs(a_hat - exponent) > 0.1:
                raise GeneratorError(f"fitted exponent {a_hat:.3f} for {name} misses {exponent}")
            entry.update(alpha_hat=a_hat, alpha_hat_width=width)
        report[name] = entry
    return report


def lacunary_scalar(
    grid: GridSpec,
    alpha: float,
    seed: int = 0,
    j_range: Optional[Sequence[int]] = None,
    p: float = 3.0,
    part: Optional[DyadicPartition] = None,
) -> ScalarField:
    """Scalar field with every plateau shell filled and ``||Delta_j f||_p = 2^{-j alpha}``."""
    part = part or build_partition(grid)
    js = tuple(j_range) if j_range is not None else default_shells(part)
    rng = np.random.default_rng(seed)
    total = np.zeros(grid.shape)
    for j in js:
        mask = part.pure_shell_mask(j)
        coeffs = np.zeros(grid.rfft_shape, dtype=np.complex128)
        coeffs[mask] = _random_coeffs(rng, int(mask.sum()))
        shell = irfft3(coeffs, grid.shape)
        total += shell * (2.0 ** (-j * alpha) / array_lp(np.abs(shell), p, grid.cell_volume))
    return ScalarField(grid, total)


def critical_window(part: DyadicPartition, n_max: int = 4) -> list[int]:
    """Cut-offs ``N`` at which the critical field's flux is validated."""
    top = part.resolved_j_max
    Ns = list(range(max(2, top - n_max + 1), top + 1))
    if len(Ns) < 3:
        raise InvalidInputError("the critical field needs at least 64^3 points")
    return Ns


def ccfs_field(
    grid: GridSpec,
    seed: int = 0,
    part: Optional[DyadicPartition] = None,
    attempts: int = 8,
    max_ratio: float = 10.0,
) -> VectorField:
    """Self-similar, Onsager-critical field (``alpha = beta = 1/3``, flat shells) with
    non-vanishing dyadic energy flux.

    Shells ``1..resolved_j_max`` are filled with phase-aligned dilations of shell 1.
    The flux is measured at the top four cut-offs that see at least two shells
    (three on a 64^3 grid, which has only three such cut-offs); sub-seeds derived
    from ``seed`` are tried until ``max|flux| / min|flux| < max_ratio``.
    """
    from .flux import total_flux  # local import: flux depends on this module

    part = part or build_partition(grid)
    Ns = critical_window(part)
    last = None
    for attempt in range(attempts):
        spec = LacunarySpec(1 / 3, 1 / 3, seed=seed * 1000 + attempt, phase_mode="aligned")
        u = lacunary_field(grid, spec, part)
        flux = np.abs([total_flux(u, part, N) for N in Ns])
        last = flux
        if flux.min() > 0 and flux.max() / flux.min() < max_ratio:
            return u
    raise GeneratorError(f"critical-field flux failed validation over N={Ns}: |flux|={last}")


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> VectorField:
    """``A (sin x cos y cos z, -cos x sin y cos z, 0)`` in box-scaled coordinates."""
    x1, x2, x3 = (c * grid.k_unit for c in grid.coordinates())
    u = np.zeros((3,) + grid.shape)
    u[0] = amplitude * np.sin(x1) * np.cos(x2) * np.cos(x3)
    u[1] = -amplitude * np.cos(x1) * np.sin(x2) * np.cos(x3)
    return VectorField(grid, u)


def abc_flow(grid: GridSpec, A: float = 1.0, B: float = 1.0, C: float = 1.0) -> VectorField:
    """Arnold-Beltrami-Childress flow ``(A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)``."""
    x1, x2, x3 = (c * grid.k_unit for c in grid.coordinates())
    u = np.zeros((3,) + grid.shape)
    u[0] = A * np.sin(x3) + C * np.cos(x2)
    u[1] = B * np.sin(x1) + A * np.cos(x3)
    u[2] = C * np.sin(x2) + B * np.cos(x1)
    return VectorField(grid, u)


def random_divfree(
    grid: GridSpec,
    spectrum_slope: float = -5.0 / 3.0,
    seed: int = 0,
    k_max: Optional[float] = None,
    rms: float = 1.0,
) -> VectorField:
    """Leray-projected Gaussian field with shell energy spectrum ``E(k) ~ k^slope``.

    Modes with ``0 < |k| <= k_max`` (default: two thirds of Nyquist) are used.
    ``slope = -1`` gives equal energy per octave, i.e. flat dyadic block norms.
    The result is rescaled to the requested root-mean-square speed.
    """
    rng = np.random.default_rng(seed)
    kmag = lattice_magnitude(grid)
    k_max = (2.0 * grid.k_nyquist / 3.0) if k_max is None else float(k_max)
    amp = np.zeros_like(kmag)
    inside = (kmag > 0) & (kmag <= k_max)
    amp[inside] = kmag[inside] ** ((spectrum_slope - 2.0) / 2.0)
    noise = rng.standard_normal((3,) + grid.shape)
    u_hat = leray_project_hat(rfft3(noise) * amp, grid)
    values = irfft3(u_hat, grid.shape)
    current = np.sqrt(np.mean(np.sum(values ** 2, axis=0)))
    if current == 0:
        raise GeneratorError("random field vanished")
    return VectorField(grid, values * (rms / current))
