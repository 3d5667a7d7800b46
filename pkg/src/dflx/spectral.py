"""Periodic grids, field containers and the spectral calculus everything else uses.

Conventions
-----------
* Fields live on a uniform grid over the box ``[0, L)^3`` (``L = domain_length``).
* Frequencies are integer lattice indices ``k``; the physical wavenumber is
  ``2*pi*k/L`` (identical for the default ``L = 2*pi``).
* The public forward transform (:func:`to_spectral`) carries ``1/(n1*n2*n3)`` so
  that the ``k = 0`` coefficient equals the field mean.
* Internally modules work with unnormalised ``rfftn`` arrays ("hats").
* Norms are rectangle-rule quadratures on the grid.
* Odd derivatives and the Leray projector zero the Nyquist planes, which keeps
  every spectral operation Hermitian-symmetric.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, InvalidInputError

TWO_PI = 2.0 * np.pi


def _workers() -> int | None:
    value = os.environ.get("DFLX_THREADS")
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        return None


def rfft3(a: np.ndarray) -> np.ndarray:
    """Unnormalised real FFT over the last three axes."""
    return sfft.rfftn(a, axes=(-3, -2, -1), workers=_workers())


def irfft3(a_hat: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`rfft3` returning real samples of the given 3-D shape."""
    return sfft.irfftn(a_hat, s=tuple(shape), axes=(-3, -2, -1), workers=_workers())


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid. Every ``n_i`` is a power of two, at least 16."""

    dims: tuple[int, int, int]
    domain_length: float = TWO_PI

    def __post_init__(self) -> None:
        try:
            dims = tuple(int(n) for n in self.dims)
        except TypeError as exc:
            raise InvalidInputError(f"dims must be three integers, got {self.dims!r}") from exc
        if len(dims) != 3:
            raise InvalidInputError(f"dims must have three entries, got {dims}")
        for n in dims:
            if n < 16 or n & (n - 1):
                raise InvalidInputError(f"each grid size must be a power of two >= 16, got {n}")
        length = float(self.domain_length)
        if not (np.isfinite(length) and length > 0):
            raise InvalidInputError(f"domain_length must be positive, got {self.domain_length}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "domain_length", length)

    @classmethod
    def cube(cls, n: int, domain_length: float = TWO_PI) -> "GridSpec":
        return cls((n, n, n), domain_length)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def size(self) -> int:
        n1, n2, n3 = self.dims
        return n1 * n2 * n3

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(self.domain_length / n for n in self.dims)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return self.domain_length ** 3

    @property
    def k_unit(self) -> float:
        """Physical wavenumber of lattice index 1."""
        return TWO_PI / self.domain_length

    @property
    def k_nyquist(self) -> int:
        return min(self.dims) // 2

    @property
    def rfft_shape(self) -> tuple[int, int, int]:
        n1, n2, n3 = self.dims
        return (n1, n2, n3 // 2 + 1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Open (broadcastable) coordinate arrays ``x1, x2, x3``."""
        axes = [np.arange(n) * (self.domain_length / n) for n in self.dims]
        return (
            axes[0].reshape(-1, 1, 1),
            axes[1].reshape(1, -1, 1),
            axes[2].reshape(1, 1, -1),
        )

    def describe(self) -> dict:
        return {"dims": list(self.dims), "domain_length": self.domain_length}


@lru_cache(maxsize=32)
def _lattice(dims: tuple[int, int, int], full: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n1, n2, n3 = dims
    k1 = np.fft.fftfreq(n1, 1.0 / n1).reshape(-1, 1, 1)
    k2 = np.fft.fftfreq(n2, 1.0 / n2).reshape(1, -1, 1)
    if full:
        k3 = np.fft.fftfreq(n3, 1.0 / n3).reshape(1, 1, -1)
    else:
        k3 = np.arange(n3 // 2 + 1, dtype=float).reshape(1, 1, -1)
    for k in (k1, k2, k3):
        k.flags.writeable = False
    return k1, k2, k3


def wavenumbers(grid: GridSpec, *, full: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer lattice indices as broadcastable arrays (rfft layout unless ``full``)."""
    return _lattice(grid.dims, full)


@lru_cache(maxsize=16)
def _kmag(dims: tuple[int, int, int]) -> np.ndarray:
    k1, k2, k3 = _lattice(dims, False)
    mag = np.sqrt(k1 * k1 + k2 * k2 + k3 * k3)
    mag.flags.writeable = False
    return mag


def lattice_magnitude(grid: GridSpec) -> np.ndarray:
    """``|k|`` over the rfft lattice (index units)."""
    return _kmag(grid.dims)


@lru_cache(maxsize=16)
def _derivative_indices(dims: tuple[int, int, int]) -> tuple[np.ndarray, ...]:
    out = []
    for axis, k in enumerate(_lattice(dims, False)):
        kd = np.array(k, copy=True)
        kd[np.abs(kd) == dims[axis] // 2] = 0.0
        kd.flags.writeable = False
        out.append(kd)
    return tuple(out)


@lru_cache(maxsize=16)
def _nyquist_mask(dims: tuple[int, int, int]) -> np.ndarray:
    k1, k2, k3 = _lattice(dims, False)
    n1, n2, n3 = dims
    mask = (np.abs(k1) == n1 // 2) | (np.abs(k2) == n2 // 2) | (k3 == n3 // 2)
    mask = np.broadcast_to(mask, (n1, n2, n3 // 2 + 1)).copy()
    mask.flags.writeable = False
    return mask


def derivative_multiplier(grid: GridSpec, axis: int) -> np.ndarray:
    """``i * k_axis * 2*pi/L`` on the rfft lattice, Nyquist entries zeroed. ``axis`` is 0-based."""
    return 1j * grid.k_unit * _derivative_indices(grid.dims)[axis]


def _rfft_weights(dims: tuple[int, int, int]) -> np.ndarray:
    n3 = dims[2]
    w = np.full(n3 // 2 + 1, 2.0)
    w[0] = 1.0
    if n3 % 2 == 0:
        w[-1] = 1.0
    return w.reshape(1, 1, -1)


def spectral_inner(a_hat: np.ndarray, b_hat: np.ndarray, grid: GridSpec) -> float:
    """``integral(a*b)`` for real fields given their unnormalised rfft coefficients."""
    w = _rfft_weights(grid.dims)
    s = np.sum(w * (a_hat.real * b_hat.real + a_hat.imag * b_hat.imag))
    return float(s) * grid.volume / float(grid.size) ** 2


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------


def _readonly(a: np.ndarray) -> np.ndarray:
    v = a.view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar samples on a :class:`GridSpec` (C-order array of shape ``dims``)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != self.grid.size:
            raise InvalidInputError(f"expected {self.grid.size} values, got {arr.size}")
        arr = arr.reshape(self.grid.shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("field contains non-finite values")
        object.__setattr__(self, "values", _readonly(arr))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        x1, x2, x3 = grid.coordinates()
        return cls(grid, np.broadcast_to(fn(x1, x2, x3), grid.shape))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def translate(self, shift: Sequence[int]) -> "ScalarField":
        """Exact lattice translation: returns ``f(x + shift*dx)``."""
        return ScalarField(self.grid, np.roll(self.values, [-int(s) for s in shift], axis=(0, 1, 2)))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Three real components on one grid, stored as an array of shape ``(3, *dims)``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != 3 * self.grid.size:
            raise InvalidInputError(f"expected 3x{self.grid.size} values, got {arr.size}")
        arr = arr.reshape((3,) + self.grid.shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("field contains non-finite values")
        object.__setattr__(self, "values", _readonly(arr))

    @classmethod
    def from_components(cls, u1: ScalarField, u2: ScalarField, u3: ScalarField) -> "VectorField":
        grid = u1.grid
        if u2.grid != grid or u3.grid != grid:
            raise GridMismatchError("components live on different grids")
        return cls(grid, np.stack([u1.values, u2.values, u3.values]))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((3,) + grid.shape))

    @property
    def components(self) -> tuple[ScalarField, ScalarField, ScalarField]:
        return tuple(ScalarField(self.grid, self.values[i]) for i in range(3))

    def component(self, i: int) -> ScalarField:
        """Component by 1-based index, as in ``u_1, u_2, u_3``."""
        if i not in (1, 2, 3):
            raise InvalidInputError(f"component index must be 1, 2 or 3, got {i}")
        return ScalarField(self.grid, self.values[i - 1])

    def __add__(self, other: "VectorField") -> "VectorField":
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, scale: float) -> "VectorField":
        return VectorField(self.grid, self.values * float(scale))

    __rmul__ = __mul__

    def permute_axes(self, order: Sequence[int]) -> "VectorField":
        """Relabel coordinates: new axis ``a`` is old axis ``order[a]`` (0-based).

        Both the components and the spatial arguments are permuted, so the
        result is the same physical flow described in relabelled coordinates.
        """
        order = list(order)
        if sorted(order) != [0, 1, 2]:
            raise InvalidInputError(f"not a permutation of (0, 1, 2): {order}")
        comps = self.values[order]
        dims = tuple(self.grid.dims[o] for o in order)
        data = np.transpose(comps, [0] + [o + 1 for o in order])
        return VectorField(GridSpec(dims, self.grid.domain_length), np.ascontiguousarray(data))


Field = Union[ScalarField, VectorField]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Normalised discrete Fourier coefficients of a real scalar field (full ``fftn`` layout)."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128).reshape(self.grid.shape)
        object.__setattr__(self, "coeffs", _readonly(c))

    def hermitian_defect(self) -> float:
        """``max |c(-k) - conj(c(k))| / max |c|``."""
        c = self.coeffs
        mirrored = np.roll(np.flip(c, axis=(0, 1, 2)), 1, axis=(0, 1, 2))
        scale = np.max(np.abs(c))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(mirrored - np.conj(c))) / scale)


def _check_scalar(f) -> ScalarField:
    if not isinstance(f, ScalarField):
        raise InvalidInputError(f"expected a ScalarField, got {type(f).__name__}")
    return f


def same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


# ---------------------------------------------------------------------------
# transforms and calculus
# ---------------------------------------------------------------------------


def to_spectral(f: ScalarField) -> SpectralField:
    f = _check_scalar(f)
    return SpectralField(f.grid, sfft.fftn(f.values, workers=_workers()) / f.grid.size)


def from_spectral(F: SpectralField) -> ScalarField:
    values = sfft.ifftn(np.asarray(F.coeffs) * F.grid.size, workers=_workers())
    return ScalarField(F.grid, values.real)


def derivative(f: ScalarField, axis: int, order: int = 1) -> ScalarField:
    """Spectral derivative along ``axis`` (1, 2 or 3)."""
    f = _check_scalar(f)
    if axis not in (1, 2, 3):
        raise InvalidInputError(f"axis must be 1, 2 or 3, got {axis!r}")
    if order < 0:
        raise InvalidInputError("derivative order must be non-negative")
    grid = f.grid
    if order % 2:
        mult = derivative_multiplier(grid, axis - 1) ** order
    else:
        k = wavenumbers(grid)[axis - 1]
        mult = (1j * grid.k_unit * k) ** order
    return ScalarField(grid, irfft3(rfft3(f.values) * mult, grid.shape))


def gradient(f: ScalarField) -> VectorField:
    f = _check_scalar(f)
    grid = f.grid
    f_hat = rfft3(f.values)
    comps = [irfft3(f_hat * derivative_multiplier(grid, a), grid.shape) for a in range(3)]
    return VectorField(grid, np.stack(comps))


def _divergence_hat(u_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sum(u_hat[a] * derivative_multiplier(grid, a) for a in range(3))


def divergence(u: VectorField) -> ScalarField:
    grid = u.grid
    return ScalarField(grid, irfft3(_divergence_hat(rfft3(u.values), grid), grid.shape))


def divergence_defect(u: VectorField) -> float:
    """Relative spectral divergence ``max|k.u(k)| / max(|k| |u(k)|)`` (0 for a null field)."""
    grid = u.grid
    u_hat = rfft3(u.values)
    k = _derivative_indices(grid.dims)
    kdotu = np.abs(k[0] * u_hat[0] + k[1] * u_hat[1] + k[2] * u_hat[2])
    kk = np.sqrt(k[0] ** 2 + k[1] ** 2 + k[2] ** 2)
    scale = np.max(kk * np.sqrt(np.sum(np.abs(u_hat) ** 2, axis=0)))
    if scale == 0:
        return 0.0
    return float(np.max(kdotu) / scale)


def leray_project_hat(u_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    k = _derivative_indices(grid.dims)
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    kdotu = (k[0] * u_hat[0] + k[1] * u_hat[1] + k[2] * u_hat[2]) * inv
    out = np.stack([u_hat[a] - k[a] * kdotu for a in range(3)])
    out[:, _nyquist_mask(grid.dims)] = 0.0
    return out


def leray_project(u: VectorField) -> VectorField:
    """Orthogonal projection onto divergence-free fields (mean kept, Nyquist planes dropped)."""
    grid = u.grid
    return VectorField(grid, irfft3(leray_project_hat(rfft3(u.values), grid), grid.shape))


def _magnitude(f: Field) -> np.ndarray:
    if isinstance(f, VectorField):
        v = f.values
        return np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if isinstance(f, ScalarField):
        return np.abs(f.values)
    raise InvalidInputError(f"expected a field, got {type(f).__name__}")


def parse_exponent(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "oo"):
            return np.inf
        p = float(p)
    p = float(p)
    if np.isnan(p) or p < 1:
        raise InvalidInputError(f"Lebesgue exponent must be >= 1 or inf, got {p}")
    return p


def array_lp(mag: np.ndarray, p: float, cell_volume: float) -> float:
    """Rectangle-rule ``L^p`` norm of non-negative samples ``mag``."""
    if p == np.inf:
        return float(np.max(mag)) if mag.size else 0.0
    if p == 2:
        return float(np.sqrt(np.sum(mag * mag) * cell_volume))
    if p == 1:
        return float(np.sum(mag) * cell_volume)
    peak = float(np.max(mag)) if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    scaled = mag / peak
    return peak * float(np.sum(scaled ** p) * cell_volume) ** (1.0 / p)


def lp_norm(f: Field, p) -> float:
    """Rectangle-rule ``L^p`` norm; vector fields use the pointwise Euclidean magnitude."""
    p = parse_exponent(p)
    return array_lp(_magnitude(f), p, f.grid.cell_volume)


def inner(f: ScalarField, g: ScalarField) -> float:
    same_grid(f, g)
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def padded_dims(dims: Sequence[int]) -> tuple[int, int, int]:
    return tuple(3 * n // 2 for n in dims)


def _axis_maps(n: int, m: int) -> list[tuple[slice, slice]]:
    half = n // 2
    return [(slice(0, half), slice(0, half)), (slice(half + 1, n), slice(m - half + 1, m))]


def pad_hat(a_hat: np.ndarray, dims: Sequence[int], mdims: Sequence[int]) -> np.ndarray:
    """Embed rfft coefficients of an ``dims`` grid into a larger ``mdims`` grid.

    Nyquist entries are dropped; the result is rescaled so the inverse
    transform on the larger grid interpolates the same trigonometric polynomial.
    """
    n1, n2, n3 = dims
    m1, m2, m3 = mdims
    lead = a_hat.shape[:-3]
    out = np.zeros(lead + (m1, m2, m3 // 2 + 1), dtype=np.complex128)
    for s1, d1 in _axis_maps(n1, m1):
        for s2, d2 in _axis_maps(n2, m2):
            out[..., d1, d2, : n3 // 2] = a_hat[..., s1, s2, : n3 // 2]
    out *= (m1 * m2 * m3) / (n1 * n2 * n3)
    return out


def truncate_hat(b_hat: np.ndarray, dims: Sequence[int], mdims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`pad_hat`: restrict to the ``dims`` lattice (Nyquist set to zero)."""
    n1, n2, n3 = dims
    m1, m2, m3 = mdims
    lead = b_hat.shape[:-3]
    out = np.zeros(lead + (n1, n2, n3 // 2 + 1), dtype=np.complex128)
    for s1, d1 in _axis_maps(n1, m1):
        for s2, d2 in _axis_maps(n2, m2):
            out[..., s1, s2, : n3 // 2] = b_hat[..., d1, d2, : n3 // 2]
    out *= (n1 * n2 * n3) / (m1 * m2 * m3)
    return out


class PaddedProducts:
    """Exact lattice coefficients of products of trigonometric polynomials.

    Factors are interpolated to a grid 3/2 times finer, multiplied pointwise and
    transformed back.  Every product coefficient with ``|k_i| < n_i/2`` is then
    alias-free, which is all any lattice pairing (Parseval) needs.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.mdims = padded_dims(grid.dims)

    def physical(self, a_hat: np.ndarray) -> np.ndarray:
        return irfft3(pad_hat(a_hat, self.grid.dims, self.mdims), self.mdims)

    def back(self, values: np.ndarray) -> np.ndarray:
        return truncate_hat(rfft3(values), self.grid.dims, self.mdims)

    def product_hat(self, a_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
        return self.back(self.physical(a_hat) * self.physical(b_hat))


def product(f: ScalarField, g: ScalarField, dealias: bool = True) -> ScalarField:
    """Pointwise product.

    With ``dealias`` the result is the exact product projected onto the grid's
    lattice; otherwise it is the plain product of grid samples.
    """
    grid = same_grid(f, g)
    if not dealias:
        return ScalarField(grid, f.values * g.values)
    pp = PaddedProducts(grid)
    return ScalarField(grid, irfft3(pp.product_hat(rfft3(f.values), rfft3(g.values)), grid.shape))


# ---------------------------------------------------------------------------
# time quadrature
# ---------------------------------------------------------------------------


def time_norm(values: Sequence[float], dt: float, p) -> float:
    """``L^p(0, T)`` norm of a uniformly sampled series by the trapezoid rule.

    A single sample is read as an instantaneous value (unit time window).
    """
    p = parse_exponent(p)
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        raise InvalidInputError("empty time series")
    if p == np.inf:
        return float(np.max(v))
    if v.size == 1:
        return float(v[0])
    return float(np.trapezoid(v ** p, dx=dt) ** (1.0 / p))
