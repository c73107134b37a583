"""Periodic grid, discrete Fourier transform and multiplier operators.

The transform convention matches the continuum one,

    u_hat(xi) = integral exp(-i x.xi) u(x) dx,

discretized with quadrature weight h^d on the box [-L/2, L/2)^d and the
frequency lattice xi_k = 2*pi*k/L, k in {-n/2, ..., n/2-1} per axis.  With
this normalization the coefficients of a sampled Schwartz function agree
with its continuum transform to machine precision (aliasing and
periodization errors are exponentially small once the box is large enough),
so norms and multipliers carry the continuum constants with no hidden
2*pi factors.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .errors import GridMismatchError

_REAL_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on [-L/2, L/2)^d with its frequency lattice.

    Parameters
    ----------
    dim : int
        Spatial dimension d >= 1.
    n : int
        Points per axis; must be even so the lattice contains the single
        unpaired Nyquist mode -n/2.
    box_length : float
        Side length L of the periodic box.
    """

    dim: int
    n: int
    box_length: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.n < 2 or self.n % 2 != 0:
            raise ValueError(f"points per axis must be a positive even integer, got {self.n}")
        if not (self.box_length > 0 and np.isfinite(self.box_length)):
            raise ValueError(f"box length must be positive and finite, got {self.box_length}")
        if self.n ** self.dim > sys.maxsize:
            raise ValueError(f"grid with {self.n}^{self.dim} nodes exceeds the addressable range")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis: x_j = -L/2 + j*h."""
        return -self.box_length / 2 + self.spacing * np.arange(self.n)

    @cached_property
    def axis_freqs(self) -> np.ndarray:
        """Frequency lattice along one axis, xi = 2*pi*k/L in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def coords(self) -> tuple:
        """Meshgrid of node coordinates, one array of shape `shape` per axis."""
        return tuple(np.meshgrid(*([self.axis_coords] * self.dim), indexing="ij"))

    @cached_property
    def radius_sq(self) -> np.ndarray:
        """|x|^2 at every node."""
        return sum(c ** 2 for c in self.coords)

    @cached_property
    def freq_sq(self) -> np.ndarray:
        """|xi|^2 on the frequency lattice (FFT order)."""
        grids = np.meshgrid(*([self.axis_freqs] * self.dim), indexing="ij")
        return sum(g ** 2 for g in grids)

    @cached_property
    def _phase(self) -> np.ndarray:
        # e^{-i x_j . xi_k} = (-1)^{k_1+...+k_d} e^{-2 pi i j.k/n} for nodes
        # starting at -L/2; this factor converts numpy's FFT to the
        # continuum convention.
        alt = (-1.0) ** np.arange(self.n)
        return reduce(np.multiply.outer, [alt] * self.dim)

    def axis_freq_component(self, axis: int) -> np.ndarray:
        """xi_axis broadcast over the full lattice."""
        shape = [1] * self.dim
        shape[axis] = self.n
        return self.axis_freqs.reshape(shape) * np.ones(self.shape)

    def same_as(self, other: "PeriodicGrid") -> bool:
        return (
            self.dim == other.dim
            and self.n == other.n
            and self.box_length == other.box_length
        )


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a grid function, in FFT axis order.

    For a real grid function the coefficients satisfy conjugate symmetry
    coeffs(-xi) = conj(coeffs(xi)); `conjugate_symmetry_defect` measures the
    relative deviation.
    """

    grid: PeriodicGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )

    def conjugate_symmetry_defect(self) -> float:
        sl = tuple((-np.arange(self.grid.n)) % self.grid.n for _ in range(self.grid.dim))
        mirrored = self.coeffs[np.ix_(*sl)]
        scale = np.max(np.abs(self.coeffs))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(mirrored - np.conj(self.coeffs))) / scale)


def forward_transform(values: np.ndarray, grid: PeriodicGrid) -> SpectralField:
    """Discrete Fourier transform with the continuum normalization.

    Parameters
    ----------
    values : ndarray
        Real or complex grid function of shape ``grid.shape``.
    grid : PeriodicGrid

    Returns
    -------
    SpectralField
        coeffs(xi) = h^d * sum_x exp(-i x.xi) f(x).
    """
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise GridMismatchError(
            f"value shape {values.shape} does not match grid {grid.shape}"
        )
    coeffs = grid.cell_volume * grid._phase * np.fft.fftn(values)
    return SpectralField(grid, coeffs)


def inverse_transform(field: SpectralField) -> np.ndarray:
    """Invert `forward_transform`; returns the real part after a size check.

    The imaginary part is checked against ``1e-12`` relative and discarded;
    fields produced by real inputs and real even multipliers stay below the
    threshold.
    """
    grid = field.grid
    values = np.fft.ifftn(field.coeffs * grid._phase) / grid.cell_volume
    scale = np.max(np.abs(values))
    if scale > 0 and np.max(np.abs(values.imag)) > _REAL_TOL * scale:
        raise ValueError(
            "inverse transform produced a significantly complex result "
            f"(relative imaginary part {np.max(np.abs(values.imag)) / scale:.3e})"
        )
    return values.real


def apply_multiplier(values: np.ndarray, grid: PeriodicGrid, multiplier: np.ndarray) -> np.ndarray:
    """Apply a Fourier multiplier m(xi) to a real grid function.

    Uses the raw FFT (normalization cancels); realness of the output is the
    caller's responsibility when the multiplier is not real and even.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise GridMismatchError(
            f"value shape {values.shape} does not match grid {grid.shape}"
        )
    out = np.fft.ifftn(multiplier * np.fft.fftn(values))
    return out.real


def fractional_laplacian(values: np.ndarray, grid: PeriodicGrid, s: float) -> np.ndarray:
    """Fractional Laplacian: multiplier |xi|^(2s); order s=1 is -Laplace.

    s = 0 returns the input unchanged; negative orders are rejected (the
    solver never needs them: the nested operators keep their orders >= 0).
    """
    if not np.isfinite(s) or s < 0:
        raise ValueError(f"fractional order must satisfy s >= 0, got {s}")
    if s == 0:
        return np.array(values, dtype=float, copy=True)
    mult = grid.freq_sq ** s  # |0|^(2s) = 0 annihilates the zero mode
    return apply_multiplier(values, grid, mult)


def spectral_gradient(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Gradient via the i*xi multiplier, Nyquist mode zeroed per axis.

    Returns an array of shape (d, *grid.shape).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise GridMismatchError(
            f"value shape {values.shape} does not match grid {grid.shape}"
        )
    fhat = np.fft.fftn(values)
    out = np.empty((grid.dim,) + grid.shape)
    for axis in range(grid.dim):
        xi = grid.axis_freqs.copy()
        xi[grid.n // 2] = 0.0  # odd multiplier: zero the unpaired Nyquist mode
        shape = [1] * grid.dim
        shape[axis] = grid.n
        out[axis] = np.fft.ifftn(1j * xi.reshape(shape) * fhat).real
    return out


def spectral_divergence(components: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Divergence of a vector field given as (d, *grid.shape)."""
    components = np.asarray(components, dtype=float)
    if components.shape != (grid.dim,) + grid.shape:
        raise GridMismatchError(
            f"component shape {components.shape} does not match grid {(grid.dim,) + grid.shape}"
        )
    out = np.zeros(grid.shape)
    for axis in range(grid.dim):
        xi = grid.axis_freqs.copy()
        xi[grid.n // 2] = 0.0
        shape = [1] * grid.dim
        shape[axis] = grid.n
        out += np.fft.ifftn(1j * xi.reshape(shape) * np.fft.fftn(components[axis])).real
    return out


def sobolev_norm_sq(values: np.ndarray, grid: PeriodicGrid, r: float, homogeneous: bool = True) -> float:
    """Squared Sobolev (semi)norm of order r.

    Homogeneous:    (2 pi)^(-d) * sum_xi |xi|^(2r)     |u_hat|^2 * (2 pi/L)^d
    Inhomogeneous:  (2 pi)^(-d) * sum_xi (1+|xi|^2)^r  |u_hat|^2 * (2 pi/L)^d

    The order-zero homogeneous norm coincides with the L^2 norm
    h^d * sum |u|^2.  Homogeneous norms of negative order require a
    vanishing zero mode.
    """
    field = forward_transform(values, grid)
    d = grid.dim
    weight = (2 * np.pi) ** (-d) * (2 * np.pi / grid.box_length) ** d
    if homogeneous:
        mult = np.zeros(grid.shape)
        if r >= 0:
            mult = grid.freq_sq ** r  # 0^0 = 1 keeps the zero mode at r = 0
        else:
            zero = (0,) * d
            c0 = abs(field.coeffs[zero])
            scale = np.max(np.abs(field.coeffs))
            if scale > 0 and c0 > 1e-10 * scale:
                raise ValueError(
                    "homogeneous norm of negative order requires a vanishing zero mode"
                )
            mult = np.where(grid.freq_sq > 0, grid.freq_sq, 1.0) ** r
            mult[zero] = 0.0
    else:
        mult = (1.0 + grid.freq_sq) ** r
    return float(weight * np.sum(mult * np.abs(field.coeffs) ** 2))


def energy(density, s: float) -> float:
    """Dirichlet-type energy: half the squared homogeneous norm of order s.

    Accepts a GridDensity or a raw grid function paired with its grid via
    the ``grid`` attribute.
    """
    if s <= 0 or not np.isfinite(s):
        raise ValueError(f"energy order must satisfy s > 0, got {s}")
    return 0.5 * sobolev_norm_sq(density.values, density.grid, s, homogeneous=True)


def energy_of_values(values: np.ndarray, grid: PeriodicGrid, s: float) -> float:
    """Energy of a raw grid function (same contract as `energy`)."""
    if s <= 0 or not np.isfinite(s):
        raise ValueError(f"energy order must satisfy s > 0, got {s}")
    return 0.5 * sobolev_norm_sq(values, grid, s, homogeneous=True)


def heat_multiplier_apply(values: np.ndarray, grid: PeriodicGrid, t: float) -> np.ndarray:
    """Multiply the spectrum by exp(-t |xi|^2); t >= 0."""
    if t < 0 or not np.isfinite(t):
        raise ValueError(f"heat flow time must satisfy t >= 0, got {t}")
    if t == 0:
        return np.array(values, dtype=float, copy=True)
    return apply_multiplier(values, grid, np.exp(-t * grid.freq_sq))


def interpolation_check(values: np.ndarray, grid: PeriodicGrid, r0: float, r1: float, r2: float):
    """Evaluate both sides of the Sobolev interpolation inequality.

    Returns ``(lhs, rhs)`` with lhs the middle-order seminorm and rhs the
    product of the outer seminorms with exponents 1-theta and theta,
    theta = (r1-r0)/(r2-r0).  The contract lhs <= rhs*(1+1e-12) is an exact
    Hoelder inequality on the lattice.
    """
    if not (r0 < r1 < r2):
        raise ValueError(f"interpolation orders must satisfy r0 < r1 < r2, got {(r0, r1, r2)}")
    theta = (r1 - r0) / (r2 - r0)
    lhs = np.sqrt(sobolev_norm_sq(values, grid, r1))
    n0 = np.sqrt(sobolev_norm_sq(values, grid, r0))
    n2 = np.sqrt(sobolev_norm_sq(values, grid, r2))
    return lhs, n0 ** (1.0 - theta) * n2 ** theta
