"""Periodic grids, their Fourier duals, and the Weyl change of variables."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid ``origin + j*spacing``, j = 0..n-1.

    ``dim`` > 1 means the isotropic tensor grid with the same 1-D nodes along
    every axis.
    """

    n: int
    length: float
    origin: float = None
    dim: int = 1

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or not _is_pow2(int(self.n)):
            raise InvalidParameterError(f"grid size must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise InvalidParameterError(f"box length must be positive, got {self.length}")
        if self.dim not in (1, 2, 3):
            raise InvalidParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.origin is None:
            object.__setattr__(self, "origin", -0.5 * float(self.length))

    @property
    def spacing(self):
        return self.length / self.n

    @property
    def nodes(self):
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def center(self):
        # node sitting at index n/2, the zero of the centred DFT ordering
        return self.origin + 0.5 * self.n * self.spacing

    @property
    def cell(self):
        return self.spacing ** self.dim

    @property
    def shape(self):
        return (self.n,) * self.dim

    def mesh(self):
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return np.meshgrid(*([self.nodes] * self.dim), indexing="ij")

    def integrate(self, f):
        return float(np.sum(f) * self.cell) if np.isrealobj(f) else complex(np.sum(f) * self.cell)


@dataclass(frozen=True)
class FrequencyGrid:
    """Angular wavenumbers 2*pi*k/L, k in [-n/2, n/2), ascending order."""

    n: int
    length: float
    center: float = 0.0

    @property
    def spacing(self):
        return 2 * np.pi / self.length

    @property
    def frequencies(self):
        return self.spacing * np.arange(-(self.n // 2), self.n - self.n // 2)

    @property
    def nyquist(self):
        return self.spacing * (self.n // 2)

    def forward(self, f, axis=-1):
        """Samples of the continuous transform  int f(x) exp(-i k x) dx."""
        dx = self.length / self.n
        f = np.asarray(f)
        g = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(f, axes=axis), axis=axis), axes=axis)
        if self.center != 0.0:
            g = g * _along(np.exp(-1j * self.frequencies * self.center), g.ndim, axis)
        return dx * g

    def inverse(self, g, axis=-1):
        """Inverse of :meth:`forward`:  (1/2pi) sum g(k) exp(i k x) dk."""
        dx = self.length / self.n
        g = np.asarray(g)
        if self.center != 0.0:
            g = g * _along(np.exp(1j * self.frequencies * self.center), g.ndim, axis)
        f = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(g, axes=axis), axis=axis), axes=axis)
        return f / dx


def _along(v, ndim, axis):
    shape = [1] * ndim
    shape[axis] = v.size
    return v.reshape(shape)


def dual_grid(g: SpatialGrid) -> FrequencyGrid:
    return FrequencyGrid(g.n, g.length, g.center)


def wavenumbers(g: SpatialGrid):
    """Wavenumbers in numpy FFT order (unshifted), for multiplier work."""
    return 2 * np.pi * np.fft.fftfreq(g.n, g.spacing)


def spectral_derivative(f, g: SpatialGrid, order=1, axis=-1):
    """Fourier derivative of a periodic real or complex array along ``axis``.

    The Nyquist mode is dropped for odd orders so real input stays real.
    """
    k = wavenumbers(g)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[g.n // 2] = 0.0
    f = np.asarray(f)
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * _along(mult, f.ndim, axis), axis=axis)
    return out.real if np.isrealobj(f) else out


def gradient(f, g: SpatialGrid):
    return [spectral_derivative(f, g, 1, axis=a) for a in range(g.dim)]


def laplacian(f, g: SpatialGrid):
    return sum(spectral_derivative(f, g, 2, axis=a) for a in range(g.dim))


def _check_hbar(hbar):
    if not (np.isfinite(hbar) and hbar > 0):
        raise InvalidParameterError(f"hbar must be positive, got {hbar}")


def weyl_forward(X, Y, hbar):
    """(X, Y) -> (x, y) = ((X+Y)/2, (X-Y)/hbar)."""
    _check_hbar(hbar)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return 0.5 * (X + Y), (X - Y) / hbar


def weyl_inverse(x, y, hbar):
    """(x, y) -> (X, Y) = (x + hbar*y/2, x - hbar*y/2)."""
    _check_hbar(hbar)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x + 0.5 * hbar * y, x - 0.5 * hbar * y


@dataclass(frozen=True)
class PhaseGrid:
    """Position grid x, Weyl difference grid y and the momentum grid xi dual to y.

    Array layout of every phase-space field is ``(x, y)`` or ``(x, xi)``, with
    the y and xi axes in centred (ascending) order.
    """

    xgrid: SpatialGrid
    ygrid: SpatialGrid
    xigrid: FrequencyGrid = field(init=False)

    def __post_init__(self):
        if self.xgrid.dim != 1:
            raise InvalidParameterError("phase-space fields are implemented for d=1 only")
        if abs(self.ygrid.center) > 1e-12 * self.ygrid.length:
            raise InvalidParameterError("the y grid must be centred on y=0")
        object.__setattr__(self, "xigrid", dual_grid(self.ygrid))

    @classmethod
    def for_hbar(cls, xgrid: SpatialGrid, hbar, ny=None, dy=None):
        """Default y grid: ``dy = dx/hbar`` and ``ny = n``.

        Then x +- hbar*y/2 moves in half-cells of x and the momentum grid
        spans the same range as the momenta representable on the x grid.
        """
        _check_hbar(hbar)
        ny = xgrid.n if ny is None else ny
        dy = xgrid.spacing / hbar if dy is None else dy
        return cls(xgrid, SpatialGrid(ny, ny * dy))

    @property
    def x(self):
        return self.xgrid.nodes

    @property
    def y(self):
        return self.ygrid.nodes

    @property
    def xi(self):
        return self.xigrid.frequencies

    @property
    def dx(self):
        return self.xgrid.spacing

    @property
    def dy(self):
        return self.ygrid.spacing

    @property
    def dxi(self):
        return self.xigrid.spacing

    @property
    def shape(self):
        return (self.xgrid.n, self.ygrid.n)
