"""Kernel in Weyl variables, the Wigner transform, moments and rho-hat."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (BoundaryDecayWarning, InconsistencyError, InvalidParameterError,
                     ResolutionError, ResolutionWarning)
from .grid import PhaseGrid, SpatialGrid, spectral_derivative, wavenumbers
from .states import DECAY_THRESHOLD, QuantumState, _boundary_max

HERMITIAN_TOL = 1e-10
HERMITIAN_FAIL = 1e-6
IMAG_TOL = 1e-10
MOMENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class KernelField:
    """R~(x, y) = sum_j w_j psi_j(x + hbar y/2) conj(psi_j(x - hbar y/2)) on an (x, y) grid."""

    values: np.ndarray
    phase: PhaseGrid
    hbar: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.phase.shape:
            raise InvalidParameterError(f"kernel shape {v.shape} does not match grid {self.phase.shape}")
        object.__setattr__(self, "values", v)

    def hermitian_defect(self):
        """max |R~(x,-y) - conj R~(x,y)| / max|R~|, skipping the unpaired y-Nyquist column."""
        v = self.values
        flipped = v[:, :0:-1]
        scale = max(float(np.max(np.abs(v))), 1e-300)
        return float(np.max(np.abs(flipped - np.conj(v[:, 1:])))) / scale

    @property
    def diagonal(self):
        """R~(x, 0), the density."""
        return self.values[:, self.phase.ygrid.n // 2]

    def norm(self):
        """Discrete L2 norm over (x, y)."""
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2)) * self.phase.dx * self.phase.dy)


@dataclass(frozen=True, eq=False)
class WignerField:
    values: np.ndarray
    phase: PhaseGrid
    hbar: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.phase.shape:
            raise InvalidParameterError(f"field shape {v.shape} does not match grid {self.phase.shape}")
        object.__setattr__(self, "values", v)

    def mass(self):
        return float(np.sum(self.values)) * self.phase.dx * self.phase.dxi

    def l2_norm_sq(self):
        return float(np.sum(self.values ** 2)) * self.phase.dx * self.phase.dxi

    def metadata(self):
        p = self.phase
        return {"shape": list(self.values.shape), "x0": p.xgrid.origin, "dx": p.dx,
                "xi0": float(p.xi[0]), "dxi": p.dxi, "hbar": self.hbar}


@dataclass(frozen=True, eq=False)
class MomentFields:
    rho: np.ndarray
    current: np.ndarray
    energy: np.ndarray
    mass: float
    grid: SpatialGrid
    hbar: float
    rank: int = None          # None when the moments did not come from a known state

    @property
    def velocity(self):
        from .semiclassics import velocity_field
        return velocity_field(self)

    @property
    def current_sq(self):
        """|J|^2; ``current`` carries a leading component axis when d > 1."""
        J = self.current
        return J ** 2 if self.grid.dim == 1 else np.sum(J ** 2, axis=0)

    def cauchy_schwarz_defect(self):
        """2 m rho E - m^2 |J|^2, i.e. rho^2 times the local momentum variance."""
        return 2 * self.mass * self.rho * self.energy - self.mass ** 2 * self.current_sq


def shifted_samples(psi, grid: SpatialGrid, shifts):
    """Band-limited interpolation psi(x_i + s) for every shift s.

    Returns an array of shape (n, len(shifts)).  The Nyquist coefficient is
    shifted with cos(k_N s), the symmetric choice that keeps real data real.
    """
    n = grid.n
    k = wavenumbers(grid)
    c = np.fft.fft(psi)
    s = np.asarray(shifts, dtype=float)
    ph = np.exp(1j * np.outer(s, k))
    ph[:, n // 2] = np.cos(k[n // 2] * s)
    return np.fft.ifft(ph * c[None, :], axis=1).T


def default_phase_grid(state_or_grid, hbar=None, ny=None, dy=None):
    if isinstance(state_or_grid, QuantumState):
        g, hbar = state_or_grid.grid, state_or_grid.hbar
    else:
        g = state_or_grid
    return PhaseGrid.for_hbar(g, hbar, ny=ny, dy=dy)


def _check_half_band(state, tol=1e-12):
    """Products psi(X) conj(psi(Y)) double the x-bandwidth; warn when that aliases."""
    g = state.grid
    k = np.abs(wavenumbers(g))
    power = sum(w * np.abs(np.fft.fft(v.samples)) ** 2 for w, v in zip(state.weights, state.waves))
    outside = float(power[k > 0.5 * k.max()].sum()) / float(power.sum())
    if outside > tol:
        warnings.warn(f"a fraction {outside:.1e} of the spectral weight lies in the upper half band; "
                      "kernel x-derivatives will alias", ResolutionWarning, stacklevel=3)
    return outside


def kernel_from_state(state: QuantumState, phase: PhaseGrid = None) -> KernelField:
    if state.dim != 1:
        raise InvalidParameterError("kernel_from_state is implemented for d=1")
    phase = phase or default_phase_grid(state)
    if phase.xgrid != state.grid:
        raise InvalidParameterError("phase grid x axis differs from the state grid")
    hbar = state.hbar
    half = 0.5 * hbar * phase.y
    reach = 0.5 * hbar * float(np.max(np.abs(phase.y)))
    if reach > 0.5 * phase.xgrid.length:
        edge = max(_boundary_max(v.samples, state.grid) for v in state.waves)
        if edge > DECAY_THRESHOLD:
            raise ResolutionError("hbar*max|y|/2 exceeds the half box and the state reaches the boundary")
    _check_half_band(state)
    R = np.zeros(phase.shape, dtype=complex)
    for w, psi in zip(state.weights, state.waves):
        if w == 0:
            continue
        plus = shifted_samples(psi.samples, state.grid, half)
        minus = shifted_samples(psi.samples, state.grid, -half)
        R += w * plus * np.conj(minus)
    k = KernelField(R, phase, hbar)
    scale = float(np.max(np.abs(R)))
    edge = max(float(np.max(np.abs(R[:, 0]))), float(np.max(np.abs(R[:, -1]))))
    if edge > 1e-10 * scale:
        warnings.warn(f"kernel does not decay at the y-edge (ratio {edge / scale:.2e}); "
                      "enlarge the box or the y range", BoundaryDecayWarning, stacklevel=2)
    return k


def cross_kernel(a, b, grid: SpatialGrid, phase: PhaseGrid, hbar):
    """a(x + hbar y/2) conj(b(x - hbar y/2)) for two sampled functions."""
    half = 0.5 * hbar * phase.y
    return shifted_samples(a, grid, half) * np.conj(shifted_samples(b, grid, -half))


def wigner_from_kernel(k: KernelField) -> WignerField:
    """W = (2 pi)^-1 * int R~(x,y) exp(-i xi y) dy on the dual momentum grid."""
    defect = k.hermitian_defect()
    if defect > HERMITIAN_FAIL:
        raise InconsistencyError(f"kernel violates Hermitian symmetry (defect {defect:.2e})")
    W = k.phase.xigrid.forward(k.values, axis=1) / (2 * np.pi)
    scale = max(float(np.max(np.abs(W.real))), 1e-300)
    imag = float(np.max(np.abs(W.imag)))
    if imag > max(IMAG_TOL, 10 * defect) * scale:
        raise InconsistencyError(f"Wigner transform has imaginary residue {imag / scale:.2e}")
    return WignerField(W.real, k.phase, k.hbar)


def kernel_from_wigner(w: WignerField) -> KernelField:
    R = 2 * np.pi * w.phase.xigrid.inverse(w.values.astype(complex), axis=1)
    return KernelField(R, w.phase, w.hbar)


def wigner_from_state(state: QuantumState, phase: PhaseGrid = None) -> WignerField:
    return wigner_from_kernel(kernel_from_state(state, phase))


def wigner_direct(state: QuantumState, x_nodes, xi_values, dy=None, ny=None):
    """Brute-force W at arbitrary (x, xi) from the defining y-integral.

    The kernel is sampled by evaluating the band-limited interpolant of each
    wave function at x +- hbar y/2, then summed against exp(-i xi y).  The
    default y extent matches :func:`default_phase_grid`; a longer one lets
    x +- hbar y/2 reach the periodic image of the state.
    """
    g, hbar = state.grid, state.hbar
    ny = ny or g.n
    dy = dy or g.spacing / hbar
    y = (np.arange(ny) - ny // 2) * dy
    x_nodes = np.asarray(x_nodes, dtype=float)
    R = np.zeros((x_nodes.size, ny), dtype=complex)
    k = wavenumbers(g)
    for w, psi in zip(state.weights, state.waves):
        c = np.fft.fft(psi.samples) / g.n
        def interp(pts):
            ph = np.exp(1j * np.outer(pts - g.origin, k))
            ph[:, g.n // 2] = np.cos(k[g.n // 2] * (pts - g.origin))
            return ph @ c
        for i, x0 in enumerate(x_nodes):
            R[i] += w * interp(x0 + 0.5 * hbar * y) * np.conj(interp(x0 - 0.5 * hbar * y))
    return kernels.direct_wigner(np.ascontiguousarray(R), y, np.asarray(xi_values, dtype=float), dy)


def moments(w: WignerField, mass=1.0, check=True, tol=MOMENT_TOL) -> MomentFields:
    """rho, J, E by xi-quadrature, cross-checked against y-derivatives of R~ at y = 0."""
    if not mass > 0:
        raise InvalidParameterError("mass must be positive")
    xi, dxi = w.phase.xi, w.phase.dxi
    W = w.values
    rho = W.sum(axis=1) * dxi
    J = (W * xi).sum(axis=1) * dxi / mass
    E = (W * xi ** 2).sum(axis=1) * dxi / (2 * mass)
    if check:
        r2, j2, e2 = _moments_from_kernel(kernel_from_wigner(w), mass)
        for name, a, b in (("density", rho, r2), ("current", J, j2), ("energy", E, e2)):
            scale = max(float(np.max(np.abs(a))), 1.0)
            gap = float(np.max(np.abs(a - b)))
            if gap > tol * scale:
                raise InconsistencyError(f"{name}: xi-quadrature and y-derivative routes differ by {gap:.2e}")
    return MomentFields(rho, J, E, mass, w.phase.xgrid, w.hbar)


def _moments_from_kernel(k: KernelField, mass):
    yg = k.phase.ygrid
    j0 = yg.n // 2
    R = k.values
    rho = R[:, j0].real
    dR = spectral_derivative(R, yg, 1, axis=1)[:, j0]
    d2R = spectral_derivative(R, yg, 2, axis=1)[:, j0]
    return rho, (-1j * dR).real / mass, (-d2R).real / (2 * mass)


def moments_from_kernel(k: KernelField, mass=1.0) -> MomentFields:
    rho, J, E = _moments_from_kernel(k, mass)
    return MomentFields(rho, J, E, mass, k.phase.xgrid, k.hbar)


def rho_hat(state: QuantumState):
    """sum_j w_j |F psi_j|^2 on the wavenumber grid dual to x.

    Returns ``(frequencies, values)``; frequencies are 1-D (shared by all
    axes), values have the grid shape in centred order.  The transform is
    int psi(x) exp(-i Xi x) dx, so the values integrate to (2 pi)^d.
    """
    g = state.grid
    axes = tuple(range(g.dim))
    out = np.zeros(g.shape)
    for w, psi in zip(state.weights, state.waves):
        f = np.fft.fftshift(np.fft.fftn(psi.samples, axes=axes), axes=axes) * g.cell
        out += w * np.abs(f) ** 2
    freqs = 2 * np.pi / g.length * np.arange(-(g.n // 2), g.n - g.n // 2)
    return freqs, out


def l2_identity_check(state: QuantumState, phase: PhaseGrid = None):
    """Compare ||W||^2 with (2 pi hbar)^-d tr(R^2).  Returns (lhs, rhs, relative gap)."""
    w = wigner_from_state(state, phase)
    lhs = w.l2_norm_sq()
    rhs = float(np.sum(state.weights ** 2)) / (2 * np.pi * state.hbar) ** state.dim
    return lhs, rhs, abs(lhs - rhs) / rhs


def purity_double_sum(state: QuantumState):
    """tr(R^2) as sum_jk w_j w_k |<psi_j, psi_k>|^2 (no orthogonality assumed)."""
    S = state.samples.reshape(len(state.waves), -1)
    G = (S.conj() @ S.T) * state.grid.cell
    w = state.weights
    return float(np.real(w @ (np.abs(G) ** 2) @ w))


def tightness_and_oscillation(family, radii, tol=1e-6):
    """Spatial and momentum tail masses per hbar.

    ``family`` is an iterable of states (one per hbar).  The momentum tail at
    radius R is int_{|xi|>R} hbar^-d rho-hat(xi/hbar) dxi, i.e. the rho-hat mass
    beyond wavenumber R/hbar.  A family is flagged when some tail at the
    largest radius exceeds ``tol`` times the total mass of that measure.
    """
    radii = np.asarray(radii, dtype=float)
    rows = []
    for st in family:
        g = st.grid
        coords = g.mesh()
        r = np.sqrt(sum(c ** 2 for c in coords))
        rho = st.density
        freqs, rh = rho_hat(st)
        K = np.meshgrid(*([freqs] * g.dim), indexing="ij")
        kr = np.sqrt(sum(c ** 2 for c in K))
        dk = (2 * np.pi / g.length) ** g.dim
        spatial = np.array([float(rho[r > R].sum()) * g.cell for R in radii])
        momentum = np.array([float(rh[kr > R / st.hbar].sum()) * dk for R in radii])
        rows.append({"hbar": st.hbar, "spatial_tail": spatial, "momentum_tail": momentum})
    mom_total = (2 * np.pi) ** (family[0].dim if rows else 1)
    flags = {
        "spatial_tight": all(row["spatial_tail"][-1] <= tol for row in rows),
        "momentum_tight": all(row["momentum_tail"][-1] <= tol * mom_total for row in rows),
    }
    return {"radii": radii, "rows": rows, **flags}
