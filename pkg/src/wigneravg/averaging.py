"""Velocity averages, discrete H^s norms and the averaging-lemma diagnostics."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import tukey

from .errors import (DecompositionError, HypothesisViolationError, InvalidParameterError,
                     InvalidSweepError, ResolutionError)
from .evolution import Trajectory
from .grid import SpatialGrid, spectral_derivative, wavenumbers
from .states import QuantumState
from .wigner import KernelField, WignerField, wigner_from_state

TAPER_FRACTION = 0.1          # cosine roll-off per side, per axis
BOUNDED_SLOPE = -0.05
GROWTH_SLOPE = -0.2
MAX_SPREAD = 3.0


def gaussian_cutoff(xi):
    return np.exp(-0.5 * np.asarray(xi) ** 2)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    values: np.ndarray            # (nt, nx)
    times: np.ndarray
    xgrid: SpatialGrid
    untruncated: bool = False

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values))
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        if v.shape[0] != t.size or v.shape[1] != self.xgrid.n:
            raise InvalidParameterError("values must have shape (len(times), nx)")
        if t.size > 1:
            d = np.diff(t)
            if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(t[-1])):
                raise InvalidParameterError("space-time fields need uniform, increasing times")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    def shifted(self, shift_cells):
        return SpaceTimeField(np.roll(self.values, shift_cells, axis=1), self.times, self.xgrid,
                              self.untruncated)


def _frames_as_wigner(obj):
    if isinstance(obj, WignerField):
        return np.array([0.0]), [obj]
    if isinstance(obj, QuantumState):
        return np.array([0.0]), [wigner_from_state(obj)]
    if isinstance(obj, Trajectory):
        frames = []
        for f in obj.frames:
            if isinstance(f, WignerField):
                frames.append(f)
            elif isinstance(f, QuantumState):
                frames.append(wigner_from_state(f))
            else:  # WaveFunction
                frames.append(wigner_from_state(QuantumState.pure(f)))
        return obj.times, frames
    raise InvalidParameterError(f"cannot take a velocity average of {type(obj).__name__}")


def velocity_average(obj, cutoff=gaussian_cutoff) -> SpaceTimeField:
    """rho_psi(t, x) = int W(t, x, xi) psi(xi) dxi.

    ``cutoff=None`` or a constant 1 gives the untruncated density (flagged on
    the result).  Non-constant cutoffs must decay at the edges of the xi grid.
    """
    times, frames = _frames_as_wigner(obj)
    phase = frames[0].phase
    xi = phase.xi
    if cutoff is None:
        weights = np.ones_like(xi)
    else:
        weights = np.broadcast_to(np.asarray(cutoff(xi), dtype=float), xi.shape)
    untruncated = bool(np.all(weights == 1.0))
    if not untruncated:
        top = float(np.max(np.abs(weights)))
        if top == 0:
            raise ResolutionError("cutoff vanishes on the momentum grid")
        if np.max(np.abs(np.diff(weights))) > 0.25 * top:
            raise ResolutionError("cutoff varies faster than the momentum grid resolves")
    # the weighted integrand has to decay before the edge of the xi grid
    marg = np.max([np.abs(f.values).max(axis=0) for f in frames], axis=0) * np.abs(weights)
    if max(marg[0], marg[-1]) > 1e-8 * max(float(marg.max()), 1e-300):
        raise ResolutionError("the averaged integrand does not decay inside the momentum grid")
    vals = np.array([(f.values * weights).sum(axis=1) * phase.dxi for f in frames])
    return SpaceTimeField(vals, times, phase.xgrid, untruncated)


def _taper(n, fraction=TAPER_FRACTION):
    if n < 3 or fraction <= 0:
        return np.ones(n)
    return tukey(n, alpha=2 * fraction)


def hs_norm(f: SpaceTimeField, s, taper=TAPER_FRACTION):
    """Discrete H^s norm over space-time frequencies (tau, kappa) of the tapered field.

    norm^2 = sum (1 + tau^2 + kappa^2)^s |F(f w)|^2 * (dt dx)/(nt nx), which at
    s = 0 is the discrete L2 norm of the tapered field.  A single-time field
    is treated as a function of x only.
    """
    if not 0 <= s <= 1:
        raise InvalidParameterError("order s must lie in [0, 1]")
    v = f.values
    nt, nx = v.shape
    dx = f.xgrid.spacing
    win = np.outer(_taper(nt, taper) if nt > 1 else np.ones(1), _taper(nx, taper))
    kap = wavenumbers(f.xgrid)
    if nt > 1:
        tau = 2 * np.pi * np.fft.fftfreq(nt, f.dt)
        cell = f.dt * dx
    else:
        tau = np.zeros(1)
        cell = dx
    F = np.fft.fft2(v * win)
    weight = (1.0 + tau[:, None] ** 2 + kap[None, :] ** 2) ** s
    return math.sqrt(float(np.sum(weight * np.abs(F) ** 2)) * cell / (nt * nx))


def fit_loglog(h, values):
    """Least-squares slope of log(values) against log(h); returns (slope, intercept, rms residual)."""
    lh = np.log(np.asarray(h, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    A = np.vstack([lh, np.ones_like(lh)]).T
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def check_geometric(hbars, min_points=2, rtol=1e-6):
    h = np.asarray(hbars, dtype=float)
    if h.size < min_points:
        raise InvalidSweepError(f"need at least {min_points} hbar values, got {h.size}")
    if np.any(h <= 0):
        raise InvalidSweepError("hbar values must be positive")
    if h.size > 1:
        r = h[1:] / h[:-1]
        if np.any(np.abs(r - r[0]) > rtol * abs(r[0])) or abs(r[0] - 1) < 1e-12:
            raise InvalidSweepError("hbar values must form a geometric sequence")
    return h


@dataclass
class SobolevReport:
    s: float
    beta: float
    per_hbar: list                  # [(hbar, norm, weighted_norm), ...]
    fitted_exponent: float
    fit_residual: float
    spread: float
    passed: bool
    growth: bool
    purities: list = field(default_factory=list)

    @property
    def norms(self):
        return [r[1] for r in self.per_hbar]

    def rows(self):
        out = [(h, self.s, self.beta, wn, self.fitted_exponent, self.passed)
               for h, _, wn in self.per_hbar]
        out.append(("summary", self.s, self.beta, self.spread, self.fitted_exponent, self.passed))
        return out


CSV_HEADER = ("hbar", "s", "beta", "weighted_norm", "slope", "pass")


def _purity_of(obj):
    if isinstance(obj, Trajectory):
        obj = obj.frames[0]
    if isinstance(obj, QuantumState):
        return float(np.sum(obj.weights ** 2)), obj.hbar, obj.dim
    if isinstance(obj, WignerField):
        # L2 identity: tr(R^2) = 2 pi hbar ||W||^2
        return 2 * np.pi * obj.hbar * obj.l2_norm_sq(), obj.hbar, 1
    return None, None, 1


def check_uniform_bound(family, s=0.25, beta=0.0, cutoff=gaussian_cutoff, C=1.0,
                        enforce_hypothesis=True, min_points=4):
    """Uniform-in-hbar bound on hbar^beta ||rho_psi||_{H^s} along a family.

    ``family`` is a list of ``(hbar, trajectory)`` pairs.  PASS requires the
    fitted log-log slope to be >= -0.05 and max/min of the weighted norms
    <= 3; ``growth`` is set when the slope is <= -0.2.  With
    ``enforce_hypothesis`` each member must satisfy tr(R^2) <= C^2 (2 pi hbar)^d.
    """
    hbars = check_geometric([h for h, _ in family], min_points=min_points)
    rows, purities = [], []
    for (h, traj) in family:
        pur, _, d = _purity_of(traj)
        purities.append(pur)
        if enforce_hypothesis and pur is not None and pur > C * C * (2 * np.pi * h) ** d * (1 + 1e-9):
            raise HypothesisViolationError(
                f"hbar={h:g}: tr(R^2)={pur:.4g} exceeds C^2 (2 pi hbar)^d = {C * C * (2 * np.pi * h) ** d:.4g}")
        field_ = traj if isinstance(traj, SpaceTimeField) else velocity_average(traj, cutoff)
        nrm = hs_norm(field_, s)
        rows.append((float(h), nrm, h ** beta * nrm))
    weighted = [r[2] for r in rows]
    slope, _, resid = fit_loglog(hbars, weighted)
    spread = max(weighted) / min(weighted)
    passed = slope >= BOUNDED_SLOPE and spread <= MAX_SPREAD
    return SobolevReport(s, beta, rows, slope, resid, spread, passed, slope <= GROWTH_SLOPE, purities)


# --- static one-dimensional density estimate ----------------------------------

def gamma_k(k):
    """2^k k! / ((2k+1) sqrt(2 pi)) = int_0^inf Y^(2k+1)/(2k+1) G(Y) dY, G the unit Gaussian."""
    return 2.0 ** k * math.factorial(k) / ((2 * k + 1) * math.sqrt(2 * np.pi))


def equilibrated_eps(xi, n):
    """eps^(2n+2) = 1/|xi|^2 for |xi| >= 1, eps = 1/|xi| below."""
    a = np.abs(np.asarray(xi, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(a >= 1, a ** (-1.0 / (n + 1)), 1.0 / np.where(a > 0, a, np.inf))


def _half_line_norms(b, ygrid: SpatialGrid, parity):
    """||b(z) - parity*b(-z)||^2 over z >= 0 (trapezoid weight 1/2 at z = 0)."""
    ny = ygrid.n
    c = ny // 2
    m = np.arange(c)
    plus = b[..., c + m]
    minus = b[..., c - m]
    beta = plus - parity * minus
    w = np.ones(c)
    w[0] = 0.5
    return (np.abs(beta) ** 2 * w).sum(axis=-1) * ygrid.spacing


@dataclass
class MollifierReport:
    xi: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    worst: float
    holds: bool


def mollifier_machinery(f, sources, xi, ygrid: SpatialGrid, n):
    """Both sides of the per-frequency mollifier estimate.

    f: array (nxi, ny) sampled on ``ygrid``; sources: array (n+1, nxi, ny) of
    b_k with  xi * d_y f = sum_k b_k y^k.  For every xi != 0 it evaluates
        |f(xi,0)|^2/(n+2)  against
        eps/(2 sqrt(pi)) ||f(xi,.)||^2 + sum_k gamma_k eps^-(2k+1) |xi|^-2 ||beta_k||^2_{L2(0,inf)}
    with beta_k(z) = b_k(z) - (-1)^k b_k(-z) and the equilibrated eps.
    """
    f = np.atleast_2d(np.asarray(f))
    b = np.asarray(sources)
    if b.ndim == 2:
        b = b[None]
    if b.shape[0] != n + 1 or b.shape[1:] != f.shape:
        raise InvalidParameterError("sources must have shape (n+1, nxi, ny)")
    xi = np.asarray(xi, dtype=float)
    nz = xi != 0
    c = ygrid.n // 2
    lhs = np.abs(f[:, c]) ** 2 / (n + 2)
    eps = equilibrated_eps(xi, n)
    rhs = eps / (2 * math.sqrt(np.pi)) * (np.abs(f) ** 2).sum(axis=1) * ygrid.spacing
    for k in range(n + 1):
        nb = _half_line_norms(b[k], ygrid, (-1) ** k)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = rhs + np.where(nz, gamma_k(k) * eps ** (-(2 * k + 1)) * nb / np.where(nz, xi, 1) ** 2, 0.0)
    ratio = np.zeros_like(lhs)
    pos = nz & (rhs > 0)
    ratio[pos] = lhs[pos] / rhs[pos]
    ratio[nz & (rhs == 0) & (lhs > 0)] = np.inf
    worst = float(ratio[nz].max()) if np.any(nz) else 0.0
    return MollifierReport(xi, lhs, rhs, ratio, worst, worst <= 1.0)


def decomposition_residual(k: KernelField, sources):
    """Relative L2 mismatch of  d_y(-i d_x) R~  and  sum_k u_k y^k."""
    p = k.phase
    lhs = -1j * spectral_derivative(spectral_derivative(k.values, p.xgrid, 1, axis=0), p.ygrid, 1, axis=1)
    rhs = sum(u * p.y[None, :] ** j for j, u in enumerate(sources))
    scale = max(float(np.linalg.norm(lhs)), 1e-300)
    return float(np.linalg.norm(lhs - rhs)) / scale


def _l2(a, p):
    return float(np.sum(np.abs(a) ** 2)) * p.dx * p.dy


def sobolev_norm_1d(rho, xgrid: SpatialGrid, s):
    """(1/2pi) int (1+xi^2)^s |rho^(xi)|^2 dxi, square-rooted, with rho^ = dx * DFT."""
    k = wavenumbers(xgrid)
    rh = np.fft.fft(rho) * xgrid.spacing
    dk = 2 * np.pi / xgrid.length
    return math.sqrt(float(np.sum((1 + k ** 2) ** s * np.abs(rh) ** 2)) * dk / (2 * np.pi))


@dataclass
class DensityBoundReport:
    n: int
    s: float
    lhs: float
    rhs_impl: float
    rhs_trace_form: float
    empirical_constant: float
    decomposition_residual: float
    passed: bool


def density_sobolev_1d(k: KernelField, sources, tol=1e-6):
    """H^(1/(2(n+1))) bound on rho = R~(x,0) from the source decomposition.

    ``sources`` = [u_0, ..., u_n] on the (x, y) grid with
    d_y(-i d_x) R~ = sum u_k y^k (checked to ``tol``).  The implemented
    constant follows the mollifier estimate: low frequencies |xi| < 1 use
    |rho^| <= tr R, high ones the equilibrated eps, giving
        ||rho||^2 <= 2^s [ (tr R)^2/pi + (n+2)(||R~||^2/(2 sqrt pi) + 2 sum gamma_k ||u_k||^2) ].
    The trace-form right side tr R + ||R~|| sum ||b_k||^2 (b_k the
    x-transforms of u_k) is reported together with the empirical constant.
    """
    n = len(sources) - 1
    if n < 0:
        raise InvalidParameterError("need at least one source term")
    res = decomposition_residual(k, sources)
    if res > tol:
        raise DecompositionError(f"source decomposition residual {res:.2e} exceeds {tol:.0e}")
    p = k.phase
    s = 1.0 / (2 * (n + 1))
    rho = k.diagonal.real
    lhs = sobolev_norm_1d(rho, p.xgrid, s)
    trR = float(np.sum(rho)) * p.dx
    Rn2 = _l2(k.values, p)
    un2 = [_l2(u, p) for u in sources]
    rhs_sq = 2 ** s * (trR ** 2 / np.pi + (n + 2) * (Rn2 / (2 * math.sqrt(np.pi))
                                                     + 2 * sum(gamma_k(j) * un2[j] for j in range(n + 1))))
    rhs_impl = math.sqrt(rhs_sq)
    bn2 = [2 * np.pi * v for v in un2]       # Plancherel in x
    rhs_thm = trR + math.sqrt(Rn2) * sum(bn2)
    return DensityBoundReport(n, s, lhs, rhs_impl, rhs_thm, lhs / rhs_thm, res, lhs <= rhs_impl)


def homogeneous_half_bound(k: KernelField):
    """(||rho||_{dot H^1/2}, ||R~||^(1/2) ||d_x d_y R~||^(1/2)) for rho = R~(x,0)."""
    p = k.phase
    rho = k.diagonal.real
    kx = wavenumbers(p.xgrid)
    rh = np.fft.fft(rho) * p.dx
    dk = 2 * np.pi / p.xgrid.length
    lhs = math.sqrt(float(np.sum(np.abs(kx) * np.abs(rh) ** 2)) * dk / (2 * np.pi))
    dxy = spectral_derivative(spectral_derivative(k.values, p.xgrid, 1, axis=0), p.ygrid, 1, axis=1)
    rhs = math.sqrt(math.sqrt(_l2(k.values, p)) * math.sqrt(_l2(dxy, p)))
    return lhs, rhs


def _hamiltonian_apply(psi, V, mass):
    g = psi.grid
    lap = spectral_derivative(psi.samples, g, 2)
    return -(psi.hbar ** 2) / (2 * mass) * lap + V(g.nodes) * psi.samples


def kernel_time_derivative(state: QuantumState, V, mass=1.0, phase=None):
    """d_t R~ at the current instant from psi_t = -(i/hbar) H psi, without time stepping."""
    from .wigner import cross_kernel, default_phase_grid
    phase = phase or default_phase_grid(state)
    out = np.zeros(phase.shape, dtype=complex)
    for w, psi in zip(state.weights, state.waves):
        dpsi = -1j / state.hbar * _hamiltonian_apply(psi, V, mass)
        out += w * (cross_kernel(dpsi, psi.samples, state.grid, phase, state.hbar)
                    + cross_kernel(psi.samples, dpsi, state.grid, phase, state.hbar))
    return out


def free_sources(state: QuantumState, mass=1.0, phase=None):
    """n = 0 decomposition for free motion: u_0 = -m d_t R~."""
    from .states import Potential
    return [-mass * kernel_time_derivative(state, Potential.zero(), mass, phase)]


def harmonic_sources(state: QuantumState, omega=1.0, mass=1.0, center=0.0, n=1, phase=None):
    """Decompositions for V = m omega^2 (x-c)^2/2.

    n = 1: u_0 = -m d_t R~, u_1 = m (delta[V]/y) R~ = -i m^2 omega^2 (x-c) R~.
    n = 2: the y-linear term regrouped as u_1 - y g plus y^2 g with
    g = d_y u_1 / 2 (delta[V] is odd in y, so no y^2 term arises naturally).
    """
    from .states import Potential
    from .wigner import default_phase_grid, kernel_from_state
    if n not in (1, 2):
        raise InvalidParameterError("harmonic decompositions are provided for n = 1 and n = 2")
    phase = phase or default_phase_grid(state)
    V = Potential.harmonic(omega, mass, center)
    R = kernel_from_state(state, phase).values
    u0 = -mass * kernel_time_derivative(state, V, mass, phase)
    u1 = -1j * mass ** 2 * omega ** 2 * (phase.x[:, None] - center) * R
    if n == 1:
        return [u0, u1]
    g = 0.5 * spectral_derivative(u1, phase.ygrid, 1, axis=1)
    return [u0, u1 - phase.y[None, :] * g, g]
