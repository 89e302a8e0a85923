"""Time evolution: split-step Schrodinger, von Neumann by conjugation, and
Wigner transport with the exact potential phase in y-space."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, MetadataError, StabilityError
from .grid import PhaseGrid, wavenumbers
from .states import Potential, QuantumState, WaveFunction
from .wigner import KernelField, WignerField, kernel_from_wigner, wigner_from_kernel

BACKENDS = ("schrodinger", "von_neumann", "wigner")
MAX_PHASE = np.pi / 4          # at least 8 samples per period
SUPPORT_TOL = 1e-14


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_final: float
    backend: str = "schrodinger"
    mass: float = 1.0
    record_stride: int = 1
    check_stability: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if not self.t_final >= self.dt * (1 - 1e-12):
            raise InvalidParameterError("t_final must be at least dt")
        if self.backend not in BACKENDS:
            raise InvalidParameterError(f"backend must be one of {BACKENDS}")
        if not self.mass > 0:
            raise InvalidParameterError("mass must be positive")
        if int(self.record_stride) < 1:
            raise InvalidParameterError("record_stride must be >= 1")
        r = self.t_final / self.dt
        if abs(r - round(r)) > 1e-8 * max(1.0, r):
            raise InvalidParameterError("t_final must be an integer multiple of dt")

    @property
    def nsteps(self):
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    frames: list = field(default_factory=list)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) != len(self.frames):
            raise InvalidParameterError("one frame per time required")
        if t.size > 1:
            d = np.diff(t)
            if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(t[-1])):
                raise InvalidParameterError("recorded times must be strictly increasing and uniform")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(zip(self.times, self.frames))


# --- stability -------------------------------------------------------------

def _support_mask(weights):
    return weights > SUPPORT_TOL * float(np.max(weights))


def effective_wavenumber(samples, grid):
    """Largest |k| carrying non-negligible spectral weight."""
    k = wavenumbers(grid)
    power = np.abs(np.fft.fft(np.atleast_2d(samples), axis=-1)) ** 2
    power = power.max(axis=0)
    return float(np.max(np.abs(k[_support_mask(power)])))


def potential_range(V: Potential, x, density):
    """Oscillation of V over the points where the density is non-negligible."""
    v = V(x)[_support_mask(density)]
    return float(v.max() - v.min())


def check_schrodinger_dt(psi_samples, grid, V, dt, mass, hbar):
    """Raise StabilityError when a step advances a resolved phase by more than pi/4.

    Only the spectral band and the spatial support actually occupied by the
    state enter; a constant offset of V is a global phase and is ignored.
    """
    samples = np.atleast_2d(psi_samples)
    kmax = effective_wavenumber(samples, grid)
    dens = (np.abs(samples) ** 2).max(axis=0)
    vr = potential_range(V, grid.nodes, dens)
    kin = dt * hbar * kmax ** 2 / (2 * mass)
    pot = dt * vr / hbar
    worst = max(kin, pot)
    if worst > MAX_PHASE:
        limits = [MAX_PHASE * 2 * mass / (hbar * kmax ** 2) if kmax > 0 else np.inf,
                  MAX_PHASE * hbar / vr if vr > 0 else np.inf]
        sug = 0.9 * min(limits)
        raise StabilityError(f"dt={dt:g} advances phases by {worst:.3f} rad per step "
                             f"(kinetic {kin:.3f}, potential {pot:.3f}); try dt <= {sug:.3g}", sug)


def check_wigner_dt(w: WignerField, V: Potential, dt, mass):
    p = w.phase
    W = w.values
    kx = wavenumbers(p.xgrid)
    power = np.abs(np.fft.fft(W, axis=0)).max(axis=1)
    kmax = float(np.max(np.abs(kx[_support_mask(power)])))
    marg = np.abs(W).max(axis=0)
    ximax = float(np.max(np.abs(p.xi[_support_mask(marg)])))
    R = np.abs(kernel_from_wigner(w).values)
    X, Y = p.x[:, None] + 0.5 * w.hbar * p.y[None, :], p.x[:, None] - 0.5 * w.hbar * p.y[None, :]
    dV = np.abs(V(X) - V(Y))[_support_mask(R)]
    transport = dt * kmax * ximax / mass
    pot = dt * float(dV.max()) / w.hbar if dV.size else 0.0
    worst = max(transport, pot)
    if worst > MAX_PHASE:
        sug = 0.9 * dt * MAX_PHASE / worst
        raise StabilityError(f"dt={dt:g} advances phases by {worst:.3f} rad per step "
                             f"(transport {transport:.3f}, potential {pot:.3f}); try dt <= {sug:.3g}", sug)


# --- Schrodinger -------------------------------------------------------------

class SplitStepPropagator:
    """Strang split-step: half kinetic, full potential phase, half kinetic."""

    def __init__(self, grid, V: Potential, dt, mass, hbar):
        if grid.dim != 1:
            raise InvalidParameterError("split-step propagation is implemented for d=1")
        k = wavenumbers(grid)
        self.kin = np.exp(-1j * dt * hbar * k ** 2 / (4 * mass))
        self.pot = np.exp(-1j * dt * V(grid.nodes) / hbar)

    def __call__(self, samples):
        f = np.fft.ifft(self.kin * np.fft.fft(samples, axis=-1), axis=-1)
        f = self.pot * f
        return np.fft.ifft(self.kin * np.fft.fft(f, axis=-1), axis=-1)


def schrodinger_step(psi: WaveFunction, V: Potential, dt, mass=1.0, check=True) -> WaveFunction:
    if check:
        check_schrodinger_dt(psi.samples, psi.grid, V, dt, mass, psi.hbar)
    prop = SplitStepPropagator(psi.grid, V, dt, mass, psi.hbar)
    return psi.with_samples(prop(psi.samples))


def _record_times(cfg, sign=1.0):
    n = cfg.nsteps
    stride = int(cfg.record_stride)
    steps = list(range(0, n + 1, stride))
    return steps, sign * cfg.dt * np.array(steps, dtype=float)


def schrodinger_evolve(psi: WaveFunction, V: Potential, cfg: EvolutionConfig, reverse=False) -> Trajectory:
    return _evolve_samples(np.atleast_2d(psi.samples), psi.grid, psi.hbar, V, cfg, reverse,
                           lambda s: psi.with_samples(s[0]))


def von_neumann_evolve(state: QuantumState, V: Potential, cfg: EvolutionConfig, reverse=False) -> Trajectory:
    """R(t) = U(t) R0 U(t)^*: each eigenfunction is propagated, weights are kept."""
    def make(s):
        return QuantumState(state.weights, tuple(v.with_samples(row) for v, row in zip(state.waves, s)),
                            state.hbar)
    return _evolve_samples(state.samples, state.grid, state.hbar, V, cfg, reverse, make)


def _evolve_samples(samples, grid, hbar, V, cfg, reverse, make):
    if cfg.check_stability:
        check_schrodinger_dt(samples, grid, V, cfg.dt, cfg.mass, hbar)
    sign = -1.0 if reverse else 1.0
    prop = SplitStepPropagator(grid, V, sign * cfg.dt, cfg.mass, hbar)
    steps, times = _record_times(cfg, sign)
    record = set(steps)
    frames = [make(samples)]
    cur = samples
    for n in range(1, cfg.nsteps + 1):
        cur = prop(cur)
        if n in record:
            frames.append(make(cur))
    if reverse:
        times, frames = times[::-1], frames[::-1]
    return Trajectory(times, frames)


# --- potential operator in phase space ------------------------------------

def delta_V(V: Potential, x, y, hbar):
    """(V(x + hbar y/2) - V(x - hbar y/2)) / (i hbar), broadcast over x and y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (V(x + 0.5 * hbar * y) - V(x - 0.5 * hbar * y)) / (1j * hbar)


def _delta_grid(V, phase: PhaseGrid, hbar):
    return delta_V(V, phase.x[:, None], phase.y[None, :], hbar)


def k_kernel(V: Potential, phase: PhaseGrid, hbar):
    """K(x, xi) = (2 pi)^-1 int delta[V](x, y) exp(-i xi y) dy on the discrete torus."""
    return phase.xigrid.forward(_delta_grid(V, phase, hbar), axis=1) / (2 * np.pi)


def theta_apply(w: WignerField, V: Potential) -> WignerField:
    """theta[V]W: multiply the y-space kernel by delta[V] and transform back."""
    k = kernel_from_wigner(w)
    prod = KernelField(_delta_grid(V, w.phase, w.hbar) * k.values, w.phase, w.hbar)
    out = w.phase.xigrid.forward(prod.values, axis=1) / (2 * np.pi)
    return WignerField(out.real, w.phase, w.hbar)


def theta_convolve(w: WignerField, K):
    """Circular xi-convolution  sum_l K(x, xi_k - xi_l) W(x, xi_l) dxi."""
    n = w.phase.xigrid.n
    Kc = np.fft.ifftshift(K, axes=1)        # index 0 <-> xi = 0
    W = w.values
    out = np.zeros(W.shape, dtype=complex)
    for kk in range(n):
        idx = (kk - np.arange(n)) % n
        out[:, kk] = (Kc[:, idx] * W).sum(axis=1)
    return (out * w.phase.dxi).real


class WignerPropagator:
    """Strang splitting for the Wigner equation.

    Half step of free transport as an exact Fourier shift in x, full step of
    the potential as the y-space phase exp(-i dt (V(x+hy/2) - V(x-hy/2))/h),
    half step of transport.
    """

    def __init__(self, phase: PhaseGrid, V: Potential, dt, mass, hbar):
        kx = wavenumbers(phase.xgrid)
        arg = np.outer(kx, phase.xi) * (0.5 * dt / mass)
        self.shift = np.exp(-1j * arg)
        nyq = phase.xgrid.n // 2
        self.shift[nyq] = np.cos(arg[nyq])
        X = phase.x[:, None] + 0.5 * hbar * phase.y[None, :]
        Y = phase.x[:, None] - 0.5 * hbar * phase.y[None, :]
        self.pot = np.exp(-1j * dt * (V(X) - V(Y)) / hbar)
        self.phase = phase
        self.hbar = hbar

    def transport(self, W):
        return np.fft.ifft(self.shift * np.fft.fft(W, axis=0), axis=0).real

    def __call__(self, W):
        W = self.transport(W)
        xg = self.phase.xigrid
        R = 2 * np.pi * xg.inverse(W.astype(complex), axis=1)
        W = (xg.forward(self.pot * R, axis=1) / (2 * np.pi)).real
        return self.transport(W)


def wigner_evolve(w0: WignerField, V: Potential, cfg: EvolutionConfig, reverse=False) -> Trajectory:
    if cfg.check_stability:
        check_wigner_dt(w0, V, cfg.dt, cfg.mass)
    sign = -1.0 if reverse else 1.0
    prop = WignerPropagator(w0.phase, V, sign * cfg.dt, cfg.mass, w0.hbar)
    steps, times = _record_times(cfg, sign)
    record = set(steps)
    frames = [w0]
    W = w0.values
    for n in range(1, cfg.nsteps + 1):
        W = prop(W)
        if n in record:
            frames.append(WignerField(W, w0.phase, w0.hbar))
    if reverse:
        times, frames = times[::-1], frames[::-1]
    return Trajectory(times, frames)


def evolve(initial, V: Potential, cfg: EvolutionConfig):
    """Dispatch on ``cfg.backend``."""
    if cfg.backend == "wigner":
        if not isinstance(initial, WignerField):
            raise InvalidParameterError("the wigner backend needs a WignerField")
        return wigner_evolve(initial, V, cfg)
    if cfg.backend == "von_neumann":
        if isinstance(initial, WaveFunction):
            initial = QuantumState.pure(initial)
        return von_neumann_evolve(initial, V, cfg)
    if isinstance(initial, QuantumState):
        if initial.rank != 1 or len(initial.waves) != 1:
            raise InvalidParameterError("the schrodinger backend needs a pure state")
        initial = initial.waves[0]
    return schrodinger_evolve(initial, V, cfg)


def l_symbol(V: Potential, phase: PhaseGrid, hbar):
    """y-space symbol of L[V]:  i delta[V](x,y)/y, with the y -> 0 limit V'(x)."""
    y = phase.y
    d = _delta_grid(V, phase, hbar)
    out = np.empty(d.shape, dtype=complex)
    nz = y != 0
    out[:, nz] = 1j * d[:, nz] / y[nz]
    out[:, ~nz] = V.derivative(phase.x)[:, None]
    return out


def l_kernel_check(V: Potential, phase: PhaseGrid, hbar, lipschitz=None):
    """Check |symbol of L[V]| <= Lip(V) and d/dxi L[V] = K[V] on the grid.

    Returns a dict with the sampled symbol bound, the divergence residual
    (relative to max|K|) and the declared constant.  A declared constant
    below the sampled bound raises MetadataError.
    """
    lip = V.lipschitz if lipschitz is None else lipschitz
    if lip is None:
        raise InvalidParameterError("a Lipschitz constant must be declared")
    ell = l_symbol(V, phase, hbar)
    bound = float(np.max(np.abs(ell)))
    if bound > lip * (1 + 1e-9) + 1e-12:
        raise MetadataError(f"declared Lipschitz constant {lip:g} is below the sampled symbol bound {bound:g}")
    xg = phase.xigrid
    L = xg.forward(ell, axis=1) / (2 * np.pi)
    # spectral xi-derivative: multiply the y-space coefficients by -i y,
    # recovered from L by the inverse transform; y-Nyquist column dropped
    yco = xg.inverse(L, axis=1) * 2 * np.pi
    mult = -1j * phase.y
    mult[0] = 0.0
    dL = xg.forward(yco * mult[None, :], axis=1) / (2 * np.pi)
    dtrunc = _delta_grid(V, phase, hbar)
    dtrunc[:, 0] = 0.0
    K = xg.forward(dtrunc, axis=1) / (2 * np.pi)
    scale = max(float(np.max(np.abs(K))), 1e-300)
    resid = float(np.max(np.abs(dL - K))) / scale
    return {"symbol_bound": bound, "lipschitz": float(lip), "divergence_residual": resid}
