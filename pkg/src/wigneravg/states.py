"""Wave functions, finite-rank density operators and potentials."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (BoundaryDecayWarning, InvalidParameterError, InvalidStateError,
                     ResolutionError)
from .expr import Expression, parse
from .grid import SpatialGrid

NORM_TOL = 1e-10
ORTHO_TOL = 1e-8
DECAY_THRESHOLD = 1e-12


def _boundary_max(samples, grid):
    m = 0.0
    for ax in range(grid.dim):
        edge = np.take(samples, [0, grid.n - 1], axis=ax)
        m = max(m, float(np.max(np.abs(edge))))
    return m


def check_boundary_decay(samples, grid, threshold=DECAY_THRESHOLD, mode="warn"):
    """Warn (or raise, or ignore) when |psi| at the box edge exceeds threshold."""
    edge = _boundary_max(samples, grid)
    if edge > threshold and mode != "ignore":
        msg = f"state does not decay at the box edge: max|psi| there is {edge:.3e} > {threshold:.0e}"
        if mode == "error":
            raise ResolutionError(msg)
        warnings.warn(msg, BoundaryDecayWarning, stacklevel=3)
    return edge


@dataclass(frozen=True, eq=False)
class WaveFunction:
    samples: np.ndarray
    grid: SpatialGrid
    hbar: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != self.grid.shape:
            raise InvalidParameterError(f"samples have shape {s.shape}, grid expects {self.grid.shape}")
        if not self.hbar > 0:
            raise InvalidParameterError("hbar must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        nrm = self.norm()
        if abs(nrm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"wave function is not normalised: ||psi|| = {nrm!r}")

    def norm(self):
        return math.sqrt(float(np.sum(np.abs(self.samples) ** 2)) * self.grid.cell)

    @property
    def density(self):
        return np.abs(self.samples) ** 2

    def inner(self, other):
        return complex(np.vdot(self.samples, other.samples) * self.grid.cell)

    def with_samples(self, samples):
        return WaveFunction(samples, self.grid, self.hbar)


def normalized(samples, grid, hbar, decay="warn"):
    samples = np.asarray(samples, dtype=complex)
    nrm = math.sqrt(float(np.sum(np.abs(samples) ** 2)) * grid.cell)
    if not nrm > 0 or not np.isfinite(nrm):
        raise InvalidStateError("amplitude vanishes identically (or is not finite) on the grid")
    samples = samples / nrm
    check_boundary_decay(samples, grid, mode=decay)
    return WaveFunction(samples, grid, hbar)


def _vec(v, dim, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1 and dim > 1:
        v = np.repeat(v, dim)
    if v.size != dim:
        raise InvalidParameterError(f"{name} must have {dim} components")
    return v


def _coherent_samples(grid, q, p, hbar, shift=None):
    coords = grid.mesh()
    d = grid.dim
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for a in range(d):
        xa = coords[a] + (0.0 if shift is None else shift[a])
        r2 += (xa - q[a]) ** 2
        phase += p[a] * (xa - 0.5 * q[a])
    return (np.pi * hbar) ** (-d / 4) * np.exp(-r2 / (2 * hbar) + 1j * phase / hbar)


def coherent_state(grid: SpatialGrid, q, p, hbar, decay="warn", periodize=False, images=4):
    """Gaussian wave packet (pi hbar)^(-d/4) exp(-|x-q|^2/2hbar) exp(i p.(x-q/2)/hbar).

    With ``periodize=True`` the packet is summed over ``images`` periodic
    copies per side, which needs p*L/hbar to be a multiple of 2*pi; the result
    is a smooth periodic function that never vanishes on a small box.
    """
    if not hbar > 0:
        raise InvalidParameterError("hbar must be positive")
    q = _vec(q, grid.dim, "q")
    p = _vec(p, grid.dim, "p")
    if not periodize:
        margin = 6 * math.sqrt(hbar)
        lo, hi = grid.origin, grid.origin + grid.length
        if np.any(q - margin < lo) or np.any(q + margin > hi):
            msg = f"centre {q} needs a margin of {margin:.3g} inside the box [{lo:.3g}, {hi:.3g})"
            if decay == "error":
                raise ResolutionError(msg)
            if decay == "warn":
                warnings.warn(msg, BoundaryDecayWarning, stacklevel=2)
        return normalized(_coherent_samples(grid, q, p, hbar), grid, hbar, decay)
    turns = p * grid.length / (2 * np.pi * hbar)
    if np.any(np.abs(turns - np.round(turns)) > 1e-9):
        raise InvalidParameterError("periodized coherent state needs p*L/hbar in 2*pi*Z")
    total = np.zeros(grid.shape, dtype=complex)
    rng = range(-images, images + 1)
    for shift in np.array(np.meshgrid(*([list(rng)] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T:
        # the image at q - s*L, sampled at x: same as the packet at x + s*L
        total += _coherent_samples(grid, q, p, hbar, shift=shift * grid.length)
    return normalized(total, grid, hbar, decay="ignore")


def _as_callable(f, names):
    if isinstance(f, str):
        f = parse(f)
    if isinstance(f, Expression):
        expr = f
        return lambda *xs, **kw: expr(**dict(zip(names, xs)), **kw)
    return f


def _evaluate_profile(f, grid, hbar):
    coords = grid.mesh()
    names = ("x", "y", "z")[: grid.dim]
    if isinstance(f, (str, Expression)):
        expr = parse(f) if isinstance(f, str) else f
        env = dict(zip(names, coords))
        env["hbar"] = hbar
        val = expr(**env)
    else:
        val = f(*coords)
    return np.broadcast_to(np.asarray(val, dtype=float), grid.shape)


def wkb_state(grid: SpatialGrid, a, S, hbar, decay="warn"):
    """a(x) exp(i S(x)/hbar), renormalised on the grid.

    ``a`` and ``S`` are callables of the coordinates or expression strings
    (variables x, y and hbar).
    """
    if not hbar > 0:
        raise InvalidParameterError("hbar must be positive")
    amp = _evaluate_profile(a, grid, hbar)
    phase = _evaluate_profile(S, grid, hbar)
    if np.any(amp < 0):
        raise InvalidStateError("WKB amplitude must be nonnegative")
    if not np.any(amp > 0):
        raise InvalidStateError("WKB amplitude vanishes everywhere")
    return normalized(amp * np.exp(1j * phase / hbar), grid, hbar, decay)


def scaled_state(grid: SpatialGrid, a, p, alpha, hbar, decay="warn"):
    """hbar^(-d alpha/2) a(x/hbar^alpha) exp(i p.x/hbar): a profile squeezed to width hbar^alpha."""
    if not 0 <= alpha < 1:
        raise InvalidParameterError("alpha must lie in [0, 1)")
    if not hbar > 0:
        raise InvalidParameterError("hbar must be positive")
    width = hbar ** alpha
    if width / grid.spacing < 8:
        raise ResolutionError(f"profile width {width:.3g} spans fewer than 8 cells of size {grid.spacing:.3g}")
    p = _vec(p, grid.dim, "p")
    coords = grid.mesh()
    scaled = [c / width for c in coords]
    if isinstance(a, (str, Expression)):
        expr = parse(a) if isinstance(a, str) else a
        env = dict(zip(("x", "y", "z"), scaled))
        env["hbar"] = hbar
        amp = expr(**env)
    else:
        amp = a(*scaled)
    amp = np.broadcast_to(np.asarray(amp, dtype=float), grid.shape)
    phase = sum(p[i] * coords[i] for i in range(grid.dim))
    return normalized(width ** (-grid.dim / 2) * amp * np.exp(1j * phase / hbar), grid, hbar, decay)


def hermite_functions(grid: SpatialGrid, nmax, hbar, omega=1.0, mass=1.0, center=0.0):
    """Harmonic-oscillator eigenfunctions 0..nmax-1 on a 1-D grid (stable recurrence)."""
    if grid.dim != 1:
        raise InvalidParameterError("hermite_functions is one-dimensional")
    s = math.sqrt(hbar / (mass * omega))
    z = (grid.nodes - center) / s
    out = np.zeros((nmax, grid.n))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * z * z)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * z * out[0]
    for k in range(2, nmax):
        out[k] = math.sqrt(2.0 / k) * z * out[k - 1] - math.sqrt((k - 1) / k) * out[k - 2]
    return out / math.sqrt(s)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Finite-rank density operator  R = sum_j w_j |psi_j><psi_j|."""

    weights: np.ndarray
    waves: tuple
    hbar: float
    grid: SpatialGrid = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        waves = tuple(self.waves)
        if len(waves) == 0 or len(waves) != w.size:
            raise InvalidParameterError("need one weight per wave function")
        if np.any(w < 0):
            raise InvalidParameterError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise InvalidParameterError(f"weights must sum to 1, got {w.sum()!r}")
        g = waves[0].grid
        if any(v.grid != g for v in waves):
            raise InvalidParameterError("wave functions live on different grids")
        mat = np.array([v.samples.ravel() for v in waves])
        gram = (mat.conj() @ mat.T) * g.cell
        off = np.abs(gram - np.eye(len(waves)))
        if off.max() > ORTHO_TOL:
            raise InvalidStateError(f"wave functions are not orthonormal (max deviation {off.max():.2e})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "waves", waves)
        object.__setattr__(self, "grid", g)

    @classmethod
    def pure(cls, psi: WaveFunction):
        return cls(np.array([1.0]), (psi,), psi.hbar)

    @property
    def rank(self):
        return int(np.count_nonzero(self.weights))

    @property
    def dim(self):
        return self.grid.dim

    @property
    def samples(self):
        """Array of shape (rank, *grid.shape)."""
        return np.array([v.samples for v in self.waves])

    @property
    def density(self):
        return np.tensordot(self.weights, np.abs(self.samples) ** 2, axes=1)

    def purity(self):
        return hilbert_schmidt_trace(self)

    def is_pure(self, tol=1e-8):
        return abs(self.purity() - 1.0) <= tol

    def map_waves(self, fn):
        return QuantumState(self.weights, tuple(fn(v) for v in self.waves), self.hbar)


def orthonormalize(waves, tol=NORM_TOL):
    """Modified Gram-Schmidt with a re-orthogonalisation pass.

    Returns the orthonormal list and the indices of the input vectors kept
    (linearly dependent ones are dropped).
    """
    g = waves[0].grid
    mat = np.ascontiguousarray(np.array([v.samples.ravel() for v in waves], dtype=complex))
    q, keep = kernels.mgs(mat, g.cell, tol)
    idx = [i for i in range(len(waves)) if keep[i]]
    out = [WaveFunction(q[i].reshape(g.shape), g, waves[i].hbar) for i in idx]
    return out, idx


def mixed_state(waves, weights, orthonormalize_input=True):
    """Weighted mixture of wave functions, orthonormalised first by default."""
    waves = list(waves)
    w = np.asarray(weights, dtype=float)
    if w.size != len(waves):
        raise InvalidParameterError("need one weight per wave function")
    if np.any(w < 0):
        raise InvalidParameterError("weights must be nonnegative")
    if orthonormalize_input:
        waves, idx = orthonormalize(waves)
        if len(idx) != w.size:
            raise InvalidStateError("input wave functions are linearly dependent")
    hbar = waves[0].hbar
    return QuantumState(w, tuple(waves), hbar)


def hilbert_schmidt_trace(state: QuantumState):
    """tr(R^2) = sum of squared weights."""
    return float(np.sum(state.weights ** 2))


def rank_lower_bound(C, hbar, d=1):
    """Smallest rank compatible with ||W||^2 <= C, i.e. ceil(1/((2 pi hbar)^d C))."""
    if not (C > 0 and hbar > 0):
        raise InvalidParameterError("C and hbar must be positive")
    v = 1.0 / ((2 * np.pi * hbar) ** d * C)
    r = math.ceil(v)
    # 1/(2 pi * 1/(20 pi)) evaluates to 10.000000000000002
    if r - v > 1 - 1e-9 * max(1.0, v):
        r -= 1
    return max(int(r), 1)


def satisfies_hs_scaling(state: QuantumState, C, convention="trace"):
    """Hilbert-Schmidt scaling hypothesis under either constant convention.

    ``"trace"``:  tr(R^2) <= C^2 (2 pi hbar)^d
    ``"wigner"``: ||W||^2 = (2 pi hbar)^-d tr(R^2) <= C
    """
    h = (2 * np.pi * state.hbar) ** state.dim
    tr2 = hilbert_schmidt_trace(state)
    if convention == "trace":
        return tr2 <= C * C * h * (1 + 1e-12)
    if convention == "wigner":
        return tr2 / h <= C * (1 + 1e-12)
    raise InvalidParameterError(f"unknown convention {convention!r}")


class Potential:
    """Real potential given by an analytic callable.

    ``derivative`` is used wherever a force is needed; when it is missing a
    centred difference of the evaluator is used instead.
    """

    def __init__(self, evaluator, derivative=None, supnorm=None, lipschitz=None, label=None):
        self.evaluator = evaluator
        self._derivative = derivative
        self.supnorm = supnorm
        self.lipschitz = lipschitz
        self.label = label or getattr(evaluator, "__name__", "V")

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float) * np.ones_like(x, dtype=float)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self._derivative is not None:
            return np.asarray(self._derivative(x), dtype=float) * np.ones_like(x)
        h = 1e-5 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        return (self(x + h) - self(x - h)) / (2 * h)

    @classmethod
    def from_expression(cls, text, hbar=None, **kwargs):
        expr = parse(text) if isinstance(text, str) else text
        extra = {} if hbar is None else {"hbar": hbar}
        dexpr = expr.diff("x")
        return cls(lambda x: expr(x=x, **extra), lambda x: dexpr(x=x, **extra),
                   label=expr.text, **kwargs)

    @classmethod
    def harmonic(cls, omega=1.0, mass=1.0, center=0.0, box=None):
        """m omega^2 (x-c)^2 / 2; Lipschitz constant declared on ``box`` when given."""
        k = mass * omega ** 2
        lip = None
        if box is not None:
            lo, hi = box
            lip = k * max(abs(lo - center), abs(hi - center))
        return cls(lambda x: 0.5 * k * (x - center) ** 2, lambda x: k * (x - center),
                   lipschitz=lip, label=f"harmonic(omega={omega})")

    @classmethod
    def zero(cls):
        return cls(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), supnorm=0.0,
                   lipschitz=0.0, label="0")

    def sampled_bounds(self, x):
        """Sampled sup-norm and Lipschitz estimate on the points ``x``."""
        v = self(x)
        return float(np.max(np.abs(v))), float(np.max(np.abs(self.derivative(x))))
