"""Monokinetic concentration, Bohm pressure and the hbar-sweep harness.

All derivatives are spectral on the periodic box.  Quantities that are
quotients by rho (P, Pi, u) are masked below a density floor; the products
rho^2 P and rho^2 Tr Pi are evaluated without dividing by rho.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .averaging import check_geometric, fit_loglog
from .errors import IdentityInapplicableWarning, InvalidParameterError
from .grid import SpatialGrid, gradient, laplacian, spectral_derivative
from .states import QuantumState
from .wigner import MomentFields

VELOCITY_FLOOR = 1e-12
DENSITY_FLOOR = 1e-12
IDENTITY_TOL = 1e-8
EXPONENT_TOL = 0.05           # an exponent within this of 0 counts as "no decay"
EQUIVALENCE_RESIDUAL = 0.1
WINDOW_ROLLOFF = 0.1


def moments_from_state(state: QuantumState, mass=1.0) -> MomentFields:
    """rho, J, E straight from the wave functions, in any dimension.

    J = (hbar/m) Im(conj(psi) grad psi) and
    E = (hbar^2/4m) sum_j (|d_j psi|^2 - Re conj(psi) d_j^2 psi),
    the y-derivatives of R~ at y = 0 written in terms of psi.
    """
    if not mass > 0:
        raise InvalidParameterError("mass must be positive")
    g, h = state.grid, state.hbar
    rho = np.zeros(g.shape)
    J = np.zeros((g.dim,) + g.shape)
    E = np.zeros(g.shape)
    for w, psi in zip(state.weights, state.waves):
        f = psi.samples
        rho += w * np.abs(f) ** 2
        for a in range(g.dim):
            d1 = spectral_derivative(f, g, 1, axis=a)
            d2 = spectral_derivative(f, g, 2, axis=a)
            J[a] += w * (h / mass) * np.imag(np.conj(f) * d1)
            E += w * (h * h / (4 * mass)) * (np.abs(d1) ** 2 - np.real(np.conj(f) * d2))
    if g.dim == 1:
        J = J[0]
    return MomentFields(rho, J, E, mass, g, h, rank=state.rank)


def _grad_sq(f, g: SpatialGrid):
    return sum(d ** 2 for d in gradient(f, g))


def _l1(f, g: SpatialGrid):
    return float(np.sum(np.abs(f))) * g.cell


def _rel_l1(a, b, g):
    scale = max(_l1(a, g), _l1(b, g))
    gap = _l1(a - b, g)
    return gap / scale if scale > 0 else gap


@dataclass
class DefectReport:
    lhs: np.ndarray           # 2 m rho E - m^2 |J|^2 from the moments
    rhs: np.ndarray           # -(h^2/8) Lap(rho^2) + (h^2/2)|grad rho|^2, or None
    l1: float
    rel_gap: float            # relative L1 gap between the two sides, nan when skipped

    @property
    def field(self):
        return self.lhs


def defect_from_density(rho, g: SpatialGrid, hbar):
    """-(h^2/8) Lap(rho^2) + (h^2/2) |grad rho|^2."""
    return -0.125 * hbar ** 2 * laplacian(rho * rho, g) + 0.5 * hbar ** 2 * _grad_sq(rho, g)


def monokinetic_defect(m: MomentFields, pure=None) -> DefectReport:
    """The defect 2 m rho E - m^2 |J|^2 and, for rank one, its density-only form.

    ``pure`` overrides the rank carried by ``m``.  For a mixture the
    identity does not hold; the defect is still returned and the comparison
    is skipped with an IdentityInapplicableWarning.
    """
    lhs = m.cauchy_schwarz_defect()
    l1 = _l1(lhs, m.grid)
    if pure is None:
        pure = m.rank is None or m.rank == 1
    if not pure:
        warnings.warn("rank > 1: the density-only form of the defect does not apply",
                      IdentityInapplicableWarning, stacklevel=2)
        return DefectReport(lhs, None, l1, float("nan"))
    rhs = defect_from_density(m.rho, m.grid, m.hbar)
    return DefectReport(lhs, rhs, l1, _rel_l1(lhs, rhs, m.grid))


def velocity_field(m: MomentFields, floor=VELOCITY_FLOOR):
    """u = J/rho where rho > floor * max(rho), and 0 elsewhere."""
    rho = m.rho
    keep = rho > floor * float(rho.max())
    J = m.current
    u = np.zeros_like(J)
    if m.grid.dim == 1:
        u[keep] = J[keep] / rho[keep]
    else:
        for a in range(m.grid.dim):
            u[a][keep] = J[a][keep] / rho[keep]
    return u


def _floor_mask(rho, floor):
    return rho > floor * float(np.max(rho))


def bohm_potential(rho, g: SpatialGrid, hbar, mass=1.0, floor=DENSITY_FLOOR):
    """P = -(h^2/2m) Lap(sqrt rho)/sqrt rho as a masked array (masked where rho <= floor)."""
    rho = np.asarray(rho, dtype=float)
    keep = _floor_mask(rho, floor)
    s = np.sqrt(np.clip(rho, 0.0, None))
    P = np.zeros_like(rho)
    P[keep] = -(hbar ** 2 / (2 * mass)) * laplacian(s, g)[keep] / s[keep]
    return np.ma.MaskedArray(P, mask=~keep)


def pressure_tensor(rho, g: SpatialGrid, hbar, mass=1.0, floor=DENSITY_FLOOR):
    """Pi = -(h^2/4m) Hess(log rho), computed as quotients of rho-derivatives.

    d = 1 returns a field; otherwise an array of shape (d, d) + grid shape.
    Masked where rho <= floor.
    """
    rho = np.asarray(rho, dtype=float)
    keep = _floor_mask(rho, floor)
    c = -hbar ** 2 / (4 * mass)
    grads = gradient(rho, g)
    d = g.dim
    Pi = np.zeros((d, d) + rho.shape)
    r = rho[keep]
    for a in range(d):
        for b in range(a, d):
            hab = spectral_derivative(grads[a], g, 1, axis=b)
            val = np.zeros_like(rho)
            val[keep] = c * (hab[keep] * r - grads[a][keep] * grads[b][keep]) / (r * r)
            Pi[a, b] = val
            Pi[b, a] = val
    mask = np.broadcast_to(~keep, Pi.shape)
    if d == 1:
        return np.ma.MaskedArray(Pi[0, 0], mask=~keep)
    return np.ma.MaskedArray(Pi, mask=mask)


def rho2_bohm(rho, g: SpatialGrid, hbar, mass=1.0):
    """rho^2 P = -(h^2/2m) rho^{3/2} Lap(sqrt rho), no division."""
    s = np.sqrt(np.clip(np.asarray(rho, dtype=float), 0.0, None))
    return -(hbar ** 2 / (2 * mass)) * s ** 3 * laplacian(s, g)


def rho2_trace_pressure(rho, g: SpatialGrid, hbar, mass=1.0):
    """rho^2 Tr Pi = -(h^2/4m)(rho Lap rho - |grad rho|^2), no division."""
    rho = np.asarray(rho, dtype=float)
    return -(hbar ** 2 / (4 * mass)) * (rho * laplacian(rho, g) - _grad_sq(rho, g))


@dataclass
class PressureIdentityReport:
    grad_term: np.ndarray     # h^2 |grad rho|^2
    via_bohm: np.ndarray      # (1/3) h^2 Lap(rho^2) + (8/3) m rho^2 P
    via_trace: np.ndarray     # (1/4) h^2 Lap(rho^2) + 2 m rho^2 Tr Pi
    bohm_residual: float
    trace_residual: float

    @property
    def max_residual(self):
        return max(self.bohm_residual, self.trace_residual)


def pressure_identity_check(rho, g: SpatialGrid, hbar, mass=1.0) -> PressureIdentityReport:
    """Evaluate h^2|grad rho|^2 three ways and report relative L1 residuals.

    h^2 |grad rho|^2 = (1/3) h^2 Lap(rho^2) + (8/3) m rho^2 P
                     = (1/4) h^2 Lap(rho^2) + 2 m rho^2 Tr Pi.
    rho^2 P goes through sqrt(rho), rho^2 Tr Pi through rho itself, so the
    two routes share no intermediate besides Lap(rho^2).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise InvalidParameterError("pressure identities need rho > 0")
    a = hbar ** 2 * _grad_sq(rho, g)
    lap2 = hbar ** 2 * laplacian(rho * rho, g)
    b = lap2 / 3.0 + (8.0 / 3.0) * mass * rho2_bohm(rho, g, hbar, mass)
    c = 0.25 * lap2 + 2.0 * mass * rho2_trace_pressure(rho, g, hbar, mass)
    return PressureIdentityReport(a, b, c, _rel_l1(a, b, g), _rel_l1(a, c, g))


def bump_window(g: SpatialGrid, radius=None, rolloff=WINDOW_ROLLOFF):
    """Smooth indicator of B(0, radius): 1 inside (1 - rolloff) radius, 0 outside radius."""
    if radius is None:
        radius = 0.5 * g.length
    r = np.sqrt(sum(c ** 2 for c in g.mesh()))
    r0 = (1.0 - rolloff) * radius
    t = np.clip((r - r0) / max(radius - r0, 1e-300), 0.0, 1.0)
    out = np.zeros_like(r)
    inner = t <= 0
    mid = (t > 0) & (t < 1)
    out[inner] = 1.0
    # C-infinity step: e^{-1/(1-t)} / (e^{-1/(1-t)} + e^{-1/t})
    tm = t[mid]
    a = np.exp(-1.0 / (1.0 - tm))
    b = np.exp(-1.0 / tm)
    out[mid] = a / (a + b)
    return out


def grad_rho_sq(rho, g: SpatialGrid, hbar, radius=None):
    """h^2 ||grad rho||^2 over the bump window of B(0, radius)."""
    w = bump_window(g, radius)
    return hbar ** 2 * float(np.sum(w * _grad_sq(rho, g))) * g.cell


SWEEP_COLUMNS = ("hbar", "grad_rho_sq", "defect_l1", "rho2P_l1", "rho2TrPi_l1", "xi_spread")
SWEEP_METRICS = SWEEP_COLUMNS[1:]


@dataclass
class SweepReport:
    hbars: np.ndarray
    grad_rho_sq: np.ndarray
    defect_l1: np.ndarray
    rho2P_l1: np.ndarray
    rho2TrPi_l1: np.ndarray
    xi_spread: np.ndarray
    identity_gap: np.ndarray  # two-sided defect match per hbar (nan when skipped)
    time: float = 0.0
    exponents: dict = field(default_factory=dict)   # metric -> (slope, intercept, rms residual)

    def __post_init__(self):
        if not self.exponents:
            for name in SWEEP_METRICS:
                vals = getattr(self, name)
                if len(self.hbars) >= 2 and np.all(vals > 0):
                    self.exponents[name] = fit_loglog(self.hbars, vals)
                else:
                    self.exponents[name] = (float("nan"), float("nan"), float("nan"))

    @property
    def grad_rho_metric(self):
        """h ||grad rho||_{L2(B)} per hbar."""
        return np.sqrt(self.grad_rho_sq)

    def exponent(self, name):
        return self.exponents[name][0]

    def decays(self, name, tol=EXPONENT_TOL):
        """Whether the fitted exponent is positive beyond the fit tolerance."""
        return bool(self.exponent(name) > tol)

    def monokinetic(self):
        """grad-rho and defect both decay."""
        return self.decays("grad_rho_sq") and self.decays("defect_l1")

    def equivalence_holds(self):
        """Same decay verdict for the grad-rho metric, rho^2 P and rho^2 Tr Pi, and
        the three exponents agree within the fit residual allowance."""
        names = ("grad_rho_sq", "rho2P_l1", "rho2TrPi_l1")
        verdicts = {self.decays(n) for n in names}
        slopes = [self.exponent(n) for n in names]
        return len(verdicts) == 1 and max(slopes) - min(slopes) <= EQUIVALENCE_RESIDUAL

    def rows(self):
        out = [[h, *(getattr(self, n)[i] for n in SWEEP_METRICS)] for i, h in enumerate(self.hbars)]
        out.append(["exponent", *(self.exponent(n) for n in SWEEP_METRICS)])
        return out


def sweep_point(state: QuantumState, mass=1.0, radius=None):
    """All sweep metrics for one state; returns a dict keyed like SWEEP_COLUMNS."""
    g, h = state.grid, state.hbar
    m = moments_from_state(state, mass)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IdentityInapplicableWarning)
        dr = monokinetic_defect(m)
    rho = m.rho
    return {
        "hbar": h,
        "grad_rho_sq": grad_rho_sq(rho, g, h, radius),
        "defect_l1": dr.l1,
        "rho2P_l1": _l1(rho2_bohm(rho, g, h, mass), g),
        "rho2TrPi_l1": _l1(rho2_trace_pressure(rho, g, h, mass), g),
        "xi_spread": float(np.sum(dr.lhs)) / float(np.sum(rho * rho)),
        "identity_gap": dr.rel_gap,
    }


def concentration_sweep(family, hbars, V=None, times=None, mass=1.0, dt=None, radius=None,
                        map_fn=map):
    """Run the concentration metrics over a geometric hbar list.

    ``family`` maps hbar to a pure QuantumState.  With ``times`` (d = 1
    only) each state is evolved by the Schrodinger backend under ``V`` and
    one SweepReport is returned per time; otherwise a single report at t = 0.
    ``map_fn`` lets a caller run the legs in a pool.
    """
    h = check_geometric(hbars)
    if np.any(np.diff(h) >= 0):
        raise InvalidParameterError("hbar list must be strictly decreasing")
    single = times is None
    ts = [0.0] if single else [float(t) for t in np.atleast_1d(times)]

    def leg(hb):
        st = family(float(hb))
        if ts == [0.0]:
            return [sweep_point(st, mass, radius)]
        return [sweep_point(s, mass, radius) for s in _evolved(st, V, ts, mass, dt)]

    legs = list(map_fn(leg, h))
    reports = []
    for j, t in enumerate(ts):
        pts = [legs[i][j] for i in range(len(h))]
        reports.append(SweepReport(
            h, *(np.array([p[n] for p in pts]) for n in SWEEP_METRICS),
            identity_gap=np.array([p["identity_gap"] for p in pts]), time=t))
    return reports[0] if single else reports


def _evolved(state: QuantumState, V, times, mass, dt):
    from .evolution import EvolutionConfig, schrodinger_evolve
    from .states import Potential
    if state.dim != 1:
        raise InvalidParameterError("evolution in the sweep is implemented for d = 1")
    if state.rank != 1:
        raise InvalidParameterError("concentration_sweep expects pure states")
    V = V or Potential.zero()
    out = []
    psi = state.waves[0]
    prev = 0.0
    for t in times:
        if t < prev:
            raise InvalidParameterError("times must be nondecreasing")
        if t > prev:
            step = dt or (t - prev) / max(1, int(np.ceil((t - prev) / 1e-3)))
            n = max(1, int(round((t - prev) / step)))
            cfg = EvolutionConfig(dt=(t - prev) / n, t_final=t - prev, mass=mass,
                                  record_stride=n, backend="schrodinger")
            psi = schrodinger_evolve(psi, V, cfg).frames[-1]
            prev = t
        out.append(QuantumState.pure(psi))
    return out
