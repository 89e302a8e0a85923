"""Madelung's hydrodynamic system: a pseudospectral solver and a closure check.

The solver advances (rho, u) in the nonconservative Bohm form

    d_t rho = -d_x(rho u),   d_t u = -u d_x u - (1/m) d_x(P + V)

with RK4 in time and Fourier derivatives in space, on a periodic box in one
dimension.  Vacuum is out of theory: the integrator halts rather than
regularise.  The conservative form with rho Pi is used only by the residual
checks.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BlowUpError, InvalidParameterError, StabilityError, VacuumError
from .evolution import EvolutionConfig, Trajectory, schrodinger_evolve
from .grid import SpatialGrid, spectral_derivative, wavenumbers
from .semiclassics import moments_from_state, velocity_field
from .states import Potential, QuantumState, WaveFunction

VACUUM_FLOOR = 1e-10
BLOWUP_FACTOR = 1e6
FILTER_STRENGTH = 36.0
FILTER_ORDER = 16
DISPERSIVE_LIMIT = 2.5        # RK4 covers about 2.8 on the imaginary axis
ADVECTIVE_LIMIT = 2.5
MASS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FluidState:
    rho: np.ndarray
    u: np.ndarray
    grid: SpatialGrid
    hbar: float
    mass: float = 1.0
    t: float = 0.0
    floor: float = None       # absolute vacuum floor; default VACUUM_FLOOR * max(rho)

    def __post_init__(self):
        if self.grid.dim != 1:
            raise InvalidParameterError("the Madelung solver is one-dimensional")
        rho = np.asarray(self.rho, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if rho.shape != self.grid.shape or u.shape != self.grid.shape:
            raise InvalidParameterError("rho and u must live on the grid")
        if not (self.hbar > 0 and self.mass > 0):
            raise InvalidParameterError("hbar and mass must be positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)
        if self.floor is None:
            object.__setattr__(self, "floor", VACUUM_FLOOR * float(rho.max()))

    @classmethod
    def from_wavefunction(cls, psi: WaveFunction, mass=1.0, floor=None):
        m = moments_from_state(QuantumState.pure(psi), mass)
        return cls(m.rho, velocity_field(m), psi.grid, psi.hbar, mass, 0.0, floor)

    @property
    def current(self):
        return self.rho * self.u

    def total_mass(self):
        return float(np.sum(self.rho)) * self.grid.spacing


@dataclass(frozen=True)
class MadelungConfig:
    dt: float
    t_final: float
    record_stride: int = 1
    filter_strength: float = FILTER_STRENGTH   # 0 switches the filter off
    filter_order: int = FILTER_ORDER
    filter_rho: bool = True
    quantum: bool = True                       # False drops P (pressureless Euler)
    check_stability: bool = True

    def __post_init__(self):
        # reuse the time-grid validation of the Schrodinger configuration
        EvolutionConfig(self.dt, self.t_final, record_stride=self.record_stride)
        if self.filter_strength < 0:
            raise InvalidParameterError("filter_strength must be >= 0")

    @property
    def nsteps(self):
        return int(round(self.t_final / self.dt))


def spectral_filter(g: SpatialGrid, strength=FILTER_STRENGTH, order=FILTER_ORDER):
    k = np.abs(wavenumbers(g))
    return np.exp(-strength * (k / k.max()) ** order)


def _d(f, g, order=1):
    return spectral_derivative(f, g, order)


def bohm_term(rho, g, hbar, mass):
    s = np.sqrt(rho)
    return -(hbar ** 2 / (2 * mass)) * _d(s, g, 2) / s


def _potential_gradient(V, x):
    if V is None:
        return np.zeros_like(x)
    return np.asarray(V.derivative(x), dtype=float)


def madelung_rhs(f: FluidState, V: Potential = None, quantum=True, dV=None):
    """(d_t rho, d_t u) for the Bohm form.  Raises VacuumError below the floor."""
    g = f.grid
    if float(f.rho.min()) <= f.floor:
        raise VacuumError(f"rho fell to {f.rho.min():.3e} (floor {f.floor:.3e})", time=f.t)
    if dV is None:
        dV = _potential_gradient(V, g.nodes)
    drho = -_d(f.rho * f.u, g)
    force = dV.copy()
    if quantum:
        force += _d(bohm_term(f.rho, g, f.hbar, f.mass), g)
    du = -f.u * _d(f.u, g) - force / f.mass
    return drho, du


def suggest_dt(f: FluidState):
    """Largest dt inside both the dispersive (h k^2/2m) and advective (k |u|) limits."""
    kmax = float(np.abs(wavenumbers(f.grid)).max())
    lim = DISPERSIVE_LIMIT * 2 * f.mass / (f.hbar * kmax ** 2)
    umax = float(np.abs(f.u).max())
    if umax > 0:
        lim = min(lim, ADVECTIVE_LIMIT / (kmax * umax))
    return lim


def check_dt(f: FluidState, dt):
    lim = suggest_dt(f)
    if dt > lim:
        raise StabilityError(f"dt = {dt:.3g} exceeds the dispersive/advective limit {lim:.3g}",
                             suggested_dt=0.4 * lim)


def madelung_evolve(f0: FluidState, V: Potential, cfg: MadelungConfig) -> Trajectory:
    """RK4 integration with an exponential filter after every step.

    Frames are FluidStates every ``record_stride`` steps.  The returned
    trajectory carries ``mass_drift`` (max relative change of int rho).
    VacuumError and BlowUpError carry the time of the first violation and
    the frames recorded up to it in ``partial``.
    """
    if cfg.check_stability:
        check_dt(f0, cfg.dt)
    g = f0.grid
    dt = cfg.dt
    dV = _potential_gradient(V, g.nodes)
    filt = spectral_filter(g, cfg.filter_strength, cfg.filter_order) if cfg.filter_strength > 0 else None
    m0 = f0.total_mass()
    scale0 = max(float(np.abs(f0.rho).max()), float(np.abs(f0.u).max()), 1e-300)
    times, frames = [0.0], [f0]
    drift = 0.0
    cur = f0

    def rhs(rho, u, t):
        return madelung_rhs(replace(cur, rho=rho, u=u, t=t), dV=dV, quantum=cfg.quantum)

    try:
        for n in range(1, cfg.nsteps + 1):
            t = cur.t
            r, u = cur.rho, cur.u
            k1 = rhs(r, u, t)
            k2 = rhs(r + 0.5 * dt * k1[0], u + 0.5 * dt * k1[1], t + 0.5 * dt)
            k3 = rhs(r + 0.5 * dt * k2[0], u + 0.5 * dt * k2[1], t + 0.5 * dt)
            k4 = rhs(r + dt * k3[0], u + dt * k3[1], t + dt)
            r = r + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            u = u + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if filt is not None:
                u = np.fft.ifft(filt * np.fft.fft(u)).real
                if cfg.filter_rho:
                    r = np.fft.ifft(filt * np.fft.fft(r)).real
            cur = replace(cur, rho=r, u=u, t=n * dt)
            size = max(float(np.abs(r).max()), float(np.abs(u).max()))
            if not math.isfinite(size) or size > BLOWUP_FACTOR * scale0:
                raise BlowUpError(f"field norm grew past {BLOWUP_FACTOR:g} times its initial size",
                                  time=cur.t)
            if float(r.min()) <= cur.floor:
                raise VacuumError(f"rho fell to {r.min():.3e} (floor {cur.floor:.3e})", time=cur.t)
            drift = max(drift, abs(cur.total_mass() - m0) / m0)
            if n % cfg.record_stride == 0:
                times.append(cur.t)
                frames.append(cur)
    except (VacuumError, BlowUpError) as err:
        err.partial = Trajectory(np.array(times), frames)
        raise
    traj = Trajectory(np.array(times), frames)
    object.__setattr__(traj, "mass_drift", drift)
    return traj


# --- consistency of the three Euler forms ----------------------------------

def euler_forms_gap(rho, g: SpatialGrid):
    """Relative L2 gap between d_x(rho d_x^2 log rho) and 2 rho d_x(d_x^2 sqrt rho / sqrt rho)."""
    rho = np.asarray(rho, dtype=float)
    r1, r2 = _d(rho, g), _d(rho, g, 2)
    lhs = _d(r2 - r1 ** 2 / rho, g)
    s = np.sqrt(rho)
    rhs = 2 * rho * _d(_d(s, g, 2) / s, g)
    scale = max(float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs)), 1e-300)
    return float(np.linalg.norm(lhs - rhs)) / scale


# --- closure cross-check on Schrodinger trajectories ------------------------

@dataclass
class ClosureReport:
    times: np.ndarray             # interior frame times
    continuity: np.ndarray        # relative L2 residual per interior frame
    euler: np.ndarray
    masked_fraction: np.ndarray   # fraction of cells below the floor per frame
    dt: float
    extra: dict = field(default_factory=dict)

    @property
    def max_continuity(self):
        return float(self.continuity.max())

    @property
    def max_euler(self):
        return float(self.euler.max())


def _rel(res, terms, mask, cell):
    num = math.sqrt(float(np.sum(res[mask] ** 2)) * cell)
    den = max(math.sqrt(float(np.sum(t[mask] ** 2)) * cell) for t in terms)
    return num / den if den > 0 else num


def closure_crosscheck(traj: Trajectory, V: Potential = None, mass=1.0, floor=VACUUM_FLOOR):
    """Residuals of the continuity and conservative quantum-Euler equations.

    rho and J are taken from the wave-function frames; time derivatives are
    centred differences over neighbouring frames; the stress uses the rank-one
    closure 2 m E = m^2 J^2/rho + m rho Pi.  Each residual is divided by the
    largest of its terms (L2 over unmasked cells); the continuity residual
    also admits the spreading rate (h/2m) rho'' as a scale, so that it stays
    meaningful when every term vanishes.  ``extra['closure_gap']``
    compares 2 m E from the frames with that closed form.
    """
    t = traj.times
    if len(t) < 3:
        raise InvalidParameterError("need at least three frames")
    dt = float(t[1] - t[0])
    mom = []
    for fr in traj.frames:
        st = fr if isinstance(fr, QuantumState) else QuantumState.pure(fr)
        mom.append(moments_from_state(st, mass))
    g = mom[0].grid
    h = mom[0].hbar
    dV = _potential_gradient(V, g.nodes)
    cont, eul, frac, gap = [], [], [], []
    for n in range(1, len(t) - 1):
        m = mom[n]
        rho, J, E = m.rho, m.current, m.energy
        mask = rho > floor * float(rho.max())
        drho = (mom[n + 1].rho - mom[n - 1].rho) / (2 * dt)
        dJ = (mom[n + 1].current - mom[n - 1].current) / (2 * dt)
        flux = _d(J, g)
        r1, r2 = _d(rho, g), _d(rho, g, 2)
        # (h/2m) rho'' sets the rate scale when both terms vanish (stationary states)
        spread = (h / (2 * mass)) * r2
        cont.append(_rel(drho + flux, (drho, flux, spread), mask, g.spacing))
        safe = np.where(mask, rho, 1.0)
        conv = np.where(mask, J * J / safe, 0.0)
        rho_pi = -(h * h / (4 * mass)) * np.where(mask, r2 - r1 ** 2 / safe, 0.0)
        conv_term = _d(conv, g)
        press = _d(rho_pi, g) / mass
        pot = rho * dV / mass
        eul.append(_rel(dJ + conv_term + press + pot, (dJ, conv_term, press, pot), mask, g.spacing))
        closed = mass * mass * conv + mass * rho_pi
        gap.append(_rel(2 * mass * E - closed, (2 * mass * E,), mask, g.spacing))
        frac.append(1.0 - float(np.count_nonzero(mask)) / mask.size)
    return ClosureReport(t[1:-1], np.array(cont), np.array(eul), np.array(frac), dt,
                         {"closure_gap": np.array(gap)})


def refinement_order(errors, dts):
    """Observed order from successive halvings: log2(e_k / e_{k+1}) averaged."""
    e = np.asarray(errors, dtype=float)
    r = np.asarray(dts, dtype=float)
    return float(np.mean(np.log(e[:-1] / e[1:]) / np.log(r[:-1] / r[1:])))


# --- comparison with the Schrodinger backend -------------------------------

COMPARISON_COLUMNS = ("t", "L2_rho_err", "L2_u_err", "continuity_res", "euler_res", "L2_J_err")


def compare_with_schrodinger(psi0: WaveFunction, V: Potential, t_final, dt, dt_schrodinger=None,
                             samples=10, mass=1.0):
    """Madelung from (rho, u) of psi0 against moments of the split-step solution.

    Returns rows (t, relative L2 errors of rho and u, continuity and Euler
    residuals of the Schrodinger frames at t, relative L2 error of J).  The
    u error is dominated by the low-density tails; J = rho u is the moment.  The Schrodinger step defaults
    to dt/4; the residuals use its neighbouring frames at that spacing.
    """
    V = V or Potential.zero()
    f0 = FluidState.from_wavefunction(psi0, mass)
    nm = int(round(t_final / dt))
    if nm % samples:
        raise InvalidParameterError("t_final/dt must be a multiple of samples")
    mt = madelung_evolve(f0, V, MadelungConfig(dt, t_final, record_stride=nm // samples))
    hs = dt_schrodinger or dt / 4
    ns = int(round(t_final / hs))
    st = schrodinger_evolve(psi0, V, EvolutionConfig(hs, t_final, mass=mass))
    stride = ns // samples
    rows = []
    for j, (tm, fr) in enumerate(mt):
        i = j * stride
        ref = moments_from_state(QuantumState.pure(st.frames[i]), mass)
        u_ref = velocity_field(ref)
        e_rho = float(np.linalg.norm(fr.rho - ref.rho) / np.linalg.norm(ref.rho))
        nu = float(np.linalg.norm(u_ref))
        e_u = float(np.linalg.norm(fr.u - u_ref)) / nu if nu > 0 else float(np.linalg.norm(fr.u))
        nj = float(np.linalg.norm(ref.current))
        dj = float(np.linalg.norm(fr.current - ref.current))
        e_j = dj / nj if nj > 0 else dj
        if 0 < i < ns:
            sub = Trajectory(st.times[i - 1:i + 2], st.frames[i - 1:i + 2])
            rep = closure_crosscheck(sub, V, mass)
            c, e = float(rep.continuity[0]), float(rep.euler[0])
        else:
            c = e = float("nan")
        rows.append([tm, e_rho, e_u, c, e, e_j])
    return rows
