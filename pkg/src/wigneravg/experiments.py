"""Pipelines behind the runner: build states, evolve, diagnose, tabulate.

Each runner takes an ExperimentConfig and a RunContext and returns an
Outcome holding CSV tables, field dumps and named checks.  Runners never
write files themselves.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import corpus
from .averaging import (check_uniform_bound, density_sobolev_1d, free_sources, gamma_k,
                        harmonic_sources, mollifier_machinery)
from .errors import BoundaryDecayWarning, InvalidParameterError
from .evolution import EvolutionConfig, schrodinger_evolve, von_neumann_evolve, wigner_evolve
from .grid import SpatialGrid
from .madelung import (COMPARISON_COLUMNS, FluidState, closure_crosscheck, compare_with_schrodinger,
                       refinement_order, suggest_dt)
from .purity import state_purity_report
from .semiclassics import SWEEP_COLUMNS, concentration_sweep
from .states import (Potential, QuantumState, WaveFunction, coherent_state, hermite_functions,
                     mixed_state, rank_lower_bound, scaled_state, wkb_state)
from .wigner import kernel_from_state, l2_identity_check, wigner_direct, wigner_from_state


@dataclass
class Check:
    name: str
    value: float
    threshold: str            # verbatim, e.g. "<= 1e-06"
    passed: bool


def at_most(name, value, limit):
    return Check(name, float(value), f"<= {limit:g}", bool(value <= limit))


def at_least(name, value, limit):
    return Check(name, float(value), f">= {limit:g}", bool(value >= limit))


def within(name, value, target, tol):
    return Check(name, float(value), f"within {tol:g} of {target:g}", bool(abs(value - target) <= tol))


def in_range(name, value, lo, hi):
    return Check(name, float(value), f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi))


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)    # stem -> (header, rows)
    fields: dict = field(default_factory=dict)    # stem -> (values, meta)
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


@dataclass
class RunContext:
    seed: int = 0
    map_fn: object = map

    @property
    def rng(self):
        return np.random.default_rng(self.seed)


# --- builders ----------------------------------------------------------------

def build_grid(cfg, hbar=None):
    gs = cfg.section("grid")
    n = int(gs["n"])
    if "box_sqrt_hbar" in gs:
        if hbar is None:
            raise InvalidParameterError("box_sqrt_hbar needs an hbar")
        length = float(gs["box_sqrt_hbar"]) * math.sqrt(hbar)
    else:
        length = float(gs["length"])
    return SpatialGrid(n, length, dim=int(gs.get("dim", 1)))


def build_potential(cfg, grid=None):
    pot = cfg.data.get("potential", 0)
    box = None if grid is None else (grid.origin, grid.origin + grid.length)
    if isinstance(pot, dict):
        return Potential.harmonic(float(pot.get("omega", 1.0)), float(pot.get("mass", 1.0)),
                                  float(pot.get("center", 0.0)), box=box)
    if isinstance(pot, (int, float)) and pot == 0:
        return Potential.zero()
    V = Potential.from_expression(str(pot))
    if grid is not None:
        V.supnorm, V.lipschitz = V.sampled_bounds(grid.nodes)
    return V


def build_state(cfg, grid, hbar):
    st = cfg.section("state")
    fam = st["family"]
    dim = grid.dim
    if fam == "coherent":
        q = st.get("q", [0.0] * dim)
        p = st.get("p", [0.0] * dim)
        return QuantumState.pure(coherent_state(grid, q, p, hbar, periodize=bool(st.get("periodize", False))))
    if fam == "scaled":
        return QuantumState.pure(scaled_state(grid, st.get("a", "exp(-x^2/2)"), st.get("p", [0.0] * dim),
                                              float(st["alpha"]), hbar))
    if fam == "wkb":
        return QuantumState.pure(wkb_state(grid, st["a"], st["S"], hbar))
    if fam == "hermite_mixture":
        return hermite_mixture(grid, hbar, st.get("rank"), float(st.get("center", 0.0)),
                               float(st.get("omega", 1.0)))
    raise InvalidParameterError(f"unknown family {fam}")


def hermite_mixture(grid, hbar, rank=None, center=0.0, omega=1.0):
    """Uniform mixture of the lowest oscillator eigenfunctions; default rank ceil(1/(2 pi hbar))."""
    N = int(rank) if rank else rank_lower_bound(1.0, hbar)
    H = hermite_functions(grid, N, hbar, omega=omega, center=center)
    waves = [WaveFunction(H[k] / math.sqrt(float(np.sum(H[k] ** 2)) * grid.spacing), grid, hbar)
             for k in range(N)]
    return mixed_state(waves, np.ones(N) / N)


def _evolution(cfg, **override):
    ev = cfg.section("evolution")
    ev.update(override)
    return EvolutionConfig(float(ev["dt"]), float(ev["t_final"]), ev.get("backend", "schrodinger"),
                           float(ev.get("mass", 1.0)), int(ev.get("record_stride", 1)))


# --- transform ----------------------------------------------------------------

def run_transform(cfg, ctx: RunContext) -> Outcome:
    """Wigner field of the configured pure state against the direct-sum oracle,
    and the L2 identity for it and for a seeded rank-3 mixture."""
    par = cfg.params
    h = cfg.hbars[0]
    g = build_grid(cfg, h)
    st = build_state(cfg, g, h)
    w = wigner_from_state(st)
    direct = wigner_direct(st, g.nodes, w.phase.xi)
    oracle_err = float(np.max(np.abs(direct - w.values)))
    # the L2 identity is checked on a finer grid of the same box
    g2 = SpatialGrid(int(par.get("l2_n", 256)), g.length, dim=g.dim)
    _, _, gap_pure = l2_identity_check(build_state(cfg, g2, h))
    rng = ctx.rng
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        centres = rng.uniform(-0.5, 0.5, size=3)
        waves = [coherent_state(g2, c, rng.uniform(-0.5, 0.5), h) for c in centres]
    weights = rng.dirichlet(np.ones(3))
    mix = mixed_state(waves, weights)
    _, _, gap_mix = l2_identity_check(mix)
    out = Outcome()
    out.checks = [
        at_most("oracle_sup_error", oracle_err, float(par.get("oracle_tol", 1e-6))),
        at_most("l2_identity_pure", gap_pure, float(par.get("l2_tol", 1e-8))),
        at_most("l2_identity_rank3", gap_mix, float(par.get("l2_tol", 1e-8))),
    ]
    out.tables["checks"] = (("check", "value", "threshold", "pass"),
                            [(c.name, c.value, c.threshold, c.passed) for c in out.checks])
    out.fields["wigner"] = (w.values, w.metadata())
    return out


# --- evolve ---------------------------------------------------------------------

def run_evolve(cfg, ctx: RunContext) -> Outcome:
    """Wigner backend against W[psi(t)] from the split-step solution."""
    par = cfg.params
    h = cfg.hbars[0]
    g = build_grid(cfg, h)
    V = build_potential(cfg, g)
    st = build_state(cfg, g, h)
    if st.rank != 1:
        raise InvalidParameterError("backend comparison uses rank-one data")
    ec = _evolution(cfg)
    w0 = wigner_from_state(st)
    tw = wigner_evolve(w0, V, EvolutionConfig(ec.dt, ec.t_final, "wigner", ec.mass, ec.record_stride))
    ts = schrodinger_evolve(st.waves[0], V, EvolutionConfig(ec.dt, ec.t_final, "schrodinger", ec.mass,
                                                            ec.record_stride))
    m0, p0 = w0.mass(), 2 * np.pi * h * w0.l2_norm_sq()
    rows = []
    worst = dict(l2=0.0, mass=0.0, norm=0.0, purity=0.0)
    for (t, wf), (_, psi) in zip(tw, ts):
        ref = wigner_from_state(QuantumState.pure(psi), w0.phase)
        diff = math.sqrt(float(np.sum((wf.values - ref.values) ** 2)) * wf.phase.dx * wf.phase.dxi)
        mass = wf.mass()
        norm = float(np.sum(np.abs(psi.samples) ** 2)) * g.spacing
        pur = 2 * np.pi * h * wf.l2_norm_sq()
        worst["l2"] = max(worst["l2"], diff)
        worst["mass"] = max(worst["mass"], abs(mass - m0))
        worst["norm"] = max(worst["norm"], abs(norm - 1.0))
        worst["purity"] = max(worst["purity"], abs(pur - p0))
        rows.append((t, diff, mass, norm, pur))
    out = Outcome()
    tol = float(par.get("conservation_tol", 1e-10))
    out.checks = [
        at_most("wigner_vs_schrodinger_l2", worst["l2"], float(par.get("l2_tol", 1e-6))),
        at_most("mass_drift", worst["mass"], tol),
        at_most("norm_drift", worst["norm"], tol),
        at_most("purity_drift", worst["purity"], tol),
    ]
    out.tables["backends"] = (("t", "l2_diff", "mass", "norm", "purity"), rows)
    out.fields["wigner_final"] = (tw.frames[-1].values, tw.frames[-1].metadata())
    return out


# --- sweep ----------------------------------------------------------------------

def run_sweep(cfg, ctx: RunContext) -> Outcome:
    """Concentration metrics along the hbar list with exponent checks."""
    par = cfg.params
    times = par.get("times")
    V = build_potential(cfg) if times else None

    def family(h):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryDecayWarning)
            g = build_grid(cfg, h)
            return build_state(cfg, g, h)

    reps = concentration_sweep(family, cfg.hbars, V=V, times=times, mass=float(par.get("mass", 1.0)),
                               radius=par.get("radius"), map_fn=ctx.map_fn)
    reps = [reps] if not isinstance(reps, list) else reps
    out = Outcome()
    tol = float(par.get("exponent_tol", 0.05))
    for rep in reps:
        tag = "" if len(reps) == 1 else f"_t{rep.time:g}"
        out.tables["sweep" + tag] = (SWEEP_COLUMNS, rep.rows())
        if "expected_exponent" in par:
            out.checks.append(within("grad_rho_sq_exponent" + tag, rep.exponent("grad_rho_sq"),
                                     float(par["expected_exponent"]), tol))
        if "expected_prefactor" in par:
            pref = math.exp(rep.exponents["grad_rho_sq"][1])
            target = float(par["expected_prefactor"])
            rtol = float(par.get("prefactor_rtol", 0.01))
            out.checks.append(Check("grad_rho_sq_prefactor" + tag, pref,
                                    f"within {rtol:g} relative of {target:g}",
                                    abs(pref - target) <= rtol * target))
        if "expect_monokinetic" in par:
            got = rep.monokinetic()
            want = bool(par["expect_monokinetic"])
            out.checks.append(Check("monokinetic_verdict" + tag, float(got), f"== {want}", got == want))
        out.checks.append(Check("pressure_equivalence" + tag, float(rep.equivalence_holds()),
                                "same decay verdicts", rep.equivalence_holds()))
        gap = float(np.nanmax(rep.identity_gap))
        out.checks.append(at_most("defect_identity" + tag, gap, float(par.get("identity_tol", 1e-8))))
        out.tables["exponents" + tag] = (("metric", "exponent", "log_prefactor", "fit_residual"),
                                         [(k, *v) for k, v in rep.exponents.items()])
    return out


# --- purity ---------------------------------------------------------------------

def run_purity(cfg, ctx: RunContext) -> Outcome:
    """Rank-one residuals on seeded pure and rank-2 corpora."""
    par = cfg.params
    h = cfg.hbars[0]
    g = build_grid(cfg, h)
    rng = ctx.rng
    pure = corpus.pure_corpus(rng, g, h)
    mixed = corpus.mixture_corpus(rng, g, h, float(par.get("min_weight", 0.2)))
    thr = float(par.get("pure_threshold", 1e-6))
    rows = []
    agree = True
    res_pure, res_mixed = [], []
    for label, st in pure + mixed:
        rep = state_purity_report(st)
        spectral = abs(st.purity() - 1.0)
        is_pure = spectral < 1e-8
        ok = rep.is_pure == is_pure
        agree &= ok
        (res_pure if is_pure else res_mixed).append(rep.max_residual)
        rows.append((label, st.rank, spectral, rep.max_residual, rep.masked_fraction, rep.verdict, ok))
    out = Outcome()
    out.checks = [
        at_most("pure_max_residual", max(res_pure), thr),
        at_least("mixed_min_residual", min(res_mixed), 10 * thr),
        Check("verdicts_match_spectral_purity", float(agree), "all agree", bool(agree)),
    ]
    out.tables["purity"] = (("state", "rank", "spectral_impurity", "max_residual", "masked_fraction",
                             "verdict", "agrees"), rows)
    return out


# --- averaging ------------------------------------------------------------------

def run_averaging(cfg, ctx: RunContext) -> Outcome:
    """H^s norms of the velocity average for the admissible mixed family and
    for pure coherent data, over one period of the harmonic flow."""
    par = cfg.params
    g = build_grid(cfg)
    V = build_potential(cfg, g)
    q0 = float(par.get("q0", 1.0))
    nt = int(par.get("frames", 64))
    period = float(par.get("period", 2 * np.pi))
    s = float(par.get("s", 0.25))
    max_dt = float(par.get("max_dt", 0.004))

    def leg(h):
        mix = hermite_mixture(g, h, center=q0)
        pure = QuantumState.pure(coherent_state(g, q0, 0.0, h))
        frame_dt = period / nt
        sub = max(1, int(math.ceil(frame_dt / max_dt)))
        dt = frame_dt / sub
        ec = EvolutionConfig(dt, dt * sub * (nt - 1), "von_neumann", record_stride=sub)
        return h, mix.rank, von_neumann_evolve(mix, V, ec), von_neumann_evolve(pure, V, ec)

    legs = list(ctx.map_fn(leg, cfg.hbars))
    rm = check_uniform_bound([(h, tm) for h, _, tm, _ in legs], s=s)
    rp = check_uniform_bound([(h, tp) for h, _, _, tp in legs], s=s, enforce_hypothesis=False)
    rows = [(h, r, a[1], b[1]) for (h, r, _, _), a, b in zip(legs, rm.per_hbar, rp.per_hbar)]
    rows.append(("slope", "", rm.fitted_exponent, rp.fitted_exponent))
    rows.append(("spread", "", rm.spread, rp.spread))
    out = Outcome()
    out.checks = [
        at_least("mixed_slope", rm.fitted_exponent, -0.05),
        at_most("mixed_spread", rm.spread, 3.0),
        at_most("pure_slope", rp.fitted_exponent, -0.2),
    ]
    out.tables["contrast"] = (("hbar", "mixed_rank", "mixed_Hs_norm", "pure_Hs_norm"), rows)
    return out


# --- madelung ---------------------------------------------------------------------

def run_madelung(cfg, ctx: RunContext) -> Outcome:
    """Madelung against Schrodinger moments on a small periodic box, and the
    dt-refinement order of the closure residuals on a wide box."""
    par = cfg.params
    h = cfg.hbars[0]
    g = build_grid(cfg, h)
    T = float(par.get("t_final", 0.1))
    turns = int(par.get("momentum_turns", 1))
    p = 2 * np.pi * h * turns / g.length
    q = float(par.get("q_sqrt_hbar", 0.5)) * math.sqrt(h)
    psi = coherent_state(g, q, p, h, periodize=True)
    f0 = FluidState.from_wavefunction(psi)
    dt = T / math.ceil(T / (0.4 * suggest_dt(f0)))
    samples = int(par.get("samples", 10))
    nsteps = int(round(T / dt))
    nsteps = samples * math.ceil(nsteps / samples)
    dt = T / nsteps
    out = Outcome()
    tol = float(par.get("moment_tol", 1e-3))
    for name, V in (("free", Potential.zero()), ("harmonic", Potential.harmonic())):
        rows = compare_with_schrodinger(psi, V, T, dt, samples=samples)
        out.tables[f"comparison_{name}"] = (COMPARISON_COLUMNS, rows)
        out.checks.append(at_most(f"rho_error_{name}", rows[-1][1], tol))
        out.checks.append(at_most(f"current_error_{name}", rows[-1][5], tol))
    # closure residuals: wide box where the state is far from the boundary
    cg = SpatialGrid(int(par.get("closure_n", 256)), float(par.get("closure_length", 16.0)))
    cpsi = coherent_state(cg, float(par.get("closure_q", 1.0)), float(par.get("closure_p", 0.5)), h)
    V = Potential.harmonic()
    dts = [float(d) for d in par.get("closure_dts", [0.02, 0.01, 0.005])]
    ct = float(par.get("closure_t_final", 0.2))
    rows, cont, eul = [], [], []
    for d in dts:
        rep = closure_crosscheck(schrodinger_evolve(cpsi, V, EvolutionConfig(d, ct)), V)
        cont.append(rep.max_continuity)
        eul.append(rep.max_euler)
        rows.append((d, rep.max_continuity, rep.max_euler, float(rep.masked_fraction.max())))
    oc, oe = refinement_order(cont, dts), refinement_order(eul, dts)
    rows.append(("order", oc, oe, ""))
    out.tables["closure_refinement"] = (("dt", "continuity_res", "euler_res", "masked_fraction"), rows)
    out.checks.append(in_range("continuity_order", oc, 1.8, 2.2))
    out.checks.append(in_range("euler_order", oe, 1.8, 2.2))
    return out


# --- density1d --------------------------------------------------------------------

def gamma_quadrature(k):
    """int_0^inf Y^(2k+1) G(Y) dY / (2k+1) with G the unit Gaussian density, by quadrature."""
    val, _ = quad(lambda y: y ** (2 * k + 1) * math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi),
                  0, np.inf, epsabs=1e-14, epsrel=1e-13)
    return val / (2 * k + 1)


def density_cases(grid, hbar, q=1.0, p=0.5):
    """The bundled source decompositions: free (n=0), harmonic n=1 and n=2."""
    st = QuantumState.pure(coherent_state(grid, q, p, hbar))
    k = kernel_from_state(st)
    return st, k, [(0, free_sources(st)), (1, harmonic_sources(st, n=1)), (2, harmonic_sources(st, n=2))]


def run_density1d(cfg, ctx: RunContext) -> Outcome:
    par = cfg.params
    h = cfg.hbars[0]
    g = build_grid(cfg, h) if "grid" in cfg.data else SpatialGrid(256, 16.0)
    out = Outcome()
    rows = []
    gerr = 0.0
    for k in range(int(par.get("kmax", 4)) + 1):
        a, b = gamma_k(k), gamma_quadrature(k)
        gerr = max(gerr, abs(a - b))
        rows.append((k, a, b, abs(a - b)))
    out.tables["gamma"] = (("k", "closed_form", "quadrature", "abs_err"), rows)
    out.checks.append(at_most("gamma_quadrature", gerr, float(par.get("gamma_tol", 1e-10))))

    rng = ctx.rng
    yg = SpatialGrid(int(par.get("corpus_ny", 256)), float(par.get("corpus_ylength", 20.0)))
    xi = np.linspace(-30.0, 30.0, 61)
    worst, rows = 0.0, []
    for i in range(int(par.get("corpus_size", 20))):
        n = i % 3
        f, b = corpus.random_source_instance(rng, n, yg, xi)
        rep = mollifier_machinery(f, b, xi, yg, n)
        worst = max(worst, rep.worst)
        rows.append((i, n, rep.worst, rep.holds))
    out.tables["mollifier"] = (("instance", "n", "max_ratio", "holds"), rows)
    out.checks.append(at_most("mollifier_ratio", worst, 1.0))

    _, k, cases = density_cases(g, h)
    rows = []
    for n, src in cases:
        rep = density_sobolev_1d(k, src)
        rows.append((n, rep.s, rep.lhs, rep.rhs_impl, rep.rhs_trace_form, rep.empirical_constant,
                     rep.decomposition_residual, rep.passed))
        out.checks.append(Check(f"assembled_bound_n{n}", rep.lhs / rep.rhs_impl, "lhs/rhs <= 1", rep.passed))
    out.tables["density_bound"] = (("n", "s", "lhs", "rhs_impl", "rhs_trace_form", "empirical_constant",
                                    "decomposition_residual", "pass"), rows)
    return out


RUNNERS = {
    "transform": run_transform,
    "evolve": run_evolve,
    "sweep": run_sweep,
    "purity": run_purity,
    "averaging": run_averaging,
    "madelung": run_madelung,
    "density1d": run_density1d,
}


def run_experiment(cfg, ctx: RunContext = None) -> Outcome:
    return RUNNERS[cfg.kind](cfg, ctx or RunContext(cfg.seed))
