import math

import numpy as np
import pytest
from scipy.integrate import quad

from wigneravg.averaging import (CSV_HEADER, SpaceTimeField, check_geometric, check_uniform_bound,
                                 decomposition_residual, density_sobolev_1d, equilibrated_eps,
                                 fit_loglog, free_sources, gamma_k, harmonic_sources,
                                 homogeneous_half_bound, hs_norm, mollifier_machinery,
                                 velocity_average)
from wigneravg.corpus import random_source_instance
from wigneravg.errors import (DecompositionError, HypothesisViolationError, InvalidParameterError,
                              InvalidSweepError, ResolutionError)
from wigneravg.evolution import EvolutionConfig, von_neumann_evolve
from wigneravg.grid import PhaseGrid, SpatialGrid, spectral_derivative
from wigneravg.states import Potential, QuantumState, coherent_state
from wigneravg.wigner import KernelField, kernel_from_state, moments, wigner_from_state

H = 0.1


@pytest.fixture
def g():
    return SpatialGrid(256, 16.0)


def coh(g, q=0.0, p=0.0, h=H):
    return QuantumState.pure(coherent_state(g, q, p, h))


def test_unit_cutoff_gives_density(g):
    st = coh(g, 0.5, 0.4)
    f = velocity_average(st, cutoff=None)
    assert f.untruncated
    np.testing.assert_allclose(f.values[0], st.density, atol=1e-12)
    assert velocity_average(st, cutoff=lambda xi: np.ones_like(xi)).untruncated


def test_linear_cutoff_gives_momentum_current(g):
    w = wigner_from_state(coh(g, 0.5, 0.4))
    f = velocity_average(w, cutoff=lambda xi: xi)
    np.testing.assert_allclose(f.values[0], 2.0 * moments(w, mass=2.0).current, atol=1e-12)


def test_gaussian_cutoff_quadrature_constant(g):
    st = coh(g, 0.3, 0.0)
    f = velocity_average(st)
    np.testing.assert_allclose(f.values[0], st.density / math.sqrt(1 + H / 2), atol=1e-12)


def test_cutoff_must_be_resolved(g):
    with pytest.raises(ResolutionError):
        velocity_average(coh(g), cutoff=lambda xi: np.cos(40 * xi))
    with pytest.raises(ResolutionError):
        velocity_average(coh(g), cutoff=lambda xi: 0 * xi)


def tapered_mode(nt, nx, tau0, kap0):
    xg = SpatialGrid(nx, 2 * np.pi * 4)
    t = np.arange(nt) * (2 * np.pi * 4 / nt)
    vals = np.cos(tau0 * t[:, None] + kap0 * xg.nodes[None, :])
    return SpaceTimeField(vals, t, xg)


def test_hs_norm_order_zero_is_l2(rng):
    xg = SpatialGrid(64, 5.0)
    t = np.linspace(0, 1, 16)
    f = SpaceTimeField(rng.normal(size=(16, 64)), t, xg)
    from scipy.signal.windows import tukey
    win = np.outer(tukey(16, 0.2), tukey(64, 0.2))
    l2 = math.sqrt(np.sum((f.values * win) ** 2) * f.dt * xg.spacing)
    assert hs_norm(f, 0.0) == pytest.approx(l2, rel=1e-10)


def test_hs_norm_single_mode():
    tau0, kap0 = 2.0, 3.0
    f = tapered_mode(256, 256, tau0, kap0)
    base = hs_norm(f, 0.0)
    for s in (0.25, 0.5, 1.0):
        assert hs_norm(f, s) ** 2 == pytest.approx((1 + tau0 ** 2 + kap0 ** 2) ** s * base ** 2, rel=0.02)


def test_hs_norm_monotone_and_log_convex(rng):
    xg = SpatialGrid(64, 5.0)
    f = SpaceTimeField(rng.normal(size=(32, 64)), np.linspace(0, 2, 32), xg)
    ss = np.linspace(0, 1, 6)
    vals = [hs_norm(f, s) for s in ss]
    assert np.all(np.diff(vals) >= 0)
    n0, n1 = vals[0], vals[-1]
    for s, v in zip(ss, vals):
        assert v ** 2 <= n0 ** (2 * (1 - s)) * n1 ** (2 * s) * (1 + 1e-12)


def test_hs_norm_rejects_bad_order():
    with pytest.raises(InvalidParameterError):
        hs_norm(tapered_mode(8, 8, 0, 0), 1.5)


def test_fit_loglog_exact_power():
    h = np.array([0.2, 0.1, 0.05])
    slope, icpt, res = fit_loglog(h, 3.0 * h ** 0.7)
    assert slope == pytest.approx(0.7) and math.exp(icpt) == pytest.approx(3.0) and res < 1e-12


@pytest.mark.parametrize("h", [[0.1], [0.2, 0.1, 0.04], [0.1, -0.05], [0.1, 0.1]])
def test_check_geometric_rejects(h):
    with pytest.raises(InvalidSweepError):
        check_geometric(h)


def harmonic_family(g, hs, states):
    out = []
    for h in hs:
        ec = EvolutionConfig(0.05, 1.0, "von_neumann", record_stride=2)
        out.append((h, von_neumann_evolve(states(h), Potential.harmonic(), ec)))
    return out


def test_uniform_bound_rejects_pure_family(g):
    hs = [0.2, 0.1, 0.05, 0.025]
    fam = [(h, coh(SpatialGrid(512, 10.0), 1.0, 0.0, h)) for h in hs]
    with pytest.raises(HypothesisViolationError):
        check_uniform_bound(fam)
    rep = check_uniform_bound(fam, enforce_hypothesis=False)
    assert len(rep.rows()) == 5 and len(CSV_HEADER) == len(rep.rows()[0])


def test_uniform_bound_translation_invariant():
    xg = SpatialGrid(128, 10.0)
    hs = [0.2, 0.1, 0.05, 0.025]
    t = np.linspace(0, 1, 16)
    fields = [SpaceTimeField(np.exp(-(xg.nodes[None, :] - np.cos(t)[:, None]) ** 2 / h), t, xg) for h in hs]
    a = check_uniform_bound(list(zip(hs, fields)), enforce_hypothesis=False)
    b = check_uniform_bound([(h, f.shifted(7)) for h, f in zip(hs, fields)], enforce_hypothesis=False)
    assert a.fitted_exponent == pytest.approx(b.fitted_exponent, rel=1e-6)
    np.testing.assert_allclose(a.norms, b.norms, rtol=1e-2)


@pytest.mark.parametrize("k,closed", [(0, 1 / math.sqrt(2 * np.pi)), (1, 2 / (3 * math.sqrt(2 * np.pi)))])
def test_gamma_constants(k, closed):
    assert gamma_k(k) == pytest.approx(closed, rel=1e-15)


def test_gamma_matches_quadrature():
    for k in range(5):
        val, _ = quad(lambda y: y ** (2 * k + 1) * math.exp(-y * y / 2) / math.sqrt(2 * np.pi), 0, np.inf,
                      epsabs=1e-14, epsrel=1e-13)
        assert abs(val / (2 * k + 1) - gamma_k(k)) <= 1e-10


def test_equilibrated_eps():
    xi = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(equilibrated_eps(xi, 0), [2.0, 1.0, 0.25])
    np.testing.assert_allclose(equilibrated_eps(xi, 1), [2.0, 1.0, 0.5])


@pytest.fixture
def yg():
    return SpatialGrid(256, 20.0)


def test_mollifier_gaussian_example(yg):
    xi = np.linspace(-10, 10, 41)
    f = np.exp(-yg.nodes ** 2 / 2)[None, :] * (1 + 0 * xi[:, None])
    b0 = xi[:, None] * spectral_derivative(f, yg, 1, axis=1)
    rep = mollifier_machinery(f, b0[None], xi, yg, 0)
    assert rep.holds and rep.worst < 1.0
    assert np.all(rep.ratio[xi != 0] > 0)


def test_mollifier_zero_field(yg):
    xi = np.linspace(-3, 3, 7)
    z = np.zeros((7, yg.n))
    rep = mollifier_machinery(z, np.zeros((2, 7, yg.n)), xi, yg, 1)
    assert np.all(rep.lhs == 0) and np.all(rep.rhs == 0) and rep.holds


def test_mollifier_random_instances(yg, rng):
    xi = np.linspace(-30, 30, 61)
    for i in range(6):
        n = i % 3
        f, b = random_source_instance(rng, n, yg, xi)
        fy = spectral_derivative(f, yg, 1, axis=1)
        recon = sum(b[k] * yg.nodes[None, :] ** k for k in range(n + 1))
        assert np.max(np.abs(xi[:, None] * fy - recon)) <= 1e-8 * np.max(np.abs(recon))
        assert mollifier_machinery(f, b, xi, yg, n).holds


def test_mollifier_shape_check(yg):
    with pytest.raises(InvalidParameterError):
        mollifier_machinery(np.zeros((3, yg.n)), np.zeros((1, 3, yg.n)), np.ones(3), yg, 1)


def test_density_bound_cases(g):
    st = coh(g, 1.0, 0.5)
    k = kernel_from_state(st)
    for n, src in [(0, free_sources(st)), (1, harmonic_sources(st, n=1)), (2, harmonic_sources(st, n=2))]:
        rep = density_sobolev_1d(k, src)
        assert rep.s == pytest.approx(1 / (2 * (n + 1)))
        assert rep.decomposition_residual <= 1e-8
        assert rep.passed and rep.lhs <= rep.rhs_impl
        assert rep.empirical_constant > 0


def test_density_bound_rejects_wrong_sources(g):
    st = coh(g, 1.0, 0.5)
    k = kernel_from_state(st)
    with pytest.raises(DecompositionError):
        density_sobolev_1d(k, harmonic_sources(st, n=1)[:1])
    assert decomposition_residual(k, free_sources(st)) <= 1e-8


def test_stationary_eigenstate_needs_degree_two_regrouping(g):
    st = coh(g, 0.0, 0.0)          # ground state of the unit oscillator
    src = harmonic_sources(st, n=2)
    assert np.max(np.abs(src[0])) <= 1e-10 * np.max(np.abs(src[1]))
    assert decomposition_residual(kernel_from_state(st), src) <= 1e-8


def test_homogeneous_half_bound_ratio_bounded():
    ratios = []
    for h in (0.2, 0.1, 0.05, 0.025):
        g = SpatialGrid(512, 12.0)
        lhs, rhs = homogeneous_half_bound(kernel_from_state(coh(g, 0.5, 0.3, h)))
        ratios.append(lhs / rhs)
    assert max(ratios) / min(ratios) < 3.0


def test_homogeneous_half_bound_constant_density():
    pg = PhaseGrid.for_hbar(SpatialGrid(64, 8.0), H)
    vals = np.ones((64, 1)) * np.exp(-pg.y ** 2 / 8)[None, :]
    lhs, _ = homogeneous_half_bound(KernelField(vals, pg, H))
    assert lhs <= 1e-12


def test_homogeneous_half_bound_dilation():
    g = SpatialGrid(256, 16.0)
    k = kernel_from_state(coh(g, 0.5, 0.3))
    a = homogeneous_half_bound(k)
    for lam in (2.0, 0.5):
        pg = PhaseGrid(SpatialGrid(256, 16.0 * lam), k.phase.ygrid)
        b = homogeneous_half_bound(KernelField(k.values, pg, H))
        assert b[0] / b[1] == pytest.approx(a[0] / a[1], rel=1e-10)
