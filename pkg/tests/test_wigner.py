import math
import warnings

import numpy as np
import pytest

from wigneravg.errors import BoundaryDecayWarning, InconsistencyError
from wigneravg.grid import SpatialGrid
from wigneravg.states import QuantumState, coherent_state, mixed_state, normalized, wkb_state
from wigneravg.wigner import (KernelField, kernel_from_state, kernel_from_wigner, l2_identity_check,
                              moments, moments_from_kernel, purity_double_sum, rho_hat,
                              tightness_and_oscillation, wigner_direct, wigner_from_kernel,
                              wigner_from_state)

H = 0.1


@pytest.fixture
def small():
    return SpatialGrid(64, 8.0)


@pytest.fixture
def fine():
    return SpatialGrid(512, 16.0)


def pure(g, q=0.0, p=0.0, h=H):
    return QuantumState.pure(coherent_state(g, q, p, h))


def pair(g, w=0.5, h=H):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        return mixed_state([coherent_state(g, -0.6, 0.2, h), coherent_state(g, 0.7, -0.4, h)], [1 - w, w])


def test_coherent_kernel_diagonal_is_gaussian(fine):
    k = kernel_from_state(pure(fine, q=0.4, p=0.3))
    x = fine.nodes
    np.testing.assert_allclose(k.diagonal, (np.pi * H) ** -0.5 * np.exp(-(x - 0.4) ** 2 / H), atol=1e-12)


def test_kernel_diagonal_real_nonnegative(fine):
    d = kernel_from_state(pair(fine)).diagonal
    assert np.max(np.abs(d.imag)) < 1e-14
    assert d.real.min() > -1e-14


def test_kernel_linear_in_the_state(fine):
    mix = pair(fine)
    parts = [kernel_from_state(QuantumState.pure(v)).values for v in mix.waves]
    want = sum(w * p for w, p in zip(mix.weights, parts))
    np.testing.assert_allclose(kernel_from_state(mix).values, want, atol=1e-13)


def test_kernel_hermitian(fine):
    assert kernel_from_state(pair(fine)).hermitian_defect() < 1e-12


def test_coherent_wigner_closed_form(small):
    w = wigner_from_state(pure(small))
    X, XI = np.meshgrid(w.phase.x, w.phase.xi, indexing="ij")
    want = np.exp(-X ** 2 / H - XI ** 2 / H) / (np.pi * H)
    assert np.max(np.abs(w.values - want)) <= 1e-6


def test_direct_quadrature_oracle_64_grid(small):
    st = pure(small, q=0.3, p=0.5)
    w = wigner_from_state(st)
    direct = wigner_direct(st, small.nodes, w.phase.xi)
    assert w.values.shape == (64, 64)
    assert np.max(np.abs(direct - w.values)) <= 1e-6


def test_round_trip(fine):
    w = wigner_from_state(pair(fine))
    back = wigner_from_kernel(kernel_from_wigner(w))
    np.testing.assert_allclose(back.values, w.values, atol=1e-10 * np.abs(w.values).max())


def test_mass_and_realness(fine):
    for st in (pure(fine, 0.5, -0.5), pair(fine)):
        k = kernel_from_state(st)
        raw = k.phase.xigrid.forward(k.values, axis=1) / (2 * np.pi)
        assert np.max(np.abs(raw.imag)) <= 1e-10 * np.max(np.abs(raw.real))
        assert wigner_from_kernel(k).mass() == pytest.approx(1.0, abs=1e-8)


def test_linearity(fine):
    mix = pair(fine, 0.3)
    parts = [wigner_from_state(QuantumState.pure(v)).values for v in mix.waves]
    np.testing.assert_allclose(wigner_from_state(mix).values, 0.7 * parts[0] + 0.3 * parts[1], atol=1e-13)


def test_first_excited_state_is_negative_at_origin(fine):
    from wigneravg.states import hermite_functions
    psi = normalized(hermite_functions(fine, 2, H)[1], fine, H)
    w = wigner_from_state(QuantumState.pure(psi))
    assert w.values[fine.n // 2, w.phase.ygrid.n // 2] == pytest.approx(-1 / (np.pi * H), rel=1e-10)


def test_hermitian_violation_raises(fine):
    k = kernel_from_state(pure(fine))
    bad = k.values.copy()
    bad[:, 3 * bad.shape[1] // 4] += 1e-3
    with pytest.raises(InconsistencyError):
        wigner_from_kernel(KernelField(bad, k.phase, k.hbar))


def test_current_for_moving_packet(fine):
    m = moments(wigner_from_state(pure(fine, 0.2, 2.0)))
    np.testing.assert_allclose(m.current, 2.0 * m.rho, atol=1e-10)
    assert m.grid.integrate(m.rho) == pytest.approx(1.0, abs=1e-8)


def test_zero_current_for_real_state(fine):
    m = moments(wigner_from_state(pure(fine, 0.2, 0.0)))
    assert np.max(np.abs(m.current)) < 1e-12


def test_wkb_velocity_is_phase_gradient(fine):
    psi = wkb_state(fine, "exp(-x^2)", "0.5*x + 0.1*x^2", H)
    m = moments(wigner_from_state(QuantumState.pure(psi)), mass=1.0)
    x = fine.nodes
    bulk = np.abs(x) < 1.5
    u = m.current[bulk] / m.rho[bulk]
    # finite differences of S as the oracle
    S = 0.5 * x + 0.1 * x ** 2
    np.testing.assert_allclose(u, np.gradient(S, x)[bulk], atol=1e-10)


def test_moment_routes_agree(fine):
    w = wigner_from_state(pair(fine))
    a = moments(w, mass=2.0)
    b = moments_from_kernel(kernel_from_state(pair(fine)), mass=2.0)
    for f in ("rho", "current", "energy"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), atol=1e-8)


def test_cauchy_schwarz_defect_nonnegative(fine):
    for st in (pure(fine, 0.1, 1.0), pair(fine)):
        assert moments(wigner_from_state(st)).cauchy_schwarz_defect().min() >= -1e-8


def test_rho_hat_pure_and_plancherel(fine):
    st = pure(fine, 0.3, 0.5)
    k, rh = rho_hat(st)
    f = np.fft.fftshift(np.fft.fft(st.waves[0].samples)) * fine.spacing
    np.testing.assert_allclose(rh, np.abs(f) ** 2, atol=1e-14)
    dk = k[1] - k[0]
    assert rh.sum() * dk == pytest.approx(2 * np.pi, rel=1e-10)
    assert rh.min() >= 0


def test_rho_hat_coherent_centre_and_width(fine):
    p = 0.5
    k, rh = rho_hat(pure(fine, 0.0, p))
    dk = k[1] - k[0]
    mass = rh.sum() * dk
    mean = (k * rh).sum() * dk / mass
    var = ((k - mean) ** 2 * rh).sum() * dk / mass
    assert mean == pytest.approx(p / H, rel=1e-10)
    assert var == pytest.approx(1 / (2 * H), rel=1e-8)


def test_l2_identity_pure(fine):
    lhs, rhs, gap = l2_identity_check(pure(fine))
    assert rhs == pytest.approx(1 / (2 * np.pi * H))
    assert lhs == pytest.approx(1.59155, abs=1e-5)
    assert gap <= 1e-8


def test_l2_identity_random_rank3(rng):
    g = SpatialGrid(256, 8.0)
    for _ in range(3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryDecayWarning)
            waves = [coherent_state(g, c, rng.uniform(-0.5, 0.5), H) for c in rng.uniform(-0.5, 0.5, 3)]
        st = mixed_state(waves, rng.dirichlet(np.ones(3)))
        lhs, rhs, gap = l2_identity_check(st)
        assert gap <= 1e-8
        # the orthonormalised weights and a direct double sum agree
        assert purity_double_sum(st) == pytest.approx(st.purity(), abs=1e-12)


def test_l2_identity_uniform_mixture():
    g = SpatialGrid(256, 16.0)
    from wigneravg.states import hermite_functions
    Hs = hermite_functions(g, 4, H)
    st = mixed_state([normalized(Hs[j], g, H) for j in range(4)], np.ones(4) / 4)
    lhs, rhs, gap = l2_identity_check(st)
    assert rhs == pytest.approx(1 / (2 * np.pi * H) / 4)
    assert gap <= 1e-8


def test_tightness_coherent_family():
    g = SpatialGrid(1024, 16.0)
    fam = [pure(g, 0.5, 0.5, h) for h in (0.2, 0.1, 0.05)]
    out = tightness_and_oscillation(fam, [1.0, 2.0, 4.0])
    assert out["spatial_tight"] and out["momentum_tight"]
    for row in out["rows"]:
        assert np.all(np.diff(row["spatial_tail"]) <= 0)
        assert np.all(np.diff(row["momentum_tail"]) <= 0)
        # closed-form Gaussian tail at R=2: erfc((R-q)/sqrt(h)) + erfc((R+q)/sqrt(h)), halved
        h = row["hbar"]
        want = 0.5 * (math.erfc((2 - 0.5) / math.sqrt(h)) + math.erfc((2 + 0.5) / math.sqrt(h)))
        assert row["spatial_tail"][1] == pytest.approx(want, abs=2e-3 * math.sqrt(h) + 1e-12)


def test_momentum_tail_bounded_by_kinetic_energy():
    g = SpatialGrid(1024, 16.0)
    for h in (0.2, 0.1, 0.05):
        st = pure(g, 0.0, 0.7, h)
        m = moments_from_kernel(kernel_from_state(st))
        C = g.integrate(m.energy)
        R = np.array([1.5, 3.0])
        tails = tightness_and_oscillation([st], R)["rows"][0]["momentum_tail"]
        assert np.all(tails <= 2 * np.pi * 2 * C / R ** 2)


def test_compact_profile_has_no_far_tail(fine):
    psi = wkb_state(fine, lambda x: np.where(np.abs(x) < 1, (1 - x ** 2) ** 2, 0.0), "0", H)
    out = tightness_and_oscillation([QuantumState.pure(psi)], [7.0, 7.9])
    assert out["rows"][0]["spatial_tail"][-1] == 0.0
