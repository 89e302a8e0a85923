import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wigneravg.errors import (BoundaryDecayWarning, InvalidParameterError, InvalidStateError,
                              ResolutionError)
from wigneravg.grid import SpatialGrid, spectral_derivative
from wigneravg.states import (Potential, QuantumState, WaveFunction, coherent_state,
                              hermite_functions, hilbert_schmidt_trace, mixed_state, normalized,
                              orthonormalize, rank_lower_bound, satisfies_hs_scaling, scaled_state,
                              wkb_state)


def grad_rho_sq(psi):
    g = psi.grid
    rho = psi.density
    return psi.hbar ** 2 * float(np.sum(spectral_derivative(rho, g) ** 2)) * g.spacing


def test_coherent_value_at_centre():
    g = SpatialGrid(256, 24.0)
    psi = coherent_state(g, 0.0, 0.0, 1.0)
    assert psi.samples[g.n // 2].real == pytest.approx(np.pi ** -0.25, rel=1e-10)
    assert psi.samples[g.n // 2].real == pytest.approx(0.751126, abs=1e-6)


@given(st.floats(-1, 1), st.floats(-2, 2), st.floats(0.05, 0.5))
@settings(max_examples=25, deadline=None)
def test_coherent_normalised_with_variance_half_hbar(q, p, hbar):
    g = SpatialGrid(512, 16.0)
    psi = coherent_state(g, q, p, hbar)
    rho = psi.density
    x = g.nodes
    assert g.integrate(rho) == pytest.approx(1.0, abs=1e-10)
    mean = g.integrate(x * rho)
    assert mean == pytest.approx(q, abs=1e-10)
    assert g.integrate((x - mean) ** 2 * rho) == pytest.approx(hbar / 2, rel=1e-8)


def test_coherent_grad_rho_closed_form():
    # the Gaussian integral gives hbar^(1/2)/sqrt(2 pi) for d = 1
    hbar = 0.01
    g = SpatialGrid(1024, 3.0)
    val = grad_rho_sq(coherent_state(g, 0.0, 0.3, hbar))
    assert val == pytest.approx(math.sqrt(hbar / (2 * np.pi)), rel=1e-8)
    assert val == pytest.approx(0.0398942, abs=1e-7)


def test_coherent_margin_warning_and_error():
    g = SpatialGrid(64, 4.0)
    with pytest.warns(BoundaryDecayWarning):
        coherent_state(g, 1.8, 0.0, 0.1)
    with pytest.raises(ResolutionError):
        coherent_state(g, 1.8, 0.0, 0.1, decay="error")


def test_periodized_coherent_state_is_smooth_and_positive():
    h = 0.05
    L = 6 * math.sqrt(h)
    g = SpatialGrid(128, L)
    psi = coherent_state(g, 0.0, 2 * np.pi * h / L, h, periodize=True)
    assert np.min(np.abs(psi.samples)) > 0
    with pytest.raises(InvalidParameterError):
        coherent_state(g, 0.0, 0.1234, h, periodize=True)


def test_wkb_zero_phase_real_positive(box):
    psi = wkb_state(box, "exp(-x^2)", "0", 0.1)
    assert np.all(psi.samples.real > 0)
    assert np.max(np.abs(psi.samples.imag)) == 0


def test_wkb_density_independent_of_hbar(box):
    rhos = [wkb_state(box, "exp(-x^2)", "sin(x)", h).density for h in (0.2, 0.05, 0.01)]
    np.testing.assert_allclose(rhos[0], rhos[1], atol=1e-14)
    np.testing.assert_allclose(rhos[0], rhos[2], atol=1e-14)


def test_wkb_grad_rho_quadratic_in_hbar(box):
    vals = [grad_rho_sq(wkb_state(box, "exp(-x^2)", "x", h)) for h in (0.2, 0.1)]
    assert vals[0] / vals[1] == pytest.approx(4.0, rel=1e-12)


@pytest.mark.parametrize("a", ["0", "0*x"])
def test_wkb_rejects_zero_amplitude(box, a):
    with pytest.raises(InvalidStateError):
        wkb_state(box, a, "0", 0.1)


def test_scaled_closed_form_scaling():
    # hbar^2 |grad rho|^2 = hbar^(2-3 alpha) |grad a^2|^2 with a normalised
    g = SpatialGrid(2048, 16.0)
    a = "pi^(-1/4)*exp(-x^2/2)"
    ref = math.sqrt(2 / np.pi) / 2      # int |d/dx (e^{-x^2}/sqrt(pi))|^2 dx
    for alpha, h in [(0.3, 0.05), (0.5, 0.02)]:
        psi = scaled_state(g, a, 0.4, alpha, h)
        assert grad_rho_sq(psi) == pytest.approx(h ** (2 - 3 * alpha) * ref, rel=1e-8)


def test_scaled_alpha_zero_is_wkb(box):
    a, p, h = "exp(-x^2/2)", 0.7, 0.1
    s = scaled_state(box, a, p, 0.0, h)
    w = wkb_state(box, a, f"{p}*x", h)
    np.testing.assert_allclose(s.samples, w.samples, atol=1e-13)


def test_scaled_exponent_over_sweep():
    g = SpatialGrid(2048, 16.0)
    alpha = 0.4
    hs = 0.2 * 0.5 ** np.arange(4)
    vals = [math.sqrt(grad_rho_sq(scaled_state(g, "exp(-x^2/2)", 0.0, alpha, h))) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(vals), 1)[0]
    want = 1 - 3 * alpha / 2
    assert abs(slope - want) <= 0.05 * abs(want)


def test_scaled_resolution_and_alpha_checks():
    g = SpatialGrid(64, 16.0)
    with pytest.raises(ResolutionError):
        scaled_state(g, "exp(-x^2/2)", 0.0, 0.9, 0.01)
    with pytest.raises(InvalidParameterError):
        scaled_state(g, "exp(-x^2/2)", 0.0, 1.0, 0.1)


def hermite_waves(g, n, h):
    H = hermite_functions(g, n, h)
    return [normalized(H[k], g, h) for k in range(n)]


def test_hermite_functions_orthonormal(box):
    H = hermite_functions(box, 12, 0.1)
    gram = H @ H.T * box.spacing
    np.testing.assert_allclose(gram, np.eye(12), atol=1e-10)


@pytest.mark.parametrize("N", [1, 2, 5])
def test_uniform_mixture_purity(box, N):
    st_ = mixed_state(hermite_waves(box, N, 0.1), np.ones(N) / N)
    assert hilbert_schmidt_trace(st_) == pytest.approx(1 / N)
    assert st_.rank == N


def test_rank_from_hbar_meets_scaling(box):
    h = 0.05
    N = math.ceil(1 / (2 * np.pi * h))
    st_ = mixed_state(hermite_waves(box, N, h), np.ones(N) / N)
    assert hilbert_schmidt_trace(st_) <= 2 * np.pi * h
    assert satisfies_hs_scaling(st_, 1.0, "trace")
    assert satisfies_hs_scaling(st_, 1.0, "wigner")


def test_pure_state_scaling_conventions(box):
    h = 0.1
    st_ = QuantumState.pure(coherent_state(box, 0, 0, h))
    assert not satisfies_hs_scaling(st_, 1.0)
    assert satisfies_hs_scaling(st_, 1.01 / (2 * np.pi * h), "wigner")
    with pytest.raises(InvalidParameterError):
        satisfies_hs_scaling(st_, 1.0, "bogus")


def test_negative_weight_rejected(box):
    waves = hermite_waves(box, 2, 0.1)
    with pytest.raises(InvalidParameterError):
        mixed_state(waves, [1.2, -0.2])


def test_non_orthonormal_input_is_orthonormalised(box, quiet):
    a = coherent_state(box, 0.0, 0.0, 0.1)
    b = coherent_state(box, 0.3, 0.0, 0.1)
    with pytest.raises(InvalidStateError):
        QuantumState(np.array([0.5, 0.5]), (a, b), 0.1)
    st_ = mixed_state([a, b], [0.5, 0.5])
    assert abs(st_.waves[0].inner(st_.waves[1])) < 1e-12


def test_gram_schmidt_idempotent(box):
    waves = hermite_waves(box, 4, 0.1)
    once, _ = orthonormalize(waves)
    twice, _ = orthonormalize(once)
    for a, b in zip(once, twice):
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-12)


def test_dependent_waves_rejected(box):
    a = coherent_state(box, 0.0, 0.0, 0.1)
    with pytest.raises(InvalidStateError):
        mixed_state([a, a], [0.5, 0.5])


def test_wavefunction_norm_check(box):
    with pytest.raises(InvalidStateError):
        WaveFunction(np.ones(box.n), box, 0.1)


@pytest.mark.parametrize("C,hbar,expected", [(1.0, 1 / (2 * np.pi), 1), (1.0, 1 / (20 * np.pi), 10),
                                             (2.0, 1 / (20 * np.pi), 5), (1.0, 0.05, 4)])
def test_rank_lower_bound(C, hbar, expected):
    assert rank_lower_bound(C, hbar) == expected


def test_rank_lower_bound_pure_state_compatible():
    h0 = 0.1
    assert rank_lower_bound(1.0001 / (2 * np.pi * h0), h0) == 1
    assert rank_lower_bound(1.0, 0.1, d=2) == math.ceil(1 / (2 * np.pi * 0.1) ** 2)


def test_potential_from_expression_and_bounds():
    V = Potential.from_expression("sin(x)")
    x = np.linspace(-3, 3, 101)
    np.testing.assert_allclose(V.derivative(x), np.cos(x), atol=1e-14)
    sup, lip = V.sampled_bounds(np.linspace(-4, 4, 1001))
    assert sup == pytest.approx(1.0, abs=1e-4) and lip == pytest.approx(1.0, abs=1e-4)


def test_harmonic_declared_lipschitz_on_box():
    V = Potential.harmonic(2.0, box=(-3.0, 3.0))
    assert V.lipschitz == pytest.approx(12.0)
    assert V(np.array([1.0]))[0] == pytest.approx(2.0)
