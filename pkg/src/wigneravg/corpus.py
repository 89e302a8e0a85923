"""Seeded state and data corpora shared by the runner and the tests."""
import warnings

import numpy as np

from .errors import BoundaryDecayWarning
from .grid import SpatialGrid, spectral_derivative
from .states import QuantumState, coherent_state, mixed_state, scaled_state, wkb_state

PURITY_HBAR = 0.1


def purity_grid():
    return SpatialGrid(512, 16.0)


def pure_corpus(rng, grid=None, hbar=PURITY_HBAR):
    """Ten labelled pure states: four coherent, three WKB, three scaled.

    Parameters are drawn from ranges where the kernel is resolved on the
    default grid (amplitudes narrow enough for the y-extent of the box).
    """
    g = grid or purity_grid()
    u = rng.uniform
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        for _ in range(4):
            q, p = u(-1, 1), u(-1, 1)
            out.append((f"coherent q={q:.3f} p={p:.3f}", QuantumState.pure(coherent_state(g, q, p, hbar))))
        phases = [f"{u(-1, 1):.3f}*x", f"sin({u(0.5, 1.5):.3f}*x)", f"{u(0.05, 0.25):.3f}*x^2"]
        for S in phases:
            a = f"exp(-x^2)*(1+{u(0, 0.3):.3f}*cos(x))"
            out.append((f"wkb a={a} S={S}", QuantumState.pure(wkb_state(g, a, S, hbar))))
        for prof in ("exp(-x^2/2)", "1/cosh(x)^2", "exp(-x^2/2)*(1+0.2*x^2)"):
            alpha, p = u(0.3, 0.6), u(-0.5, 0.5)
            out.append((f"scaled a={prof} alpha={alpha:.3f} p={p:.3f}",
                        QuantumState.pure(scaled_state(g, prof, p, alpha, hbar))))
    return out


def mixture_corpus(rng, grid=None, hbar=PURITY_HBAR, min_weight=0.2):
    """Ten rank-2 mixtures with smaller weight in [min_weight, 0.5]."""
    g = grid or purity_grid()
    u = rng.uniform
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        for i in range(10):
            w = u(min_weight, 0.5)
            q1, p1 = u(-0.5, 0.5), u(-0.5, 0.5)
            dq, dp = u(0.1, 1.0) * rng.choice([-1, 1]), u(0.0, 1.0) * rng.choice([-1, 1])
            a = coherent_state(g, q1, p1, hbar)
            if i % 3 == 2:
                b = wkb_state(g, "exp(-x^2)", f"{p1 + dp:.3f}*x", hbar)
                label = f"coherent+wkb w={w:.3f}"
            else:
                b = coherent_state(g, q1 + dq, p1 + dp, hbar)
                label = f"coherent pair w={w:.3f} dq={dq:.3f} dp={dp:.3f}"
            out.append((label, mixed_state([a, b], [1 - w, w])))
    return out


def random_positive_density(rng, grid=None, modes=4, amplitude=0.3):
    """Normalised trigonometric polynomial bounded below by a positive constant."""
    g = grid or SpatialGrid(256, 2 * np.pi)
    x = g.nodes
    kbase = 2 * np.pi / g.length
    r = np.full(g.n, 1.0)
    for k in range(1, modes + 1):
        r += amplitude / k * rng.normal() * np.cos(k * kbase * x + rng.uniform(0, 2 * np.pi))
    r = np.maximum(r, 0) + 0.0
    if r.min() <= 0.05:
        r += 0.05 - r.min()
    return g, r / (r.sum() * g.spacing)


def random_source_instance(rng, n, ygrid: SpatialGrid, xi):
    """A valid (f, [b_0..b_n]) with xi d_y f = sum_k b_k y^k on ``ygrid``.

    f is a random sum of complex Gaussian bumps in y with xi-dependent
    coefficients; b_1..b_n are random bumps and b_0 takes the remainder.
    """
    y = ygrid.nodes
    nxi = len(xi)
    width = 0.05 * ygrid.length

    def bumps(count):
        out = np.zeros((nxi, ygrid.n), dtype=complex)
        for _ in range(count):
            c = (rng.normal(size=nxi) + 1j * rng.normal(size=nxi)) / (1 + np.abs(xi)) ** rng.uniform(0, 1)
            a = rng.uniform(-0.15, 0.15) * ygrid.length
            s = width * rng.uniform(0.3, 1.0)
            out += c[:, None] * np.exp(-((y - a) / s) ** 2 / 2)[None, :]
        return out

    f = bumps(3)
    fy = spectral_derivative(f, ygrid, 1, axis=1)
    src = [None] + [bumps(2) * rng.uniform(0.1, 1.0) for _ in range(n)]
    b0 = xi[:, None] * fy - sum(src[k] * y[None, :] ** k for k in range(1, n + 1))
    src[0] = b0
    return f, np.array(src)
