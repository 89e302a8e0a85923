"""Rank-one tests on the Weyl-variable kernel.

For a pure state F = R~ satisfies (4/h^2) d_y(d_y F/F) = d_x(d_x F/F); for
a mixture it does not.  All log-derivatives are taken as quotients
(F'' F - F'^2)/F^2, never through a branch of the complex logarithm.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import spectral_derivative
from .wigner import KernelField

MASK_TAU = 1e-6
PURE_THRESHOLD = 1e-6
ROI_LEVEL = 1e-3
INCONCLUSIVE_FRACTION = 0.5


@dataclass
class PurityReport:
    residual_grid: np.ndarray
    mask: np.ndarray
    masked_fraction: float
    max_residual: float
    spectral_purity: float
    verdict: str

    @property
    def is_pure(self):
        return self.verdict == "pure"


def _derivs(k: KernelField):
    p = k.phase
    F = k.values
    Fx = spectral_derivative(F, p.xgrid, 1, axis=0)
    Fxx = spectral_derivative(F, p.xgrid, 2, axis=0)
    Fy = spectral_derivative(F, p.ygrid, 1, axis=1)
    Fyy = spectral_derivative(F, p.ygrid, 2, axis=1)
    return F, Fx, Fy, Fxx, Fyy


def smallness_mask(k: KernelField, tau=MASK_TAU):
    a = np.abs(k.values)
    return a > tau * float(a.max())


def region_of_interest(k: KernelField, level=ROI_LEVEL):
    """Cells where the state actually lives: rho(x) and the y-profile of |R~| above level*max."""
    a = np.abs(k.values)
    rho = np.abs(k.diagonal)
    rows = rho >= level * float(rho.max())
    cols = a.max(axis=0) >= level * float(a.max())
    return rows[:, None] & cols[None, :]


def curvature_scale(k: KernelField, derivs=None, mask=None):
    """Median of |L| + |R| over the occupied, unmasked cells: the typical size of
    the second log-derivatives, used to normalise residuals."""
    F, Fx, Fy, Fxx, Fyy = derivs or _derivs(k)
    mask = smallness_mask(k) if mask is None else mask
    sel = region_of_interest(k) & mask
    if not sel.any():
        return 0.0
    f = F[sel]
    L = (4.0 / k.hbar ** 2) * (Fyy[sel] * f - Fy[sel] ** 2) / f ** 2
    R = (Fxx[sel] * f - Fx[sel] ** 2) / f ** 2
    return float(np.median(np.abs(L) + np.abs(R)))


def tatarskii_residuals(k: KernelField, weights=None, tau=MASK_TAU, threshold=PURE_THRESHOLD) -> PurityReport:
    """Normalised residual of the d=1 rank-one identity on the unmasked cells.

    With L = (4/h^2)(F_yy F - F_y^2)/F^2 and R = (F_xx F - F_x^2)/F^2 the
    residual at a cell is |L - R|/(|L| + |R| + kappa), kappa from
    :func:`curvature_scale`.  It is dimensionless, hbar-independent, and does
    not blow up in tails where log R~ is nearly linear.  ``masked_fraction``
    is taken over the region of interest (see :func:`region_of_interest`);
    over the whole torus it is dominated by empty space.
    """
    d = _derivs(k)
    F, Fx, Fy, Fxx, Fyy = d
    mask = smallness_mask(k, tau)
    kappa = curvature_scale(k, d, mask)
    res = kernels.tatarskii_residual(np.ascontiguousarray(F), np.ascontiguousarray(Fx),
                                     np.ascontiguousarray(Fy), np.ascontiguousarray(Fxx),
                                     np.ascontiguousarray(Fyy), float(k.hbar), kappa, mask)
    roi = region_of_interest(k)
    masked_fraction = float(np.count_nonzero(roi & ~mask)) / max(int(np.count_nonzero(roi)), 1)
    if not mask.any():
        masked_fraction = 1.0
    max_res = float(res[mask].max()) if mask.any() else float("nan")
    if weights is None:
        spectral = float("nan")
    else:
        w = np.asarray(weights, dtype=float)
        spectral = float(np.sum(w ** 2) / np.sum(w) ** 2)
    if masked_fraction > INCONCLUSIVE_FRACTION:
        verdict = "inconclusive"
    else:
        verdict = "pure" if max_res <= threshold else "mixed"
    return PurityReport(res, mask, masked_fraction, max_res, spectral, verdict)


def state_purity_report(state, phase=None, **kwargs):
    from .wigner import kernel_from_state
    return tatarskii_residuals(kernel_from_state(state, phase), weights=state.weights, **kwargs)


def wave_form_residual_1d(k: KernelField, tau=MASK_TAU):
    """Residual of (4/h^2) d_y^2 log R~ = d_x^2 log R~, split into modulus and phase.

    The modulus part uses Re of the quotients (the second derivatives of
    log|R~|) and the phase part uses Im (the second derivatives of the
    continuous phase), so no explicit unwrapping is needed.  Cells next to a
    masked cell are returned in the ``flagged`` mask, where the phase cannot
    be followed continuously.
    """
    d = _derivs(k)
    F, Fx, Fy, Fxx, Fyy = d
    mask = smallness_mask(k, tau)
    kappa = curvature_scale(k, d, mask)
    out = np.zeros(F.shape)
    f = F[mask]
    qy = (Fyy[mask] * f - Fy[mask] ** 2) / f ** 2
    qx = (Fxx[mask] * f - Fx[mask] ** 2) / f ** 2
    c = 4.0 / k.hbar ** 2
    mod = c * qy.real - qx.real
    ph = c * qy.imag - qx.imag
    den = np.abs(c * qy) + np.abs(qx) + kappa
    r = np.zeros(f.shape)
    nz = den > 0
    r[nz] = np.hypot(mod[nz], ph[nz]) / den[nz]
    out[mask] = r
    neighbour_masked = np.zeros_like(mask)
    for ax in (0, 1):
        for sh in (1, -1):
            neighbour_masked |= ~np.roll(mask, sh, axis=ax)
    flagged = mask & neighbour_masked
    return out, mask, flagged


def closure_residual(k: KernelField, tau=MASK_TAU):
    """F_yy - F_y^2/F - (h^2/4)(F_xx - F_x^2/F) on unmasked cells, and its relative size."""
    F, Fx, Fy, Fxx, Fyy = _derivs(k)
    mask = smallness_mask(k, tau)
    res = np.zeros(F.shape, dtype=complex)
    rel = np.zeros(F.shape)
    f = F[mask]
    q = 0.25 * k.hbar ** 2
    a = Fyy[mask] - Fy[mask] ** 2 / f
    b = q * (Fxx[mask] - Fx[mask] ** 2 / f)
    res[mask] = a - b
    den = np.abs(a) + np.abs(b)
    rr = np.zeros(f.shape)
    nz = den > 0
    rr[nz] = np.abs(a - b)[nz] / den[nz]
    rel[mask] = rr
    return res, rel, mask


def closure_trace_y0(k: KernelField, mass=1.0):
    """The closure identity at y = 0 written in moments.

    Returns (lhs, rhs) with lhs = 2 m rho E - m^2 J^2 from y-derivatives of
    R~ and rhs = -(h^2/4)(rho rho'' - rho'^2) from the density alone.
    """
    p = k.phase
    j0 = p.ygrid.n // 2
    F = k.values
    rho = F[:, j0].real
    Fy = spectral_derivative(F, p.ygrid, 1, axis=1)[:, j0]
    Fyy = spectral_derivative(F, p.ygrid, 2, axis=1)[:, j0]
    J = (-1j * Fy).real / mass
    E = (-Fyy).real / (2 * mass)
    lhs = 2 * mass * rho * E - mass ** 2 * J ** 2
    r1 = spectral_derivative(rho, p.xgrid, 1)
    r2 = spectral_derivative(rho, p.xgrid, 2)
    rhs = -0.25 * k.hbar ** 2 * (rho * r2 - r1 ** 2)
    return lhs, rhs
