"""Hot loops with a numba implementation and a numpy twin.

The public names at the bottom dispatch on ``_accel.USE_NUMBA``.  Both twins
are always importable so the benchmark and the equivalence tests can run
them side by side.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# --- direct Wigner sum ---------------------------------------------------
# W(x_i, xi_k) = dy/(2pi) * sum_j K(x_i, y_j) exp(-i xi_k y_j), evaluated at
# arbitrary (not grid-dual) momenta.  O(nx * ny * nxi); used as an oracle
# and for off-grid sampling.

@njit(cache=True)
def _direct_wigner_numba(kernel, y, xi, dy):
    nx, ny = kernel.shape
    nk = xi.shape[0]
    out = np.zeros((nx, nk))
    c = dy / (2.0 * np.pi)
    for k in range(nk):
        ph_re = np.cos(xi[k] * y)
        ph_im = -np.sin(xi[k] * y)
        for i in range(nx):
            acc = 0.0
            for j in range(ny):
                acc += kernel[i, j].real * ph_re[j] - kernel[i, j].imag * ph_im[j]
            out[i, k] = c * acc
    return out


def _direct_wigner_numpy(kernel, y, xi, dy):
    phase = np.exp(-1j * np.outer(y, xi))
    return (dy / (2.0 * np.pi)) * (kernel @ phase).real


# --- modified Gram-Schmidt with one re-orthogonalisation pass ------------

@njit(cache=True)
def _mgs_numba(vectors, cell, tol):
    m, n = vectors.shape
    q = vectors.copy()
    keep = np.ones(m, dtype=np.bool_)
    for i in range(m):
        for _ in range(2):
            for j in range(i):
                if not keep[j]:
                    continue
                proj = 0.0 + 0.0j
                for t in range(n):
                    proj += np.conj(q[j, t]) * q[i, t]
                proj *= cell
                for t in range(n):
                    q[i, t] -= proj * q[j, t]
        nrm = 0.0
        for t in range(n):
            nrm += q[i, t].real ** 2 + q[i, t].imag ** 2
        nrm = np.sqrt(nrm * cell)
        if nrm < tol:
            keep[i] = False
            continue
        for t in range(n):
            q[i, t] /= nrm
    return q, keep


def _mgs_numpy(vectors, cell, tol):
    q = vectors.astype(complex).copy()
    keep = np.ones(q.shape[0], dtype=bool)
    for i in range(q.shape[0]):
        for _ in range(2):
            for j in range(i):
                if keep[j]:
                    q[i] -= cell * np.vdot(q[j], q[i]) * q[j]
        nrm = np.sqrt(cell * np.vdot(q[i], q[i]).real)
        if nrm < tol:
            keep[i] = False
            continue
        q[i] /= nrm
    return q, keep


# --- log-quotient residual of the rank-one identity (d=1) ----------------
# L = (4/h^2)(F_yy F - F_y^2)/F^2, R = (F_xx F - F_x^2)/F^2,
# r = |L - R| / (|L| + |R| + kappa), kappa a global curvature scale.

@njit(cache=True)
def _tatarskii_numba(F, Fx, Fy, Fxx, Fyy, hbar, kappa, mask):
    nx, ny = F.shape
    out = np.zeros((nx, ny))
    c = 4.0 / (hbar * hbar)
    for i in range(nx):
        for j in range(ny):
            if not mask[i, j]:
                continue
            f = F[i, j]
            f2 = f * f
            lhs = c * (Fyy[i, j] * f - Fy[i, j] * Fy[i, j]) / f2
            rhs = (Fxx[i, j] * f - Fx[i, j] * Fx[i, j]) / f2
            den = abs(lhs) + abs(rhs) + kappa
            if den > 0.0:
                out[i, j] = abs(lhs - rhs) / den
    return out


def _tatarskii_numpy(F, Fx, Fy, Fxx, Fyy, hbar, kappa, mask):
    out = np.zeros(F.shape)
    f = F[mask]
    f2 = f * f
    lhs = (4.0 / hbar ** 2) * (Fyy[mask] * f - Fy[mask] ** 2) / f2
    rhs = (Fxx[mask] * f - Fx[mask] ** 2) / f2
    den = np.abs(lhs) + np.abs(rhs) + kappa
    r = np.zeros(f.shape)
    nz = den > 0
    r[nz] = np.abs(lhs[nz] - rhs[nz]) / den[nz]
    out[mask] = r
    return out


if USE_NUMBA:
    direct_wigner = _direct_wigner_numba
    mgs = _mgs_numba
    tatarskii_residual = _tatarskii_numba
else:
    direct_wigner = _direct_wigner_numpy
    mgs = _mgs_numpy
    tatarskii_residual = _tatarskii_numpy
