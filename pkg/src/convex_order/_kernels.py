"""Hot numeric kernels.

Each kernel exists twice: a loop formulation compiled with ``numba.njit`` and
a vectorized numpy formulation. The public names at the bottom of the module
dispatch to one or the other according to ``_config.USE_NUMBA``; both variants
stay importable (``*_loop`` / ``*_numpy``) so tests and benchmarks can compare
them directly.
"""
import numpy as np

from . import _config

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# -- simplex pivot -------------------------------------------------------------

def pivot_loop(T, r, c):
    m, n = T.shape
    piv = T[r, c]
    for j in range(n):
        T[r, j] /= piv
    T[r, c] = 1.0
    for i in range(m):
        if i == r:
            continue
        f = T[i, c]
        if f != 0.0:
            for j in range(n):
                T[i, j] -= f * T[r, j]
            T[i, c] = 0.0


def pivot_numpy(T, r, c):
    # integer literals keep object (Fraction) tableaus exact
    T[r] /= T[r, c]
    T[r, c] = 1
    col = T[:, c].copy()
    col[r] = 0
    T -= np.outer(col, T[r])
    T[:, c] = 0
    T[r, c] = 1


# -- cyclic Jacobi eigen-decomposition ------------------------------------------

def jacobi_eigh_loop(A, tol, max_sweeps):
    n = A.shape[0]
    a = A.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol * tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = cs * akp - sn * akq
                    a[k, q] = sn * akp + cs * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = cs * apk - sn * aqk
                    a[q, k] = sn * apk + cs * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = cs * vkp - sn * vkq
                    v[k, q] = sn * vkp + cs * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v


def jacobi_eigh_numpy(A, tol, max_sweeps):
    n = A.shape[0]
    a = np.array(A, dtype=float)
    v = np.eye(n)
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        if np.sum(a[iu] ** 2) <= tol * tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = cs * cp - sn * cq
                a[:, q] = sn * cp + cs * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = cs * rp - sn * rq
                a[q, :] = sn * rp + cs * rq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
    return np.diag(a).copy(), v


# -- survival-function thresholds over many directions ---------------------------

def thresholds_loop(proj_mu, m_mu, proj_nu, m_nu, base, tol):
    """First b >= base[r] where the nu and mu stop-loss transforms agree.

    Returns (thresholds, min_gap) where ``min_gap[r]`` is the smallest value of
    psi = phi_nu - phi_mu over b >= base[r]; a value below ``-tol`` means the
    projected pair is not cxp-ordered along that direction.
    """
    ndir = proj_mu.shape[0]
    nm = proj_mu.shape[1]
    nn = proj_nu.shape[1]
    out = np.empty(ndir)
    min_gap = np.empty(ndir)
    cand = np.empty(nm + nn + 1)
    for r in range(ndir):
        b0 = base[r]
        k = 0
        cand[k] = b0
        k += 1
        for i in range(nm):
            if proj_mu[r, i] > b0:
                cand[k] = proj_mu[r, i]
                k += 1
        for i in range(nn):
            if proj_nu[r, i] > b0:
                cand[k] = proj_nu[r, i]
                k += 1
        cs = np.sort(cand[:k])
        best = np.inf
        lowest = np.inf
        for s in range(k):
            b = cs[s]
            psi = 0.0
            for i in range(nn):
                z = proj_nu[r, i] - b
                if z > 0.0:
                    psi += m_nu[i] * z
            for i in range(nm):
                z = proj_mu[r, i] - b
                if z > 0.0:
                    psi -= m_mu[i] * z
            if psi < lowest:
                lowest = psi
            if psi <= tol and b < best:
                best = b
        if best == np.inf:
            best = cs[k - 1]
        out[r] = best
        min_gap[r] = lowest
    return out, min_gap


def thresholds_numpy(proj_mu, m_mu, proj_nu, m_nu, base, tol):
    cand = np.concatenate([base[:, None], proj_mu, proj_nu], axis=1)
    valid = cand >= base[:, None]
    psi = (np.maximum(proj_nu[:, None, :] - cand[:, :, None], 0.0) @ m_nu
           - np.maximum(proj_mu[:, None, :] - cand[:, :, None], 0.0) @ m_mu)
    lowest = np.where(valid, psi, np.inf).min(axis=1)
    hit = valid & (psi <= tol)
    out = np.where(hit, cand, np.inf).min(axis=1)
    fallback = np.where(valid, cand, -np.inf).max(axis=1)
    out = np.where(np.isfinite(out), out, fallback)
    return out, lowest


# -- path accumulation -------------------------------------------------------------

def accumulate_loop(out, z, A, counts, comp, J):
    """out += z A^T + (counts - comp) J^T, row by row."""
    npaths, d = out.shape
    nw = z.shape[1]
    nj = counts.shape[1]
    for p in range(npaths):
        for i in range(d):
            s = 0.0
            for k in range(nw):
                s += A[i, k] * z[p, k]
            for k in range(nj):
                s += J[i, k] * (counts[p, k] - comp[k])
            out[p, i] += s


def accumulate_numpy(out, z, A, counts, comp, J):
    if z.shape[1]:
        out += z @ A.T
    if counts.shape[1]:
        out += (counts - comp) @ J.T


if HAVE_NUMBA:
    pivot_jit = njit(cache=True)(pivot_loop)
    jacobi_eigh_jit = njit(cache=True)(jacobi_eigh_loop)
    thresholds_jit = njit(cache=True)(thresholds_loop)
    accumulate_jit = njit(cache=True, nogil=True)(accumulate_loop)
else:  # pragma: no cover
    pivot_jit = pivot_loop
    jacobi_eigh_jit = jacobi_eigh_loop
    thresholds_jit = thresholds_loop
    accumulate_jit = accumulate_loop


def _select(jit_fn, numpy_fn):
    return jit_fn if (_config.USE_NUMBA and HAVE_NUMBA) else numpy_fn


pivot = _select(pivot_jit, pivot_numpy)
jacobi_eigh = _select(jacobi_eigh_jit, jacobi_eigh_numpy)
thresholds = _select(thresholds_jit, thresholds_numpy)
accumulate = _select(accumulate_jit, accumulate_numpy)

BACKEND = "numba" if (_config.USE_NUMBA and HAVE_NUMBA) else "numpy"
