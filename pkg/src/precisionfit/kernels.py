"""Hot numeric kernels.

Each kernel is a plain nopython-compatible function; `accel.maybe_jit`
compiles it with numba unless PRECISIONFIT_NO_NUMBA is set.  The
undecorated originals stay importable (``walk_predict_py`` etc.) so the
benchmark can compare both paths in one process.
"""

import numpy as np

from .accel import maybe_jit


def walk_predict_py(pts, simp, neigh, tinv, vlast, vert_values, start, tol):
    """Locate each query point by a neighbor walk and linearly interpolate.

    Returns (values, simplex_ids).  simplex id -1 means the walk exited the
    hull; -2 means the walk cycled (degenerate geometry, caller falls back
    to a brute-force scan).
    """
    m = pts.shape[0]
    d = pts.shape[1]
    ns = simp.shape[0]
    out = np.empty(m, dtype=np.float64)
    loc = np.empty(m, dtype=np.int64)
    w = np.empty(d + 1, dtype=np.float64)
    s = start
    for k in range(m):
        x = pts[k]
        cur = s
        ok = -2
        for _step in range(2 * ns + 10):
            diff = x - vlast[cur]
            acc = 0.0
            for i in range(d):
                wi = 0.0
                for j in range(d):
                    wi += tinv[cur, i, j] * diff[j]
                w[i] = wi
                acc += wi
            w[d] = 1.0 - acc
            imin = 0
            wmin = w[0]
            for i in range(1, d + 1):
                if w[i] < wmin:
                    wmin = w[i]
                    imin = i
            if wmin >= -tol:
                ok = cur
                break
            nxt = neigh[cur, imin]
            if nxt < 0:
                ok = -1
                break
            cur = nxt
        loc[k] = ok
        if ok >= 0:
            val = 0.0
            for i in range(d + 1):
                val += w[i] * vert_values[simp[ok, i]]
            out[k] = val
            s = ok
        else:
            out[k] = np.nan
    return out, loc


walk_predict = maybe_jit(walk_predict_py)


def jacobi_eigh_py(a, tol_factor, max_sweeps):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Rotates until the largest off-diagonal entry drops below
    tol_factor * ||A||_F.  Returns (eigenvalues, eigenvectors) unsorted.
    """
    n = a.shape[0]
    h = a.copy()
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    fro = np.sqrt(fro)
    thresh = tol_factor * fro
    for _sweep in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(h[i, j]) > off:
                    off = abs(h[i, j])
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                hpq = h[p, q]
                if abs(hpq) <= thresh * 1e-3:
                    continue
                # classic Jacobi rotation annihilating h[p, q]
                theta = 0.5 * (h[q, q] - h[p, p]) / hpq
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                tau = s / (1.0 + c)
                hpp = h[p, p]
                hqq = h[q, q]
                h[p, p] = hpp - t * hpq
                h[q, q] = hqq + t * hpq
                h[p, q] = 0.0
                h[q, p] = 0.0
                for i in range(n):
                    if i != p and i != q:
                        hip = h[i, p]
                        hiq = h[i, q]
                        h[i, p] = hip - s * (hiq + tau * hip)
                        h[p, i] = h[i, p]
                        h[i, q] = hiq + s * (hip - tau * hiq)
                        h[q, i] = h[i, q]
                for i in range(n):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = vip - s * (viq + tau * vip)
                    v[i, q] = viq + s * (vip - tau * viq)
    eig = np.empty(n)
    for i in range(n):
        eig[i] = h[i, i]
    return eig, v


jacobi_eigh = maybe_jit(jacobi_eigh_py)
