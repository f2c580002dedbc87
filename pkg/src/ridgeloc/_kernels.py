"""Compiled inner loop for the normalized fusion solvers.

The kernel mirrors :func:`ridgeloc.fusion.normalized_iterations` for the
common case only. Whenever the reference loop would raise, warn, or take a
fallback branch, the kernel stops with ``status = 1`` and the caller reruns
the solve with the reference code. numba is optional; without it
``AVAILABLE`` is False and every solve takes the reference path.
"""

import numpy as np

from .camera import DEPTH_EPS
from .numeric import RANK_TOL
from .ranging import COINCIDENCE_EPS

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

#: Set to False to force the reference implementation everywhere.
ENABLED = True
SPREAD_EPS = 1e-12

#: step kinds
PLAIN, RIDGE_HKB, RIDGE_FIXED = 0, 1, 2


def _lstsq(A, b):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return Vt.T @ ((U.T @ b) / s), s


def _normalized_core(Ms, px, S, d, X0, threshold, max_iter, guard, renormalize, free,
                     kind, fixed_k, initial_only, rank_tol, var_floor, dof_count):
    n = Ms.shape[0]
    a = 2 * n
    m = a + n
    X = X0.copy()
    norms = np.zeros(max_iter)
    conds = np.zeros(max_iter)
    ks = np.zeros(max_iter)
    kconds = np.zeros(max_iter)
    T = np.empty((m, 4))
    dPhi = np.empty(m)
    res = np.empty(m)
    J = np.empty((m, 3))
    vmin = vmax = rmin = rmax = 0.0
    k_first = -1.0
    slack = np.nan
    iters = 0
    converged = False

    for it in range(max_iter + 1):
        # linearize at X; the extra pass after the loop only feeds the final residual
        ok = True
        for i in range(n):
            h0 = Ms[i, 0, 0] * X[0] + Ms[i, 0, 1] * X[1] + Ms[i, 0, 2] * X[2] + Ms[i, 0, 3]
            h1 = Ms[i, 1, 0] * X[0] + Ms[i, 1, 1] * X[1] + Ms[i, 1, 2] * X[2] + Ms[i, 1, 3]
            h2 = Ms[i, 2, 0] * X[0] + Ms[i, 2, 1] * X[1] + Ms[i, 2, 2] * X[2] + Ms[i, 2, 3]
            if abs(h2) <= DEPTH_EPS:
                ok = False
                break
            inv = 1.0 / h2
            u = h0 * inv
            v = h1 * inv
            res[2 * i] = px[i, 0] - u
            res[2 * i + 1] = px[i, 1] - v
            for j in range(3):
                J[2 * i, j] = (Ms[i, 0, j] - u * Ms[i, 2, j]) * inv
                J[2 * i + 1, j] = (Ms[i, 1, j] - v * Ms[i, 2, j]) * inv
        if ok:
            for i in range(n):
                e0 = X[0] - S[i, 0]
                e1 = X[1] - S[i, 1]
                e2 = X[2] - S[i, 2]
                dist = np.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
                if dist <= COINCIDENCE_EPS:
                    ok = False
                    break
                res[a + i] = d[i] - dist
                J[a + i, 0] = e0 / dist
                J[a + i, 1] = e1 / dist
                J[a + i, 2] = e2 / dist
        if it == max_iter or converged:
            if not ok:
                return X, 0, iters, converged, norms, conds, ks, kconds, slack, np.nan
            if renormalize:
                vmin, vmax = res[:a].min(), res[:a].max()
                rmin, rmax = res[a:].min(), res[a:].max()
            vs = vmax - vmin
            rs = rmax - rmin
            if not (vs > SPREAD_EPS and rs > SPREAD_EPS):
                return X, 0, iters, converged, norms, conds, ks, kconds, slack, 0.0
            acc = 0.0
            for r in range(a):
                q = (res[r] - vmin) / vs + vmin / vs
                acc += q * q
            for r in range(a, m):
                q = (res[r] - rmin) / rs + rmin / rs
                acc += q * q
            return X, 0, iters, converged, norms, conds, ks, kconds, slack, np.sqrt(acc / m)
        if not ok:
            return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan

        if renormalize or it == 0:
            vmin, vmax = res[:a].min(), res[:a].max()
            rmin, rmax = res[a:].min(), res[a:].max()
        vs = vmax - vmin
        rs = rmax - rmin
        if not (vs > SPREAD_EPS and rs > SPREAD_EPS):
            return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
        for r in range(m):
            if r < a:
                sc, lo = vs, vmin
            else:
                sc, lo = rs, rmin
            dPhi[r] = (res[r] - lo) / sc
            for j in range(3):
                T[r, j] = J[r, j] / sc
            T[r, 3] = -lo / sc
        if not (np.isfinite(T.sum()) and np.isfinite(dPhi.sum())):
            return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan

        sol, s = _lstsq(T, dPhi)
        if not s[3] > RANK_TOL * s[0]:
            return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
        slack = abs(sol[3] - 1.0)
        conds[it] = (s[0] / s[3]) ** 2

        k = 0.0
        if kind != PLAIN:
            if kind == RIDGE_FIXED:
                k = fixed_k
            elif initial_only and k_first >= 0.0:
                k = k_first
            else:
                t = 0
                for q in range(4):
                    if s[q] > rank_tol * s[0]:
                        t += 1
                denom = (m if dof_count < 0 else dof_count) - t
                if denom <= 0:
                    return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
                fitted = T @ sol
                resid = dPhi - fitted
                d0 = max((resid @ resid) / denom, var_floor)
                signal = fitted @ fitted
                if signal <= 1e-300:
                    return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
                k = t * d0 / signal
            if k_first < 0.0:
                k_first = k
            ks[it] = k
            kconds[it] = (s[0] ** 2 + k) / (s[3] ** 2 + k)

        if free:
            if k == 0.0:
                dx = sol[:3].copy()
            else:
                N = T.T @ T
                for q in range(4):
                    N[q, q] += k
                dx = np.linalg.solve(N, T.T @ dPhi)[:3]
        else:
            Tr = np.ascontiguousarray(T[:, :3])
            y = dPhi - T[:, 3]
            if k == 0.0:
                dx, s3 = _lstsq(Tr, y)
                if not s3[2] > RANK_TOL * s3[0]:
                    return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
            else:
                N = Tr.T @ Tr
                for q in range(3):
                    N[q, q] += k
                dx = np.linalg.solve(N, Tr.T @ y)
        norm = np.sqrt(dx @ dx)
        if not (np.isfinite(norm) and norm <= guard):
            return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan
        X += dx
        norms[it] = norm
        iters += 1
        if norm <= threshold:
            converged = True
    return X, 1, iters, converged, norms, conds, ks, kconds, slack, np.nan


if numba is not None:
    _lstsq = numba.njit(cache=True)(_lstsq)
    _normalized_core = numba.njit(cache=True)(_normalized_core)
    AVAILABLE = True
else:  # pragma: no cover
    AVAILABLE = False


def normalized_core(stack, X0, config, kind=PLAIN, fixed_k=0.0, initial_only=False,
                    rank_tol=RANK_TOL, var_floor=0.0, dof_count=None):
    """Run the compiled loop; returns None when the reference path must take over."""
    if not (AVAILABLE and ENABLED):
        return None
    X0 = np.asarray(X0, dtype=float)
    if not np.all(np.isfinite(X0)):
        return None
    out = _normalized_core(
        stack.Ms, stack.px, stack.S, stack.d, X0.copy(), float(config.threshold),
        int(config.max_iterations), float(config.divergence_guard), bool(config.renormalize),
        config.augmented == "free", int(kind), float(fixed_k), bool(initial_only), float(rank_tol),
        float(var_floor), -1 if dof_count is None else int(dof_count))
    X, status, iters, converged, norms, conds, ks, kconds, slack, rms = out
    if status != 0:
        return None
    return X, iters, bool(converged), norms[:iters], conds[:iters], ks[:iters], kconds[:iters], slack, rms
