"""Vectorized Monte Carlo engine.

Runs every trial of one scenario at once on stacked arrays: noise draws,
forward intersection, the seed chain, and every solver loop. Each iteration
only touches the trials that are still active.

The per-trial solvers in the other modules stay the reference. When a trial
hits anything outside the common path (a rank-deficient system, degenerate
depth, collapsed residual spread, divergence, a zero-signal ridge fit), the
batch marks it and :func:`run_batch` recomputes that trial with the scalar
code. Failure semantics and messages therefore come from one place.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import DEPTH_EPS
from ._kernels import SPREAD_EPS
from .numeric import RANK_TOL
from .ranging import COINCIDENCE_EPS
from .ridge import RidgeConfig
from .solver import SolverConfig


@dataclass(frozen=True, eq=False)
class NoisyBatch:
    """Stacked noisy observations: ``Ms (B, n, 3, 4)``, ``px (B, n, 2)``, ``S (B, n, 3)``, ``d (B, n)``."""

    Ms: np.ndarray
    px: np.ndarray
    S: np.ndarray
    d: np.ndarray

    @property
    def size(self):
        return self.Ms.shape[0]


@dataclass
class BatchResult:
    estimate: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    bad: np.ndarray
    k_history: np.ndarray = None


def noisy_batch(sc, clean, noise, rngs):
    """Perturb ``clean`` once per generator in ``rngs``, matching ``inject_noise`` draw for draw."""
    n = clean.n
    B = len(rngs)
    dpos = np.empty((B, n, 3))
    drot = np.empty((B, n, 3))
    dpix = np.empty((B, n, 2))
    drng = np.empty((B, n))
    for b, rng in enumerate(rngs):
        dpos[b] = rng.standard_normal((n, 3)) * noise.pos_sigma
        drot[b] = rng.standard_normal((n, 3)) * noise.rot_sigma
        dpix[b] = rng.standard_normal((n, 2)) * noise.pixel_sigma
        drng[b] = rng.standard_normal(n) * noise.range_sigma

    P = np.array([p.position for p in sc.true_poses])[None] + dpos
    if noise.rot_sigma > 0:
        quats = np.tile(np.array([p.quaternion for p in sc.true_poses]), (B, 1))
        R = (Rotation.from_euler("xyz", drot.reshape(-1, 3), degrees=True) * Rotation.from_quat(quats))
        R = R.as_matrix().reshape(B, n, 3, 3)
    else:
        R = np.broadcast_to(np.array([p.rotation for p in sc.true_poses]), (B, n, 3, 3))
    Rt = np.concatenate([R, -np.einsum("bnij,bnj->bni", R, P)[..., None]], axis=3)
    Ms = np.einsum("ij,bnjk->bnik", sc.camera.K, Rt)
    px = clean.pixels[None] + dpix
    d0 = np.array([o.range for o in clean.ranges])
    d = np.maximum(d0[None] + drng, 1e-3)
    return NoisyBatch(Ms, px, P, d)


# -- batched linearizations: each returns (residual, jacobian, bad) ---------------

def _vision_lin(Ms, px, X):
    h = np.einsum("bnij,bj->bni", Ms[..., :3], X) + Ms[..., 3]
    bad = np.any(np.abs(h[..., 2]) <= DEPTH_EPS, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / h[..., 2:3]
        uv = h[..., :2] * inv
        J = (Ms[:, :, :2, :3] - uv[..., None] * Ms[:, :, 2:3, :3]) * inv[..., None]
    B = X.shape[0]
    return (px - uv).reshape(B, -1), J.reshape(B, -1, 3), bad


def _range_lin(S, d, X):
    diff = X[:, None, :] - S
    dist = np.linalg.norm(diff, axis=2)
    bad = np.any(dist <= COINCIDENCE_EPS, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        J = diff / dist[..., None]
    return d - dist, J, bad


def _finite_rows(*arrays):
    ok = None
    for a in arrays:
        f = np.isfinite(a.reshape(a.shape[0], -1)).all(axis=1)
        ok = f if ok is None else ok & f
    return ok


def _svd_lstsq(A, b, rcond=RANK_TOL):
    """Batched SVD least squares; returns ``(x, s, full_rank)``."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    full = s[:, -1] > rcond * s[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.einsum("bmp,bm->bp", U, b) / s
    x = np.einsum("bpq,bp->bq", Vt, np.where(full[:, None], coef, 0.0))
    return x, s, full


def _step_norms(dx, config):
    norm = np.linalg.norm(dx, axis=1)
    return norm, ~np.isfinite(norm) | (norm > config.divergence_guard)


def batch_gauss_newton(linearize, X0, config, min_rows=3):
    """Undamped Gauss-Newton on every row of ``X0`` at once.

    ``linearize(index, X)`` evaluates the trials listed in ``index`` and
    returns ``(residual (b, m), jacobian (b, m, 3), bad (b,))``.
    """
    X = np.array(X0, dtype=float)
    B = X.shape[0]
    converged = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)
    bad = ~np.isfinite(X).all(axis=1)
    active = np.flatnonzero(~bad)
    for _ in range(config.max_iterations):
        if not active.size:
            break
        r, J, flag = linearize(active, X[active])
        if J.shape[1] < min_rows:
            flag[:] = True
        flag |= ~_finite_rows(r, J)
        ok = ~flag
        dx = np.zeros((active.size, 3))
        if ok.any():
            sol, _, full = _svd_lstsq(J[ok], r[ok])
            dx[ok] = sol
            sub = np.flatnonzero(ok)
            flag[sub[~full]] = True
        norm, blown = _step_norms(dx, config)
        flag |= blown
        bad[active[flag]] = True
        ok = ~flag
        X[active[ok]] += dx[ok]
        iterations[active[ok]] += 1
        done = ok & (norm <= config.threshold)
        converged[active[done]] = True
        active = active[ok & ~done]
    return BatchResult(X, converged, iterations, bad)


def batch_normalized(batch, X0, config, ridge=None):
    """Normalized fusion loop on every trial; ``ridge=None`` takes plain least-squares steps."""
    Ms, px, S, d = batch.Ms, batch.px, batch.S, batch.d
    X = np.array(X0, dtype=float)
    B, n = d.shape
    a = 2 * n
    converged = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)
    bad = ~np.isfinite(X).all(axis=1)
    frozen = np.full((B, 4), np.nan)
    k_hist = np.full((config.max_iterations, B), np.nan) if ridge is not None else None
    k_first = np.full(B, np.nan)
    dof = (n if ridge is not None and ridge.dof == "literal" else None)
    active = np.flatnonzero(~bad)
    for it in range(config.max_iterations):
        if not active.size:
            break
        Xa = X[active]
        dpsi, H, f1 = _vision_lin(Ms[active], px[active], Xa)
        dphi, h, f2 = _range_lin(S[active], d[active], Xa)
        flag = f1 | f2 | ~_finite_rows(dpsi, H, dphi, h)
        if config.renormalize:
            bnd = np.column_stack([dpsi.min(1), dpsi.max(1), dphi.min(1), dphi.max(1)])
        else:
            fresh = np.isnan(frozen[active, 0])
            frozen[active[fresh]] = np.column_stack(
                [dpsi.min(1), dpsi.max(1), dphi.min(1), dphi.max(1)])[fresh]
            bnd = frozen[active]
        vs = bnd[:, 1] - bnd[:, 0]
        rs = bnd[:, 3] - bnd[:, 2]
        flag |= ~(vs > SPREAD_EPS) | ~(rs > SPREAD_EPS)
        vs = np.where(flag, 1.0, vs)
        rs = np.where(flag, 1.0, rs)

        m = a + n
        T = np.empty((active.size, m, 4))
        T[:, :a, :3] = H / vs[:, None, None]
        T[:, a:, :3] = h / rs[:, None, None]
        T[:, :a, 3] = (-bnd[:, 0] / vs)[:, None]
        T[:, a:, 3] = (-bnd[:, 2] / rs)[:, None]
        dPhi = np.empty((active.size, m))
        dPhi[:, :a] = (dpsi - bnd[:, 0:1]) / vs[:, None]
        dPhi[:, a:] = (dphi - bnd[:, 2:3]) / rs[:, None]
        flag |= ~_finite_rows(T, dPhi)

        dx = np.zeros((active.size, 3))
        ok = np.flatnonzero(~flag)
        if ok.size:
            To, Po = T[ok], dPhi[ok]
            sol, s, full = _svd_lstsq(To, Po)
            good = full.copy()
            Tr = To[:, :, :3]
            y = Po - To[:, :, 3]
            k = np.zeros(ok.size)
            if ridge is not None:
                if ridge.fixed_k is not None:
                    k[:] = ridge.fixed_k
                else:
                    t = np.count_nonzero(s > ridge.rank_tolerance * s[:, :1], axis=1)
                    denom = (m if dof is None else dof) - t
                    fitted = np.einsum("bmp,bp->bm", To, sol)
                    resid = Po - fitted
                    with np.errstate(divide="ignore", invalid="ignore"):
                        d0 = np.maximum(np.einsum("bm,bm->b", resid, resid) / denom, ridge.variance_floor)
                        signal = np.einsum("bm,bm->b", fitted, fitted)
                        k = t * d0 / signal
                    good &= (denom > 0) & (signal > 1e-300)
                    if ridge.mode == "initial_only":
                        kf = k_first[active[ok]]
                        k = np.where(np.isnan(kf), k, kf)
                k = np.where(good, k, 0.0)
                k_first[active[ok]] = np.where(np.isnan(k_first[active[ok]]), k, k_first[active[ok]])
                k_hist[it, active[ok]] = k
            if config.augmented == "free":
                step = sol[:, :3].copy()
                pos = k > 0
                if pos.any():
                    N = np.einsum("bmi,bmj->bij", To[pos], To[pos]) + k[pos, None, None] * np.eye(4)
                    rhs = np.einsum("bmi,bm->bi", To[pos], Po[pos])[..., None]
                    step[pos] = np.linalg.solve(N, rhs)[:, :3, 0]
            else:
                step = np.zeros((ok.size, 3))
                zero = k == 0
                if zero.any():
                    st, _, full3 = _svd_lstsq(Tr[zero], y[zero])
                    step[zero] = st
                    good[np.flatnonzero(zero)[~full3]] = False
                pos = ~zero
                if pos.any():
                    N = np.einsum("bmi,bmj->bij", Tr[pos], Tr[pos]) + k[pos, None, None] * np.eye(3)
                    step[pos] = np.linalg.solve(N, np.einsum("bmi,bm->bi", Tr[pos], y[pos])[..., None])[..., 0]
            dx[ok] = step
            flag[ok[~good]] = True
        norm, blown = _step_norms(dx, config)
        flag |= blown
        bad[active[flag]] = True
        keep = ~flag
        X[active[keep]] += dx[keep]
        iterations[active[keep]] += 1
        done = keep & (norm <= config.threshold)
        converged[active[done]] = True
        active = active[keep & ~done]
    return BatchResult(X, converged, iterations, bad, k_hist)


def batch_forward_intersection(Ms, px):
    """Returns ``(X, cheirality, bad)`` for every trial."""
    rows = np.concatenate([
        px[..., 0:1] * Ms[:, :, 2] - Ms[:, :, 0],
        px[..., 1:2] * Ms[:, :, 2] - Ms[:, :, 1],
    ], axis=1)
    norms = np.linalg.norm(rows, axis=2, keepdims=True)
    rows = rows / np.where(norms > 0, norms, 1.0)
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    Xh = vt[:, -1]
    bad = (s[:, 2] <= s[:, 0] * 1e-12) | (np.abs(Xh[:, 3]) <= 1e-15 * np.linalg.norm(Xh, axis=1))
    w = np.where(bad, 1.0, Xh[:, 3])
    X = Xh[:, :3] / w[:, None]
    depths = np.einsum("bnj,bj->bn", Ms[:, :, 2, :3], X) + Ms[:, :, 2, 3]
    cheir = np.count_nonzero(depths > 0, axis=1) * 2 <= depths.shape[1]
    return X, cheir, bad


def batch_los_fixes(batch, frames=None):
    """Single-shot ``station + range * ray`` fixes, shape ``(B, len(frames), 3)``."""
    frames = np.arange(batch.d.shape[1]) if frames is None else np.atleast_1d(frames)
    Ms = batch.Ms[:, frames]
    uv1 = np.concatenate([batch.px[:, frames], np.ones(batch.px[:, frames].shape[:2] + (1,))], axis=2)
    ray = np.linalg.solve(Ms[..., :3], uv1[..., None])[..., 0]
    ray /= np.linalg.norm(ray, axis=2, keepdims=True)
    return batch.S[:, frames] + batch.d[:, frames, None] * ray


def run_batch(batch, algorithms, config=None, ridge=None, los_frame=None):
    """Batched counterpart of ``run_algorithms``.

    Returns ``(results, bad)`` where ``results[name]`` is a :class:`BatchResult`
    and ``bad`` marks trials that must be recomputed with the scalar path.
    """
    config = config or SolverConfig()
    ridge = ridge or RidgeConfig()
    B, n = batch.d.shape
    fi, cheir, bad = batch_forward_intersection(batch.Ms, batch.px)
    seed = fi.copy()
    if cheir.any():
        seed[cheir] = batch_los_fixes(NoisyBatch(batch.Ms[cheir], batch.px[cheir], batch.S[cheir], batch.d[cheir])).mean(axis=1)
    seed[bad] = np.nan

    def vis_lin(idx, X):
        return _vision_lin(batch.Ms[idx], batch.px[idx], X)

    def rng_lin(idx, X):
        return _range_lin(batch.S[idx], batch.d[idx], X)

    def raw_lin(idx, X):
        r1, J1, f1 = vis_lin(idx, X)
        r2, J2, f2 = rng_lin(idx, X)
        return np.concatenate([r1, r2], axis=1), np.concatenate([J1, J2], axis=1), f1 | f2

    results = {}
    seed_vis = seed
    if any(a in algorithms for a in ("vision", "fused", "fused_ridge", "fused_raw")):
        vis = batch_gauss_newton(vis_lin, np.where(bad[:, None], np.nan, fi), config, min_rows=3)
        results["vision"] = vis
        # a failed vision solve changes the seed chain, so the scalar path must redo the trial
        bad = bad | vis.bad
        seed_vis = np.where(vis.converged[:, None], vis.estimate, seed)
    for name in algorithms:
        if name in ("vision",):
            continue
        if name == "range":
            results[name] = batch_gauss_newton(rng_lin, seed, config, min_rows=3)
        elif name == "fused":
            results[name] = batch_normalized(batch, seed_vis, config)
        elif name == "fused_ridge":
            results[name] = batch_normalized(batch, seed_vis, config, ridge)
        elif name == "fused_raw":
            results[name] = batch_gauss_newton(raw_lin, seed_vis, config, min_rows=3)
        elif name == "los":
            frame = n // 2 if los_frame is None else los_frame
            est = batch_los_fixes(batch, frame)[:, 0]
            results[name] = BatchResult(est, np.ones(B, dtype=bool), np.zeros(B, dtype=int), np.zeros(B, dtype=bool))
        else:
            raise ValueError(f"unknown algorithm {name!r}")
        bad = bad | results[name].bad
    return results, bad
