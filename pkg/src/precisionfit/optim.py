"""Optimizer stack for driving MSE training loss toward the f64 noise floor.

Phases: Adam (minibatch, first order), full-batch BFGS with a strong-Wolfe
line search, descent restricted to low-curvature Hessian eigendirections,
and two-stage residual boosting assembled into one block-diagonal network.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas

from . import kernels
from .net import (
    assemble_boosted,
    forward_batch,
    grad_xy,
    hessian,
    mlp_init,
    mse_loss,
    with_params,
)
from .targets import Dataset

STOP_GRAD_TOL = "grad_tol"
STOP_MAX_ITERS = "max_iters"
STOP_STALL = "stall"
STOP_SUBSPACE = "subspace_converged"

JACOBI_MAX_N = 200  # larger problems route to LAPACK


@dataclass(frozen=True)
class HistoryRow:
    step: int
    mse: float
    rmse_rel: float
    phase: str


def _rmse_rel_from_mse(mse, targets):
    denom = float(np.mean(targets * targets))
    return math.sqrt(max(mse, 0.0) / denom)


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    steps: int = 20000
    batch_cap: int = 10**4
    record_every: int = 100

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


def adam_core(theta0, n_data, batch_grad, full_mse, targets, cfg, seed, phase="adam"):
    """Minibatch Adam over a flat parameter vector.

    batch_grad(theta, idx) returns the MSE gradient on the index subset;
    full_mse(theta) the full-data loss.  Batches are drawn by seeded
    shuffling each epoch, so trajectories are bit-reproducible.
    """
    batch = min(n_data, cfg.batch_cap)
    rng = np.random.default_rng(seed)
    theta = np.array(theta0, dtype=np.float64, copy=True)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    perm = rng.permutation(n_data)
    cursor = 0
    for step in range(1, cfg.steps + 1):
        if cursor + batch > n_data:
            perm = rng.permutation(n_data)
            cursor = 0
        idx = perm[cursor : cursor + batch]
        cursor += batch
        g = batch_grad(theta, idx)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mhat = m / (1.0 - cfg.beta1**step)
        vhat = v / (1.0 - cfg.beta2**step)
        theta = theta - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
        if step % cfg.record_every == 0 or step == cfg.steps:
            mse = full_mse(theta)
            if not math.isfinite(mse):
                raise FloatingPointError(f"non-finite loss at Adam step {step}")
            history.append(
                HistoryRow(step, mse, _rmse_rel_from_mse(mse, targets), phase)
            )
    return theta, history


def adam_minimize(net, data, cfg=AdamConfig(), seed=0, phase="adam"):
    """Minibatch Adam on an Mlp's MSE loss."""
    xs, ys = data.inputs, data.targets
    theta, history = adam_core(
        net.params,
        len(ys),
        lambda theta, idx: grad_xy(with_params(net, theta), xs[idx], ys[idx]),
        lambda theta: mse_loss(with_params(net, theta), xs, ys),
        ys,
        cfg,
        seed,
        phase,
    )
    return with_params(net, theta), history


# ----------------------------------------------------------------------
# BFGS with strong Wolfe line search
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BfgsConfig:
    max_iters: int = 20000
    grad_tol: float = 1e-12
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 60  # line-search budget before declaring a stall

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("need 0 < c1 < c2 < 1")


def _cubic_min(a, fa, dga, b, fb, dgb):
    """Minimizer of the cubic fit; NaN when ill-conditioned."""
    d1 = dga + dgb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dga * dgb
    if disc < 0.0:
        return math.nan
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = dgb - dga + 2.0 * d2
    if denom == 0.0:
        return math.nan
    return b - (b - a) * (dgb + d2 - d1) / denom


def wolfe_line_search(phi, f0, dg0, c1, c2, max_evals):
    """Strong-Wolfe step along a descent direction.

    phi(t) must return (f, directional derivative).  Returns
    (t, f, dg, evals) or None when no Wolfe point is found in budget.
    """
    evals = 0

    def do_eval(t):
        nonlocal evals
        evals += 1
        return phi(t)

    def zoom(lo, f_lo, dg_lo, hi, f_hi, dg_hi):
        nonlocal evals
        while evals < max_evals:
            t = _cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi)
            width = abs(hi - lo)
            inner_lo, inner_hi = min(lo, hi), max(lo, hi)
            if (
                math.isnan(t)
                or t <= inner_lo + 0.05 * width
                or t >= inner_hi - 0.05 * width
            ):
                t = 0.5 * (lo + hi)
            f, dg = do_eval(t)
            if f > f0 + c1 * t * dg0 or f >= f_lo:
                hi, f_hi, dg_hi = t, f, dg
            else:
                if abs(dg) <= -c2 * dg0:
                    return t, f, dg
                if dg * (hi - lo) >= 0.0:
                    hi, f_hi, dg_hi = lo, f_lo, dg_lo
                lo, f_lo, dg_lo = t, f, dg
            if abs(hi - lo) < 1e-18 * max(1.0, abs(lo)):
                return None
        return None

    t_prev, f_prev, dg_prev = 0.0, f0, dg0
    t = 1.0
    t_max = 1e10
    first = True
    while evals < max_evals:
        f, dg = do_eval(t)
        if f > f0 + c1 * t * dg0 or (not first and f >= f_prev):
            result = zoom(t_prev, f_prev, dg_prev, t, f, dg)
            return (*result, evals) if result else None
        if abs(dg) <= -c2 * dg0:
            return t, f, dg, evals
        if dg >= 0.0:
            result = zoom(t, f, dg, t_prev, f_prev, dg_prev)
            return (*result, evals) if result else None
        t_prev, f_prev, dg_prev = t, f, dg
        t = min(2.0 * t, t_max)
        first = False
    return None


def bfgs_core(theta0, fg, cfg=BfgsConfig(), record=None):
    """Full-batch BFGS over a flat vector; fg(theta) -> (loss, gradient).

    Stops on grad_tol, max_iters, or a line-search stall (no strong-Wolfe
    point within the evaluation budget).  Optional `record` is a callback
    (iteration, theta, f, g, t, dg0, dg) invoked at every accepted step;
    tests use it to verify the Wolfe conditions.  Returns
    (theta, [(iteration, loss)], stop reason).
    """
    theta = np.array(theta0, dtype=np.float64, copy=True)
    n = len(theta)
    # H is symmetric: store upper triangle, update with BLAS syr2/symv
    hk = np.asfortranarray(np.eye(n))
    f, g = fg(theta)
    trace = [(0, f)]
    stop = STOP_MAX_ITERS
    for it in range(1, cfg.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol:
            stop = STOP_GRAD_TOL
            break
        direction = blas.dsymv(-1.0, hk, g, lower=0)
        dg0 = float(direction @ g)
        if dg0 >= 0.0:  # numerical loss of descent: reset curvature model
            hk = np.asfortranarray(np.eye(n))
            direction = -g
            dg0 = -gnorm * gnorm
        cache = {}

        def phi(t):
            trial = theta + t * direction
            ft, gt = fg(trial)
            if not math.isfinite(ft):
                raise FloatingPointError(f"non-finite loss at BFGS iteration {it}")
            cache[t] = gt
            return ft, float(gt @ direction)

        found = wolfe_line_search(phi, f, dg0, cfg.c1, cfg.c2, cfg.max_ls_evals)
        if found is None:
            stop = STOP_STALL
            break
        t, f_new, dg_new, _evals = found
        g_new = cache[t]
        s = t * direction
        y = g_new - g
        sy = float(s @ y)
        if it == 1 and sy > 0.0:
            hk *= sy / float(y @ y)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            hy = blas.dsymv(1.0, hk, y, lower=0)
            # rank-2 form of the BFGS inverse update: s w^T + w s^T
            w = -rho * hy + (0.5 * rho * rho * float(y @ hy) + 0.5 * rho) * s
            hk = blas.dsyr2(1.0, s, w, a=hk, lower=0, overwrite_a=1)
        theta = theta + s
        if record is not None:
            record(it, theta, f_new, g_new, t, dg0, dg_new)
        f, g = f_new, g_new
        trace.append((it, f))
    return theta, trace, stop


def bfgs_minimize(net, data, cfg=BfgsConfig(), record=None, phase="bfgs"):
    """Full-batch BFGS on an Mlp's MSE loss."""
    xs, ys = data.inputs, data.targets

    def fg(theta):
        trial = with_params(net, theta)
        return mse_loss(trial, xs, ys), grad_xy(trial, xs, ys)

    theta, trace, stop = bfgs_core(net.params, fg, cfg, record)
    history = [
        HistoryRow(it, f, _rmse_rel_from_mse(f, ys), phase) for it, f in trace
    ]
    return with_params(net, theta), history, stop


# ----------------------------------------------------------------------
# Symmetric eigendecomposition
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns, aligned with eigenvalues


def sym_eigendecompose(h):
    """Eigenpairs of a symmetric matrix, ascending by eigenvalue.

    Cyclic Jacobi (numba kernel) up to N=200; LAPACK beyond, where the
    O(N^3)-per-sweep rotations would dominate the optimization budget.
    """
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[0]
    if h.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = max(float(np.abs(h).max()), 1.0)
    if float(np.abs(h - h.T).max()) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    h = 0.5 * (h + h.T)
    if n <= JACOBI_MAX_N:
        eig, vec = kernels.jacobi_eigh(h, 1e-14, 50)
    else:
        eig, vec = np.linalg.eigh(h)
    order = np.argsort(eig, kind="stable")
    return EigenSystem(eig[order], np.ascontiguousarray(vec[:, order]))


# ----------------------------------------------------------------------
# Low-curvature subspace descent
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SubspaceConfig:
    tau: float = 1e-16
    max_steps: int = 20
    coarse_octaves: int = 30  # bracket search spans 2^+-coarse_octaves
    golden_iters: int = 40

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")


def project_low_curvature(eigensystem, g, tau):
    """Projection of g onto eigendirections with eigenvalue below tau."""
    mask = eigensystem.eigenvalues < tau
    basis = eigensystem.eigenvectors[:, mask]
    return basis @ (basis.T @ g)


def _golden_section(f, lo, hi, iters):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def low_curvature_minimize(net, data, cfg=SubspaceConfig(), phase="subspace"):
    """Accept-only line searches along the gradient's low-curvature part."""
    xs, ys = data.inputs, data.targets
    theta = net.params.copy()
    f = mse_loss(with_params(net, theta), xs, ys)
    history = [HistoryRow(0, f, _rmse_rel_from_mse(f, ys), phase)]
    stop = STOP_MAX_ITERS
    for step in range(1, cfg.max_steps + 1):
        current = with_params(net, theta)
        eigensystem = sym_eigendecompose(hessian(current, data))
        g = grad_xy(current, xs, ys)
        ghat = project_low_curvature(eigensystem, g, cfg.tau)
        gnorm = float(np.linalg.norm(ghat))
        if gnorm <= 1e-300:
            stop = STOP_SUBSPACE
            break

        def phi(t):
            return mse_loss(with_params(net, theta - t * ghat), xs, ys)

        t_unit = 1.0 / gnorm
        best_t, best_f = 0.0, f
        for k in range(-cfg.coarse_octaves, cfg.coarse_octaves + 1):
            t = t_unit * (2.0**k)
            ft = phi(t)
            if ft < best_f:
                best_t, best_f = t, ft
        if best_t > 0.0:
            t_star, f_star = _golden_section(
                phi, best_t / 2.0, best_t * 2.0, cfg.golden_iters
            )
            if f_star < best_f:
                best_t, best_f = t_star, f_star
        if best_f >= f:
            stop = STOP_SUBSPACE
            break
        theta = theta - best_t * ghat
        f = best_f
        history.append(HistoryRow(step, f, _rmse_rel_from_mse(f, ys), phase))
    return with_params(net, theta), history, stop


# ----------------------------------------------------------------------
# Boosting
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BoostConfig:
    stage1_hidden: tuple = (20, 20)
    stage2_hidden: tuple = (20, 20)
    activation: str = "tanh"
    optimizer: str = "bfgs"  # "bfgs" or "adam"
    bfgs: BfgsConfig = field(default_factory=BfgsConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    # Stage-1 stalls leave an oscillatory residual that is nearly orthogonal
    # to the features reachable from a standard small init; a scaled-up
    # stage-2 init starts with higher-frequency features and escapes that
    # plateau.  Scale 1 reproduces plain initialization.
    stage2_init_scale: float = 3.0


def _train_stage(net, data, cfg, phase):
    if cfg.optimizer == "bfgs":
        trained, history, stop = bfgs_minimize(net, data, cfg.bfgs, phase=phase)
    elif cfg.optimizer == "adam":
        trained, history = adam_minimize(net, data, cfg.adam, cfg.seed, phase=phase)
        stop = STOP_MAX_ITERS
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    return trained, history, stop


def boost_train(data, cfg=BoostConfig()):
    """Two-stage residual training merged into one network.

    Stage 2 fits the stage-1 residual rescaled to order unity by its RMS;
    the assembled net computes f1(x) + c*f2(x) exactly (block-diagonal
    weights, second output block scaled by c).
    """
    d = data.dim
    f1 = mlp_init((d, *cfg.stage1_hidden, 1), cfg.activation, cfg.seed)
    f1, hist1, stop1 = _train_stage(f1, data, cfg, "stage1")
    residual = data.targets - forward_batch(f1, data.inputs)
    c = float(np.sqrt(np.mean(residual * residual)))
    diagnostics = {
        "stage1_history": hist1,
        "stage1_stop": stop1,
        "stage1_rmse_rel": _rmse_rel_from_mse(
            float(np.mean(residual * residual)), data.targets
        ),
        "c": c,
    }
    if c == 0.0:
        diagnostics["stage2_history"] = []
        diagnostics["final_rmse_rel"] = 0.0
        return f1, diagnostics
    residual_data = Dataset(data.inputs, residual / c, data.seed, data.domain)
    f2 = mlp_init((d, *cfg.stage2_hidden, 1), cfg.activation, cfg.seed + 1)
    if cfg.stage2_init_scale != 1.0:
        f2 = with_params(f2, f2.params * cfg.stage2_init_scale)
    f2, hist2, stop2 = _train_stage(f2, residual_data, cfg, "stage2")
    assembled = assemble_boosted(f1, f2, c)
    composite = forward_batch(f1, data.inputs) + c * forward_batch(f2, data.inputs)
    comp_mse = float(np.mean((composite - data.targets) ** 2))
    asm_mse = mse_loss(assembled, data.inputs, data.targets)
    diagnostics.update(
        {
            "stage2_history": hist2,
            "stage2_stop": stop2,
            "composite_rmse_rel": _rmse_rel_from_mse(comp_mse, data.targets),
            "final_rmse_rel": _rmse_rel_from_mse(asm_mse, data.targets),
        }
    )
    return assembled, diagnostics
