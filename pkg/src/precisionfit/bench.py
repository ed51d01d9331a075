"""Metrics, scaling sweeps, power-law fits, and diagnostic reports."""

import math
import time
from dataclasses import dataclass

import numpy as np

from .net import (
    forward_batch,
    grad,
    hessian,
    mlp_init,
    modular_forward_batch,
    modular_grad_xy,
    modular_net_build,
    modular_params,
    modular_with_params,
    multiplication_gadget,
    n_params_for,
    parallel_gadget_network,
    relu_depth_bound,
)
from .optim import AdamConfig, adam_core, adam_minimize, sym_eigendecompose
from .splines import (
    grid_spline_eval,
    grid_spline_fit,
    spline_eval_batch,
    spline_fit_1d,
)
from .targets import (
    Dataset,
    catalog_lookup,
    eval_target_batch,
    normalize_inputs,
    sample_dataset,
)
from .triangulation import delaunay_triangulate, interior_mask, simplex_predict_batch

TEST_SET_SIZE = 30000
TEST_SEED_OFFSET = 982_451_653  # fresh stream, disjoint from training seeds
TEST_MARGIN = 0.1
DEFAULT_FLOOR = 1e-13

METHODS = ("simplex", "spline-1", "spline-2", "spline-3", "spline-4", "spline-5",
           "relu-mlp", "tanh-mlp", "modular-mlp")


def relative_rmse(preds, targets):
    """sqrt(sum (pred-y)^2 / sum y^2); scale-free fit quality."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError("preds and targets must have equal nonzero length")
    denom = float(targets @ targets)
    if denom == 0.0:
        raise ValueError("targets are all zero")
    diff = preds - targets
    return math.sqrt(float(diff @ diff) / denom)


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    log_intercept: float
    r_squared: float
    floor_cutoff: float


def fit_power_law(pairs, floor=DEFAULT_FLOOR):
    """OLS fit of log(loss) against log(N), skipping points at the floor."""
    kept = [(n, loss) for n, loss in pairs if loss > floor]
    if len(kept) < 3:
        raise ValueError("need at least 3 points above the floor")
    if any(n <= 0 or loss <= 0 for n, loss in kept):
        raise ValueError("sizes and losses must be positive")
    logn = np.log([n for n, _ in kept])
    logl = np.log([loss for _, loss in kept])
    slope, intercept = np.polyfit(logn, logl, 1)
    fitted = slope * logn + intercept
    ss_res = float(np.sum((logl - fitted) ** 2))
    ss_tot = float(np.sum((logl - logl.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return PowerLawFit(-float(slope), float(intercept), r2, floor)


# ----------------------------------------------------------------------
# Scaling sweeps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    method: str
    target: str
    n_train: int
    n_params: int
    seed: int
    train_rmse_rel: float
    test_rmse_rel: float
    wall_seconds: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple


def _test_points(spec, domain, seed):
    test = sample_dataset(spec, domain, TEST_SET_SIZE, TEST_SEED_OFFSET + seed)
    mask = interior_mask(domain, TEST_MARGIN, test.inputs)
    return test.inputs[mask], test.targets[mask]


def _matched_width(d, n_hidden, budget, out_dim=1):
    """Width whose dense parameter count is closest to the budget."""
    best_w, best_diff = 1, None
    for w in range(1, 4000):
        dims = (d, *([w] * n_hidden), out_dim)
        diff = abs(n_params_for(dims) - budget)
        if best_diff is None or diff < best_diff:
            best_w, best_diff = w, diff
        if n_params_for(dims) > 4 * budget and w > 4:
            break
    return best_w


def _fit_simplex(spec, domain, size, seed, _cfg):
    train = sample_dataset(spec, domain, size, seed)
    tri = delaunay_triangulate(train.inputs, train.targets)
    train_preds, train_loc = simplex_predict_batch(tri, train.inputs)
    ok = train_loc >= 0
    train_rmse = relative_rmse(train_preds[ok], train.targets[ok])

    def predict(xs):
        preds, loc = simplex_predict_batch(tri, xs)
        return preds, loc >= 0

    return predict, train_rmse, tri.n_params


def _fit_spline(spec, domain, size, seed, order):
    if spec.dim == 1:
        xs = np.linspace(domain.lo[0], domain.hi[0], size)
        ys = eval_target_batch(spec, xs.reshape(-1, 1))
        sp = spline_fit_1d(xs, ys, order)
        train_rmse = relative_rmse(spline_eval_batch(sp, xs), ys)

        def predict(pts):
            vals = spline_eval_batch(sp, pts[:, 0])
            return vals, np.ones(len(vals), dtype=bool)

        return predict, train_rmse, sp.n_params
    if order != 3:
        raise ValueError("only cubic grid splines are supported for dim > 1")
    pts_per_axis = max(4, round(size ** (1.0 / spec.dim)))
    gs = grid_spline_fit(spec, domain, pts_per_axis)
    mesh = np.meshgrid(*gs.axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    train_rmse = relative_rmse(grid_spline_eval(gs, nodes), gs.values.ravel())

    def predict(pts):
        return grid_spline_eval(gs, pts), np.ones(len(pts), dtype=bool)

    return predict, train_rmse, gs.n_params


def _fit_mlp(spec, domain, size, seed, activation, adam_cfg, matched_params=True,
             width=None):
    train = sample_dataset(spec, domain, size, seed)
    normed, stats = normalize_inputs(train)
    d = spec.dim
    n_hidden = (relu_depth_bound(d) - 1) if activation == "relu" else 2
    if width is None:
        budget = size * (d + 1) if matched_params else None
        width = _matched_width(d, n_hidden, budget) if budget else 40
    net = mlp_init((d, *([width] * n_hidden), 1), activation, seed)
    net, _history = adam_minimize(net, normed, adam_cfg, seed)
    train_rmse = relative_rmse(forward_batch(net, normed.inputs), normed.targets)

    def predict(pts):
        z = (pts - stats.mean) / stats.std
        return forward_batch(net, z), np.ones(len(pts), dtype=bool)

    return predict, train_rmse, net.n_params


def _fit_modular(spec, domain, size, seed, adam_cfg, matched_params=True, width=None):
    train = sample_dataset(spec, domain, size, seed)
    normed, stats = normalize_inputs(train)
    if width is None:
        budget = size * (spec.dim + 1) if matched_params else None
        width = _modular_matched_width(spec, budget) if budget else 20
    mnet = modular_net_build(spec, (width, width), "tanh", seed)
    xs, ys = normed.inputs, normed.targets
    theta, _history = adam_core(
        modular_params(mnet),
        len(ys),
        lambda t, idx: modular_grad_xy(modular_with_params(mnet, t), xs[idx], ys[idx]),
        lambda t: float(
            np.mean((modular_forward_batch(modular_with_params(mnet, t), xs) - ys) ** 2)
        ),
        ys,
        adam_cfg,
        seed,
    )
    mnet = modular_with_params(mnet, theta)
    train_rmse = relative_rmse(modular_forward_batch(mnet, xs), ys)

    def predict(pts):
        z = (pts - stats.mean) / stats.std
        return modular_forward_batch(mnet, z), np.ones(len(pts), dtype=bool)

    return predict, train_rmse, mnet.n_params


def _modular_matched_width(spec, budget):
    best_w, best_diff = 1, None
    arities = [len(n.inputs) for n in spec.nodes if n.inputs]
    for w in range(1, 2000):
        total = sum(n_params_for((a, w, w, 1)) for a in arities)
        diff = abs(total - budget)
        if best_diff is None or diff < best_diff:
            best_w, best_diff = w, diff
        if total > 4 * budget and w > 4:
            break
    return best_w


def run_scaling_sweep(method, target, sizes, seeds, matched_params=True,
                      adam_cfg=AdamConfig()):
    """One row per (size, seed) cell; failures become NaN-flagged rows."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    spec, domain = catalog_lookup(target)
    rows = []
    for size in sizes:
        for seed in seeds:
            start = time.perf_counter()
            try:
                if method == "simplex":
                    predict, train_rmse, n_params = _fit_simplex(
                        spec, domain, size, seed, None
                    )
                elif method.startswith("spline-"):
                    order = int(method.split("-", 1)[1])
                    predict, train_rmse, n_params = _fit_spline(
                        spec, domain, size, seed, order
                    )
                elif method in ("relu-mlp", "tanh-mlp"):
                    predict, train_rmse, n_params = _fit_mlp(
                        spec,
                        domain,
                        size,
                        seed,
                        method.split("-", 1)[0],
                        adam_cfg,
                        matched_params,
                    )
                elif method == "modular-mlp":
                    predict, train_rmse, n_params = _fit_modular(
                        spec, domain, size, seed, adam_cfg, matched_params
                    )
                else:
                    raise ValueError(f"unknown method {method!r}")
                test_x, test_y = _test_points(spec, domain, seed)
                preds, valid = predict(test_x)
                test_rmse = relative_rmse(preds[valid], test_y[valid])
            except Exception:
                train_rmse = math.nan
                test_rmse = math.nan
                n_params = 0
            rows.append(
                SweepRow(
                    method,
                    target,
                    size,
                    n_params,
                    seed,
                    train_rmse,
                    test_rmse,
                    time.perf_counter() - start,
                )
            )
    rows.sort(key=lambda r: (r.method, r.target, r.n_train, r.seed))
    return SweepResult(tuple(rows))


# ----------------------------------------------------------------------
# Loss decomposition and spectrum reports
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LossBreakdown:
    train_loss: float
    test_loss: float
    generalization_gap_est: float
    reference_loss: float | None
    optimization_error_est: float | None


def loss_decomposition_report(train_rmse_rel, test_rmse_rel, reference_rmse_rel=None):
    """Split empirical loss into generalization and optimization estimates.

    The reference is a constructed near-optimal model (e.g. a gadget
    network) when one exists; without it the optimization split is
    unavailable rather than approximated.
    """
    opt_err = None
    if reference_rmse_rel is not None:
        opt_err = train_rmse_rel - reference_rmse_rel
    return LossBreakdown(
        train_loss=train_rmse_rel,
        test_loss=test_rmse_rel,
        generalization_gap_est=test_rmse_rel - train_rmse_rel,
        reference_loss=reference_rmse_rel,
        optimization_error_est=opt_err,
    )


def gadget_reference(target, cfg=None):
    """Constructed multiplication-gadget network for targets that admit one."""
    from .net import GadgetConfig

    cfg = cfg or GadgetConfig(a=1e-4)
    if target == "xy":
        return multiplication_gadget(cfg)
    if target == "dot3":
        return parallel_gadget_network([(0, 3), (1, 4), (2, 5)], 6, cfg)
    return None


def spectrum_report(net, data):
    """(index, eigenvalue, |e_i . g|) rows, eigenvalues descending."""
    eigensystem = sym_eigendecompose(hessian(net, data))
    g = grad(net, data)
    projections = np.abs(eigensystem.eigenvectors.T @ g)
    order = np.argsort(eigensystem.eigenvalues)[::-1]
    return [
        (rank, float(eigensystem.eigenvalues[i]), float(projections[i]))
        for rank, i in enumerate(order)
    ]


def gradient_mass_split(rows, top_fraction=0.10, bottom_fraction=0.50):
    """Squared-gradient mass in the top and bottom eigenvalue fractions.

    rows are spectrum_report output (sorted by descending eigenvalue).
    """
    n = len(rows)
    top_k = max(1, int(math.floor(top_fraction * n)))
    bottom_k = max(1, int(math.floor(bottom_fraction * n)))
    top = sum(r[2] ** 2 for r in rows[:top_k])
    bottom = sum(r[2] ** 2 for r in rows[n - bottom_k :])
    return top, bottom


# ----------------------------------------------------------------------
# CSV helpers (17 significant digits: exact f64 round trip)
# ----------------------------------------------------------------------

def fmt_float(x):
    return f"{x:.17g}"


def sweep_to_csv(result):
    lines = ["method,target,n_train,n_params,seed,train_rmse_rel,test_rmse_rel,wall_seconds"]
    for r in result.rows:
        lines.append(
            ",".join(
                [
                    r.method,
                    r.target,
                    str(r.n_train),
                    str(r.n_params),
                    str(r.seed),
                    fmt_float(r.train_rmse_rel),
                    fmt_float(r.test_rmse_rel),
                    fmt_float(r.wall_seconds),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def history_to_csv(history):
    lines = ["step,mse,rmse_rel,phase"]
    for row in history:
        lines.append(
            f"{row.step},{fmt_float(row.mse)},{fmt_float(row.rmse_rel)},{row.phase}"
        )
    return "\n".join(lines) + "\n"


def spectrum_to_csv(rows):
    lines = ["index,eigenvalue,grad_projection_abs"]
    for index, eigenvalue, proj in rows:
        lines.append(f"{index},{fmt_float(eigenvalue)},{fmt_float(proj)}")
    return "\n".join(lines) + "\n"
