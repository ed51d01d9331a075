"""Piecewise-polynomial interpolation: 1D splines of order 1-5 and
tensor-product cubic splines on regular 2D/3D grids.

Construction leans on scipy's B-spline solvers (not-a-knot style end
conditions); evaluation of the 1D piecewise polynomials is local, from
per-interval coefficients.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import NdBSpline, PPoly, make_interp_spline

from .targets import eval_target_batch


@dataclass(frozen=True)
class Spline1D:
    order: int
    knots: np.ndarray  # strictly increasing breakpoints
    coefficients: np.ndarray  # (order+1, n_intervals), highest degree first

    @property
    def n_params(self):
        return self.coefficients.size


@dataclass(frozen=True)
class GridSpline:
    dim: int
    axes: tuple  # per-dimension strictly increasing grid coordinates
    values: np.ndarray  # grid samples, shape len(axes[0]) x ... x len(axes[-1])
    _interp: object = field(repr=False, compare=False, default=None)

    @property
    def n_params(self):
        return self.values.size


def spline_fit_1d(xs, ys, order):
    """Interpolating spline of the given order through (xs, ys)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if not 1 <= order <= 5:
        raise ValueError("order must be in 1..5")
    if len(xs) < order + 1:
        raise ValueError(f"need at least {order + 1} points for order {order}")
    if np.any(np.diff(xs) <= 0.0):
        raise ValueError("xs must be strictly increasing (no duplicates)")
    bspl = make_interp_spline(xs, ys, k=order)
    ppoly = PPoly.from_spline(bspl)
    # from_spline repeats the end breakpoints k+1 times; keep real intervals
    keep = np.nonzero(np.diff(ppoly.x) > 0.0)[0]
    knots = np.append(ppoly.x[keep], ppoly.x[keep[-1] + 1])
    return Spline1D(order, knots, ppoly.c[:, keep].copy())


def spline_eval_1d(sp, x):
    return float(spline_eval_batch(sp, np.array([x]))[0])


def spline_eval_batch(sp, xs):
    """Evaluate on left-closed intervals (the last one right-closed)."""
    xs = np.asarray(xs, dtype=np.float64)
    lo, hi = sp.knots[0], sp.knots[-1]
    if np.any(xs < lo) or np.any(xs > hi):
        raise ValueError(f"points outside the spline span [{lo}, {hi}]")
    idx = np.searchsorted(sp.knots, xs, side="right") - 1
    idx = np.clip(idx, 0, len(sp.knots) - 2)
    local = xs - sp.knots[idx]
    out = np.zeros_like(xs)
    for c in sp.coefficients:
        out = out * local + c[idx]
    return out


def _tensor_cubic(axes, values):
    """Tensor-product cubic spline: one 1D coefficient fit per axis."""
    coeffs = values
    knot_vectors = []
    for j in range(len(axes)):
        coeffs = np.moveaxis(coeffs, j, 0)
        shape_rest = coeffs.shape[1:]
        s = make_interp_spline(
            axes[j], coeffs.reshape(coeffs.shape[0], -1), k=3, axis=0
        )
        knot_vectors.append(s.t)
        coeffs = np.moveaxis(s.c.reshape((s.c.shape[0],) + shape_rest), 0, j)
    return NdBSpline(tuple(knot_vectors), coeffs, (3,) * len(axes))


def grid_spline_fit(spec, domain, pts_per_axis):
    """Sample the target on a regular grid and fit tensor-product cubics."""
    if spec.dim not in (2, 3):
        raise ValueError("grid splines support dim 2 or 3")
    if pts_per_axis < 4:
        raise ValueError("need at least 4 points per axis for cubics")
    axes = tuple(
        np.linspace(domain.lo[j], domain.hi[j], pts_per_axis)
        for j in range(spec.dim)
    )
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.column_stack([m.ravel() for m in mesh])
    values = eval_target_batch(spec, flat).reshape([pts_per_axis] * spec.dim)
    return GridSpline(spec.dim, axes, values, _tensor_cubic(axes, values))


def _grid_interp(gs):
    if gs._interp is None:
        object.__setattr__(gs, "_interp", _tensor_cubic(gs.axes, gs.values))
    return gs._interp


def grid_spline_eval(gs, points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _grid_interp(gs)(points)


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def spline_to_json(sp):
    return json.dumps(
        {
            "order": sp.order,
            "knots": sp.knots.tolist(),
            "coefficients": sp.coefficients.tolist(),
        }
    )


def spline_from_json(text):
    obj = json.loads(text)
    return Spline1D(
        obj["order"],
        np.array(obj["knots"], dtype=np.float64),
        np.array(obj["coefficients"], dtype=np.float64),
    )


def grid_spline_to_json(gs):
    return json.dumps(
        {
            "dim": gs.dim,
            "axes": [axis.tolist() for axis in gs.axes],
            "values": gs.values.tolist(),
        }
    )


def grid_spline_from_json(text):
    obj = json.loads(text)
    axes = tuple(np.array(a, dtype=np.float64) for a in obj["axes"])
    return GridSpline(obj["dim"], axes, np.array(obj["values"], dtype=np.float64))
