"""precisionfit: fit symbolic targets to the 64-bit precision floor.

Simplex interpolation, splines, and neural networks, plus the optimizer
ladder (Adam -> BFGS -> low-curvature subspace descent -> boosting) and a
scaling-sweep benchmark harness.
"""

from .targets import (
    Dataset,
    Domain,
    NormStats,
    TargetSpec,
    builtin_catalog,
    catalog_lookup,
    eval_target,
    eval_target_batch,
    max_arity,
    normalize_inputs,
    parse_expression,
    sample_dataset,
)
from .triangulation import (
    Triangulation,
    delaunay_triangulate,
    interior_mask,
    simplex_predict,
    simplex_predict_batch,
)
from .splines import (
    GridSpline,
    Spline1D,
    grid_spline_eval,
    grid_spline_fit,
    spline_eval_1d,
    spline_fit_1d,
)
from .net import (
    GadgetConfig,
    Mlp,
    ModularNet,
    assemble_boosted,
    forward,
    forward_batch,
    grad,
    hessian,
    mlp_init,
    modular_net_build,
    multiplication_gadget,
    relu_depth_bound,
)
from .optim import (
    AdamConfig,
    BfgsConfig,
    BoostConfig,
    EigenSystem,
    SubspaceConfig,
    adam_minimize,
    bfgs_minimize,
    boost_train,
    low_curvature_minimize,
    sym_eigendecompose,
)
from .bench import (
    LossBreakdown,
    PowerLawFit,
    SweepResult,
    fit_power_law,
    loss_decomposition_report,
    relative_rmse,
    run_scaling_sweep,
    spectrum_report,
)

__version__ = "0.1.0"
