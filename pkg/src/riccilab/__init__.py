"""riccilab: a workbench for Ricci-flow stability of Einstein metrics.

Numerical side: discrete Riemannian calculus, entropy functionals and
geometric flows on flat periodic grid charts.  Exact side: rational
polynomial calculus on spheres and complex projective spaces, an Einstein
model-space catalog, and the cubic instability certificate for CP^n.
"""

from .grid import (
    GridChart,
    ScalarField,
    OneFormField,
    VectorField,
    SymTensorField,
    MetricField,
    ThreeTensorField,
    FourTensorField,
)
from .operators import (
    curvature,
    CurvaturePack,
    laplacian,
    hessian,
    divergence,
    div_adjoint,
    curvature_action,
    einstein_operator,
    lichnerowicz,
    hodge_laplacian_oneform,
    l2_inner,
    l2_norm,
    volume,
    average_integral,
)
from .eigen import eigen_smallest

__version__ = "0.1.0"
