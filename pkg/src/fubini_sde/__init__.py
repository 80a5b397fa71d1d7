"""Graphon SDEs on a finite (index x path) stand-in for a Fubini extension.

A continuum family of essentially pairwise independent Brownian motions is
represented by ``N`` index nodes times ``M`` Monte-Carlo paths; pooling over
both axes gives the single Brownian motion of the extension space.
"""

__version__ = "0.1.0"

from .ensemble import MeanFlow, PathEnsemble
from .girsanov import (
    DensityWeights,
    ThetaProcess,
    density_process,
    novikov_estimate,
    shifted_process,
    verify_girsanov,
)
from .graphon import Graphon, QuadratureKernel, apply_W, build_quadrature_kernel, operator_norm_check
from .grids import Grids, IndexGrid, TimeGrid
from .noise import (
    NoiseEnsemble,
    generate_epi_brownian,
    half_gaussian_mixture_sample,
    pooled_increments,
    sign_flip_counterexample,
)
from .solver import (
    Coefficients,
    InitialCondition,
    elln_check,
    euler_step,
    mean_flow_ode_oracle,
    solve_coupled,
    solve_picard,
)
from .stattest import (
    KsReport,
    WeightedSample,
    ks_test_normal,
    ks_test_normal_weighted,
    moment_check,
    pairwise_independence_check,
    weighted_l2_norm,
)
