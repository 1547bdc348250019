"""Inverse mean curvature flow laboratory for asymptotically flat models.

Evolves radial graphs over the sphere by inverse mean curvature flow in
rotationally symmetric (optionally perturbed) ambient 3-metrics, and checks
the Geroch-monotonicity identities, growth bands, and spacetime metric-chain
distances that a quantitative mass-stability argument rests on.
"""

from .ambient import (
    AmbientMetric,
    PerturbedAmbient,
    RotSymAmbient,
    af_constants,
    euclidean,
    schwarzschild,
)
from .diagnostics import (
    BumpHarmonic,
    integral_limits_report,
    rate_balance_report,
    h_concentration,
    hawking_mass,
    in1_upper_bound,
    iso_band_check,
    lambda1_neumann,
    length_band_check,
    poincare_check,
    sandwich_check,
    state_record,
    weak_ricci_identity,
)
from .flow import FlowConfig, FlowTrace, run_flow, step_ode_rotsym, step_pde_graph
from .geometry import ClassViolationError, FlowState, GraphFrame, graph_frame
from .grid import SphericalGrid, build_grid
from .metric_chain import (
    assemble_blocks,
    chain_report,
    l2_block_distance,
    moser_reparam,
    roundness_deficit,
)

__version__ = "0.1.0"
