"""Finite-volume solver and diagnostics for diffusive coagulation-fragmentation."""
from __future__ import annotations

from .grids import Field, SizeGrid, SpaceGrid, weighted_seminorm
from .kernels import (
    CertificateReport,
    CoagKernel,
    FragKernel,
    RateModel,
    check_hypotheses,
    constant_coag,
    moment_report,
    power_kernel,
    product_power_coag,
    sum_power_coag,
    zero_kernel,
)
from .fragmentation import FragOperator, build_frag_operator
from .coagulation import CoagOperator, build_coag_operator
from .diffusion import DiffusionPropagator
from .diagnostics import DiagnosticsSeries, NormSpec, boundedness_report
from .integrator import (
    Models,
    NoContraction,
    NumericalFault,
    PositivityStagnation,
    RunState,
    SolverConfig,
    picard_solve,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "CertificateReport", "CoagKernel", "CoagOperator", "DiagnosticsSeries", "DiffusionPropagator", "Field",
    "FragKernel", "FragOperator", "Models", "NoContraction", "NormSpec", "NumericalFault", "PositivityStagnation",
    "RateModel", "RunState", "SizeGrid", "SolverConfig", "SpaceGrid", "boundedness_report", "build_coag_operator",
    "build_frag_operator", "check_hypotheses", "constant_coag", "moment_report", "picard_solve", "power_kernel",
    "product_power_coag", "run", "sum_power_coag", "weighted_seminorm", "zero_kernel",
]
