"""Classification, diagrams and Monte Carlo checks for the GRW/CSL parameter plane."""

from .classify import ModelSpec, Status, classify_point, coverage_check, err_boundary
from .core import CODATA2018, Ontology, ParamPoint, PiecewiseBound, Theory, lower_envelope

__version__ = "0.1.0"

__all__ = [
    "CODATA2018",
    "ModelSpec",
    "Ontology",
    "ParamPoint",
    "PiecewiseBound",
    "Status",
    "Theory",
    "classify_point",
    "coverage_check",
    "err_boundary",
    "lower_envelope",
]
