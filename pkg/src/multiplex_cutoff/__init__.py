"""Random walks on multiplex directed configuration graphs with layer-choice vectors."""

from .degree_model import (
    DegreeModel, DegreeType, PolytopeRepr, build_polytope, check_assumptions, model_from_dict,
    regular_model, two_type_model, validate_model,
)
from .graph_gen import MultiplexGraph, WalkOperator, sample_graph
from .layer_chain import LayerChainAnalytics, build_chain
from .optimizer import OptimizerResult, maximize_entropy_rate
from .profile import CutoffProfile, envelope, profile_of, theory_curve
from .walk_engine import TVCurve, tv_curve

__all__ = [
    "DegreeModel", "DegreeType", "PolytopeRepr", "build_polytope", "check_assumptions",
    "model_from_dict", "regular_model", "two_type_model", "validate_model",
    "MultiplexGraph", "WalkOperator", "sample_graph", "LayerChainAnalytics", "build_chain",
    "OptimizerResult", "maximize_entropy_rate", "CutoffProfile", "envelope", "profile_of",
    "theory_curve", "TVCurve", "tv_curve",
]
__version__ = "0.1.0"
