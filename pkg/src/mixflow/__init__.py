"""Simulation and verification toolkit for stochastic mass-transport models.

The package simulates generalized KMP-type energy redistribution, harmonic
heavy-tailed transport, inclusion/exclusion-style particle systems and
their hidden-parameter companion processes on arbitrary finite graphs, and
verifies the exact finite-size identities (dualities, intertwinings,
moment recursions) and steady-state mixture theorems those models satisfy.
"""

from .models import (
    DualIndex,
    Family,
    Graph,
    ModelSpec,
    ReservoirKind,
    ReservoirSpec,
    StateKind,
    StateVector,
    build_graph,
    chain_graph,
    model_from_json,
    model_to_json,
    validate_model,
)
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "DualIndex",
    "Family",
    "Graph",
    "ModelSpec",
    "ReservoirKind",
    "ReservoirSpec",
    "RngStream",
    "StateKind",
    "StateVector",
    "build_graph",
    "chain_graph",
    "model_from_json",
    "model_to_json",
    "validate_model",
    "__version__",
]
