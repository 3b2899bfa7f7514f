"""Event-driven simulation of (biased) voter dynamics with two-stage mutations."""

from .beta import BetaEstimate, estimate_beta
from .family import (
    BoundaryRow, ConditionedManhours, FamilyBatch, NuEstimate, boundary_profile,
    conditioned_manhours, estimate_nu, estimate_nu_curve, estimate_nu_eps, max_size_tail,
    run_families, run_family,
)
from .params import (
    Caps, Dynamics, FamilyOutcome, Fate, InvariantError, RunawayError, SimParams, Tau2Sample,
)
from .state import Event, EventKind, LatticeState, step
from .tau2 import Tau2Batch, run_tau2, sample_tau2

__all__ = [
    "BetaEstimate", "BoundaryRow", "Caps", "ConditionedManhours", "Dynamics", "Event",
    "EventKind", "FamilyBatch", "FamilyOutcome", "Fate", "InvariantError", "LatticeState",
    "NuEstimate", "RunawayError", "SimParams", "Tau2Batch", "Tau2Sample", "boundary_profile",
    "conditioned_manhours", "estimate_beta", "estimate_nu", "estimate_nu_curve",
    "estimate_nu_eps", "max_size_tail", "run_families", "run_family", "run_tau2",
    "sample_tau2", "step",
]
