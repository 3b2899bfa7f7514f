"""Parameter and result records for the lattice engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

from ..lattice import Geometry

#: a single family stops once u2 * man-hours exceeds this (exp(-20) ~ 2e-9)
MANHOUR_EXPONENT_CAP = 20.0
DEFAULT_SIZE_CAP = 10**7
DEFAULT_EVENT_BUDGET = 10**10


class Dynamics(str, Enum):
    BIASED_VOTER = "biased_voter"
    KOMAROVA = "komarova"


class Fate(str, Enum):
    EXTINCT = "extinct"
    TYPE2_BORN = "type2_born"
    SIZE_CAP_HIT = "size_cap_hit"
    MANHOUR_CAP_HIT = "manhour_cap_hit"


class RunawayError(RuntimeError):
    """A run exhausted its event budget; ``partial`` holds the state summary."""

    def __init__(self, message: str, partial: Optional[dict] = None):
        super().__init__(message)
        self.partial = partial or {}


class InvariantError(AssertionError):
    """The incremental discordant-pair index disagrees with a rebuild."""


@dataclass(frozen=True)
class Caps:
    """Stop rule.  ``manhour_cap=None`` resolves to 20/u2 (or no cap if u2 = 0)."""

    manhour_cap: Optional[float] = None
    size_cap: int = DEFAULT_SIZE_CAP
    max_events: int = DEFAULT_EVENT_BUDGET

    def resolved_manhour_cap(self, u2: float) -> float:
        if self.manhour_cap is not None:
            return float(self.manhour_cap)
        return MANHOUR_EXPONENT_CAP / u2 if u2 > 0 else math.inf


@dataclass(frozen=True)
class SimParams:
    geometry: Geometry
    lam: float = 1.0
    u1: float = 0.0
    u2: float = 0.0
    dynamics: Dynamics = Dynamics.BIASED_VOTER
    seed: int = 0
    caps: Caps = field(default_factory=Caps)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        for name in ("u1", "u2"):
            u = getattr(self, name)
            # rates, not probabilities: values above 1 are legal (instant-tunneling limit)
            if not (u >= 0.0 and math.isfinite(u)):
                raise ValueError(f"{name} must be a finite non-negative rate, got {u}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")
        object.__setattr__(self, "dynamics", Dynamics(self.dynamics))

    @property
    def komarova(self) -> bool:
        return self.dynamics is Dynamics.KOMAROVA


@dataclass
class FamilyOutcome:
    fate: Fate
    man_hours: float
    max_size: int
    t_end: float
    up_jumps: int
    down_jumps: int
    first_hit_times: Dict[int, float] = field(default_factory=dict)
    final_size: int = 0


@dataclass(frozen=True)
class Tau2Sample:
    tau2: float
    rho2: float
    n_families: int
