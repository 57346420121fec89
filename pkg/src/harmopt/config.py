"""Central numerical tolerances."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    equality: float = 1e-8
    solver_abs: float = 1e-8
    solver_rel: float = 1e-8
    symmetry: float = 1e-10
    psd: float = 1e-10
    weights: float = 1e-12
    membership: float = 1e-6
    certified: float = 1e-6


TOL = Tolerances()
