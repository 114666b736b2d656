"""Exact statistics of first passage paths on finite directed graphs.

A first passage path runs from a source set ``A`` until it first enters a
target set ``B``.  Splitting it at its last visit to ``A`` gives a
nonreactive and a reactive segment.  This package computes visit counts,
fluxes, segment lengths and clock times of both segments by sparse linear
algebra, for discrete-time chains and for continuous-time jump processes
with arbitrary waiting-time laws, and checks them against Monte Carlo
sampling.
"""
__version__ = "0.1.0"

from .analysis import (EnsembleStats, analyze, check_identities, rank_report,
                       solve_committor, solve_mfpt, solve_theta)
from .data import TrajectoryDataset, counting_stats, estimate_model, naive_stats
from .ergodic import analyze_ergodic, invariant_measure
from .errors import ConsistencyError, SimulationError, SolverError, ValidationError
from .graph import DirectedGraph, ProblemSets, validate_assumption_1
from .model import DiscreteModel
from .montecarlo import SimulationConfig, sample_first_passage, segment_and_count, stationary_run
from .waiting import (ContinuousProcess, Exponential, PowerLaw, Tabulated, Weibull,
                      embed_discrete)

__all__ = [
    "ConsistencyError", "ContinuousProcess", "DirectedGraph", "DiscreteModel", "EnsembleStats",
    "Exponential", "PowerLaw", "ProblemSets", "SimulationConfig", "SimulationError",
    "SolverError", "Tabulated", "TrajectoryDataset", "ValidationError", "Weibull", "analyze",
    "analyze_ergodic", "check_identities", "counting_stats", "embed_discrete", "estimate_model",
    "invariant_measure", "naive_stats", "rank_report", "sample_first_passage",
    "segment_and_count", "solve_committor", "solve_mfpt", "solve_theta", "stationary_run",
    "validate_assumption_1",
]
