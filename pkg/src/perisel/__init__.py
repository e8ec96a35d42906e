"""Penalized projective estimation of periodic signals observed in
continuous time under white, Ornstein-Uhlenbeck or CAR noise.

Submodules
----------
basis
    Trigonometric basis, signal containers, smoothness classes, bump family.
noise
    Noise models, exact path simulation and folded noise laws.
estimators
    Least-squares and James-Stein projective estimators.
selection
    Penalty constants, model families, penalized selection, oracle bounds.
risk_lab
    Monte Carlo risk studies and the Bayesian lower bound.
config, cli
    Configuration handling and the ``perisel`` command.
"""

from __future__ import annotations

from .basis import GridSpec, PeriodicSignal, SobolevSpec, basis_matrix, eval_basis
from .estimators import ProjectiveEstimate, lse_fit, shrink_fit, stein_delta
from .noise import NoiseModel, SamplePath, lambda_star, simulate_path
from .risk_lab import (ExperimentConfig, bayes_risk_study, improvement_study, mc_risk,
                       oracle_check, rate_study, van_trees_bound)
from .selection import ModelFamily, PenaltyParams, oracle_terms, penalty, select, solve_constants

__all__ = [
    "GridSpec",
    "PeriodicSignal",
    "SobolevSpec",
    "basis_matrix",
    "eval_basis",
    "ProjectiveEstimate",
    "lse_fit",
    "shrink_fit",
    "stein_delta",
    "NoiseModel",
    "SamplePath",
    "lambda_star",
    "simulate_path",
    "ExperimentConfig",
    "bayes_risk_study",
    "improvement_study",
    "mc_risk",
    "oracle_check",
    "rate_study",
    "van_trees_bound",
    "ModelFamily",
    "PenaltyParams",
    "oracle_terms",
    "penalty",
    "select",
    "solve_constants",
]

__version__ = "0.1.0"
