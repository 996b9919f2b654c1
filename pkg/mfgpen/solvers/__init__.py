"""Solvers module for mfgpen.

This module provides the Riccati solver and its envelopes, the mean-field
boundary value problem, the decoupling field over a penalty ladder, and the
optimal trajectories with their costs.
"""

from .riccati import (RiccatiPath, check_riccati_envelope, lower_envelope_hatP, solve_riccati,
                      upper_envelope_barP)
from .meanflow import (MeanFlow, check_psi_envelope, phi_decoupling, psi_envelopes,
                       solve_mean_bvp)
from .field import (LevelSolution, LimitField, PenaltyLadder, assemble_ladder,
                    estimate_u_infinity, eval_uL, run_ladder)
from .trajectory import (CostReport, TrajectoryBundle, build_constrained_solution,
                         evaluate_costs, simulate_level)
