"""Model module for mfgpen.

This module holds the coefficient catalog, the coefficient set with its
assumption checks, the initial law and the time grid.
"""

from .catalog import build_coupling, build_time_function
from .coefficients import (CoefficientSet, InitialLaw, ProbeGrid, ValidationReport,
                           invert_population_response, validate_assumptions)
from .grid import TimeGrid
