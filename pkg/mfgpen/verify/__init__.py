"""Property checks and the full verification suite."""

from .checks import (CheckResult, CheckStatus, check_constrained_fbsde_residual,
                     check_phi_slope_crosscheck, check_product_decay)
from .suite import CHECK_ORDER, VerificationReport, run_full_suite
