"""Sparse integer least-squares detection with L0-regularized Babai points."""

__version__ = "0.1.0"

from .detect import DetectionResult, babai_box, babai_ordinary, babai_regularized
from .errors import BreakpointError, ConfigError, NoRootError, NumericalError, RankDeficientError
from .linalg import (
    generate_type1,
    generate_type2,
    make_rng,
    move_column_retriangularize,
    qr_factorize,
    swap_adjacent_retriangularize,
)
from .model import Alphabet, ModelInstance, lambda_star, nearest_in_alphabet, sample_x_star, simulate_observation
from .permute import PermutationOutcome, gsp, lll_p, lsp_vblast, msp, sqrd
from .sp import (
    BoundReport,
    SpReport,
    erf_accurate,
    f_second,
    gamma_breakpoints,
    mu_roots,
    phi,
    rho_bb,
    rho_rb,
    rho_rb_d2gamma,
    rho_rb_dgamma,
    sp_bb,
    sp_bound,
    sp_rb,
)
