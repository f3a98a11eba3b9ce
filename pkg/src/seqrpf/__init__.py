"""Sequential Ruelle-Perron-Frobenius theory for non-stationary expanding systems."""

__version__ = "0.1.0"

from .errors import (
    BranchLoss,
    ConfigError,
    HorizonInsufficient,
    InvalidDriver,
    NonPrimitive,
    NotConverged,
    PreconditionFailed,
    SeqRpfError,
    SpecError,
    StateCapExceeded,
    VarianceTooSmall,
)
from .systems import CircleSpec, SftSpec, constant_spec, full_shift, golden_mean, random_primitive_spec
from .rpf import RpfFamily, solve_family, solve_triplet
from .gibbs import build_gibbs
from .distributions import build_chain, exact_distribution, exact_mgf
