"""Federated gradient aggregation with local DP noise and additive secret sharing."""

__version__ = "0.1.0"

from .config import ConvergenceRule, ExperimentConfig  # noqa: F401
from .field import (  # noqa: F401
    DEFAULT_MODULUS,
    MERSENNE_127,
    FieldElement,
    FixedPointCodec,
    PrimeModulus,
)
from .privacy import (  # noqa: F401
    DpParams,
    PrivacyLedger,
    allocate_budget,
    compose_advanced,
    compose_basic,
)
from .protocol import Mechanism, TrainingReport, run_training  # noqa: F401
from .sharing import ShareSet, ShareVector, reconstruct, split  # noqa: F401
