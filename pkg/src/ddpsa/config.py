"""Experiment configuration.

Defaults mirror the reference experimental setup: three clients, three
intermediate servers, privacy budget 0.1 per round, ten fractional digits
of fixed-point precision, at most 3000 rounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ConfigurationError

MECHANISMS = ("no_private", "ldp", "mpc", "ddp_sa")
TRANSPORTS = ("sim", "tcp")
ALLOCATIONS = ("uniform", "adaptive")

TRAIN_FRACTION = 0.6
VAL_FRACTION = 0.2


@dataclass(frozen=True)
class ConvergenceRule:
    """Stop when validation loss fails to improve by rel_tol for patience rounds."""

    rel_tol: float = 1e-6
    patience: int = 50

    def __post_init__(self) -> None:
        if not 0.0 < self.rel_tol < 1.0:
            raise ConfigurationError(f"rel_tol must be in (0, 1), got {self.rel_tol}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str = "ddp_sa"
    n_clients: int = 3
    m_servers: int = 3
    epsilon: float = 0.1
    delta: float = 0.0
    d_n: int = 10
    T_max: int = 3000
    seed: int = 0
    transport: str = "sim"
    samples_per_client: int = 2000
    warmup_rounds: int = 50
    convergence: ConvergenceRule = field(default_factory=ConvergenceRule)
    allocation: str = "uniform"
    alpha: Optional[float] = None
    value_bound: float = 1e6
    output_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mechanism not in MECHANISMS:
            raise ConfigurationError(
                f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}"
            )
        if self.transport not in TRANSPORTS:
            raise ConfigurationError(
                f"unknown transport {self.transport!r}; expected one of {TRANSPORTS}"
            )
        if self.allocation not in ALLOCATIONS:
            raise ConfigurationError(
                f"unknown allocation {self.allocation!r}; expected one of {ALLOCATIONS}"
            )
        if self.n_clients < 1:
            raise ConfigurationError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.m_servers < 1:
            raise ConfigurationError(f"m_servers must be >= 1, got {self.m_servers}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.delta < 0:
            raise ConfigurationError(f"delta must be >= 0, got {self.delta}")
        if self.d_n < 1:
            raise ConfigurationError(f"d_n must be >= 1, got {self.d_n}")
        if self.T_max < 1:
            raise ConfigurationError(f"T_max must be >= 1, got {self.T_max}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.samples_per_client < 2:
            raise ConfigurationError(
                f"samples_per_client must be >= 2, got {self.samples_per_client}"
            )
        if self.warmup_rounds < 1:
            raise ConfigurationError(f"warmup_rounds must be >= 1, got {self.warmup_rounds}")
        if self.value_bound <= 0:
            raise ConfigurationError(f"value_bound must be positive, got {self.value_bound}")
        if self.allocation == "uniform" and self.alpha is not None:
            raise ConfigurationError("alpha only applies to adaptive allocation")
        if self.allocation == "adaptive":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigurationError("adaptive allocation needs alpha in (0, 1)")

    @property
    def uses_dp(self) -> bool:
        return self.mechanism in ("ldp", "ddp_sa")

    @property
    def uses_shares(self) -> bool:
        return self.mechanism in ("mpc", "ddp_sa")

    @property
    def n_samples(self) -> int:
        """Dataset size whose 60% train split shards evenly across clients.

        Fixed per-client shards keep per-client noise constant as n grows,
        which is the regime where averaging n independent noise draws
        shrinks the aggregate error. ceil(target / 0.6) in exact integer
        arithmetic; the train split then holds exactly
        samples_per_client * n_clients rows.
        """
        target = self.samples_per_client * self.n_clients
        return (5 * target + 2) // 3

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)
