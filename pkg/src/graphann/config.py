"""Build- and query-time tunables with upfront validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .data import ConfigError


@dataclass(frozen=True)
class BuildConfig:
    """Construction knobs.

    k slots per node split into k_nn direct-neighbor slots and k_sym
    inverse-link slots; at least half the budget stays with the direct
    neighbors so they are never overwritten. s is both the brute-force
    batch size and the segment size of coarse layers; g sub-trees merge
    per hierarchy level.
    """

    k: int = 24
    k_nn: int = 12
    k_sym: int = 12
    s: int = 32
    g: int = 4
    refinements: int = 2
    tau_build: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k_nn < 1:
            raise ConfigError("k_nn must be >= 1")
        if self.k_nn + self.k_sym != self.k:
            raise ConfigError(f"k_nn + k_sym must equal k ({self.k_nn}+{self.k_sym} != {self.k})")
        if 2 * self.k_nn < self.k:
            raise ConfigError(f"k_nn must be >= k/2 (got k_nn={self.k_nn}, k={self.k})")
        if self.k_sym < 0:
            raise ConfigError("k_sym must be >= 0")
        if self.s < self.k_nn + 1:
            raise ConfigError(f"s must be >= k_nn + 1 (got s={self.s}, k_nn={self.k_nn})")
        if self.g < 2:
            raise ConfigError("g must be >= 2")
        if self.refinements < 0:
            raise ConfigError("refinements must be >= 0")
        if self.tau_build < 0:
            raise ConfigError("tau_build must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BuildConfig":
        return cls(**d)


@dataclass(frozen=True)
class QueryConfig:
    """Query knobs; tau trades visited points for recall."""

    k_out: int = 10
    tau: float = 0.6
    max_iterations: int = 1000
    prioq_size: int = 256
    visited_size: int = 512

    def __post_init__(self):
        if self.k_out < 1:
            raise ConfigError("k_out must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.prioq_size < 2 * self.k_out:
            raise ConfigError(
                f"prioq_size must be >= 2 * k_out (got {self.prioq_size} < {2 * self.k_out})"
            )
        if self.visited_size < 1:
            raise ConfigError("visited_size must be >= 1")
