"""Experiment configuration: chain, baths, time-lag law and run plan."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BathPotentials
from .hamiltonian import ChainCouplings

LAG_ALIASES = {"A": "constant", "B": "uniform", "C": "exponential"}


@dataclass(frozen=True)
class LagDistribution:
    """Law of the waiting time between bath contacts, all with mean ``mean``.

    constant (A): always ``mean``; uniform (B): on ``[0, 2 mean]``;
    exponential (C): Poissonian bath contacts.
    """

    kind: str = "constant"
    mean: float = 1.0

    def __post_init__(self):
        kind = LAG_ALIASES.get(self.kind, self.kind)
        if kind not in LAG_ALIASES.values():
            raise ValueError(f"unknown lag distribution {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.mean < 0:
            raise ValueError("mean time lag must be nonnegative")

    @property
    def label(self) -> str:
        return {v: k for k, v in LAG_ALIASES.items()}[self.kind]

    def sample(self, u: float) -> float:
        """Inverse-CDF draw from one uniform ``u`` in [0, 1)."""
        if self.kind == "constant":
            return self.mean
        if self.kind == "uniform":
            return 2.0 * self.mean * u
        return -self.mean * np.log1p(-u)


@dataclass(frozen=True)
class ChainSpec:
    n_sites: int
    couplings: ChainCouplings
    potentials: BathPotentials
    lag: LagDistribution = field(default_factory=LagDistribution)

    def __post_init__(self):
        if self.n_sites < 3:
            raise ValueError(f"need at least 3 sites, got {self.n_sites}")

    @classmethod
    def symmetric(cls, n_sites, delta, mu, J_z=0.5, lag="constant", tau=1.0) -> "ChainSpec":
        """Chain at anisotropy ``delta`` (fixed ``J_z``) under symmetric driving ``mu``."""
        return cls(
            n_sites,
            ChainCouplings.from_delta(delta, J_z),
            BathPotentials.symmetric(mu),
            LagDistribution(lag, tau),
        )

    def with_potentials(self, mu_L: float, mu_R: float) -> "ChainSpec":
        return replace(self, potentials=BathPotentials(mu_L, mu_R))


@dataclass(frozen=True)
class RunPlan:
    chain: ChainSpec
    total_steps: int = 10**6
    burn_in_steps: int = 10**4
    seed: int = 0
    n_trajectories: int = 8
    # "auto" -> product-state kernel when the sector blocks are affordable, else chebyshev
    propagation: str = "auto"

    def __post_init__(self):
        if not 0 <= self.burn_in_steps < self.total_steps:
            raise ValueError("need 0 <= burn_in_steps < total_steps")
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def measured_steps(self) -> int:
        return self.total_steps - self.burn_in_steps
