"""Value types shared between the analytic, grid and bound-checking layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DistanceTriple:
    """Total variation, relative entropy (nats) and varentropy (nats^2) of one law."""

    tv: float
    ent: float
    varent: float

    def __post_init__(self):
        if not 0.0 <= self.tv <= 1.0:
            raise ValueError(f"tv must lie in [0, 1], got {self.tv!r}")
        if not self.ent >= 0.0:
            raise ValueError(f"ent must be nonnegative, got {self.ent!r}")
        if not self.varent >= 0.0:
            raise ValueError(f"varent must be nonnegative, got {self.varent!r}")

    @property
    def pinsker_bound(self) -> float:
        """(1 + sqrt(varent)) / (1 - tv); infinite when tv == 1."""
        if self.tv >= 1.0:
            return math.inf
        return (1.0 + math.sqrt(self.varent)) / (1.0 - self.tv)


@dataclass(frozen=True)
class MixingProfile:
    """Sampled curve t -> (TV, Ent, Varent, dEnt/dt) together with lambda and kappa.

    ``source`` is ``"analytic-ou"`` or ``"fokker-planck"``; ``metadata`` carries
    model or resolution details and is copied into every report built from it.
    """

    times: np.ndarray
    triples: tuple[DistanceTriple, ...]
    dent_dt: np.ndarray | None
    lam: float
    kappa: float
    source: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "triples", tuple(self.triples))
        if times.ndim != 1 or len(times) != len(self.triples):
            raise ValueError("times and triples must be 1-D and of equal length")
        if len(times) and (times[0] <= 0 or np.any(np.diff(times) <= 0)):
            raise ValueError("times must be positive and strictly increasing")
        if self.dent_dt is not None:
            dent = np.asarray(self.dent_dt, dtype=float)
            if dent.shape != times.shape:
                raise ValueError("dent_dt must match times")
            object.__setattr__(self, "dent_dt", dent)
        if not self.lam > 0:
            raise ValueError("spectral gap must be positive")
        if not self.kappa >= 0:
            raise ValueError("curvature must be nonnegative")
        if self.lam < self.kappa - 1e-3:
            raise ValueError(f"lambda={self.lam} < kappa={self.kappa}: curvature certificate inconsistent")

    @property
    def tv(self) -> np.ndarray:
        return np.array([p.tv for p in self.triples])

    @property
    def ent(self) -> np.ndarray:
        return np.array([p.ent for p in self.triples])

    @property
    def varent(self) -> np.ndarray:
        return np.array([p.varent for p in self.triples])
