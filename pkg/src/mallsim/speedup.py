"""Speedup models for parallel jobs.

A model maps a node count n to a speedup factor S(n), normalized so
S(1) = 1. Efficiency is S(n)/n. Both model families ship with constructor
validation that keeps S non-decreasing and efficiency non-increasing,
which the node-bounds derivation relies on.
"""

from __future__ import annotations

from dataclasses import dataclass


class SpeedupModel:
    """Base class; subclasses implement speedup(n)."""

    kind = "base"

    def speedup(self, n: int) -> float:
        raise NotImplementedError

    def efficiency(self, n: int) -> float:
        return self.speedup(n) / n

    def params(self) -> dict:
        """Parameters echoed into report headers."""
        raise NotImplementedError


@dataclass(frozen=True)
class AmdahlSpeedup(SpeedupModel):
    """Amdahl's law: S(n) = 1 / ((1 - f) + f/n) for parallel fraction f."""

    parallel_fraction: float = 0.9
    kind = "amdahl"

    def __post_init__(self):
        if not 0.0 < self.parallel_fraction < 1.0:
            raise ValueError("parallel_fraction must be in (0, 1)")

    def speedup(self, n: int) -> float:
        if n < 1:
            raise ValueError("node count must be >= 1")
        f = self.parallel_fraction
        return 1.0 / ((1.0 - f) + f / n)

    def params(self) -> dict:
        return {"kind": self.kind, "parallel_fraction": self.parallel_fraction}


@dataclass(frozen=True)
class DowneySpeedup(SpeedupModel):
    """Downey's low-variance speedup curve.

    With average parallelism A and variance sigma in [0, 1]:

        S(n) = A*n / (A + sigma*(n-1)/2)                    1 <= n <= A
        S(n) = A*n / (sigma*(A - 1/2) + n*(1 - sigma/2))    A <  n <  2A-1
        S(n) = A                                            n >= 2A-1

    sigma = 0 degenerates to linear speedup capped at A. The two branch
    points are continuous, so the curve is monotone for sigma <= 1; the
    constructor rejects the high-variance regime.
    """

    avg_parallelism: float
    variance: float = 0.5
    kind = "downey"

    def __post_init__(self):
        if self.avg_parallelism < 1.0:
            raise ValueError("avg_parallelism must be >= 1")
        if not 0.0 <= self.variance <= 1.0:
            raise ValueError("variance must be in [0, 1] (low-variance form)")

    def speedup(self, n: int) -> float:
        if n < 1:
            raise ValueError("node count must be >= 1")
        a = self.avg_parallelism
        s = self.variance
        if n >= 2 * a - 1:
            return a
        if n <= a:
            return a * n / (a + s * (n - 1) / 2.0)
        return a * n / (s * (a - 0.5) + n * (1.0 - s / 2.0))

    def params(self) -> dict:
        return {
            "kind": self.kind,
            "avg_parallelism": self.avg_parallelism,
            "variance": self.variance,
        }


def model_from_config(config: dict) -> SpeedupModel:
    """Build a model from its config/report-header dict."""
    kind = config.get("kind")
    if kind == "amdahl":
        return AmdahlSpeedup(parallel_fraction=float(config["parallel_fraction"]))
    if kind == "downey":
        return DowneySpeedup(
            avg_parallelism=float(config["avg_parallelism"]),
            variance=float(config.get("variance", 0.5)),
        )
    raise ValueError(f"unknown speedup model kind: {kind!r}")
