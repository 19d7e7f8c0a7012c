"""Fixed-size device sampling with prescribed marginal inclusion probabilities.

Uses systematic probability-proportional sampling over a uniformly random
device permutation: stack the probabilities into a unit-rate line, drop one
uniform start point plus its integer shifts, and select whichever device's
interval each point lands in.  Because every probability is at most one, no
device can be selected twice, and because the probabilities sum to the
sample size, exactly that many devices come out.  The random permutation
removes the dependence structure that a fixed ordering would imprint; only
the marginals are controlled, which is all the analysis uses.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .core import EPS_R, PROB_SUM_TOL


@dataclasses.dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Per-device inclusion probabilities summing to the sample size."""

    probs: np.ndarray
    size: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if self.size < 1 or self.size > probs.size:
            raise ValueError(f"sample size {self.size} invalid for {probs.size} devices")
        if np.any(probs < EPS_R) or np.any(probs > 1.0):
            raise ValueError("every inclusion probability must lie in [1e-6, 1]")
        total = float(probs.sum())
        if abs(total - self.size) > PROB_SUM_TOL:
            raise ValueError(
                f"inclusion probabilities must sum to the sample size "
                f"(got {total!r}, expected {self.size})"
            )

    @property
    def num_devices(self) -> int:
        return int(self.probs.size)


def make_plan(probs) -> SamplingPlan:
    """Build a plan, inferring the sample size from the probability total."""
    probs = np.asarray(probs, dtype=np.float64)
    return SamplingPlan(probs, int(round(float(probs.sum()))))


def sample_participants(plan: SamplingPlan, rng: np.random.Generator) -> set[int]:
    """Draw exactly ``plan.size`` distinct devices with the plan's marginals."""
    perm = rng.permutation(plan.num_devices)
    edges = np.cumsum(plan.probs[perm])
    points = rng.random() + np.arange(plan.size)
    idx = np.searchsorted(edges, points, side="right")
    idx = np.minimum(idx, plan.num_devices - 1)  # guard the float edge at the top
    chosen = perm[idx]
    selected = set(int(k) for k in chosen)
    if len(selected) != plan.size:
        raise AssertionError("systematic draw produced a duplicate; plan invalid")
    return selected


def empirical_inclusion(
    plan: SamplingPlan, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-device selection frequency over repeated draws."""
    if trials < 1:
        raise ValueError("need at least one trial")
    counts = np.zeros(plan.num_devices, dtype=np.int64)
    for _ in range(trials):
        for k in sample_participants(plan, rng):
            counts[k] += 1
    return counts / trials
