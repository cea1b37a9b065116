"""Scenario sampling: how many systems to draw, and drawing them from the
uncertainty ellipsoid as a truncated Gaussian by rejection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sysid import UncertaintySet

__all__ = [
    "ScenarioSet",
    "required_scenarios",
    "sample_scenarios",
    "scenarios_to_dict",
    "scenarios_from_dict",
]

_PROBE_BATCH = 2048
_MIN_ACCEPT_RATE = 1e-3
_MAX_DRAWS_PER_SAMPLE = 200_000


@dataclass(frozen=True)
class ScenarioSet:
    """M sampled coefficient vectors (rows of ``systems``) from ``source``."""

    systems: np.ndarray
    seed: int
    source: UncertaintySet | None = None

    @property
    def M(self) -> int:
        return self.systems.shape[0]

    @property
    def n(self) -> int:
        return self.systems.shape[1]


def required_scenarios(epsilon: float, eta: float, p: int) -> int:
    """Smallest sample count satisfying M >= (2/eps) * (ln(1/eta) + p)."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if p < 1:
        raise ValueError("p must be a positive integer")
    return math.ceil((2.0 / epsilon) * (math.log(1.0 / eta) + p))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def sample_scenarios(uset: UncertaintySet, M: int, seed: int) -> ScenarioSet:
    """Draw M coefficient vectors from N(g_hat, Sigma) restricted to the set.

    Candidates are g_hat + L z with L the Cholesky factor and z standard
    normal; a candidate is accepted iff it lies in the ellipsoid, which in
    the whitened coordinates is exactly ||z||^2 <= radius_sq.  Every sample
    index owns an isolated counter-derived substream, so the result is
    identical however the work is scheduled.
    """
    if M < 1:
        raise ValueError("M must be positive")
    center = uset.center
    n = center.n
    chol = center.sigma_chol
    radius_sq = uset.radius_sq

    probe = _stream(seed, 0).standard_normal((_PROBE_BATCH, n))
    rate = float(np.mean(np.einsum("ij,ij->i", probe, probe) <= radius_sq))
    if rate < _MIN_ACCEPT_RATE:
        raise RuntimeError(
            f"scenario acceptance rate {rate:.2e} over a {_PROBE_BATCH}-draw probe "
            f"is below {_MIN_ACCEPT_RATE:.0e}; the radius ({radius_sq:.4g}) is far "
            f"out in the chi-square tail for dimension n={n}. "
            "An unscaled F-quantile radius behaves this way; see the "
            "scale_by_n option of uncertainty_set."
        )

    systems = np.empty((M, n))
    for i in range(M):
        rng = _stream(seed, 1, i)
        for _ in range(_MAX_DRAWS_PER_SAMPLE):
            z = rng.standard_normal(n)
            if z @ z <= radius_sq:
                break
        else:
            raise RuntimeError(
                f"sample {i} exceeded {_MAX_DRAWS_PER_SAMPLE} rejections"
            )
        systems[i] = center.g_hat + chol @ z
    return ScenarioSet(systems=systems, seed=seed, source=uset)


def scenarios_to_dict(sset: ScenarioSet) -> dict:
    return {"seed": sset.seed, "M": sset.M, "systems": sset.systems.tolist()}


def scenarios_from_dict(obj: dict, source: UncertaintySet | None = None) -> ScenarioSet:
    systems = np.asarray(obj["systems"], dtype=float)
    if systems.shape[0] != obj["M"]:
        raise ValueError("scenario count does not match the stored matrix")
    return ScenarioSet(systems=systems, seed=int(obj["seed"]), source=source)
