"""Reproducible trial ensembles.

Trial ``i`` of a run with seed ``s`` draws all of its randomness from a PCG64
generator seeded with ``SeedSequence([s, i])``.  Results therefore do not
depend on the order in which trials are evaluated or on how they are batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JACKKNIFE_GROUPS = 20


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial index must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial])))


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def _rate_through_origin(times, curve, floor=0.05) -> float:
    use = (curve > floor) & (times > 0)
    if not use.any():
        return float("nan")
    t = times[use]
    return float(-(t * np.log(curve[use])).sum() / (t * t).sum())


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay ``C(t) = exp(-rate t)`` fitted to an ensemble mean."""

    rate: float
    stderr: float
    times: np.ndarray
    curve: np.ndarray

    def to_dict(self) -> dict:
        return {"rate": self.rate, "stderr": self.stderr}


def fit_decay(times, samples, groups: int = JACKKNIFE_GROUPS) -> DecayFit:
    """Fit the decay rate of ``mean(samples, axis=0)``.

    ``samples`` has shape (trials, len(times)) and is normalised so the
    value at t = 0 is 1.  The fit is least squares on the log through the
    origin; the error is a grouped jackknife over trials.
    """
    times = np.asarray(times, float)
    samples = np.asarray(samples, float)
    curve = samples.mean(axis=0)
    rate = _rate_through_origin(times, curve)
    n = samples.shape[0]
    g = min(groups, n)
    if g < 2:
        return DecayFit(rate, float("nan"), times, curve)
    edges = np.linspace(0, n, g + 1).astype(int)
    total = samples.sum(axis=0)
    loo = []
    for a, b in zip(edges[:-1], edges[1:]):
        rest = (total - samples[a:b].sum(axis=0)) / (n - (b - a))
        loo.append(_rate_through_origin(times, rest))
    loo = np.array(loo)
    se = float(np.sqrt((g - 1) / g * ((loo - loo.mean()) ** 2).sum()))
    return DecayFit(rate, se, times, curve)


@dataclass(frozen=True)
class SlopeFit:
    """Linear growth ``E(t) = E0 + rate t`` of an ensemble mean."""

    rate: float
    stderr: float
    times: np.ndarray
    curve: np.ndarray

    def to_dict(self) -> dict:
        return {"rate": self.rate, "stderr": self.stderr}


def _slope(times, curve) -> float:
    t = times - times.mean()
    return float((t * (curve - curve.mean())).sum() / (t * t).sum())


def fit_slope(times, samples, groups: int = JACKKNIFE_GROUPS) -> SlopeFit:
    times = np.asarray(times, float)
    samples = np.asarray(samples, float)
    curve = samples.mean(axis=0)
    rate = _slope(times, curve)
    n = samples.shape[0]
    g = min(groups, n)
    if g < 2:
        return SlopeFit(rate, float("nan"), times, curve)
    edges = np.linspace(0, n, g + 1).astype(int)
    total = samples.sum(axis=0)
    loo = np.array([
        _slope(times, (total - samples[a:b].sum(axis=0)) / (n - (b - a)))
        for a, b in zip(edges[:-1], edges[1:])
    ])
    se = float(np.sqrt((g - 1) / g * ((loo - loo.mean()) ** 2).sum()))
    return SlopeFit(rate, se, times, curve)
