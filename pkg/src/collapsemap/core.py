"""Constants, parameter points and piecewise power-law bounds.

Every exclusion constraint and every adequacy boundary in the (sigma, lambda)
plane is a family of power laws ``lambda <= C * sigma**p`` indexed by
sigma-intervals.  In log-log coordinates each piece is a straight line, so the
pointwise minimum of several bounds is a lower envelope of line segments and
can be computed exactly.

All quantities are SI.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "PhysicalConstants",
    "CODATA2018",
    "Theory",
    "Ontology",
    "Confidence",
    "ParamPoint",
    "PowerLawSegment",
    "PiecewiseBound",
    "bound_at",
    "is_excluded",
    "lower_envelope",
    "lower_envelope_with_sources",
    "MERGE_TOL",
]

# crossings closer than this in log10(sigma) are merged
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float  # J s
    k_B: float  # J/K
    m_p: float  # kg
    m_e: float  # kg
    avogadro: float  # 1/mol

    def __post_init__(self):
        for name in ("hbar", "k_B", "m_p", "m_e", "avogadro"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 1800 < self.m_p / self.m_e < 1840:
            raise ValueError("m_p/m_e outside [1800, 1840]")


CODATA2018 = PhysicalConstants(
    hbar=1.054571817e-34,
    k_B=1.380649e-23,
    m_p=1.67262192369e-27,
    m_e=9.1093837015e-31,
    avogadro=6.02214076e23,
)


class Theory(enum.Enum):
    GRW = "GRW"
    CSL = "CSL"

    @property
    def mass_exponent(self) -> int:
        """Exponent of m/m_p in the per-species collapse rate."""
        return 1 if self is Theory.GRW else 2

    def species_rate(self, lam: float, mass_ratio: float) -> float:
        return mass_ratio**self.mass_exponent * lam


class Ontology(enum.Enum):
    FLASH = "flash"
    MATTER_DENSITY = "matter"
    MATTER_DENSITY_SMEARED = "matter-smeared"


class Confidence(enum.Enum):
    SOLID = "solid"
    DASHED = "dashed"


@dataclass(frozen=True)
class ParamPoint:
    sigma: float
    lam: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam!r}")

    @property
    def log10(self) -> tuple[float, float]:
        return math.log10(self.sigma), math.log10(self.lam)


@dataclass(frozen=True)
class PowerLawSegment:
    """``lambda <= coeff * sigma**exponent`` on ``[sigma_lo, sigma_hi)``."""

    coeff: float
    exponent: float
    sigma_lo: float
    sigma_hi: float = math.inf

    def __post_init__(self):
        if not self.coeff > 0:
            raise ValueError("coeff must be positive")
        if not (self.sigma_lo >= 0 and self.sigma_lo < self.sigma_hi):
            raise ValueError(
                f"need 0 <= sigma_lo < sigma_hi, got [{self.sigma_lo}, {self.sigma_hi})"
            )

    def __call__(self, sigma):
        return self.coeff * np.power(sigma, self.exponent)

    def contains(self, sigma: float) -> bool:
        return self.sigma_lo <= sigma < self.sigma_hi

    @property
    def intercept(self) -> float:
        """log10 of the coefficient: the line's value at log10(sigma) = 0."""
        return math.log10(self.coeff)

    def log_value(self, x: float) -> float:
        return self.intercept + self.exponent * x


@dataclass(frozen=True)
class PiecewiseBound:
    segments: tuple[PowerLawSegment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if a.sigma_hi != b.sigma_lo:
                raise ValueError(
                    "segments must be sorted and contiguous "
                    f"(gap or overlap at {a.sigma_hi} / {b.sigma_lo})"
                )

    @classmethod
    def power_law(cls, coeff: float, exponent: float, sigma_lo=0.0, sigma_hi=math.inf):
        return cls((PowerLawSegment(coeff, exponent, sigma_lo, sigma_hi),))

    @classmethod
    def constant(cls, value: float) -> "PiecewiseBound":
        return cls.power_law(value, 0.0)

    @property
    def domain(self) -> tuple[float, float]:
        if not self.segments:
            return (math.nan, math.nan)
        return self.segments[0].sigma_lo, self.segments[-1].sigma_hi

    @property
    def breakpoints(self) -> list[float]:
        return [s.sigma_hi for s in self.segments[:-1]]

    def segment_at(self, sigma: float) -> Optional[PowerLawSegment]:
        for seg in self.segments:
            if seg.contains(sigma):
                return seg
        return None

    def __call__(self, sigma: float) -> Optional[float]:
        return bound_at(self, sigma)

    def evaluate(self, sigma) -> np.ndarray:
        """Vectorised bound; NaN where the bound is undefined."""
        sigma = np.asarray(sigma, dtype=float)
        out = np.full(sigma.shape, np.nan)
        if not self.segments:
            return out
        los = np.array([s.sigma_lo for s in self.segments])
        his = np.array([s.sigma_hi for s in self.segments])
        coeffs = np.array([s.coeff for s in self.segments])
        exps = np.array([s.exponent for s in self.segments])
        idx = np.searchsorted(los, sigma, side="right") - 1
        ok = idx >= 0
        safe = np.where(ok, idx, 0)
        ok &= sigma < his[safe]
        with np.errstate(over="ignore", divide="ignore"):
            vals = coeffs[safe] * np.power(sigma, exps[safe])
        out[ok] = vals[ok]
        return out

    def excludes(self, sigma, lam) -> np.ndarray:
        """Vectorised strict exclusion test."""
        b = self.evaluate(sigma)
        with np.errstate(invalid="ignore"):
            return np.asarray(lam) > b


def bound_at(pb: PiecewiseBound, sigma: float) -> Optional[float]:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    seg = pb.segment_at(sigma)
    return None if seg is None else float(seg(sigma))


def is_excluded(pb: PiecewiseBound, pt: ParamPoint) -> bool:
    """Strict: a point lying exactly on the bound is not excluded."""
    b = bound_at(pb, pt.sigma)
    return b is not None and pt.lam > b


def _to_log(sigma: float) -> float:
    if sigma == 0:
        return -math.inf
    if math.isinf(sigma):
        return math.inf
    return math.log10(sigma)


def _from_log(x: float) -> float:
    if x == -math.inf:
        return 0.0
    if x == math.inf:
        return math.inf
    return 10.0**x


def _envelope_pieces(lines, xa: float, xb: float):
    """Lower envelope of lines (index, seg) over the log interval [xa, xb).

    Yields (x_lo, x_hi, index) with the lowest line on each sub-interval.
    """
    cuts = []
    for i in range(len(lines)):
        si = lines[i][1]
        for j in range(i + 1, len(lines)):
            sj = lines[j][1]
            dp = sj.exponent - si.exponent
            if dp == 0:
                continue
            x = (si.intercept - sj.intercept) / dp
            if xa + MERGE_TOL < x < xb - MERGE_TOL:
                cuts.append(x)
    cuts.sort()
    merged: list[float] = []
    for x in cuts:
        if not merged or x - merged[-1] > MERGE_TOL:
            merged.append(x)
    edges = [xa, *merged, xb]
    for lo, hi in zip(edges, edges[1:]):
        if math.isinf(lo) and math.isinf(hi):
            probe = 0.0
        elif math.isinf(lo):
            probe = hi - 1.0
        elif math.isinf(hi):
            probe = lo + 1.0
        else:
            probe = 0.5 * (lo + hi)
        best = min(lines, key=lambda item: (item[1].log_value(probe), item[0]))
        yield lo, hi, best


def lower_envelope_with_sources(
    bounds: Sequence[PiecewiseBound],
) -> tuple[PiecewiseBound, list[int]]:
    """Pointwise minimum of ``bounds`` plus, per result segment, the index of
    the input bound that is active there.

    Where an input is undefined it does not participate.  The union of the
    input domains must be contiguous.
    """
    if not bounds:
        raise ValueError("no constraints")
    bounds = list(bounds)
    points = sorted({p for b in bounds for s in b.segments for p in (s.sigma_lo, s.sigma_hi)})
    pieces: list[tuple[float, float, int, PowerLawSegment]] = []
    for a, b in zip(points, points[1:]):
        active = []
        for k, pb in enumerate(bounds):
            for seg in pb.segments:
                if seg.sigma_lo <= a and seg.sigma_hi >= b:
                    active.append((k, seg))
                    break
        if not active:
            if pieces:
                pieces.append((a, b, -1, None))  # type: ignore[arg-type]
            continue
        xa, xb = _to_log(a), _to_log(b)
        for lo, hi, (k, seg) in _envelope_pieces(active, xa, xb):
            s_lo = a if lo == xa else _from_log(lo)
            s_hi = b if hi == xb else _from_log(hi)
            pieces.append((s_lo, s_hi, k, seg))
    while pieces and pieces[-1][2] == -1:
        pieces.pop()
    if any(p[2] == -1 for p in pieces):
        raise ValueError("bounds do not cover a contiguous sigma range")

    segments: list[PowerLawSegment] = []
    sources: list[int] = []
    for s_lo, s_hi, k, seg in pieces:
        if (
            segments
            and sources[-1] == k
            and segments[-1].coeff == seg.coeff
            and segments[-1].exponent == seg.exponent
        ):
            prev = segments[-1]
            segments[-1] = PowerLawSegment(prev.coeff, prev.exponent, prev.sigma_lo, s_hi)
            continue
        segments.append(PowerLawSegment(seg.coeff, seg.exponent, s_lo, s_hi))
        sources.append(k)
    return PiecewiseBound(tuple(segments)), sources


def lower_envelope(bounds: Sequence[PiecewiseBound]) -> PiecewiseBound:
    return lower_envelope_with_sources(bounds)[0]
