"""Assemble constraint sets for a model and classify parameter points."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import catalog
from .catalog import Constraint, ConstraintSource, DiffractionExperiment, SourceKind
from .core import (
    CODATA2018,
    Ontology,
    ParamPoint,
    PhysicalConstants,
    Theory,
    lower_envelope_with_sources,
)
from .pur import DEFAULT_GEOMETRY, DEFAULT_THRESHOLDS, AdequacyThresholds, InkGeometry, pur_mask

DEFAULT_LAYERS = frozenset({SourceKind.DIFFRACTION, SourceKind.XRAY, SourceKind.CAVE_WARMING})
ALL_EMPIRICAL_LAYERS = frozenset(SourceKind) - {SourceKind.SOUND}
FIRST_YEAR = 1927


@dataclass(frozen=True)
class ModelSpec:
    theory: Theory = Theory.GRW
    ontology: Ontology = Ontology.MATTER_DENSITY
    layers: frozenset = DEFAULT_LAYERS
    year_max: Optional[int] = None
    include_proposed: bool = False
    thresholds: AdequacyThresholds = DEFAULT_THRESHOLDS
    geometry: InkGeometry = DEFAULT_GEOMETRY
    consts: PhysicalConstants = CODATA2018

    def __post_init__(self):
        object.__setattr__(self, "layers", frozenset(self.layers))
        if self.ontology is Ontology.FLASH and self.theory is not Theory.GRW:
            raise ValueError("flash ontology requires GRW")
        if self.year_max is not None and self.year_max < FIRST_YEAR:
            raise ValueError(f"year_max must be >= {FIRST_YEAR}")


class Status(enum.Enum):
    ACCEPTABLE = "Acceptable"
    REFUTED = "Refuted"
    UNSATISFACTORY = "Unsatisfactory"
    BOTH = "Both"


@dataclass(frozen=True)
class Classification:
    refuted_by: tuple[ConstraintSource, ...]
    unsatisfactory: bool
    # proposed experiments that would exclude the point; never a refutation
    projected_by: tuple[ConstraintSource, ...] = ()

    @property
    def status(self) -> Status:
        if self.refuted_by and self.unsatisfactory:
            return Status.BOTH
        if self.refuted_by:
            return Status.REFUTED
        if self.unsatisfactory:
            return Status.UNSATISFACTORY
        return Status.ACCEPTABLE


def _experiment_active(spec: ModelSpec, exp: DiffractionExperiment) -> bool:
    if exp.proposed:
        return spec.include_proposed
    return spec.year_max is None or exp.year <= spec.year_max


def build_constraints(
    spec: ModelSpec, experiments: Sequence[DiffractionExperiment] = ()
) -> list[Constraint]:
    """Active constraints, ordered by source kind then year."""
    out = []
    if SourceKind.DIFFRACTION in spec.layers:
        out += [
            catalog.diffraction_constraint(e, spec.theory)
            for e in experiments
            if _experiment_active(spec, e)
        ]
    others = catalog.non_diffraction_constraints(spec.theory, spec.consts)
    out += [c for kind, c in others.items() if kind in spec.layers]
    out.sort(key=lambda c: c.source.sort_key)
    return out


def empirical(constraints: Sequence[Constraint]) -> list[Constraint]:
    return [c for c in constraints if not c.proposed]


def exclusion_mask(constraints: Sequence[Constraint], sigma, lam) -> np.ndarray:
    """True where at least one constraint strictly excludes the point."""
    sigma = np.asarray(sigma, float)
    lam = np.asarray(lam, float)
    mask = np.zeros(np.broadcast(sigma, lam).shape, dtype=bool)
    for c in constraints:
        mask |= c.bound.excludes(sigma, lam)
    return mask


def classify_point(
    spec: ModelSpec, pt: ParamPoint, experiments: Sequence[DiffractionExperiment] = ()
) -> Classification:
    constraints = build_constraints(spec, experiments)
    refuted = tuple(c.source for c in constraints if not c.proposed and c.excludes(pt))
    projected = tuple(c.source for c in constraints if c.proposed and c.excludes(pt))
    unsat = bool(pur_mask(spec.theory, spec.ontology, pt.sigma, pt.lam,
                          spec.thresholds, spec.geometry))
    return Classification(refuted, unsat, projected)


def active_bounds_at(spec: ModelSpec, sigma: float, experiments=()) -> dict[str, float]:
    out = {}
    for c in build_constraints(spec, experiments):
        b = c.bound(sigma)
        if b is not None:
            out[str(c.source)] = b
    return out


@dataclass(frozen=True)
class Span:
    log_sigma_lo: float
    log_sigma_hi: float
    source: ConstraintSource


@dataclass(frozen=True)
class Polyline:
    """A boundary in (log10 sigma, log10 lambda) with the active source per span."""

    vertices: np.ndarray  # shape (n, 2)
    spans: tuple[Span, ...] = field(default_factory=tuple)

    def to_text(self, title: str = "") -> str:
        lines = []
        if title:
            lines.append(f"# {title}")
        for s in self.spans:
            lines.append(
                f"# span {s.log_sigma_lo:.6f} {s.log_sigma_hi:.6f} "
                f"{s.source.kind.value} {s.source}"
            )
        lines.append("log10_sigma log10_lambda")
        lines += [f"{x:.6f} {y:.6f}" for x, y in self.vertices]
        return "\n".join(lines) + "\n"


def envelope_polyline(constraints: Sequence[Constraint], window: tuple[float, float]) -> Polyline:
    """Exact lower envelope of ``constraints`` restricted to a sigma window."""
    if not constraints:
        raise ValueError("no constraints")
    s_lo, s_hi = window
    if not (0 < s_lo < s_hi < math.inf):
        raise ValueError("window must satisfy 0 < sigma_lo < sigma_hi < inf")
    env, src = lower_envelope_with_sources([c.bound for c in constraints])
    verts: list[tuple[float, float]] = []
    spans = []
    for seg, k in zip(env.segments, src):
        a, b = max(seg.sigma_lo, s_lo), min(seg.sigma_hi, s_hi)
        if a >= b:
            continue
        xa, xb = math.log10(a), math.log10(b)
        for x in (xa, xb):
            pt = (x, seg.log_value(x))
            if not verts or verts[-1] != pt:
                verts.append(pt)
        spans.append(Span(xa, xb, constraints[k].source))
    return Polyline(np.array(verts, dtype=float).reshape(-1, 2), tuple(spans))


def err_boundary(
    spec: ModelSpec,
    experiments: Sequence[DiffractionExperiment],
    window: tuple[float, float],
) -> Polyline:
    """Boundary of the empirically refuted region (proposed rows excluded)."""
    return envelope_polyline(empirical(build_constraints(spec, experiments)), window)


@dataclass(frozen=True)
class Window:
    """A rectangle in the parameter plane given by log10 ranges."""

    log_sigma: tuple[float, float] = (-12.0, 0.0)
    log_lambda: tuple[float, float] = (-36.0, 4.0)

    def __post_init__(self):
        if not (self.log_sigma[0] < self.log_sigma[1] and self.log_lambda[0] < self.log_lambda[1]):
            raise ValueError("window must be nonempty")

    def lattice(self, resolution: int):
        """``resolution`` intervals per axis; finer multiples contain coarser lattices."""
        xs = np.linspace(*self.log_sigma, resolution + 1)
        ys = np.linspace(*self.log_lambda, resolution + 1)
        return xs, ys

    def cell_centers(self, resolution: int):
        xe = np.linspace(*self.log_sigma, resolution + 1)
        ye = np.linspace(*self.log_lambda, resolution + 1)
        return 0.5 * (xe[1:] + xe[:-1]), 0.5 * (ye[1:] + ye[:-1])


DEFAULT_WINDOW = Window()


def region_masks(spec: ModelSpec, experiments, log_sigma: np.ndarray, log_lambda: np.ndarray):
    """(refuted, unsatisfactory) boolean arrays of shape (len(log_lambda), len(log_sigma))."""
    X, Y = np.meshgrid(log_sigma, log_lambda)
    sig, lam = 10.0**X, 10.0**Y
    refuted = exclusion_mask(empirical(build_constraints(spec, experiments)), sig, lam)
    unsat = pur_mask(spec.theory, spec.ontology, sig, lam, spec.thresholds, spec.geometry)
    return refuted, np.asarray(unsat)


@dataclass(frozen=True)
class Coverage:
    covered: bool
    witness: Optional[ParamPoint]
    resolution: int
    n_acceptable: int


def coverage_check(
    spec: ModelSpec,
    experiments: Sequence[DiffractionExperiment],
    window: Window = DEFAULT_WINDOW,
    resolution: int = 200,
    extra: Sequence[Constraint] = (),
) -> Coverage:
    """Does ERR together with PUR cover every lattice point of the window?

    The witness is the acceptable lattice point closest to the centroid of
    all acceptable lattice points.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    xs, ys = window.lattice(resolution)
    refuted, unsat = region_masks(spec, experiments, xs, ys)
    if extra:
        X, Y = np.meshgrid(xs, ys)
        refuted = refuted | exclusion_mask(extra, 10.0**X, 10.0**Y)
    ok = ~(refuted | unsat)
    n_ok = int(ok.sum())
    if n_ok == 0:
        return Coverage(True, None, resolution, 0)
    iy, ix = np.nonzero(ok)
    cx, cy = xs[ix].mean(), ys[iy].mean()
    k = int(np.argmin((xs[ix] - cx) ** 2 + (ys[iy] - cy) ** 2))
    witness = ParamPoint(10.0 ** xs[ix[k]], 10.0 ** ys[iy[k]])
    return Coverage(False, witness, resolution, n_ok)
