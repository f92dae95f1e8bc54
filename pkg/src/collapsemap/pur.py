"""Philosophically unsatisfactory regions.

A parameter point is unsatisfactory when the primitive ontology fails to
display a printed digit unambiguously within a readout time: for the
matter-density ontologies because superpositions of macroscopically distinct
configurations survive too long, for flashes because too few flashes occur or
their positions are smeared beyond the digit's detail.

Boundary convention: points exactly on a matter-density threshold count as
unsatisfactory.  Many-worlds readings (lambda -> 0) are included in the PUR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Ontology, ParamPoint, PiecewiseBound, PowerLawSegment, Theory


@dataclass(frozen=True)
class InkGeometry:
    """A printed digit: N nucleons of ink in a thin layer of narrow lines."""

    nucleons_per_digit: float = 4e18
    ink_density: float = 1e30  # nucleons / m^3
    layer_thickness: float = 1e-5
    line_width: float = 1e-4
    line_length_scale: float = 1e-3

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if not self.layer_thickness < self.line_width < self.line_length_scale:
            raise ValueError("need layer_thickness < line_width < line_length_scale")

    def branches(self) -> list[tuple[float, float, float, float]]:
        """(sigma_lo, sigma_hi, coeff, exponent) with n = coeff * sigma**exponent."""
        N = self.nucleons_per_digit
        return [
            (0.0, self.layer_thickness, 4.0 * math.pi / 3.0 * self.ink_density, 3.0),
            (self.layer_thickness, self.line_width,
             math.pi * self.ink_density * self.layer_thickness, 2.0),
            (self.line_width, self.line_length_scale, N / self.line_length_scale, 1.0),
            (self.line_length_scale, math.inf, N, 0.0),
        ]


@dataclass(frozen=True)
class AdequacyThresholds:
    gamma_min: float = 2.0  # 1/s
    gamma_over_sigma2_min: float = 2e6  # 1/(m^2 s)
    flash_count_min: float = 10.0
    readout_time: float = 0.5  # s
    flash_smearing_max: float = 1e-3  # m

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def sigma_switch(self) -> float:
        """sigma above which the Gamma/sigma^2 condition binds."""
        return math.sqrt(self.gamma_min / self.gamma_over_sigma2_min)


DEFAULT_THRESHOLDS = AdequacyThresholds()
DEFAULT_GEOMETRY = InkGeometry()


def ink_n(sigma, geom: InkGeometry = DEFAULT_GEOMETRY):
    """Number of ink nucleons within distance sigma of a point of the digit."""
    s = np.asarray(sigma, dtype=float)
    out = np.zeros_like(s)
    for lo, hi, coeff, p in geom.branches():
        sel = (s >= lo) & (s < hi)
        out = np.where(sel, coeff * s**p, out)
    return out if out.ndim else float(out)


def grwm_mask(sigma, lam, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    sigma, lam = np.asarray(sigma, float), np.asarray(lam, float)
    N = geom.nucleons_per_digit
    ok = (lam > th.gamma_min / N) & (lam / sigma**2 > th.gamma_over_sigma2_min / N)
    return ~ok


def grwm_pur(pt: ParamPoint, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> bool:
    return bool(grwm_mask(pt.sigma, pt.lam, th, geom))


def cslm_threshold(sigma, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    """Smallest satisfactory lambda for CSLm: the collapse rate nN*lambda on
    the digit must exceed both Gamma conditions."""
    s = np.asarray(sigma, dtype=float)
    need = np.maximum(th.gamma_min, th.gamma_over_sigma2_min * s**2)
    out = need / (np.asarray(ink_n(s, geom)) * geom.nucleons_per_digit)
    return out if out.ndim else float(out)


def cslm_mask(sigma, lam, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    return np.asarray(lam, float) <= cslm_threshold(sigma, th, geom)


def cslm_pur(pt: ParamPoint, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> bool:
    return bool(cslm_mask(pt.sigma, pt.lam, th, geom))


def grwf_lambda_min(th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> float:
    """Rate below which a digit gets fewer than the required flashes per readout."""
    return th.flash_count_min / (geom.nucleons_per_digit * th.readout_time)


def grwf_mask(sigma, lam, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    sigma, lam = np.asarray(sigma, float), np.asarray(lam, float)
    return (lam < grwf_lambda_min(th, geom)) | (sigma > th.flash_smearing_max)


def grwf_pur(pt: ParamPoint, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> bool:
    return bool(grwf_mask(pt.sigma, pt.lam, th, geom))


def grwm_smeared_mask(sigma, lam, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    return grwm_mask(sigma, lam, th, geom) | (np.asarray(sigma, float) > th.flash_smearing_max)


def grwm_smeared_pur(pt: ParamPoint, th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> bool:
    return bool(grwm_smeared_mask(pt.sigma, pt.lam, th, geom))


def pur_mask(theory: Theory, ontology: Ontology, sigma, lam,
             th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY):
    """Vectorised PUR membership for a (theory, ontology) pair."""
    if ontology is Ontology.FLASH:
        if theory is not Theory.GRW:
            raise ValueError("flash ontology requires GRW")
        return grwf_mask(sigma, lam, th, geom)
    if theory is Theory.GRW:
        base = grwm_mask(sigma, lam, th, geom)
    else:
        base = cslm_mask(sigma, lam, th, geom)
    if ontology is Ontology.MATTER_DENSITY_SMEARED:
        base = base | (np.asarray(sigma, float) > th.flash_smearing_max)
    return base


def is_unsatisfactory(theory: Theory, ontology: Ontology, pt: ParamPoint,
                      th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> bool:
    return bool(pur_mask(theory, ontology, pt.sigma, pt.lam, th, geom))


def pur_boundary(theory: Theory, ontology: Ontology,
                 th=DEFAULT_THRESHOLDS, geom=DEFAULT_GEOMETRY) -> PiecewiseBound:
    """The lambda-threshold of the PUR as a piecewise power law.

    Below the returned curve a point is unsatisfactory.  The sigma cut-off of
    the flash and smeared ontologies is a vertical line and is not part of it
    (see :func:`sigma_cutoff`).
    """
    N = geom.nucleons_per_digit
    if ontology is Ontology.FLASH:
        return PiecewiseBound.constant(grwf_lambda_min(th, geom))
    if theory is Theory.GRW:
        s = th.sigma_switch
        return PiecewiseBound((
            PowerLawSegment(th.gamma_min / N, 0.0, 0.0, s),
            PowerLawSegment(th.gamma_over_sigma2_min / N, 2.0, s, math.inf),
        ))
    # CSLm: max of two power laws divided by the four-branch ink count
    cuts = sorted({lo for lo, *_ in geom.branches()} | {th.sigma_switch} | {math.inf})
    segs = []
    for lo, hi in zip(cuts, cuts[1:]):
        probe = hi / 2 if lo == 0 else (lo * 2 if math.isinf(hi) else math.sqrt(lo * hi))
        n_coeff, n_exp = next((c, p) for a, b, c, p in geom.branches() if a <= probe < b)
        if probe < th.sigma_switch:
            g_coeff, g_exp = th.gamma_min, 0.0
        else:
            g_coeff, g_exp = th.gamma_over_sigma2_min, 2.0
        segs.append(PowerLawSegment(g_coeff / (N * n_coeff), g_exp - n_exp, lo, hi))
    return PiecewiseBound(tuple(segs))


def sigma_cutoff(ontology: Ontology, th=DEFAULT_THRESHOLDS):
    """sigma above which every lambda is unsatisfactory, or None."""
    if ontology in (Ontology.FLASH, Ontology.MATTER_DENSITY_SMEARED):
        return th.flash_smearing_max
    return None
