"""Empirical exclusion constraints on (sigma, lambda).

Each constructor returns a :class:`Constraint`: a piecewise power-law upper
bound on lambda plus where it came from.  The warming formulas are exposed as
plain functions so the printed coefficients can be re-derived.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, TextIO, Union

from .core import (
    CODATA2018,
    Confidence,
    ParamPoint,
    PhysicalConstants,
    PiecewiseBound,
    PowerLawSegment,
    Theory,
    is_excluded,
)

SECONDS_PER_DAY = 86400.0

# printed inputs of the constraint constructors
CAVE_DTDT_LIMIT = 3e-2 / SECONDS_PER_DAY  # K/s, i.e. 3e-2 K per day
AIR_MASS_RATIO = 28.0  # N2
IGM_RATIO_LIMIT = 2e6  # 1/(m^2 s), both theories
XRAY_SIGMA4_COEFF = 1e26  # 1/(m^4 s)
XRAY_SIGMA2_COEFF = {Theory.GRW: 1e7, Theory.CSL: 1e10}
SOUND_SIGMA_MAX = 1e-16  # m
SOUND_LAMBDA_MIN = 1e-32  # 1/s
SUPERCURRENT_SIGMA_SPLIT = 1e-3  # m
SUPERCURRENT_COEFFS = {
    # (lambda/sigma below split, lambda/sigma^3 above split)
    Theory.GRW: (10.0, 1e7),
    Theory.CSL: (2e4, 2e10),
}
SUPERCURRENT_K_F = 1.6e10  # 1/m
SUPERCURRENT_DECAY_LIMIT = 3e-13  # 1/s


class SourceKind(enum.Enum):
    XRAY = "I"
    IGM_WARMING = "II"
    CAVE_WARMING = "III"
    SUPERCURRENT = "IV"
    DIFFRACTION = "V"
    SOUND = "sound"

    @property
    def order(self) -> int:
        return list(SourceKind).index(self)

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    SourceKind.XRAY: "spontaneous x-ray emission",
    SourceKind.IGM_WARMING: "warming of the intergalactic medium",
    SourceKind.CAVE_WARMING: "warming of air (cave)",
    SourceKind.SUPERCURRENT: "decay of supercurrents",
    SourceKind.DIFFRACTION: "diffraction experiments",
    SourceKind.SOUND: "spontaneous sound emission",
}


@dataclass(frozen=True)
class ConstraintSource:
    kind: SourceKind
    year: Optional[int] = None
    label: Optional[str] = None

    def __str__(self) -> str:
        if self.kind is SourceKind.DIFFRACTION:
            year = self.year if self.year is not None else "proposed"
            return f"diffraction {year} {self.label}"
        return self.kind.name.lower().replace("_", "-")

    @property
    def sort_key(self):
        return (self.kind.order, self.year if self.year is not None else 10**6, self.label or "")


@dataclass(frozen=True)
class Constraint:
    source: ConstraintSource
    theory: Theory
    bound: PiecewiseBound
    confidence: Confidence = Confidence.SOLID
    proposed: bool = False
    # the region is contained in others; drawn only on request
    covered: bool = False

    def excludes(self, pt: ParamPoint) -> bool:
        return is_excluded(self.bound, pt)


@dataclass(frozen=True)
class DiffractionExperiment:
    year: Optional[int]
    label: str
    reference: str
    mass_ratio: float
    flight_time: Optional[float]
    grating_period: float
    printed_bounds: Optional[tuple[Optional[float], ...]] = None
    proposed: bool = False

    def __post_init__(self):
        if not self.mass_ratio > 0:
            raise ValueError("mass_ratio must be positive")
        if not self.grating_period > 0:
            raise ValueError("grating_period must be positive")
        if self.flight_time is not None and not self.flight_time > 0:
            raise ValueError("flight_time must be positive")
        if self.flight_time is None and not _complete(self.printed_bounds):
            raise ValueError("printed bounds are mandatory when flight time is N/A")
        if self.year is None and not self.proposed:
            raise ValueError("only proposed experiments may lack a year")

    def printed(self, theory: Theory) -> tuple[Optional[float], Optional[float]]:
        if self.printed_bounds is None:
            return None, None
        off = 0 if theory is Theory.GRW else 2
        return self.printed_bounds[off], self.printed_bounds[off + 1]


def _complete(bounds) -> bool:
    return bounds is not None and len(bounds) == 4 and all(b is not None for b in bounds)


class InsufficientDataError(ValueError):
    pass


def diffraction_bounds(exp: DiffractionExperiment, theory: Theory) -> tuple[float, float]:
    """Upper bounds (lambda, lambda/sigma^2) from one interference experiment.

    The species rate lambda_k must stay below 1/tau and lambda_k/sigma^2
    below 1/(d^2 tau); dividing by the mass scaling gives the bound on the
    per-proton-mass lambda.  Rows without a flight time pass the printed
    values through.
    """
    if exp.flight_time is None:
        lam, ratio = exp.printed(theory)
        if lam is None or ratio is None:
            raise InsufficientDataError("insufficient data")
        return lam, ratio
    scale = exp.mass_ratio**theory.mass_exponent
    lam_max = 1.0 / (exp.flight_time * scale)
    return lam_max, lam_max / exp.grating_period**2


def diffraction_constraint(exp: DiffractionExperiment, theory: Theory) -> Constraint:
    lam_max, ratio_max = diffraction_bounds(exp, theory)
    if exp.flight_time is None:
        # printed pairs are rounded; split where they meet so the bound stays continuous
        split = math.sqrt(lam_max / ratio_max)
    else:
        split = exp.grating_period
    bound = PiecewiseBound(
        (
            PowerLawSegment(lam_max, 0.0, 0.0, split),
            PowerLawSegment(ratio_max, 2.0, split, math.inf),
        )
    )
    return Constraint(
        ConstraintSource(SourceKind.DIFFRACTION, exp.year, exp.label),
        theory,
        bound,
        Confidence.SOLID,
        proposed=exp.proposed,
    )


def collapse_energy(mass: float, sigma: float, consts: PhysicalConstants = CODATA2018) -> float:
    """Mean energy a collapse deposits in a free particle, 3 hbar^2 / (4 m sigma^2)."""
    if not (mass > 0 and sigma > 0):
        raise ValueError("mass and sigma must be positive")
    return 3.0 * consts.hbar**2 / (4.0 * mass * sigma**2)


def warming_prefactor(consts: PhysicalConstants = CODATA2018) -> float:
    """hbar^2 / (8 k_B m_p) in K m^2 s."""
    return consts.hbar**2 / (8.0 * consts.k_B * consts.m_p)


def temperature_rate(
    theory: Theory,
    pt: ParamPoint,
    mass_ratio: float = 1.0,
    consts: PhysicalConstants = CODATA2018,
) -> float:
    if not mass_ratio > 0:
        raise ValueError("mass_ratio must be positive")
    rate = warming_prefactor(consts) * pt.lam / pt.sigma**2
    if theory is Theory.CSL:
        rate *= mass_ratio
    return rate


def energy_rate(
    theory: Theory,
    n_particles: int,
    mass_ratio: float,
    pt: ParamPoint,
    consts: PhysicalConstants = CODATA2018,
) -> float:
    """Mean power deposited in N free particles, in W."""
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    rate = 0.75 * consts.hbar**2 * n_particles / consts.m_p * pt.lam / pt.sigma**2
    if theory is Theory.CSL:
        rate *= mass_ratio
    return rate


def cave_warming_coefficient(
    theory: Theory,
    consts: PhysicalConstants = CODATA2018,
    dTdt_limit: float = CAVE_DTDT_LIMIT,
    mass_ratio: float = AIR_MASS_RATIO,
) -> float:
    scale = mass_ratio if theory is Theory.CSL else 1.0
    return dTdt_limit / (warming_prefactor(consts) * scale)


def cave_warming_constraint(
    theory: Theory, consts: PhysicalConstants = CODATA2018
) -> Constraint:
    coeff = cave_warming_coefficient(theory, consts)
    return Constraint(
        ConstraintSource(SourceKind.CAVE_WARMING),
        theory,
        PiecewiseBound.power_law(coeff, 2.0),
        Confidence.SOLID,
    )


def igm_warming_constraint(theory: Theory) -> Constraint:
    return Constraint(
        ConstraintSource(SourceKind.IGM_WARMING),
        theory,
        PiecewiseBound.power_law(IGM_RATIO_LIMIT, 2.0),
        Confidence.DASHED,
    )


def xray_constraint(theory: Theory) -> Constraint:
    c2 = XRAY_SIGMA2_COEFF[theory]
    cross = math.sqrt(c2 / XRAY_SIGMA4_COEFF)
    bound = PiecewiseBound(
        (
            PowerLawSegment(XRAY_SIGMA4_COEFF, 4.0, 0.0, cross),
            PowerLawSegment(c2, 2.0, cross, math.inf),
        )
    )
    return Constraint(ConstraintSource(SourceKind.XRAY), theory, bound, Confidence.SOLID)


def sound_constraint(theory: Theory = Theory.GRW) -> Constraint:
    # one region for both theories
    return Constraint(
        ConstraintSource(SourceKind.SOUND),
        theory,
        PiecewiseBound.power_law(SOUND_LAMBDA_MIN, 0.0, 0.0, SOUND_SIGMA_MAX),
        Confidence.SOLID,
        covered=True,
    )


def air_electron_multiplier(
    moles: float = 1e4,
    electrons_per_molecule: float = 14.0,
    consts: PhysicalConstants = CODATA2018,
) -> float:
    """Total collapse rate, in units of lambda, of the electrons in a volume of air."""
    return moles * consts.avogadro * electrons_per_molecule * consts.m_e / consts.m_p


def sound_lambda_threshold(
    audible_rate: float = 1.0 / (30 * SECONDS_PER_DAY),
    consts: PhysicalConstants = CODATA2018,
) -> float:
    """lambda above which audible bangs would occur more than once a month."""
    return audible_rate / air_electron_multiplier(consts=consts)


def audible_sigma(
    bang_energy: float = 1e-6, consts: PhysicalConstants = CODATA2018
) -> float:
    """sigma below which one electron collapse deposits at least ``bang_energy``."""
    return math.sqrt(3.0 * consts.hbar**2 / (4.0 * consts.m_e * bang_energy))


def supercurrent_decay_rate(
    theory: Theory,
    pt: ParamPoint,
    k_F: float = SUPERCURRENT_K_F,
    consts: PhysicalConstants = CODATA2018,
) -> float:
    """Spontaneous supercurrent decay rate (Cooper-pair breaking), in 1/s."""
    ratio = consts.m_e / consts.m_p
    rate = ratio * pt.lam / (pt.sigma * k_F)
    if theory is Theory.CSL:
        rate *= ratio
    return rate


def supercurrent_constraint(theory: Theory) -> Constraint:
    low, high = SUPERCURRENT_COEFFS[theory]
    s = SUPERCURRENT_SIGMA_SPLIT
    bound = PiecewiseBound(
        (
            PowerLawSegment(low, 1.0, 0.0, s),
            PowerLawSegment(high, 3.0, s, math.inf),
        )
    )
    return Constraint(
        ConstraintSource(SourceKind.SUPERCURRENT), theory, bound, Confidence.DASHED
    )


# --- experiment data files -------------------------------------------------

COLUMNS = (
    "year",
    "label",
    "reference",
    "mass_ratio",
    "tau_s",
    "d_m",
    "grw_lambda",
    "grw_ratio",
    "csl_lambda",
    "csl_ratio",
    "proposed",
)


class DataFormatError(ValueError):
    def __init__(self, line: int, column: str, message: str):
        super().__init__(f"line {line}, column '{column}': {message}")
        self.line = line
        self.column = column


def _parse_float(text: str, line: int, column: str, optional=False) -> Optional[float]:
    text = text.strip()
    if not text:
        if optional:
            return None
        raise DataFormatError(line, column, "missing value")
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(line, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataFormatError(line, column, f"not finite: {text!r}")
    return value


def load_experiments(source: Union[TextIO, str, Iterable[str]]) -> list[DiffractionExperiment]:
    """Parse the ';'-separated experiment table.

    ``source`` is an open text stream, the text itself, or an iterable of lines.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    out = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(";")
        if len(fields) != len(COLUMNS):
            raise DataFormatError(
                lineno, COLUMNS[min(len(fields), len(COLUMNS) - 1)],
                f"expected {len(COLUMNS)} fields, got {len(fields)}",
            )
        row = dict(zip(COLUMNS, (f.strip() for f in fields)))

        proposed_text = row["proposed"]
        if proposed_text not in ("0", "1"):
            raise DataFormatError(lineno, "proposed", f"expected 0 or 1, got {proposed_text!r}")
        proposed = proposed_text == "1"

        year = None
        if row["year"]:
            try:
                year = int(row["year"])
            except ValueError:
                raise DataFormatError(lineno, "year", f"not an integer: {row['year']!r}") from None
        elif not proposed:
            raise DataFormatError(lineno, "year", "missing value")

        mass_ratio = _parse_float(row["mass_ratio"], lineno, "mass_ratio")
        tau = None if row["tau_s"].upper() == "NA" else _parse_float(row["tau_s"], lineno, "tau_s")
        d = _parse_float(row["d_m"], lineno, "d_m")
        printed = tuple(
            _parse_float(row[c], lineno, c, optional=True)
            for c in ("grw_lambda", "grw_ratio", "csl_lambda", "csl_ratio")
        )
        if all(p is None for p in printed):
            printed = None
        if tau is None and not _complete(printed):
            missing = next(
                c for c, p in zip(("grw_lambda", "grw_ratio", "csl_lambda", "csl_ratio"),
                                  printed or (None,) * 4) if p is None
            )
            raise DataFormatError(lineno, missing, "printed bounds required when tau_s is NA")
        try:
            out.append(
                DiffractionExperiment(
                    year=year,
                    label=row["label"],
                    reference=row["reference"],
                    mass_ratio=mass_ratio,
                    flight_time=tau,
                    grating_period=d,
                    printed_bounds=printed,
                    proposed=proposed,
                )
            )
        except ValueError as exc:
            raise DataFormatError(lineno, "mass_ratio/tau_s/d_m", str(exc)) from None
    return out


def shipped_data_text(name: str) -> str:
    return resources.files("collapsemap").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_shipped(include_proposed: bool = True) -> list[DiffractionExperiment]:
    """The transcribed historical table, optionally with the proposed rows."""
    exps = load_experiments(shipped_data_text("diffraction.tab"))
    if include_proposed:
        exps += load_experiments(shipped_data_text("diffraction_proposed.tab"))
    return exps


def non_diffraction_constraints(theory: Theory, consts: PhysicalConstants = CODATA2018):
    """All non-diffraction constraints for one theory, keyed by kind."""
    return {
        SourceKind.XRAY: xray_constraint(theory),
        SourceKind.IGM_WARMING: igm_warming_constraint(theory),
        SourceKind.CAVE_WARMING: cave_warming_constraint(theory, consts),
        SourceKind.SUPERCURRENT: supercurrent_constraint(theory),
        SourceKind.SOUND: sound_constraint(theory),
    }
