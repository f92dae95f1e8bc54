"""Monte Carlo simulation of the GRW jump process in one dimension.

A collapse with center ``c`` multiplies the wave function by the square root
of the normalised 1-D Gaussian ``g(c - x)`` of width sigma and renormalises;
``c`` is drawn from ``rho(c) = <psi| g(c - x) |psi>``.  Between collapses the
state evolves freely (or not at all).

Two state representations are supported:

* :class:`PacketState`, a finite superposition of complex Gaussians
  ``exp(-alpha x^2 + beta x + log_amp)``.  Collapses and free evolution are
  closed-form on this family.
* :class:`GridState`, one particle or two identical particles on a uniform
  grid.  Free evolution is exact in Fourier space.

Rates passed in are per-particle effective rates; mass scaling is the
caller's business.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import CODATA2018
from .ensemble import DecayFit, fit_decay, mean_stderr, trial_rng

HBAR = CODATA2018.hbar
# collapse operators must be resolved by the grid
MAX_SPACING_PER_SIGMA = 1.0 / 8.0


class CollapseError(ArithmeticError):
    """The collapse outcome has (numerically) zero probability density."""


def gaussian_1d(x, sigma: float):
    return np.exp(-np.square(x) / (2.0 * sigma**2)) / math.sqrt(2.0 * math.pi * sigma**2)


# ---------------------------------------------------------------------------
# Gaussian packets


@dataclass(frozen=True)
class GaussianPacket:
    """``psi(x) = exp(-alpha x^2 + beta x + log_amp)`` with Re(alpha) > 0."""

    alpha: complex
    beta: complex = 0j
    log_amp: complex = 0j

    def __post_init__(self):
        if not complex(self.alpha).real > 0:
            raise ValueError("Re(alpha) must be positive")

    @classmethod
    def from_moments(cls, center: float, width: float, momentum: float = 0.0,
                     amplitude: complex = 1.0, hbar: float = HBAR) -> "GaussianPacket":
        """Normalised packet (times ``amplitude``) with position standard
        deviation ``width`` and mean momentum ``momentum``."""
        if not width > 0:
            raise ValueError("width must be positive")
        a = 1.0 / (4.0 * width**2)
        k = momentum / hbar
        log_amp = cmath.log(amplitude) - 0.25 * math.log(2.0 * math.pi * width**2) - a * center**2
        return cls(complex(a), complex(2.0 * a * center, k), log_amp)

    @property
    def width(self) -> float:
        return 0.5 / math.sqrt(self.alpha.real)

    @property
    def center(self) -> float:
        return self.beta.real / (2.0 * self.alpha.real)

    def mean_wavenumber(self) -> float:
        return self.beta.imag - self.alpha.imag * self.beta.real / self.alpha.real

    @property
    def momentum(self) -> float:
        return HBAR * self.mean_wavenumber()

    @property
    def amplitude(self) -> complex:
        """Complex weight relative to the normalised packet of the same shape."""
        mu = self.center
        return complex(self(mu)) * (2.0 * math.pi * self.width**2) ** 0.25

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.alpha * x * x + self.beta * x + self.log_amp)

    def log_overlap(self, other: "GaussianPacket") -> complex:
        """log of the inner product <self|other>."""
        A = self.alpha.conjugate() + other.alpha
        B = self.beta.conjugate() + other.beta
        return (self.log_amp.conjugate() + other.log_amp
                + 0.5 * cmath.log(math.pi / A) + B * B / (4.0 * A))

    def times_sqrt_gaussian(self, center: float, sigma: float) -> "GaussianPacket":
        s2 = sigma**2
        return GaussianPacket(
            self.alpha + 1.0 / (4.0 * s2),
            self.beta + center / (2.0 * s2),
            self.log_amp - center**2 / (4.0 * s2) - 0.25 * math.log(2.0 * math.pi * s2),
        )

    def evolved(self, t: float, mass: float, hbar: float = HBAR) -> "GaussianPacket":
        """Free evolution for time t.

        The complex center beta / (2 alpha) is invariant; only the curvature
        and the prefactor change.
        """
        if t == 0:
            return self
        kappa = 2j * hbar * t / mass
        denom = 1.0 + kappa * self.alpha
        alpha_t = self.alpha / denom
        xc = self.beta / (2.0 * self.alpha)
        beta_t = 2.0 * alpha_t * xc
        log_amp = (self.log_amp + self.alpha * xc * xc - alpha_t * xc * xc
                   - 0.5 * cmath.log(denom))
        return GaussianPacket(alpha_t, beta_t, log_amp)

    def scaled(self, log_factor: complex) -> "GaussianPacket":
        return replace(self, log_amp=self.log_amp + log_factor)


def _gauss_moments(A: complex, B: complex):
    """Mean and second moment of exp(-A x^2 + B x) as a complex 'distribution'."""
    m = B / (2.0 * A)
    return m, m * m + 1.0 / (2.0 * A)


@dataclass(frozen=True)
class PacketState:
    packets: tuple[GaussianPacket, ...]

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        if not self.packets:
            raise ValueError("empty packet state")

    @classmethod
    def single(cls, center=0.0, width=1e-7, momentum=0.0) -> "PacketState":
        return cls((GaussianPacket.from_moments(center, width, momentum),))

    @classmethod
    def two_peak(cls, separation: float, width: float, center: float = 0.0) -> "PacketState":
        half = separation / 2.0
        a = 2.0**-0.5
        st = cls((GaussianPacket.from_moments(center - half, width, amplitude=a),
                  GaussianPacket.from_moments(center + half, width, amplitude=a)))
        return st.normalized()

    def __call__(self, x):
        return sum(p(x) for p in self.packets)

    def _pair_log_overlaps(self) -> np.ndarray:
        n = len(self.packets)
        out = np.empty((n, n), dtype=complex)
        for i, pi in enumerate(self.packets):
            for j, pj in enumerate(self.packets):
                out[i, j] = pi.log_overlap(pj)
        return out

    def norm2(self) -> float:
        return float(np.exp(self._pair_log_overlaps()).sum().real)

    def normalized(self) -> "PacketState":
        shift = -0.5 * math.log(self.norm2())
        return PacketState(tuple(p.scaled(shift) for p in self.packets))

    def overlap(self, other: "PacketState") -> complex:
        return complex(sum(cmath.exp(p.log_overlap(q)) for p in self.packets for q in other.packets))

    def evolved(self, t: float, mass: float) -> "PacketState":
        return PacketState(tuple(p.evolved(t, mass) for p in self.packets))

    def collapse_at(self, center: float, sigma: float) -> tuple["PacketState", float]:
        """Collapsed, renormalised state and the density rho(center)."""
        raw = PacketState(tuple(p.times_sqrt_gaussian(center, sigma) for p in self.packets))
        z = raw.norm2()
        if not (z > 0 and math.isfinite(z)) or z < 1e-300:
            raise CollapseError(f"collapse density underflow at c={center!r}")
        return raw.normalized(), z

    def collapse_density(self, centers, sigma: float) -> np.ndarray:
        return np.array([
            PacketState(tuple(p.times_sqrt_gaussian(c, sigma) for p in self.packets)).norm2()
            for c in np.atleast_1d(centers)
        ])

    def mean_p2(self, hbar: float = HBAR) -> float:
        total = 0j
        for pi in self.packets:
            for pj in self.packets:
                ai, bi = pi.alpha.conjugate(), pi.beta.conjugate()
                aj, bj = pj.alpha, pj.beta
                A, B = ai + aj, bi + bj
                m, x2 = _gauss_moments(A, B)
                poly = 4.0 * ai * aj * x2 - 2.0 * (ai * bj + bi * aj) * m + bi * bj
                total += cmath.exp(pi.log_overlap(pj)) * poly
        return float(hbar**2 * total.real / self.norm2())

    def mean_energy(self, mass: float) -> float:
        return self.mean_p2() / (2.0 * mass)

    def position_moments(self) -> tuple[float, float]:
        """Mean and variance of |psi|^2."""
        tot, m1, m2 = 0j, 0j, 0j
        for pi in self.packets:
            for pj in self.packets:
                A = pi.alpha.conjugate() + pj.alpha
                B = pi.beta.conjugate() + pj.beta
                w = cmath.exp(pi.log_overlap(pj))
                m, x2 = _gauss_moments(A, B)
                tot += w
                m1 += w * m
                m2 += w * x2
        mean = (m1 / tot).real
        return mean, (m2 / tot).real - mean**2

    def sample_position(self, rng: np.random.Generator) -> float:
        """A draw from |psi|^2."""
        if len(self.packets) == 1:
            p = self.packets[0]
            return p.center + p.width * rng.standard_normal()
        lo = min(p.center - 12 * p.width for p in self.packets)
        hi = max(p.center + 12 * p.width for p in self.packets)
        x = np.linspace(lo, hi, 16385)
        dens = np.abs(self(x)) ** 2
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
        return float(np.interp(rng.random() * cdf[-1], cdf, x))


# ---------------------------------------------------------------------------
# grid states


@dataclass(frozen=True, eq=False)
class GridState:
    """Wave function sampled at ``origin + spacing * k``; 1-D array for one
    particle, square 2-D array (x1, x2) for two identical particles."""

    spacing: float
    origin: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[0] != v.shape[1]):
            raise ValueError("values must be 1-D or square 2-D")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, func, n: int, spacing: float, origin: Optional[float] = None,
                      n_particles: int = 1) -> "GridState":
        if origin is None:
            origin = -spacing * (n // 2)
        x = origin + spacing * np.arange(n)
        if n_particles == 1:
            vals = func(x)
        elif n_particles == 2:
            X1, X2 = np.meshgrid(x, x, indexing="ij")
            vals = func(X1, X2)
        else:
            raise ValueError("only one or two particles are supported")
        return cls(spacing, origin, np.asarray(vals, dtype=complex)).normalized()

    @classmethod
    def from_packets(cls, packets: PacketState, n: int, spacing: float,
                     origin: Optional[float] = None) -> "GridState":
        return cls.from_function(packets, n, spacing, origin)

    @property
    def n_particles(self) -> int:
        return self.values.ndim

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.values.shape[0])

    def with_values(self, values) -> "GridState":
        return GridState(self.spacing, self.origin, values)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.spacing**self.n_particles)

    def normalized(self) -> "GridState":
        return self.with_values(self.values / math.sqrt(self.norm2()))

    def overlap(self, other: "GridState") -> complex:
        return complex(np.vdot(self.values, other.values) * self.spacing**self.n_particles)

    def marginals(self) -> list[np.ndarray]:
        """Position densities of each particle."""
        d = np.abs(self.values) ** 2
        if self.n_particles == 1:
            return [d]
        h = self.spacing
        return [d.sum(axis=1) * h, d.sum(axis=0) * h]

    def check_resolves(self, sigma: float):
        if self.spacing > sigma * MAX_SPACING_PER_SIGMA * (1 + 1e-12):
            raise ValueError(
                f"grid too coarse for sigma={sigma:g}: spacing {self.spacing:g} > sigma/8"
            )

    def _collapse_field(self, center: float, sigma: float) -> np.ndarray:
        g = gaussian_1d(center - self.x, sigma)
        if self.n_particles == 1:
            return g
        return g[:, None] + g[None, :]

    def collapse_at(self, center: float, sigma: float) -> tuple["GridState", float]:
        """Collapsed, renormalised state and Z = <psi| sum_i g(c - x_i) |psi>."""
        self.check_resolves(sigma)
        field_ = self._collapse_field(center, sigma)
        new = self.values * np.sqrt(field_)
        z = float(np.sum(np.abs(new) ** 2) * self.spacing**self.n_particles)
        if not z > 1e-300:
            raise CollapseError(f"collapse density underflow at c={center!r}")
        return self.with_values(new / math.sqrt(z)), z

    def collapse_density(self, centers, sigma: float) -> np.ndarray:
        """rho(c): the collapse-center density, normalised per particle."""
        c = np.atleast_1d(np.asarray(centers, float))
        h = self.spacing
        out = np.zeros(c.shape)
        for dens in self.marginals():
            out += (gaussian_1d(c[:, None] - self.x[None, :], sigma) * dens[None, :]).sum(axis=1) * h
        return out / self.n_particles

    def sample_center(self, sigma: float, rng: np.random.Generator) -> float:
        """Exact draw from the grid density: a grid position from |psi|^2, then
        a Gaussian offset of width sigma."""
        p = (np.abs(self.values) ** 2).ravel()
        cdf = np.cumsum(p)
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        k = min(k, p.size - 1)
        if self.n_particles == 1:
            xk = self.x[k]
        else:
            i1, i2 = np.unravel_index(k, self.values.shape)
            xk = self.x[i1] if rng.random() < 0.5 else self.x[i2]
        return float(xk + sigma * rng.standard_normal())

    def wavenumbers(self) -> np.ndarray:
        n = self.values.shape[0]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing)

    def evolved(self, t: float, mass: float, hbar: float = HBAR) -> "GridState":
        if t == 0:
            return self
        k = self.wavenumbers()
        phase = np.exp(-1j * hbar * k**2 * t / (2.0 * mass))
        if self.n_particles == 1:
            return self.with_values(np.fft.ifft(np.fft.fft(self.values) * phase))
        ph2 = phase[:, None] * phase[None, :]
        return self.with_values(np.fft.ifft2(np.fft.fft2(self.values) * ph2))

    def mean_p2(self, hbar: float = HBAR) -> float:
        """Total <p^2> (summed over particles) by spectral differentiation."""
        k = self.wavenumbers()
        if self.n_particles == 1:
            pk = np.abs(np.fft.fft(self.values)) ** 2
            return float(hbar**2 * (pk * k**2).sum() / pk.sum())
        pk = np.abs(np.fft.fft2(self.values)) ** 2
        k2 = k[:, None] ** 2 + k[None, :] ** 2
        return float(hbar**2 * (pk * k2).sum() / pk.sum())

    def mean_energy(self, mass: float) -> float:
        return self.mean_p2() / (2.0 * mass)


State = Union[PacketState, GridState]


def _as_state(state) -> State:
    if isinstance(state, GaussianPacket):
        return PacketState((state,)).normalized()
    return state


# ---------------------------------------------------------------------------
# operations


def sample_collapse_times(rate: float, horizon: float, rng: np.random.Generator) -> list[float]:
    """Event times of a Poisson process of the given rate on [0, horizon)."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    times = []
    if rate == 0:
        return times
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            return times
        times.append(t)


def sample_center(state, sigma: float, rng: np.random.Generator) -> float:
    state = _as_state(state)
    if isinstance(state, GridState):
        return state.sample_center(sigma, rng)
    return state.sample_position(rng) + sigma * rng.standard_normal()


def apply_collapse(state, sigma: float, rng: np.random.Generator):
    """One GRW collapse with a randomly drawn center; returns (state, center)."""
    state = _as_state(state)
    c = sample_center(state, sigma, rng)
    new, _ = state.collapse_at(c, sigma)
    return new, c


def compose_collapses(state, sigma: float, n: int, centers: Sequence[float]):
    """Apply ``n`` collapses with the given centers and no evolution in between."""
    if len(centers) != n:
        raise ValueError("need exactly n centers")
    state = _as_state(state)
    for c in centers:
        state, _ = state.collapse_at(c, sigma)
    return state


def mean_energy(state, mass: float) -> float:
    return _as_state(state).mean_energy(mass)


def matter_density(state, masses, x=None, smear_sigma: Optional[float] = None) -> np.ndarray:
    """Mass density on a grid: sum_i m_i * (marginal density of particle i).

    With ``smear_sigma`` the delta of each particle is replaced by a Gaussian
    of that width.
    """
    state = _as_state(state)
    if isinstance(state, GridState):
        grid = state.x
        h = state.spacing
        dens = state.marginals()
    else:
        if x is None:
            raise ValueError("packet states need an evaluation grid x")
        grid = np.asarray(x, float)
        h = grid[1] - grid[0]
        dens = [np.abs(state(grid)) ** 2 / state.norm2()]
    masses = np.atleast_1d(np.asarray(masses, float))
    if masses.size != len(dens):
        raise ValueError("need one mass per particle")
    m = sum(mi * d for mi, d in zip(masses, dens))
    if smear_sigma is not None:
        kernel = gaussian_1d(grid[:, None] - grid[None, :], smear_sigma)
        m = kernel @ m * h
    return m


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class FreeParticle:
    mass: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class SimConfig:
    sigma: float
    lambda_eff: float
    horizon: float
    trials: int = 1000
    seed: int = 0
    hamiltonian: Optional[FreeParticle] = None  # None: H = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.lambda_eff < 0:
            raise ValueError("lambda_eff must be non-negative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def echo(self) -> dict:
        d = asdict(self)
        d["hamiltonian"] = (
            "zero" if self.hamiltonian is None else {"free_particle_mass": self.hamiltonian.mass}
        )
        return d


@dataclass(frozen=True)
class CollapseEvent:
    time: float
    species: int
    center: float


@dataclass
class TrialResult:
    trial: int
    events: list[CollapseEvent]
    gains: list[float]  # energy change per collapse, J
    energy_start: float
    energy_end: float


def run_trial(config: SimConfig, initial, trial: int) -> TrialResult:
    rng = trial_rng(config.seed, trial)
    state = _as_state(initial)
    mass = config.hamiltonian.mass if config.hamiltonian else None
    times = sample_collapse_times(config.lambda_eff, config.horizon, rng)
    e0 = state.mean_energy(mass) if mass else math.nan
    events, gains = [], []
    t_prev = 0.0
    for t in times:
        if mass:
            state = state.evolved(t - t_prev, mass)
        t_prev = t
        before = state.mean_energy(mass) if mass else math.nan
        c = sample_center(state, config.sigma, rng)
        state, _ = state.collapse_at(c, config.sigma)
        events.append(CollapseEvent(t, 0, c))
        gains.append(state.mean_energy(mass) - before if mass else math.nan)
    e1 = state.mean_energy(mass) if mass else math.nan
    return TrialResult(trial, events, gains, e0, e1)


@dataclass
class SimStats:
    config: dict
    trials: int
    collapses_total: int
    mean_collapse_count: float
    collapse_count_stderr: float
    mean_energy_gain_per_collapse: Optional[float]
    stderr: Optional[float]
    energy_gain_rate: Optional[float]
    energy_gain_rate_stderr: Optional[float]
    flash_count: int
    flashes: list[tuple[int, CollapseEvent]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "flashes"}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def flash_log(self) -> str:
        lines = ["trial time center"]
        lines += [f"{i} {ev.time:.6e} {ev.center:.6e}" for i, ev in self.flashes]
        return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def run_ensemble(config: SimConfig, initial_state, keep_flashes: bool = True,
                 trial_indices: Optional[Sequence[int]] = None) -> SimStats:
    """Run all trials and aggregate.

    ``trial_indices`` permutes the evaluation order; it does not change the
    result.
    """
    state = _as_state(initial_state)
    if isinstance(state, GridState):
        state.check_resolves(config.sigma)
    order = list(range(config.trials)) if trial_indices is None else list(trial_indices)
    if sorted(order) != list(range(config.trials)):
        raise ValueError("trial_indices must be a permutation of range(trials)")
    results = {i: run_trial(config, state, i) for i in order}
    ordered = [results[i] for i in range(config.trials)]

    counts = np.array([len(r.events) for r in ordered], float)
    gains = np.array([g for r in ordered for g in r.gains], float)
    has_energy = config.hamiltonian is not None
    if has_energy and gains.size:
        g_mean, g_se = mean_stderr(gains)
    else:
        g_mean = g_se = None
    if has_energy:
        rates = np.array([(r.energy_end - r.energy_start) / config.horizon for r in ordered])
        r_mean, r_se = mean_stderr(rates)
    else:
        r_mean = r_se = None
    c_mean, c_se = mean_stderr(counts)
    flashes = [(r.trial, ev) for r in ordered for ev in r.events] if keep_flashes else []
    return SimStats(
        config=config.echo(),
        trials=config.trials,
        collapses_total=int(counts.sum()),
        mean_collapse_count=c_mean,
        collapse_count_stderr=_nan_to_none(c_se),
        mean_energy_gain_per_collapse=_nan_to_none(g_mean),
        stderr=_nan_to_none(g_se),
        energy_gain_rate=_nan_to_none(r_mean),
        energy_gain_rate_stderr=_nan_to_none(r_se),
        flash_count=int(counts.sum()),
        flashes=flashes,
    )


def energy_gain_per_collapse_oracle(mass: float, sigma: float, hbar: float = HBAR) -> float:
    """Closed-form mean kinetic-energy gain of one 1-D collapse.

    Averaged over centers, a collapse multiplies the density matrix by
    exp(-(x - x')^2 / (8 sigma^2)), which convolves the momentum distribution
    with a Gaussian of variance hbar^2 / (4 sigma^2).
    """
    return hbar**2 / (8.0 * mass * sigma**2)


def two_peak_grid(sigma: float, separation: float, packet_width: Optional[float] = None,
                  margin: float = 8.0) -> tuple[GridState, int, int]:
    """Symmetric two-peak grid state with spacing sigma/8, and the grid
    indices of the two peak centers."""
    h = sigma * MAX_SPACING_PER_SIGMA
    w = sigma / 4.0 if packet_width is None else packet_width
    half_cells = int(round(separation / 2.0 / h))
    n_side = half_cells + int(math.ceil(margin * max(sigma, w) / h))
    n = 2 * n_side + 1
    origin = -n_side * h
    xl, xr = -half_cells * h, half_cells * h
    st = GridState.from_function(
        lambda x: np.exp(-(x - xl) ** 2 / (4 * w * w)) + np.exp(-(x - xr) ** 2 / (4 * w * w)),
        n, h, origin,
    )
    return st, n_side - half_cells, n_side + half_cells


def decoherence_rate(config: SimConfig, separation: float,
                     packet_width: Optional[float] = None, n_times: int = 16) -> DecayFit:
    """Fit the decay rate of the ensemble-averaged coherence between two peaks.

    The observable is E[psi(x_L) psi*(x_R)] / (psi_0(x_L) psi_0*(x_R)), the
    density-matrix element at the two peak centers.  Requires H = 0.
    """
    if config.hamiltonian is not None:
        raise ValueError("decoherence_rate requires the zero Hamiltonian")
    state, il, ir = two_peak_grid(config.sigma, separation, packet_width)
    x = state.x
    h = state.spacing
    T = config.trials
    sig = config.sigma

    times, us, zs = [], [], []
    for i in range(T):
        rng = trial_rng(config.seed, i)
        ts = sample_collapse_times(config.lambda_eff, config.horizon, rng)
        times.append(np.array(ts))
        us.append(rng.random(len(ts)))
        zs.append(rng.standard_normal(len(ts)))
    counts = np.array([len(t) for t in times])
    kmax = int(counts.max()) if T else 0

    psi = np.tile(state.values, (T, 1))
    coh = np.ones((T, kmax + 1))
    coh0 = (state.values[il] * np.conj(state.values[ir])).real
    for r in range(kmax):
        rows = np.nonzero(counts > r)[0]
        sub = psi[rows]
        cdf = np.cumsum(np.abs(sub) ** 2, axis=1)
        u = np.array([us[i][r] for i in rows]) * cdf[:, -1]
        idx = np.minimum((cdf < u[:, None]).sum(axis=1), x.size - 1)
        c = x[idx] + sig * np.array([zs[i][r] for i in rows])
        sub = sub * np.sqrt(gaussian_1d(c[:, None] - x[None, :], sig))
        z = np.sum(np.abs(sub) ** 2, axis=1) * h
        if np.any(z <= 1e-300):
            raise CollapseError("collapse density underflow")
        sub /= np.sqrt(z)[:, None]
        psi[rows] = sub
        # later columns are overwritten if the trial collapses again
        coh[rows, r + 1:] = ((sub[:, il] * np.conj(sub[:, ir])).real / coh0)[:, None]

    grid_t = np.linspace(0.0, config.horizon, n_times + 1)
    samples = np.empty((T, grid_t.size))
    for i in range(T):
        before = np.searchsorted(times[i], grid_t, side="right")
        samples[i] = coh[i, before]
    return fit_decay(grid_t, samples)
