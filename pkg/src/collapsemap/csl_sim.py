"""Euler-Maruyama integration of the CSL equation for one particle in 1-D.

The noise field is white in space and time; on the grid it becomes one
independent increment per cell with variance dt / spacing.  The smeared
number operator at x acts on the particle position y as g(x - y), with g the
normalised Gaussian of width sigma, and the coupling is

    gamma = lambda_eff * sqrt(4 pi sigma^2)

which makes the decoherence rate of two far-apart peaks equal lambda_eff.
Per step, with W = g * dB and p = g * |psi|^2,

    nonlinear:  psi *= 1 + sqrt(gamma) (W - <W>) - gamma/2 (S0 - 2 K*rho + <K*rho>) dt
    linear:     psi *= 1 + sqrt(gamma) W - gamma/2 S0 dt

where K = g * g and S0 = K(0).  Both are followed by renormalisation; the
linear scheme records the squared norm it removed.  Convolutions are
circular, so the grid is treated as periodic.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .ensemble import DecayFit, SlopeFit, fit_decay, fit_slope, mean_stderr, trial_rng
from .grw_sim import HBAR, MAX_SPACING_PER_SIGMA, GridState, gaussian_1d, two_peak_grid

MAX_RATE_STEP = 1e-2
BATCH = 128


class Scheme(enum.Enum):
    NORMALIZED_NONLINEAR = "nonlinear"
    LINEAR_UNRAVELING = "linear"


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class CSLConfig:
    sigma: float
    lambda_eff: float
    dt: float
    horizon: float
    trials: int = 1000
    seed: int = 0
    scheme: Scheme = Scheme.NORMALIZED_NONLINEAR
    mass: Optional[float] = None  # None: H = 0
    # number of independent noise draws summed into one increment; a run at
    # dt with k substeps shares its noise with a run at dt/k
    noise_substeps: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and self.dt > 0 and self.horizon > 0):
            raise ValueError("sigma, dt and horizon must be positive")
        if self.lambda_eff < 0:
            raise ValueError("lambda_eff must be non-negative")
        if self.trials < 1 or self.noise_substeps < 1:
            raise ValueError("trials and noise_substeps must be >= 1")
        if self.dt * self.lambda_eff > MAX_RATE_STEP:
            raise StabilityError(
                f"dt*lambda_eff = {self.dt * self.lambda_eff:g} exceeds {MAX_RATE_STEP:g}"
            )
        if self.mass is not None and not self.mass > 0:
            raise ValueError("mass must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def coupling(self) -> float:
        return self.lambda_eff * math.sqrt(4.0 * math.pi) * self.sigma

    def echo(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


@dataclass(frozen=True, eq=False)
class SmearingOperator:
    n: int
    spacing: float
    sigma: float
    kernel: np.ndarray  # g at minimum-image offsets
    gamma: float
    s0: float
    g_hat: np.ndarray  # rfft of the kernel
    k_hat: np.ndarray  # rfft of K = g * g

    @classmethod
    def for_grid(cls, n: int, spacing: float, sigma: float, lambda_eff: float) -> "SmearingOperator":
        if spacing > sigma * MAX_SPACING_PER_SIGMA * (1 + 1e-12):
            raise ValueError(f"grid too coarse for sigma={sigma:g}: spacing > sigma/8")
        j = np.arange(n)
        offsets = spacing * np.where(j < (n + 1) // 2, j, j - n)
        kernel = gaussian_1d(offsets, sigma)
        total = kernel.sum() * spacing
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"grid too short for sigma: kernel integrates to {total:.8f}")
        g_hat = np.fft.rfft(kernel)
        return cls(
            n=n,
            spacing=spacing,
            sigma=sigma,
            kernel=kernel,
            gamma=lambda_eff * math.sqrt(4.0 * math.pi) * sigma,
            s0=float(spacing * np.sum(kernel**2)),
            g_hat=g_hat,
            k_hat=spacing * g_hat * g_hat.conj(),
        )

    def smear(self, f: np.ndarray, hat: np.ndarray) -> np.ndarray:
        return self.spacing * np.fft.irfft(np.fft.rfft(f, axis=-1) * hat, n=self.n, axis=-1)

    def overlap_kernel(self, separation: float) -> float:
        """K(separation) in the continuum."""
        return math.exp(-separation**2 / (4 * self.sigma**2)) / math.sqrt(4 * math.pi * self.sigma**2)


def _kinetic_phase(n: int, spacing: float, dt: float, mass: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
    return np.exp(-1j * HBAR * k**2 * dt / (2.0 * mass))


def em_step(psi: np.ndarray, op: SmearingOperator, dt: float, noise: np.ndarray,
            scheme: Scheme = Scheme.NORMALIZED_NONLINEAR, kinetic: Optional[np.ndarray] = None):
    """Advance wave functions (last axis = grid) by one step.

    ``noise`` holds the per-cell Wiener increments (variance dt / spacing).
    Returns the renormalised state and the squared norm before
    renormalisation.
    """
    if op.gamma * op.s0 * dt > MAX_RATE_STEP * (1 + 1e-9):
        raise StabilityError("dt too large for the collapse rate")
    h = op.spacing
    sg = math.sqrt(op.gamma)
    W = op.smear(noise, op.g_hat)
    if scheme is Scheme.NORMALIZED_NONLINEAR:
        rho = np.abs(psi) ** 2
        rho = rho / (rho.sum(axis=-1, keepdims=True) * h)
        Kp = op.smear(rho, op.k_hat)
        mean_W = (rho * W).sum(axis=-1, keepdims=True) * h
        mean_Kp = (rho * Kp).sum(axis=-1, keepdims=True) * h
        factor = 1.0 + sg * (W - mean_W) - 0.5 * op.gamma * (op.s0 - 2.0 * Kp + mean_Kp) * dt
    else:
        factor = 1.0 + sg * W - 0.5 * op.gamma * op.s0 * dt
    out = psi * factor
    if kinetic is not None:
        out = np.fft.ifft(np.fft.fft(out, axis=-1) * kinetic, axis=-1)
    norm2 = (np.abs(out) ** 2).sum(axis=-1) * h
    return out / np.sqrt(norm2)[..., None], norm2


def draw_noise(rng: np.random.Generator, config: CSLConfig, n: int, spacing: float) -> np.ndarray:
    """All increments of one trial, shape (steps, n)."""
    k = config.noise_substeps
    sub = rng.standard_normal((config.steps * k, n)) * math.sqrt(config.dt / k / spacing)
    if k == 1:
        return sub
    return sub.reshape(config.steps, k, n).sum(axis=1)


def record_steps(config: CSLConfig, n_times: int) -> np.ndarray:
    """Step indices at which observables are sampled (0 = initial)."""
    return np.unique(np.round(np.linspace(0, config.steps, n_times + 1)).astype(int))


def run_trials(config: CSLConfig, initial: GridState, observe, n_times: int = 16):
    """Integrate every trial and evaluate ``observe(psi_batch, weight_batch)``
    at the recorded steps.

    Returns (times, samples) with samples of shape (trials, len(times)).
    ``weight`` is the accumulated squared norm of the linear scheme (1 for the
    nonlinear one).  A tuple of observables gives a tuple of sample arrays.
    """
    many = isinstance(observe, tuple)
    observers = observe if many else (observe,)
    if initial.n_particles != 1:
        raise ValueError("CSL integration supports one particle")
    n, h = initial.values.size, initial.spacing
    op = SmearingOperator.for_grid(n, h, config.sigma, config.lambda_eff)
    kinetic = _kinetic_phase(n, h, config.dt, config.mass) if config.mass else None
    rec = record_steps(config, n_times)
    times = rec * config.dt
    samples = tuple(np.empty((config.trials, rec.size)) for _ in observers)
    psi0 = initial.normalized().values
    for start in range(0, config.trials, BATCH):
        idx = range(start, min(start + BATCH, config.trials))
        noise = np.stack([draw_noise(trial_rng(config.seed, i), config, n, h) for i in idx], axis=1)
        psi = np.tile(psi0, (len(idx), 1))
        weight = np.ones(len(idx))
        col = 0
        if rec[0] == 0:
            for arr, f in zip(samples, observers):
                arr[start:start + len(idx), 0] = f(psi, weight)
            col = 1
        for step in range(config.steps):
            psi, norm2 = em_step(psi, op, config.dt, noise[step], config.scheme, kinetic)
            if config.scheme is Scheme.LINEAR_UNRAVELING:
                weight = weight * norm2
            if col < rec.size and rec[col] == step + 1:
                for arr, f in zip(samples, observers):
                    arr[start:start + len(idx), col] = f(psi, weight)
                col += 1
    return times, (samples if many else samples[0])


def csl_decoherence_rate(config: CSLConfig, separation: float,
                         packet_width: Optional[float] = None, n_times: int = 16) -> DecayFit:
    """Fitted decay rate of E[psi(x_L) psi*(x_R)] for a symmetric two-peak state."""
    if config.mass is not None:
        raise ValueError("csl_decoherence_rate requires the zero Hamiltonian")
    state, il, ir = two_peak_grid(config.sigma, separation, packet_width)
    c0 = (state.values[il] * np.conj(state.values[ir])).real

    def coherence(psi, w):
        return w * (psi[:, il] * np.conj(psi[:, ir])).real / c0

    times, samples = run_trials(config, state, coherence, n_times)
    return fit_decay(times, samples)


def _energy_observable(n: int, spacing: float, mass: float):
    k2 = (2.0 * np.pi * np.fft.fftfreq(n, d=spacing)) ** 2

    def energy(psi, w):
        pk = np.abs(np.fft.fft(psi, axis=-1)) ** 2
        return w * HBAR**2 * (pk * k2).sum(axis=-1) / pk.sum(axis=-1) / (2.0 * mass)

    return energy


def default_energy_state(sigma: float, n: int = 256) -> GridState:
    h = sigma * MAX_SPACING_PER_SIGMA
    return GridState.from_function(lambda x: np.exp(-x**2 / (4 * sigma**2)), n, h)


def csl_energy_rate(config: CSLConfig, initial: Optional[GridState] = None,
                    n_times: int = 16) -> SlopeFit:
    """Slope of the ensemble-mean kinetic energy (J/s)."""
    if config.mass is None:
        raise ValueError("csl_energy_rate requires a free-particle mass")
    state = default_energy_state(config.sigma) if initial is None else initial
    obs = _energy_observable(state.values.size, state.spacing, config.mass)
    times, samples = run_trials(config, state, obs, n_times)
    return fit_slope(times, samples)


def energy_rate_oracle(mass: float, sigma: float, lambda_eff: float) -> float:
    """1-D CSL heating rate under the GRW-matching coupling."""
    return lambda_eff * HBAR**2 / (4.0 * mass * sigma**2)


def decoherence_rate_oracle(sigma: float, lambda_eff: float, separation: float) -> float:
    return lambda_eff * (1.0 - math.exp(-separation**2 / (4.0 * sigma**2)))


@dataclass
class CSLStats:
    config: dict
    trials: int
    energy_gain_rate: Optional[float]
    energy_gain_rate_stderr: Optional[float]
    final_norm2_mean: float
    final_norm2_stderr: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_csl(config: CSLConfig, initial: Optional[GridState] = None,
            n_times: int = 16) -> CSLStats:
    """Summary statistics of a CSL ensemble: heating rate (if a mass is set)
    and the final squared norm of the linear scheme (1 for the nonlinear one)."""
    state = default_energy_state(config.sigma) if initial is None else initial
    norm = lambda psi, w: w  # noqa: E731
    rate = rate_se = None
    if config.mass is not None:
        obs = _energy_observable(state.values.size, state.spacing, config.mass)
        times, (energy, w) = run_trials(config, state, (obs, norm), n_times)
        fit = fit_slope(times, energy)
        rate, rate_se = fit.rate, fit.stderr
    else:
        _, w = run_trials(config, state, norm, n_times=1)
    m, se = mean_stderr(w[:, -1])
    return CSLStats(config.echo(), config.trials, rate, rate_se, m, se)
