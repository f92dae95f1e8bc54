import math

import numpy as np
import pytest

from collapsemap import csl_sim, grw_sim
from collapsemap.core import CODATA2018
from collapsemap.csl_sim import (
    CSLConfig,
    Scheme,
    SmearingOperator,
    StabilityError,
    csl_decoherence_rate,
    csl_energy_rate,
    em_step,
    run_csl,
    run_trials,
)
from collapsemap.ensemble import mean_stderr, trial_rng
from collapsemap.grw_sim import GridState

M = CODATA2018.m_p
SIGMA = 1e-7
H = SIGMA / 8


def packet(center=0.0, width=SIGMA, n=256):
    return GridState.from_function(lambda x: np.exp(-(x - center) ** 2 / (4 * width**2)), n, H)


def test_config_validation():
    with pytest.raises(StabilityError):
        CSLConfig(SIGMA, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        CSLConfig(SIGMA, -1.0, 1e-3, 1.0)
    with pytest.raises(ValueError):
        CSLConfig(SIGMA, 1.0, 1e-3, 1.0, trials=0)


def test_smearing_operator():
    op = SmearingOperator.for_grid(256, H, SIGMA, 1.0)
    assert op.kernel.sum() * H == pytest.approx(1.0, abs=1e-6)
    assert op.gamma * op.s0 == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError, match="too coarse"):
        SmearingOperator.for_grid(256, SIGMA / 4, SIGMA, 1.0)
    with pytest.raises(ValueError):
        SmearingOperator.for_grid(16, H, SIGMA, 1.0)


def test_em_step_stability_guard():
    op = SmearingOperator.for_grid(256, H, SIGMA, 10.0)
    psi = packet().values[None, :]
    with pytest.raises(StabilityError):
        em_step(psi, op, 0.01, np.zeros_like(psi.real))


def test_zero_noise_drift_on_point_like_state():
    op = SmearingOperator.for_grid(512, H, SIGMA, 1.0)
    st = GridState.from_function(lambda x: np.exp(-x * x / (4 * (H / 2) ** 2)), 512, H)
    psi = st.values[None, :]
    new, _ = em_step(psi, op, 1e-2, np.zeros((1, 512)))
    fid = abs(np.vdot(psi[0], new[0]) * H)
    assert fid > 1 - 1e-6


def test_nonlinear_norm_and_step_deviation():
    op = SmearingOperator.for_grid(256, H, SIGMA, 1.0)
    psi = grw_sim.two_peak_grid(SIGMA, 4 * SIGMA)[0]
    psi = GridState.from_function(lambda x: np.exp(-(x - 2e-7) ** 2 / 4e-14)
                                  + np.exp(-(x + 2e-7) ** 2 / 4e-14), 256, H).values
    devs = {}
    for dt in (4e-3, 1e-3):
        rng = trial_rng(0, 0)
        d = []
        for _ in range(200):
            noise = rng.standard_normal((1, 256)) * math.sqrt(dt / H)
            new, n2 = em_step(psi[None, :], op, dt, noise)
            assert (np.abs(new) ** 2).sum() * H == pytest.approx(1.0, abs=1e-9)
            d.append(abs(n2[0] - 1))
        devs[dt] = np.mean(d)
    # deviation of the pre-renormalisation norm is first order in dt
    assert 2.0 < devs[4e-3] / devs[1e-3] < 8.0


def test_linear_scheme_martingale():
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 0.5, trials=4000, seed=3, scheme=Scheme.LINEAR_UNRAVELING)
    stats = run_csl(cfg, packet(width=SIGMA))
    assert abs(stats.final_norm2_mean - 1.0) <= 3 * stats.final_norm2_stderr


def test_deterministic_replay_and_batching(monkeypatch):
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 0.2, trials=10, seed=4)
    obs = lambda psi, w: psi[:, 100].real  # noqa: E731
    _, a = run_trials(cfg, packet(), obs, n_times=4)
    _, b = run_trials(cfg, packet(), obs, n_times=4)
    monkeypatch.setattr(csl_sim, "BATCH", 3)
    _, c = run_trials(cfg, packet(), obs, n_times=4)
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)


@pytest.mark.parametrize("ratio, tol", [(10.0, 0.15), (2.0, 0.10)])
def test_decoherence_rate(ratio, tol):
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 1.5, trials=2000, seed=5)
    fit = csl_decoherence_rate(cfg, ratio * SIGMA)
    expected = csl_sim.decoherence_rate_oracle(SIGMA, 1.0, ratio * SIGMA)
    assert fit.rate == pytest.approx(expected, rel=tol)


def test_decoherence_zero_separation():
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 1.5, trials=1000, seed=6)
    fit = csl_decoherence_rate(cfg, 0.0)
    assert abs(fit.rate) < 0.02


def test_decoherence_dt_refinement():
    common = dict(sigma=SIGMA, lambda_eff=1.0, horizon=1.5, trials=2000, seed=8)
    coarse = csl_decoherence_rate(CSLConfig(dt=1e-2, noise_substeps=2, **common), 10 * SIGMA)
    fine = csl_decoherence_rate(CSLConfig(dt=5e-3, **common), 10 * SIGMA)
    assert abs(coarse.rate / fine.rate - 1) < 0.03


def test_energy_rate_matches_heating_oracle():
    cfg = CSLConfig(SIGMA, 1e7, 1e-9, 2e-7, trials=1000, seed=7, mass=M)
    fit = csl_energy_rate(cfg)
    assert fit.rate == pytest.approx(csl_sim.energy_rate_oracle(M, SIGMA, 1e7), rel=0.10)


def test_energy_rate_zero_and_linear_in_lambda():
    base = dict(sigma=SIGMA, dt=1e-9, horizon=1e-7, trials=500, seed=12, mass=M)
    zero = csl_energy_rate(CSLConfig(lambda_eff=0.0, **base))
    assert abs(zero.rate) < 1e-6 * csl_sim.energy_rate_oracle(M, SIGMA, 1e7)
    one = csl_energy_rate(CSLConfig(lambda_eff=5e6, **base))
    two = csl_energy_rate(CSLConfig(lambda_eff=1e7, **base))
    assert abs(two.rate - 2 * one.rate) < 4 * math.hypot(two.stderr, 2 * one.stderr)


def test_csl_heats_twice_as_fast_as_grw():
    """At matched lambda_eff and sigma the two unravelings decohere distant
    peaks at the same rate, but the CSL channel's short-distance rate is
    lambda Delta^2 / (4 sigma^2) against lambda Delta^2 / (8 sigma^2) for
    GRW, so the CSL heating rate is twice the GRW one."""
    lam = 1e7
    csl = csl_energy_rate(CSLConfig(SIGMA, lam, 1e-9, 2e-7, trials=1000, seed=13, mass=M))
    grw = lam * grw_sim.energy_gain_per_collapse_oracle(M, SIGMA)
    assert csl.rate / grw == pytest.approx(2.0, rel=0.10)


def test_mean_position_is_a_martingale_and_translates():
    a = 8 * H
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 0.5, trials=1000, seed=14)
    st0 = GridState.from_function(lambda x: np.exp(-(x - 2e-7) ** 2 / 4e-14)
                                  + np.exp(-(x + 2e-7) ** 2 / 4e-14), 256, H)
    st1 = GridState(st0.spacing, st0.origin, np.roll(st0.values, 8))
    x = st0.x

    def mean_x(psi, w):
        rho = np.abs(psi) ** 2
        return (rho * x).sum(axis=1) / rho.sum(axis=1)

    _, m0 = run_trials(cfg, st0, mean_x, n_times=1)
    _, m1 = run_trials(cfg, st1, mean_x, n_times=1)
    for m, shift in ((m0, 0.0), (m1, a)):
        mu, se = mean_stderr(m[:, -1])
        assert abs(mu - shift) <= 4 * se + 1e-12


def test_grw_and_csl_decoherence_agree_far_apart():
    d = 10 * SIGMA
    grw = grw_sim.decoherence_rate(grw_sim.SimConfig(SIGMA, 1.0, 1.5, trials=2000, seed=15), d)
    csl = csl_decoherence_rate(CSLConfig(SIGMA, 1.0, 1e-2, 1.5, trials=2000, seed=16), d)
    assert abs(grw.rate - csl.rate) <= 3 * math.hypot(grw.stderr, csl.stderr)


def test_report_json():
    cfg = CSLConfig(SIGMA, 1.0, 1e-2, 0.1, trials=5, seed=1)
    text = run_csl(cfg, packet()).to_json()
    assert '"scheme": "nonlinear"' in text and '"dt": 0.01' in text
